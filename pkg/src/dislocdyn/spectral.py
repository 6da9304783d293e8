"""Periodic grid, discrete Fourier transforms and Fourier multipliers on the unit torus.

Conventions
-----------
* Nodes are ``x = (j1/n1, j2/n2)``; array axis 0 is ``x1``, axis 1 is ``x2``.
* ``c_k`` is normalised so that ``c_(0,0)`` is the grid mean (``norm="forward"``).
* Wavevectors are integers in FFT order, ``k_i in [-n_i/2, n_i/2)``.
* The Riesz multiplier is ``k_i/|k|`` without the usual ``-i`` factor, so
  odd total orders do not map real fields to real fields. Only the even
  compositions have RealField-level wrappers.
* Operators that are odd in ``k_i`` (derivatives, odd Riesz powers) use
  ``k_i = 0`` on the Nyquist index of axis ``i``; this keeps every derived
  operator Hermitian-consistent and makes ``d1 R2 = d2 R1`` hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "TorusGrid",
    "RealField",
    "SpectralCoeffs",
    "HermitianSymmetryError",
    "forward_transform",
    "inverse_transform",
    "riesz",
    "riesz_composite",
    "partial_derivative",
    "laplacian",
    "inverse_laplacian",
    "heat_semigroup",
    "dealias",
    "riesz_r1r2",
    "riesz_r1sq_r2sq",
    "integrate",
    "inner",
    "coeff_inner",
    "l2_norm",
    "row_means",
    "riesz_symbol",
    "derivative_symbol",
]

# relative tolerances for the real/Hermitian checks in inverse_transform
HERMITIAN_RTOL = 1e-10
IMAG_RTOL = 1e-10


class HermitianSymmetryError(ValueError):
    """Raised when coefficients that should describe a real field do not."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform ``n1 x n2`` grid on the torus R^2/Z^2."""

    n1: int
    n2: int

    def __post_init__(self):
        for name in ("n1", "n2"):
            n = getattr(self, name)
            if not isinstance(n, (int, np.integer)) or isinstance(n, bool):
                raise TypeError(f"{name} must be an integer, got {n!r}")
            if n < 8 or n % 2:
                raise ValueError(f"{name} must be even and >= 8, got {n}")
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @property
    def dx(self) -> tuple[float, float]:
        return (1.0 / self.n1, 1.0 / self.n2)

    @cached_property
    def x1(self) -> np.ndarray:
        """``x1`` coordinate of every node, shape ``(n1, n2)``."""
        return np.broadcast_to((np.arange(self.n1) / self.n1)[:, None], self.shape)

    @cached_property
    def x2(self) -> np.ndarray:
        return np.broadcast_to((np.arange(self.n2) / self.n2)[None, :], self.shape)

    @cached_property
    def k1(self) -> np.ndarray:
        """Signed integer wavenumbers along ``x1``, shape ``(n1, 1)``."""
        return np.rint(np.fft.fftfreq(self.n1, d=1.0 / self.n1)).astype(np.int64)[:, None]

    @cached_property
    def k2(self) -> np.ndarray:
        return np.rint(np.fft.fftfreq(self.n2, d=1.0 / self.n2)).astype(np.int64)[None, :]

    @cached_property
    def k1_odd(self) -> np.ndarray:
        """``k1`` with the Nyquist row set to zero (for operators odd in ``k1``)."""
        k = self.k1.astype(float).copy()
        k[self.n1 // 2, 0] = 0.0
        return k

    @cached_property
    def k2_odd(self) -> np.ndarray:
        k = self.k2.astype(float).copy()
        k[0, self.n2 // 2] = 0.0
        return k

    @cached_property
    def ksq(self) -> np.ndarray:
        """``|k|^2`` on the full index set, shape ``(n1, n2)``."""
        return (self.k1**2 + self.k2**2).astype(float)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Two-thirds rule: keep ``|k1| <= n1/3`` and ``|k2| <= n2/3``."""
        return (3 * np.abs(self.k1) <= self.n1) & (3 * np.abs(self.k2) <= self.n2)

    @cached_property
    def conj_index(self) -> tuple[np.ndarray, np.ndarray]:
        """Index arrays mapping each ``k`` to ``-k``."""
        i1 = (-np.arange(self.n1)) % self.n1
        i2 = (-np.arange(self.n2)) % self.n2
        return np.ix_(i1, i2)

    def wavevector_index(self, k1: int, k2: int) -> tuple[int, int]:
        """Array position of wavevector ``(k1, k2)``."""
        if not (-self.n1 // 2 <= k1 <= self.n1 // 2 and -self.n2 // 2 <= k2 <= self.n2 // 2):
            raise IndexError(f"wavevector {(k1, k2)} not resolved on {self.n1}x{self.n2} grid")
        return (k1 % self.n1, k2 % self.n2)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class RealField:
    """Real samples of a periodic function on a ``TorusGrid``.

    ``values`` has shape ``(n1, n2)``; a flat array of length ``n1*n2`` in
    row-major order is accepted and reshaped.
    """

    grid: TorusGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim == 1 and v.size == self.grid.size:
            v = v.reshape(self.grid.shape)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            bad = int(np.count_nonzero(~np.isfinite(v)))
            raise ValueError(f"RealField has {bad} non-finite entries")
        object.__setattr__(self, "values", _readonly(v))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "RealField":
        return cls(grid, fn(grid.x1, grid.x2) + np.zeros(grid.shape))

    @classmethod
    def zeros(cls, grid: TorusGrid) -> "RealField":
        return cls(grid, np.zeros(grid.shape))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "RealField") -> "RealField":
        _check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        _check_same_grid(self.grid, other.grid)
        return RealField(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "RealField":
        return RealField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralCoeffs:
    """Fourier coefficients ``c_k`` on a ``TorusGrid`` in FFT index order."""

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.complex128)
        if c.shape != self.grid.shape:
            raise ValueError(f"coeffs shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", _readonly(c))

    def at(self, k1: int, k2: int) -> complex:
        return complex(self.coeffs[self.grid.wavevector_index(k1, k2)])

    def hermitian_defect(self) -> float:
        """``max |c_k - conj(c_-k)|`` relative to ``max |c_k|`` (0 for the zero field)."""
        c = self.coeffs
        scale = np.max(np.abs(c))
        if scale == 0.0:
            return 0.0
        return float(np.max(np.abs(c - np.conj(c[self.grid.conj_index]))) / scale)

    def __add__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        _check_same_grid(self.grid, other.grid)
        return SpectralCoeffs(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralCoeffs") -> "SpectralCoeffs":
        _check_same_grid(self.grid, other.grid)
        return SpectralCoeffs(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralCoeffs":
        return SpectralCoeffs(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__


def _check_same_grid(a: TorusGrid, b: TorusGrid) -> None:
    if a != b:
        raise ValueError(f"grid mismatch: {a} vs {b}")


# ---------------------------------------------------------------------------
# Symbols (cached per grid; returned arrays are read-only)
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def riesz_symbol(grid: TorusGrid, p1: int, p2: int) -> np.ndarray:
    """Multiplier of ``R1^p1 R2^p2``: ``(k1/|k|)^p1 (k2/|k|)^p2``, zero at ``k=0``."""
    kabs = grid.kabs.copy()
    kabs[0, 0] = 1.0
    m = np.ones(grid.shape)
    if p1:
        m = m * (grid.k1_odd / kabs) ** p1
    if p2:
        m = m * (grid.k2_odd / kabs) ** p2
    m[0, 0] = 0.0
    return _readonly(m)


@lru_cache(maxsize=16)
def derivative_symbol(grid: TorusGrid, axis: int) -> np.ndarray:
    """Multiplier ``2 pi i k_axis`` of ``d/dx_axis`` (Nyquist row zeroed)."""
    k = grid.k1_odd if axis == 1 else grid.k2_odd
    return _readonly(np.broadcast_to(2j * np.pi * k, grid.shape).copy())


@lru_cache(maxsize=16)
def laplacian_symbol(grid: TorusGrid) -> np.ndarray:
    return _readonly(-4.0 * np.pi**2 * grid.ksq)


def _check_axis(axis: int) -> None:
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis!r}")


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------


def forward_transform(f: RealField) -> SpectralCoeffs:
    """Discrete quadrature of ``c_k(f) = int f(x) exp(-2 pi i k.x) dx``."""
    if not np.all(np.isfinite(f.values)):
        raise ValueError("forward_transform: non-finite input values")
    return SpectralCoeffs(f.grid, np.fft.fft2(f.values, norm="forward"))


def inverse_transform(c: SpectralCoeffs, rtol: float = HERMITIAN_RTOL) -> RealField:
    """Sum the Fourier series back to a real field.

    Raises HermitianSymmetryError if ``c`` is not the spectrum of a real
    field (within ``rtol``); the small imaginary residue is checked and dropped.
    """
    defect = c.hermitian_defect()
    if defect > rtol:
        raise HermitianSymmetryError(
            f"coefficients violate Hermitian symmetry (relative defect {defect:.3e} > {rtol:.1e})"
        )
    z = np.fft.ifft2(c.coeffs, norm="forward")
    scale = max(float(np.max(np.abs(z.real))), np.finfo(float).tiny)
    resid = float(np.max(np.abs(z.imag)))
    if resid > IMAG_RTOL * scale and resid > 1e-300:
        raise HermitianSymmetryError(f"imaginary residue {resid:.3e} exceeds {IMAG_RTOL:.0e} of field magnitude")
    return RealField(c.grid, z.real)


# ---------------------------------------------------------------------------
# Multipliers
# ---------------------------------------------------------------------------


def riesz(c: SpectralCoeffs, axis: int) -> SpectralCoeffs:
    """Periodic Riesz transform ``R_axis``: ``c_k -> (k_axis/|k|) c_k``, ``c_0 -> 0``."""
    _check_axis(axis)
    p = (1, 0) if axis == 1 else (0, 1)
    return SpectralCoeffs(c.grid, c.coeffs * riesz_symbol(c.grid, *p))


def riesz_composite(c: SpectralCoeffs, p1: int, p2: int) -> SpectralCoeffs:
    """``R1^p1 R2^p2`` as a single multiplier."""
    if int(p1) != p1 or int(p2) != p2 or p1 < 0 or p2 < 0:
        raise ValueError(f"powers must be non-negative integers, got {(p1, p2)}")
    if p1 + p2 < 1:
        raise ValueError("riesz_composite needs p1 + p2 >= 1 (identity is not a Riesz transform)")
    return SpectralCoeffs(c.grid, c.coeffs * riesz_symbol(c.grid, int(p1), int(p2)))


def partial_derivative(c: SpectralCoeffs, axis: int) -> SpectralCoeffs:
    _check_axis(axis)
    return SpectralCoeffs(c.grid, c.coeffs * derivative_symbol(c.grid, axis))


def laplacian(c: SpectralCoeffs) -> SpectralCoeffs:
    return SpectralCoeffs(c.grid, c.coeffs * laplacian_symbol(c.grid))


def inverse_laplacian(c: SpectralCoeffs) -> SpectralCoeffs:
    """Mean-free solution ``u`` of ``Laplacian u = c - c_0``."""
    sym = laplacian_symbol(c.grid).copy()
    sym[0, 0] = 1.0
    out = c.coeffs / sym
    out[0, 0] = 0.0
    return SpectralCoeffs(c.grid, out)


def heat_semigroup(c: SpectralCoeffs, tau: float) -> SpectralCoeffs:
    """``exp(tau Laplacian)``; ``tau`` is viscosity times elapsed time."""
    if not tau >= 0.0:
        raise ValueError(f"heat_semigroup needs tau >= 0 (backward heat flow is ill-posed), got {tau}")
    if tau == 0.0:
        return c
    return SpectralCoeffs(c.grid, c.coeffs * np.exp(-4.0 * np.pi**2 * c.grid.ksq * tau))


def dealias(c: SpectralCoeffs) -> SpectralCoeffs:
    return SpectralCoeffs(c.grid, np.where(c.grid.dealias_mask, c.coeffs, 0.0))


# ---------------------------------------------------------------------------
# RealField-level conveniences (even total order only) and quadrature
# ---------------------------------------------------------------------------


def _apply_real(f: RealField, symbol: np.ndarray) -> RealField:
    z = np.fft.ifft2(np.fft.fft2(f.values, norm="forward") * symbol, norm="forward")
    return RealField(f.grid, z.real)


def riesz_r1r2(f: RealField) -> RealField:
    """``R1 R2 f`` (real multiplier ``k1 k2 / |k|^2``)."""
    return _apply_real(f, riesz_symbol(f.grid, 1, 1))


def riesz_r1sq_r2sq(f: RealField) -> RealField:
    """``R1^2 R2^2 f`` (real multiplier ``k1^2 k2^2 / |k|^4``)."""
    return _apply_real(f, riesz_symbol(f.grid, 2, 2))


def integrate(f: RealField | np.ndarray) -> float:
    """Trapezoidal quadrature of ``int_T2 f`` (the grid mean on the unit torus)."""
    v = f.values if isinstance(f, RealField) else np.asarray(f)
    return float(np.mean(v))


def inner(f: RealField, g: RealField) -> float:
    _check_same_grid(f.grid, g.grid)
    return float(np.mean(f.values * g.values))


def coeff_inner(a: SpectralCoeffs, b: SpectralCoeffs) -> complex:
    """Hermitian pairing ``int a(x) conj(b(x)) dx`` evaluated by Parseval.

    With the real odd Riesz multiplier this is the pairing under which
    ``R_i`` is self-adjoint; the plain bilinear pairing picks up a sign.
    """
    _check_same_grid(a.grid, b.grid)
    return complex(np.sum(a.coeffs * np.conj(b.coeffs)))


def l2_norm(f: RealField) -> float:
    return float(np.sqrt(np.mean(f.values**2)))


def row_means(f: RealField | np.ndarray) -> np.ndarray:
    """``int_0^1 f(x1, x2) dx1`` for every ``x2`` node, shape ``(n2,)``."""
    v = f.values if isinstance(f, RealField) else np.asarray(f)
    return np.mean(v, axis=0)

"""Planar periodic elasticity with a single-slip eigenstrain.

Two independent routes to the resolved shear stress are provided: the
closed form ``-C1 R1^2 R2^2 rho`` and a per-wavevector solve of the Lame
system followed by ``mu (d2 u1 + d1 u2 - rho)``. They agree to round-off
and the test-suite uses each as the oracle for the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import RealField, TorusGrid, _check_same_grid, derivative_symbol, riesz_symbol

__all__ = [
    "LameParams",
    "DisplacementField",
    "c1_constant",
    "sigma12_spectral",
    "solve_displacement",
    "sigma12_direct",
    "elastic_energy",
]


@dataclass(frozen=True)
class LameParams:
    lam: float
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"Lame parameter mu must be > 0, got {self.mu}")
        if not 3 * self.lam + 2 * self.mu > 0:
            raise ValueError(f"need 3*lambda + 2*mu > 0, got lambda={self.lam}, mu={self.mu}")

    def energy_form_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of the strain-energy quadratic form on (e11, e22, e12)."""
        lam, mu = self.lam, self.mu
        q = np.array(
            [
                [mu + lam / 2, lam / 2, 0.0],
                [lam / 2, mu + lam / 2, 0.0],
                [0.0, 0.0, 2 * mu],
            ]
        )
        return np.linalg.eigvalsh(q)


@dataclass(frozen=True, eq=False)
class DisplacementField:
    u1: RealField
    u2: RealField

    def __post_init__(self):
        _check_same_grid(self.u1.grid, self.u2.grid)

    @property
    def grid(self) -> TorusGrid:
        return self.u1.grid


def c1_constant(p: LameParams) -> float:
    """Shear-stress prefactor ``4 (lambda+mu) mu / (lambda + 2 mu)``."""
    denom = p.lam + 2 * p.mu
    if denom <= 0:
        raise ValueError(f"lambda + 2 mu must be > 0, got {denom}")
    return 4.0 * (p.lam + p.mu) * p.mu / denom


def _fft(f: RealField) -> np.ndarray:
    return np.fft.fft2(f.values, norm="forward")


def _ifft_real(c: np.ndarray, grid: TorusGrid) -> RealField:
    return RealField(grid, np.fft.ifft2(c, norm="forward").real)


def sigma12_spectral(rho: RealField, p: LameParams) -> RealField:
    """Closed form ``sigma_12 = -C1 R1^2 R2^2 rho``."""
    c = _fft(rho) * riesz_symbol(rho.grid, 2, 2)
    return _ifft_real(-c1_constant(p) * c, rho.grid)


def solve_displacement(rho: RealField, p: LameParams) -> DisplacementField:
    """Solve the periodic Lame system sourced by ``rho`` (mean removed).

    The zero-frequency mode of ``u`` is fixed to 0; so are modes whose
    derivative symbol vanishes (the joint Nyquist corner), which carry no strain.
    """
    grid = rho.grid
    rhat = _fft(rho)
    rhat[0, 0] = 0.0
    xi1 = derivative_symbol(grid, 1).imag  # 2 pi k1
    xi2 = derivative_symbol(grid, 2).imag
    lm = p.lam + p.mu
    xisq = xi1**2 + xi2**2
    active = xisq > 0

    a11 = -(p.mu * xisq + lm * xi1**2)[active]
    a12 = -(lm * xi1 * xi2)[active]
    a22 = -(p.mu * xisq + lm * xi2**2)[active]
    mat = np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)
    det = a11 * a22 - a12**2
    scale = (p.mu * xisq[active]) ** 2
    if np.any(np.abs(det) <= 1e-14 * scale):
        raise np.linalg.LinAlgError("singular Lame block at k != 0; check LameParams")
    rhs = np.stack([1j * p.mu * xi2 * rhat, 1j * p.mu * xi1 * rhat], -1)[active]
    sol = np.linalg.solve(mat.astype(complex), rhs[..., None])[..., 0]

    u1 = np.zeros(grid.shape, complex)
    u2 = np.zeros(grid.shape, complex)
    u1[active] = sol[:, 0]
    u2[active] = sol[:, 1]
    return DisplacementField(_ifft_real(u1, grid), _ifft_real(u2, grid))


def _gradients(u: DisplacementField):
    g = u.grid
    d1 = derivative_symbol(g, 1)
    d2 = derivative_symbol(g, 2)
    c1, c2 = _fft(u.u1), _fft(u.u2)
    back = lambda c: np.fft.ifft2(c, norm="forward").real  # noqa: E731
    return back(d1 * c1), back(d2 * c1), back(d1 * c2), back(d2 * c2)


def sigma12_direct(u: DisplacementField, rho: RealField, p: LameParams) -> RealField:
    """``sigma_12 = mu (d2 u1 + d1 u2 - rho)``.

    ``rho`` should be the same (mean-free) field the displacement was solved
    for. Modes invisible to the discrete gradient are dropped from ``rho``
    (see ``_strain_visible``).
    """
    _check_same_grid(u.grid, rho.grid)
    _, d2u1, d1u2, _ = _gradients(u)
    return RealField(rho.grid, p.mu * (d2u1 + d1u2 - _strain_visible(rho)))


def _strain_visible(rho: RealField) -> np.ndarray:
    """``rho`` without the nonzero modes on which the discrete gradient vanishes.

    These are the pure Nyquist modes ``(n1/2, 0)``, ``(0, n2/2)`` and
    ``(n1/2, n2/2)``. No displacement can relax them, and the Nyquist
    convention assigns them zero stress in the closed form as well.
    """
    g = rho.grid
    null = (g.k1_odd == 0) & (g.k2_odd == 0)
    null[0, 0] = False
    if not null.any():
        return rho.values
    c = _fft(rho)
    c[np.broadcast_to(null, g.shape)] = 0.0
    return np.fft.ifft2(c, norm="forward").real


def elastic_energy(u: DisplacementField, rho: RealField, p: LameParams) -> float:
    """``int mu sum_ij (e_ij)^2 + lambda/2 (tr e)^2`` with ``e = sym grad u - rho eps0``."""
    _check_same_grid(u.grid, rho.grid)
    if np.min(p.energy_form_eigenvalues()) < 0:
        raise ValueError(f"strain-energy form is indefinite for {p}")
    d1u1, d2u1, d1u2, d2u2 = _gradients(u)
    e11 = d1u1
    e22 = d2u2
    e12 = 0.5 * (d2u1 + d1u2) - 0.5 * rho.values
    density = p.mu * (e11**2 + e22**2 + 2.0 * e12**2) + 0.5 * p.lam * (e11 + e22) ** 2
    return float(np.mean(density))

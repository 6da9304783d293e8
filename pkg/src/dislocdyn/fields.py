"""Density states, admissibility checks, mollification and Orlicz norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from .spectral import (
    RealField,
    TorusGrid,
    _check_same_grid,
    derivative_symbol,
)

__all__ = [
    "DensityState",
    "ModeSpec",
    "PerturbationSpec",
    "YoungFunction",
    "HypothesisReport",
    "HypothesisViolation",
    "build_initial",
    "mollify",
    "check_hypotheses",
    "theta_fields",
    "luxemburg_norm",
    "entropy_density_integral",
    "entropy_clamp_count",
    "entropy_floor",
    "periodicity_residuals",
    "state_from_samples",
    "sobolev_norm",
    "holder_ratio",
    "trudinger_gamma",
]

ENTROPY_FLOOR_FACTOR = 1e-12


class HypothesisViolation(ValueError):
    """Initial data that is not non-decreasing in ``x1``."""


@dataclass(frozen=True, eq=False)
class DensityState:
    """Periodic parts of ``rho^+`` and ``rho^-`` plus slope, viscosity and time.

    The full fields are ``rho^{+-} = rho^{+-,per} + slope_L * x1``; the linear
    part is never stored.
    """

    rho_plus_per: RealField
    rho_minus_per: RealField
    slope_L: float
    epsilon: float = 0.0
    time: float = 0.0

    def __post_init__(self):
        _check_same_grid(self.rho_plus_per.grid, self.rho_minus_per.grid)
        if not (self.slope_L > 0 and math.isfinite(self.slope_L)):
            raise ValueError(f"slope_L must be positive and finite, got {self.slope_L}")
        if not self.epsilon >= 0:
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if not self.time >= 0:
            raise ValueError(f"time must be >= 0, got {self.time}")

    @property
    def grid(self) -> TorusGrid:
        return self.rho_plus_per.grid

    @property
    def rho(self) -> RealField:
        """``rho^+ - rho^-`` (the linear parts cancel)."""
        return self.rho_plus_per - self.rho_minus_per

    def full(self) -> tuple[np.ndarray, np.ndarray]:
        """Node samples of the non-periodic ``rho^+`` and ``rho^-``."""
        lin = self.slope_L * self.grid.x1
        return self.rho_plus_per.values + lin, self.rho_minus_per.values + lin

    def replace(self, **changes) -> "DensityState":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeSpec:
    """``amplitude * sin(2 pi (k1 x1 + k2 x2) + phase)`` added to one or both species.

    species: ``"+"``, ``"-"``, ``"both"`` (same sign) or ``"anti"`` (opposite signs).
    """

    k1: int
    k2: int
    amplitude: float
    species: Literal["+", "-", "both", "anti"] = "+"
    phase: float = 0.0

    def __post_init__(self):
        if self.species not in ("+", "-", "both", "anti"):
            raise ValueError(f"unknown species {self.species!r}")


@dataclass(frozen=True)
class PerturbationSpec:
    """Explicit modes plus an optional seeded random multi-mode part.

    The random part draws ``random_modes`` wavevectors per species with
    ``1 <= k1 <= random_kmax`` and ``1 <= |k2| <= random_kmax`` and scales the
    amplitudes so that the worst-case bound on ``|d1 rho^per|`` equals
    ``random_fraction * L``.
    """

    modes: tuple[ModeSpec, ...] = ()
    random_modes: int = 0
    random_kmax: int = 3
    random_fraction: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if self.random_modes < 0 or self.random_kmax < 1:
            raise ValueError("random_modes must be >= 0 and random_kmax >= 1")
        if not 0 <= self.random_fraction < 1:
            raise ValueError("random_fraction must lie in [0, 1)")

    @classmethod
    def single_mode(cls, slope_L: float, k1: int = 1, k2: int = 1) -> "PerturbationSpec":
        """One ``+`` mode whose x1-derivative uses half of the slope."""
        return cls(modes=(ModeSpec(k1, k2, slope_L / (4 * np.pi * abs(k1)), "+"),))

    @classmethod
    def random(cls, n_modes: int = 3, kmax: int = 3, fraction: float = 0.5) -> "PerturbationSpec":
        return cls(random_modes=n_modes, random_kmax=kmax, random_fraction=fraction)


def _mode_values(grid: TorusGrid, k1: int, k2: int, amp: float, phase: float) -> np.ndarray:
    return amp * np.sin(2 * np.pi * (k1 * grid.x1 + k2 * grid.x2) + phase)


def build_initial(grid: TorusGrid, slope_L: float, perturbation: PerturbationSpec | None = None, seed: int = 0) -> DensityState:
    """Assemble admissible initial data ``rho^{+-,per} + L x1`` at ``t = 0``, ``eps = 0``.

    Raises HypothesisViolation if the perturbation makes ``d1 rho^{+-}`` negative.
    """
    perturbation = perturbation or PerturbationSpec()
    plus = np.zeros(grid.shape)
    minus = np.zeros(grid.shape)
    for m in perturbation.modes:
        v = _mode_values(grid, m.k1, m.k2, m.amplitude, m.phase)
        if m.species in ("+", "both", "anti"):
            plus += v
        if m.species in ("-", "both"):
            minus += v
        elif m.species == "anti":
            minus -= v

    if perturbation.random_modes:
        rng = np.random.default_rng(seed)
        kmax = perturbation.random_kmax
        budget = perturbation.random_fraction * slope_L
        for target in (plus, minus):
            k1 = rng.integers(1, kmax + 1, size=perturbation.random_modes)
            k2 = rng.integers(1, kmax + 1, size=perturbation.random_modes) * rng.choice([-1, 1], size=perturbation.random_modes)
            w = rng.uniform(0.5, 1.0, size=perturbation.random_modes)
            phase = rng.uniform(0.0, 2 * np.pi, size=perturbation.random_modes)
            amps = budget * w / (2 * np.pi * np.sum(k1 * w))
            for a, b, amp, ph in zip(k1, k2, amps, phase):
                target += _mode_values(grid, int(a), int(b), float(amp), float(ph))

    state = DensityState(RealField(grid, plus), RealField(grid, minus), float(slope_L))
    report = check_hypotheses(state)
    if report.h3_margin < 0:
        raise HypothesisViolation(
            f"perturbation breaks monotonicity in x1: margins (+, -) = "
            f"({report.h3_margins[0]:.6g}, {report.h3_margins[1]:.6g})"
        )
    return state


def mollify(state: DensityState, eps: float) -> DensityState:
    """Smooth the periodic parts with a Gaussian of width ``eps`` and raise the slope to ``L + eps``.

    The Gaussian acts as the multiplier ``exp(-2 pi^2 eps^2 |k|^2)`` (positive,
    unit mass); the slope increment makes the data strictly increasing in ``x1``.
    """
    if not 0 < eps <= 1:
        raise ValueError(f"mollifier width must lie in (0, 1], got {eps}")
    g = state.grid
    mult = np.exp(-2.0 * np.pi**2 * eps**2 * g.ksq)

    def smooth(f: RealField) -> RealField:
        return RealField(g, np.fft.ifft2(np.fft.fft2(f.values) * mult).real)

    return DensityState(
        smooth(state.rho_plus_per),
        smooth(state.rho_minus_per),
        state.slope_L + eps,
        epsilon=float(eps),
        time=state.time,
    )


# ---------------------------------------------------------------------------
# Hypotheses
# ---------------------------------------------------------------------------


def theta_fields(state: DensityState) -> tuple[np.ndarray, np.ndarray]:
    """Dislocation densities ``theta^{+-} = L + d1 rho^{+-,per}`` (spectral derivative)."""
    d1 = derivative_symbol(state.grid, 1)
    out = []
    for f in (state.rho_plus_per, state.rho_minus_per):
        d = np.fft.ifft2(np.fft.fft2(f.values) * d1).real
        out.append(state.slope_L + d)
    return out[0], out[1]


@dataclass(frozen=True)
class HypothesisReport:
    h1_residual: float
    h2_residual: float
    h3_margins: tuple[float, float]
    h4_norms: tuple[float, float]

    @property
    def h3_margin(self) -> float:
        return min(self.h3_margins)

    @property
    def h4_norm(self) -> float:
        return max(self.h4_norms)

    @property
    def admissible(self) -> bool:
        return self.h3_margin >= 0 and math.isfinite(self.h4_norm)


def check_hypotheses(state: DensityState, h1_residual: float = 0.0, h2_residual: float = 0.0) -> HypothesisReport:
    """Report monotonicity margin and L log L norm of ``d1 rho^{+-}``.

    Periodicity residuals are zero for states built on the grid; pass the
    values from ``periodicity_residuals`` for externally sampled data.
    """
    tp, tm = theta_fields(state)
    ll = YoungFunction.llog(1.0)
    return HypothesisReport(
        float(h1_residual),
        float(h2_residual),
        (float(tp.min()), float(tm.min())),
        (luxemburg_norm(tp, ll), luxemburg_norm(tm, ll)),
    )


def periodicity_residuals(samples: np.ndarray, slope_L: float) -> tuple[float, float]:
    """Max-norm defects of ``rho(x1+1, x2) = rho + L`` and ``rho(x1, x2+1) = rho``.

    ``samples`` holds ``rho`` on the closed ``(n1+1) x (n2+1)`` lattice that
    includes the far edges ``x1 = 1`` and ``x2 = 1``.
    """
    s = np.asarray(samples, dtype=float)
    h1 = float(np.max(np.abs(s[-1, :] - s[0, :] - slope_L)))
    h2 = float(np.max(np.abs(s[:, -1] - s[:, 0])))
    return h1, h2


def state_from_samples(plus: np.ndarray, minus: np.ndarray, slope_L: float, epsilon: float = 0.0, time: float = 0.0):
    """Build a state from closed-lattice samples of the full ``rho^{+-}``.

    Returns ``(state, report)`` where the report carries the measured (H1)/(H2) residuals.
    """
    plus = np.asarray(plus, float)
    minus = np.asarray(minus, float)
    n1, n2 = plus.shape[0] - 1, plus.shape[1] - 1
    grid = TorusGrid(n1, n2)
    lin = slope_L * grid.x1
    state = DensityState(
        RealField(grid, plus[:-1, :-1] - lin),
        RealField(grid, minus[:-1, :-1] - lin),
        slope_L,
        epsilon,
        time,
    )
    rp = periodicity_residuals(plus, slope_L)
    rm = periodicity_residuals(minus, slope_L)
    return state, check_hypotheses(state, max(rp[0], rm[0]), max(rp[1], rm[1]))


# ---------------------------------------------------------------------------
# Orlicz layer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class YoungFunction:
    """``t (log(e+t))^beta`` (kind ``"llog"``) or ``exp(t^alpha) - 1`` (kind ``"exp"``)."""

    kind: Literal["llog", "exp"]
    param: float

    def __post_init__(self):
        if self.kind == "llog":
            if not self.param >= 0:
                raise ValueError(f"L log^beta L needs beta >= 0, got {self.param}")
        elif self.kind == "exp":
            if not self.param >= 1:
                raise ValueError(f"EXP_alpha needs alpha >= 1, got {self.param}")
        else:
            raise ValueError(f"unknown Young function kind {self.kind!r}")
        t = np.concatenate([[0.0], np.logspace(-6, 2, 400)])
        with np.errstate(over="ignore"):
            a = self(t)
        finite = np.isfinite(a)
        t, a = t[finite], a[finite]
        if a[0] != 0.0 or np.any(np.diff(a) < 0):
            raise ValueError(f"{self} is not a non-decreasing function vanishing at 0")
        slope = np.diff(a) / np.diff(t)
        if np.any(np.diff(slope) < -1e-9 * np.maximum(1.0, np.abs(slope[1:]))):
            raise ValueError(f"{self} is not convex")

    @classmethod
    def llog(cls, beta: float = 1.0) -> "YoungFunction":
        return cls("llog", float(beta))

    @classmethod
    def exp(cls, alpha: float = 2.0) -> "YoungFunction":
        return cls("exp", float(alpha))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "llog":
            return t * np.log(np.e + t) ** self.param
        with np.errstate(over="ignore"):
            return np.expm1(t**self.param)


def _as_array(f) -> np.ndarray:
    return f.values if isinstance(f, RealField) else np.asarray(f, dtype=float)


def luxemburg_norm(f: RealField | np.ndarray, young: YoungFunction, rtol: float = 1e-8) -> float:
    """``inf{lam > 0 : int A(|f|/lam) <= 1}`` by geometric bisection on ``lam``."""
    a = np.abs(_as_array(f)).ravel()
    if not np.all(np.isfinite(a)):
        raise ValueError("luxemburg_norm: non-finite input")
    amax = float(a.max()) if a.size else 0.0
    if amax == 0.0:
        return 0.0

    def excess(lam: float) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.mean(young(a / lam))) - 1.0

    lo = 1e-30
    while excess(lo) <= 0:
        lo *= 1e-30
        if lo == 0.0:
            return 0.0
    hi = max(1.0, 10.0 * amax)
    while excess(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            return math.inf
    while hi / lo - 1.0 > rtol:
        mid = math.sqrt(lo * hi)
        if excess(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return math.sqrt(lo * hi)


def entropy_floor(slope_L: float) -> float:
    return ENTROPY_FLOOR_FACTOR * slope_L


def entropy_density_integral(theta: RealField | np.ndarray, floor: float = ENTROPY_FLOOR_FACTOR) -> float:
    """Quadrature of ``theta ln theta`` with ``theta`` clamped below at ``floor``.

    Raises ValueError if any node is negative before clamping.
    """
    t = _as_array(theta)
    if np.any(t < 0):
        raise ValueError(f"negative density (min {t.min():.3e}): monotonicity was lost")
    t = np.maximum(t, floor)
    return float(np.mean(t * np.log(t)))


def entropy_clamp_count(theta: RealField | np.ndarray, floor: float = ENTROPY_FLOOR_FACTOR) -> int:
    return int(np.count_nonzero(_as_array(theta) < floor))


# ---------------------------------------------------------------------------
# Norm probes
# ---------------------------------------------------------------------------


def sobolev_norm(f: RealField | np.ndarray, p: float = 2.0, grid: TorusGrid | None = None) -> float:
    """``(int |f|^p + |grad f|^p)^(1/p)`` with the spectral gradient."""
    v = _as_array(f)
    grid = grid or (f.grid if isinstance(f, RealField) else TorusGrid(*v.shape))
    c = np.fft.fft2(v)
    g1 = np.fft.ifft2(c * derivative_symbol(grid, 1)).real
    g2 = np.fft.ifft2(c * derivative_symbol(grid, 2)).real
    grad = np.sqrt(g1**2 + g2**2)
    return float(np.mean(np.abs(v) ** p + grad**p) ** (1.0 / p))


def holder_ratio(f: RealField | np.ndarray, g: RealField | np.ndarray) -> float:
    """``||fg||_1 / (||f||_EXP2 ||g||_{L log^1/2 L})``, the constant probed by the generalized Hoelder inequality."""
    fv, gv = _as_array(f), _as_array(g)
    denom = luxemburg_norm(fv, YoungFunction.exp(2.0)) * luxemburg_norm(gv, YoungFunction.llog(0.5))
    return float(np.mean(np.abs(fv * gv)) / denom)


def trudinger_gamma(f: RealField) -> float:
    """Largest ``gamma`` with ``int (exp(gamma (f/||f||_W12)^2) - 1) <= 1``.

    This is ``(||f||_W12 / ||f||_EXP2)^2``; the Orlicz form (with the ``-1``) is
    used because ``int exp(...)`` alone is never below 1 on the unit torus.
    """
    w = sobolev_norm(f, 2.0)
    e = luxemburg_norm(f, YoungFunction.exp(2.0))
    if e == 0.0:
        return math.inf
    return (w / e) ** 2

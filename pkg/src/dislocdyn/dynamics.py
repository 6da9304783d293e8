"""Time integration of the viscous dislocation-density system.

Two independent discretisations are provided:

* ``step_imex`` / ``run``: integrating-factor (Lawson) Runge-Kutta in Fourier
  space. Diffusion is propagated exactly by the heat multiplier and the
  transport tendency is explicit.
* ``picard_mild_solve``: fixed-point iteration of the Duhamel (mild) form on
  a slab of uniform time nodes.

Both work on the periodic parts; the slope ``L`` enters only through the
linear forcing ``-+ L v``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from .fields import DensityState, sobolev_norm
from .spectral import RealField, TorusGrid, derivative_symbol, riesz_symbol

log = logging.getLogger(__name__)

__all__ = [
    "PicardConfig",
    "SolverConfig",
    "Tendency",
    "MonotonicityLost",
    "NonContractive",
    "PicardReport",
    "RunResult",
    "velocity",
    "transport_tendency",
    "step_imex",
    "estimate_tstar",
    "picard_mild_solve",
    "run",
]


class MonotonicityLost(RuntimeError):
    """A density ``d1 rho^{+-}`` went negative (the run is under-resolved)."""

    def __init__(self, time: float, margin: float, last_good: DensityState):
        super().__init__(f"monotonicity lost at t={time:.6g} (min d1 rho = {margin:.3e})")
        self.time = time
        self.margin = margin
        self.last_good = last_good


class NonFiniteState(RuntimeError):
    def __init__(self, time: float, last_good: DensityState | None):
        super().__init__(f"non-finite tendency at t={time:.6g}")
        self.time = time
        self.last_good = last_good


class NonContractive(RuntimeError):
    """Picard iteration did not reach its tolerance."""

    def __init__(self, ratios: list[float], diffs: list[float]):
        tail = ", ".join(f"{r:.3g}" for r in ratios[-5:])
        super().__init__(f"Picard iteration did not converge in {len(diffs)} iterations; last ratios [{tail}]")
        self.ratios = ratios
        self.diffs = diffs


@dataclass(frozen=True)
class PicardConfig:
    slab_T: float = 0.05
    quad_points: int = 64
    tol: float = 1e-10
    max_iter: int = 60
    c0: float = 1.0

    def __post_init__(self):
        if not (self.slab_T > 0 and self.quad_points >= 1 and self.tol > 0 and self.max_iter >= 1 and self.c0 > 0):
            raise ValueError(f"invalid Picard settings: {self}")


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 5e-3
    t_end: float = 0.5
    cfl_safety: float = 0.4
    scheme: Literal["IMEX_RK2", "IMEX_RK4"] = "IMEX_RK4"
    picard: PicardConfig = field(default_factory=PicardConfig)
    dealias_products: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not self.t_end >= 0:
            raise ValueError(f"t_end must be >= 0, got {self.t_end}")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError(f"cfl_safety must lie in (0, 1], got {self.cfl_safety}")
        if self.scheme not in ("IMEX_RK2", "IMEX_RK4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")

    def replace(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Tendency:
    d_rho_plus_per: RealField
    d_rho_minus_per: RealField


# ---------------------------------------------------------------------------
# Spectral kernels on raw arrays. ``U`` has shape (2, n1, n2): U[0] = rho^+per, U[1] = rho^-per.
# ---------------------------------------------------------------------------


class _Kernel:
    def __init__(self, grid: TorusGrid, slope_L: float, dealias_products: bool):
        self.grid = grid
        self.L = slope_L
        self.R22 = riesz_symbol(grid, 2, 2)
        self.D1 = derivative_symbol(grid, 1)
        self.mask = grid.dealias_mask if dealias_products else None
        self.ksq4 = 4.0 * np.pi**2 * grid.ksq
        self.vmax = 0.0

    def tendency(self, U: np.ndarray) -> np.ndarray:
        vh = self.R22 * (U[0] - U[1])
        d1 = self.D1 * U
        if self.mask is not None:
            vh = vh * self.mask
            d1 = d1 * self.mask
        v = np.fft.ifft2(vh).real
        dr = np.fft.ifft2(d1).real
        self.vmax = float(np.max(np.abs(v)))
        prod = np.empty_like(dr)
        prod[0] = -v * (dr[0] + self.L)
        prod[1] = v * (dr[1] + self.L)
        out = np.fft.fft2(prod)
        if self.mask is not None:
            out = out * self.mask
        return out

    def heat(self, eps: float, h: float) -> np.ndarray:
        return np.exp(-self.ksq4 * (eps * h))

    def theta_min(self, U: np.ndarray) -> float:
        return float(self.L + np.min(np.fft.ifft2(self.D1 * U).real))


def _to_spectral(state: DensityState) -> np.ndarray:
    return np.fft.fft2(np.stack([state.rho_plus_per.values, state.rho_minus_per.values]))


def _to_state(U: np.ndarray, like: DensityState, time: float) -> DensityState:
    r = np.fft.ifft2(U).real
    g = like.grid
    return DensityState(RealField(g, r[0]), RealField(g, r[1]), like.slope_L, like.epsilon, time)


def _lawson_step(ker: _Kernel, U: np.ndarray, eps: float, h: float, scheme: str, k1: np.ndarray | None = None) -> np.ndarray:
    if k1 is None:
        k1 = ker.tendency(U)
    if scheme == "IMEX_RK2":
        E = ker.heat(eps, h)
        k2 = ker.tendency(E * (U + h * k1))
        return E * (U + 0.5 * h * k1) + 0.5 * h * k2
    Eh = ker.heat(eps, 0.5 * h)
    E = Eh * Eh
    EhU = Eh * U
    k2 = ker.tendency(EhU + 0.5 * h * (Eh * k1))
    k3 = ker.tendency(EhU + 0.5 * h * k2)
    k4 = ker.tendency(E * U + h * (Eh * k3))
    return E * U + (h / 6.0) * (E * k1 + 2.0 * Eh * (k2 + k3) + k4)


def _cfl_dt(ker: _Kernel, cfl_safety: float) -> float:
    return cfl_safety * min(ker.grid.dx) / max(ker.vmax, 1e-30)


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def velocity(state: DensityState) -> RealField:
    """``R1^2 R2^2 (rho^+ - rho^-)`` as a real, mean-free field."""
    c = np.fft.fft2(state.rho.values) * riesz_symbol(state.grid, 2, 2)
    return RealField(state.grid, np.fft.ifft2(c).real)


def transport_tendency(state: DensityState, dealias_products: bool = True) -> Tendency:
    """``d rho^{+-,per}/dt = -+ v (d1 rho^{+-,per} + L)`` without the viscous term."""
    ker = _Kernel(state.grid, state.slope_L, dealias_products)
    T = np.fft.ifft2(ker.tendency(_to_spectral(state))).real
    if not np.all(np.isfinite(T)):
        raise NonFiniteState(state.time, state)
    return Tendency(RealField(state.grid, T[0]), RealField(state.grid, T[1]))


def step_imex(state: DensityState, cfg: SolverConfig, dt: float | None = None) -> DensityState:
    """Advance one step of at most ``dt`` (default ``cfg.dt``), reduced to satisfy the CFL bound.

    The step actually taken is ``result.time - state.time``.
    """
    ker = _Kernel(state.grid, state.slope_L, cfg.dealias_products)
    U = _to_spectral(state)
    h = cfg.dt if dt is None else dt
    k1 = ker.tendency(U)
    h = min(h, _cfl_dt(ker, cfg.cfl_safety))
    Un = _lawson_step(ker, U, state.epsilon, h, cfg.scheme, k1)
    if not np.all(np.isfinite(Un)):
        raise NonFiniteState(state.time + h, state)
    margin = ker.theta_min(Un)
    if margin < 0:
        raise MonotonicityLost(state.time + h, margin, state)
    return _to_state(Un, state, state.time + h)


def estimate_tstar(state: DensityState, c0: float) -> float:
    """Local existence time ``T*`` with ``T*^(1/4) = min(1/(2 C0 L), 1/(16 C0 ||rho_0||))``.

    ``||rho_0||`` is the sum over species of the W^{1,3/2} norms of the periodic parts.
    """
    if not c0 > 0:
        raise ValueError(f"c0 must be > 0, got {c0}")
    norm = sobolev_norm(state.rho_plus_per, 1.5) + sobolev_norm(state.rho_minus_per, 1.5)
    a = 1.0 / (2.0 * c0 * state.slope_L)
    b = math.inf if norm == 0 else 1.0 / (16.0 * c0 * norm)
    return min(a, b) ** 4


@dataclass
class PicardReport:
    iterations: int
    diffs: list[float]
    ratios: list[float]
    converged: bool
    tstar: float
    slab_T: float


def _pair_w132_sup(grid: TorusGrid, dU: np.ndarray) -> float:
    """sup over time nodes of the summed W^{1,3/2} norms; ``dU`` has shape (Q+1, 2, n1, n2)."""
    D1 = derivative_symbol(grid, 1)
    D2 = derivative_symbol(grid, 2)
    f = np.fft.ifft2(dU).real
    g1 = np.fft.ifft2(D1 * dU).real
    g2 = np.fft.ifft2(D2 * dU).real
    dens = np.abs(f) ** 1.5 + np.sqrt(g1**2 + g2**2) ** 1.5
    norms = np.mean(dens, axis=(-2, -1)) ** (2.0 / 3.0)
    return float(np.max(np.sum(norms, axis=-1)))


def picard_mild_solve(state0: DensityState, cfg: SolverConfig) -> tuple[list[DensityState], PicardReport]:
    """Fixed-point iteration of the mild form on ``[0, slab_T]``.

    The Duhamel integrals use the exact heat propagator from each interval
    midpoint with the integrand averaged over the interval endpoints.
    Raises NonContractive if ``tol`` is not reached within ``max_iter``.
    """
    pc = cfg.picard
    eps = state0.epsilon
    if not eps > 0:
        raise ValueError("picard_mild_solve needs epsilon > 0")
    tstar = estimate_tstar(state0, pc.c0)
    if pc.slab_T > tstar:
        warnings.warn(f"slab_T={pc.slab_T:.3g} exceeds the T* estimate {tstar:.3g}", RuntimeWarning, stacklevel=2)

    grid = state0.grid
    ker = _Kernel(grid, state0.slope_L, cfg.dealias_products)
    Q = pc.quad_points
    h = pc.slab_T / Q
    U0 = _to_spectral(state0)
    Sh = ker.heat(eps, h)
    Shalf = ker.heat(eps, 0.5 * h)

    free = np.empty((Q + 1,) + U0.shape, complex)
    free[0] = U0
    for j in range(1, Q + 1):
        free[j] = Sh * free[j - 1]

    X = free.copy()
    diffs: list[float] = []
    ratios: list[float] = []
    converged = False
    for it in range(1, pc.max_iter + 1):
        F = np.stack([ker.tendency(X[j]) for j in range(Q + 1)])
        Xn = free.copy()
        D = np.zeros_like(U0)
        for j in range(1, Q + 1):
            D = Sh * D + h * Shalf * (0.5 * (F[j - 1] + F[j]))
            Xn[j] += D
        diff = _pair_w132_sup(grid, Xn - X)
        if diffs:
            ratios.append(diff / diffs[-1] if diffs[-1] > 0 else 0.0)
        diffs.append(diff)
        X = Xn
        log.debug("picard iteration %d: diff %.3e", it, diff)
        if diff < pc.tol:
            converged = True
            break
    if not converged:
        raise NonContractive(ratios, diffs)

    traj = [_to_state(X[j], state0, state0.time + j * h) for j in range(Q + 1)]
    return traj, PicardReport(len(diffs), diffs, ratios, converged, tstar, pc.slab_T)


@dataclass
class RunResult:
    final: DensityState
    states: list[DensityState]
    records: list
    dts: list[float]
    completed: bool = True
    error: Exception | None = None


def run(
    state0: DensityState,
    cfg: SolverConfig,
    diag_every: int = 1,
    *,
    recorder: Callable | None = None,
    keep_states: bool = True,
    checkpoint_dir: str | Path | None = None,
    checkpoint_every: int = 0,
    raise_errors: bool = True,
) -> RunResult:
    """Advance ``state0`` to ``cfg.t_end`` emitting a diagnostics record every ``diag_every`` steps.

    ``recorder(state, prev_record)`` defaults to ``diagnostics.record``. On a
    hard error the last good state is checkpointed (if a directory is given)
    and the error is re-raised, or returned in the result when
    ``raise_errors`` is false.
    """
    from . import diagnostics, io  # local import: diagnostics depends on this module's outputs only

    if diag_every < 1:
        raise ValueError("diag_every must be >= 1")
    recorder = recorder or diagnostics.record
    ckpt = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt is not None:
        ckpt.mkdir(parents=True, exist_ok=True)

    if state0.epsilon > 0 and fields_margin(state0) <= 0:
        raise ValueError("initial state must be strictly increasing in x1 when epsilon > 0")

    ker = _Kernel(state0.grid, state0.slope_L, cfg.dealias_products)
    U = _to_spectral(state0)
    t = state0.time
    t_end = state0.time + cfg.t_end
    state = state0
    records = [recorder(state0, None)]
    states = [state0] if keep_states else []
    dts: list[float] = []
    n = 0
    err: Exception | None = None
    try:
        while t_end - t > 1e-12 * max(1.0, t_end):
            k1 = ker.tendency(U)
            h = min(cfg.dt, t_end - t, _cfl_dt(ker, cfg.cfl_safety))
            Un = _lawson_step(ker, U, state0.epsilon, h, cfg.scheme, k1)
            if not np.all(np.isfinite(Un)):
                raise NonFiniteState(t + h, state)
            margin = ker.theta_min(Un)
            if margin < 0:
                raise MonotonicityLost(t + h, margin, state)
            U = Un
            n += 1
            t = t_end if t_end - (t + h) <= 1e-12 * max(1.0, t_end) else t + h
            dts.append(h)
            last = t == t_end
            if n % diag_every == 0 or last or (checkpoint_every and n % checkpoint_every == 0):
                state = _to_state(U, state0, t)
            if n % diag_every == 0 or last:
                records.append(recorder(state, records[-1]))
                if keep_states:
                    states.append(state)
            if ckpt is not None and checkpoint_every and n % checkpoint_every == 0:
                io.save_state(state, ckpt / f"checkpoint_{n:06d}.gbd")
    except (MonotonicityLost, NonFiniteState) as e:
        err = e
        if ckpt is not None:
            io.save_state(e.last_good, ckpt / "checkpoint_last_good.gbd")
        if raise_errors:
            raise
    final = states[-1] if keep_states and states else _to_state(U, state0, t)
    return RunResult(final, states, records, dts, err is None, err)


def fields_margin(state: DensityState) -> float:
    ker = _Kernel(state.grid, state.slope_L, False)
    return ker.theta_min(_to_spectral(state))

"""A priori estimates evaluated along trajectories, and their verifiers.

``record`` turns a state into a ``DiagnosticsRecord``; cumulative time
integrals are extended from the previous record by the trapezoid rule. The
``verify_*`` functions fold over record streams and return report objects;
they never raise on a violated inequality.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .elasticity import LameParams, elastic_energy, solve_displacement
from .fields import (
    DensityState,
    YoungFunction,
    entropy_clamp_count,
    entropy_density_integral,
    entropy_floor,
    luxemburg_norm,
    sobolev_norm,
)
from .spectral import RealField, TorusGrid, derivative_symbol, riesz_symbol

__all__ = [
    "DiagnosticsRecord",
    "record",
    "truncation_proxy",
    "EntropyReport",
    "EnergyReport",
    "OscillationReport",
    "MeanEquationReport",
    "DualityReport",
    "verify_entropy_inequality",
    "verify_energy_inequality",
    "verify_oscillation_bound",
    "verify_mean_equation",
    "verify_duality_bound",
    "CSV_COLUMNS",
    "record_row",
]

DEFAULT_LAME = LameParams(1.0, 1.0)

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True, eq=False)
class DiagnosticsRecord:
    time: float
    entropy_N: float
    dissipation_cum: float
    energy_E: float
    elastic_E: float
    l2_per: tuple[float, float]
    llogl_theta: tuple[float, float]
    h3_margin: tuple[float, float]
    velocity_w12: float
    mean_profiles: tuple[np.ndarray, np.ndarray]
    # instantaneous rates and their cumulative (trapezoid) integrals
    dissipation_rate: float = 0.0
    fisher_rate: float = 0.0
    fisher_cum: float = 0.0
    flux_rate: float = 0.0
    flux_cum: float = 0.0
    energy_visc_rate: float = 0.0
    energy_visc_cum: float = 0.0
    velocity_w12_sq_cum: float = 0.0
    l1_tendency: tuple[float, float] = (0.0, 0.0)
    mean_forcing: tuple[np.ndarray, np.ndarray] | None = None
    mean_curvature: tuple[np.ndarray, np.ndarray] | None = None
    clamp_count: int = 0
    truncation: float = 0.0
    epsilon: float = 0.0
    slope_L: float = 1.0


def _ifft(c: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(c).real


def truncation_proxy(coeffs: np.ndarray, grid: TorusGrid) -> float:
    """Relative L2 weight of the modes outside the dealiased band.

    Small for resolved fields; grows when energy piles up near the grid scale.
    """
    total = float(np.sum(np.abs(coeffs) ** 2))
    if total == 0.0:
        return 0.0
    outer = float(np.sum(np.abs(coeffs[~grid.dealias_mask]) ** 2))
    return math.sqrt(outer / total)


def record(
    state: DensityState,
    prev: DiagnosticsRecord | None = None,
    lame: LameParams = DEFAULT_LAME,
) -> DiagnosticsRecord:
    """Evaluate every diagnostic on ``state``.

    Raises ValueError (from the entropy evaluation) if a density is negative.
    """
    g = state.grid
    L = state.slope_L
    eps = state.epsilon
    D1 = derivative_symbol(g, 1)
    D2 = derivative_symbol(g, 2)
    R12 = riesz_symbol(g, 1, 1)
    R22 = riesz_symbol(g, 2, 2)

    P = np.fft.fft2(state.rho_plus_per.values)
    M = np.fft.fft2(state.rho_minus_per.values)
    rho_hat = P - M

    theta = [L + _ifft(D1 * P), L + _ifft(D1 * M)]
    floor = entropy_floor(L)
    entropy = sum(entropy_density_integral(t, floor) for t in theta)
    clamp = sum(entropy_clamp_count(t, floor) for t in theta)

    # R1R2 theta with theta = theta+ - theta- = d1 rho
    r12_theta = _ifft(R12 * D1 * rho_hat)
    dissipation_rate = float(np.mean(r12_theta**2))

    fisher = 0.0
    if eps > 0:
        for c, t in ((P, theta[0]), (M, theta[1])):
            gx = _ifft(D1 * D1 * c)
            gy = _ifft(D2 * D1 * c)
            fisher += float(np.mean((gx**2 + gy**2) / np.maximum(t, floor)))
        fisher *= eps

    r12_rho_hat = R12 * rho_hat
    energy = 0.5 * float(np.mean(_ifft(r12_rho_hat) ** 2))
    visc = 0.0
    if eps > 0:
        visc = eps * float(np.mean(_ifft(D1 * r12_rho_hat) ** 2 + _ifft(D2 * r12_rho_hat) ** 2))

    rho_field = RealField(g, _ifft(rho_hat) - float(np.real(rho_hat[0, 0])) / g.size)
    elastic = elastic_energy(solve_displacement(rho_field, lame), rho_field, lame)

    v_hat = R22 * rho_hat
    v = _ifft(v_hat)
    d1v = _ifft(D1 * v_hat)
    flux = float(np.mean(v**2 * (theta[0] + theta[1])))
    vw12 = sobolev_norm(v, 2.0, g)

    lap = -4.0 * np.pi**2 * g.ksq
    per = [state.rho_plus_per.values, state.rho_minus_per.values]
    means = tuple(np.mean(f, axis=0) for f in per)
    forcing = (
        np.mean(d1v * (per[0] - means[0][None, :]), axis=0),
        -np.mean(d1v * (per[1] - means[1][None, :]), axis=0),
    )
    curvature = tuple(np.mean(_ifft(lap * c), axis=0) for c in (P, M))

    tend = []
    for sign, c, t in ((-1.0, P, theta[0]), (1.0, M, theta[1])):
        rate = sign * v * t + eps * _ifft(lap * c)
        tend.append(float(np.mean(np.abs(rate))))

    ll = YoungFunction.llog(1.0)
    rec = dict(
        time=state.time,
        entropy_N=entropy,
        energy_E=energy,
        elastic_E=elastic,
        l2_per=(float(np.sqrt(np.mean(per[0] ** 2))), float(np.sqrt(np.mean(per[1] ** 2)))),
        llogl_theta=(luxemburg_norm(theta[0], ll), luxemburg_norm(theta[1], ll)),
        h3_margin=(float(theta[0].min()), float(theta[1].min())),
        velocity_w12=vw12,
        mean_profiles=means,
        dissipation_rate=dissipation_rate,
        fisher_rate=fisher,
        flux_rate=flux,
        energy_visc_rate=visc,
        l1_tendency=(tend[0], tend[1]),
        mean_forcing=forcing,
        mean_curvature=curvature,
        clamp_count=int(clamp),
        truncation=max(truncation_proxy(P, g), truncation_proxy(M, g)),
        epsilon=eps,
        slope_L=L,
    )
    if prev is None:
        cums = dict(dissipation_cum=0.0, fisher_cum=0.0, flux_cum=0.0, energy_visc_cum=0.0, velocity_w12_sq_cum=0.0)
    else:
        h = state.time - prev.time

        def trap(a, b):
            return 0.5 * h * (a + b)

        cums = dict(
            dissipation_cum=prev.dissipation_cum + trap(prev.dissipation_rate, dissipation_rate),
            fisher_cum=prev.fisher_cum + trap(prev.fisher_rate, fisher),
            flux_cum=prev.flux_cum + trap(prev.flux_rate, flux),
            energy_visc_cum=prev.energy_visc_cum + trap(prev.energy_visc_rate, visc),
            velocity_w12_sq_cum=prev.velocity_w12_sq_cum + trap(prev.velocity_w12**2, vw12**2),
        )
    return DiagnosticsRecord(**rec, **cums)


# ---------------------------------------------------------------------------
# CSV layout (frozen)
# ---------------------------------------------------------------------------

CSV_COLUMNS = (
    "time",
    "entropy_N",
    "dissipation_cum",
    "energy_E",
    "elastic_E",
    "l2_per_plus",
    "l2_per_minus",
    "llogl_theta_plus",
    "llogl_theta_minus",
    "h3_margin_plus",
    "h3_margin_minus",
    "velocity_w12",
    "dissipation_rate",
    "fisher_rate",
    "fisher_cum",
    "flux_rate",
    "flux_cum",
    "energy_visc_rate",
    "energy_visc_cum",
    "velocity_w12_sq_cum",
    "l1_tendency_plus",
    "l1_tendency_minus",
    "clamp_count",
    "truncation",
)


def record_row(r: DiagnosticsRecord) -> list[float]:
    """Values in ``CSV_COLUMNS`` order."""
    d = {k: v for k, v in asdict(r).items() if k not in ("mean_profiles", "mean_forcing", "mean_curvature")}
    out = []
    for col in CSV_COLUMNS:
        if col.endswith("_plus"):
            out.append(d[col[: -len("_plus")]][0])
        elif col.endswith("_minus"):
            out.append(d[col[: -len("_minus")]][1])
        else:
            out.append(d[col])
    return out


# ---------------------------------------------------------------------------
# Verifiers
# ---------------------------------------------------------------------------


def _max_dt(records: Sequence[DiagnosticsRecord]) -> float:
    t = np.array([r.time for r in records])
    return float(np.max(np.diff(t))) if len(t) > 1 else 0.0


@dataclass
class EntropyReport:
    passed: bool
    first_fail_index: int | None
    worst_excess: float
    one_step_ok: bool
    balance_defect: float
    margins: np.ndarray = field(repr=False)

    @property
    def resolution_diagnosis(self) -> str:
        if self.passed:
            return "ok"
        return "entropy inequality violated beyond slack: likely under-resolved (refine grid, enable dealiasing, reduce dt)"


def verify_entropy_inequality(records: Sequence[DiagnosticsRecord], c_tol: float = 1e-3) -> EntropyReport:
    """Check ``N(t_n) + D(t_n) <= N(0) + tol_n`` and one-step monotonicity of ``N + D``.

    ``tol_n = c_tol (|N0|+1) (dt + truncation) n``. The reported
    ``balance_defect`` is ``max_n |N + D + F - N0|`` where ``F`` is the
    cumulative viscous (Fisher) term; for a consistent scheme it is the pure
    discretisation error of the entropy identity.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    N0 = records[0].entropy_N
    dt = _max_dt(records)
    trunc = max(r.truncation for r in records)
    unit = c_tol * (abs(N0) + 1.0) * (dt + trunc)
    lhs = np.array([r.entropy_N + r.dissipation_cum for r in records])
    n = np.arange(len(records))
    margins = lhs - N0 - unit * n
    bad = np.nonzero(margins > 0)[0]
    steps_ok = bool(np.all(np.diff(lhs) <= unit))
    defect = float(np.max(np.abs(lhs + np.array([r.fisher_cum for r in records]) - N0)))
    return EntropyReport(
        passed=bad.size == 0 and steps_ok,
        first_fail_index=int(bad[0]) if bad.size else None,
        worst_excess=float(np.max(margins)),
        one_step_ok=steps_ok,
        balance_defect=defect,
        margins=margins,
    )


@dataclass
class EnergyReport:
    passed: bool
    first_fail_index: int | None
    worst_excess: float
    monotone: bool
    elastic_monotone: bool
    balance_residual: float
    viscous_slack: float


def verify_energy_inequality(records: Sequence[DiagnosticsRecord], c_tol: float = 1e-3, step_slack: float = 1e-6) -> EnergyReport:
    """Check ``E(t) + int v^2 (theta+ + theta-) <= E(0) + tol`` and monotone decay of ``E`` and the elastic energy.

    The per-step slack is ``step_slack * E(0)``. ``balance_residual`` is
    ``max_n |E + flux + viscous - E0|`` (zero in the continuum); the viscous
    term only increases dissipation and is reported as ``viscous_slack``.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    E = np.array([r.energy_E for r in records])
    Eel = np.array([r.elastic_E for r in records])
    flux = np.array([r.flux_cum for r in records])
    visc = np.array([r.energy_visc_cum for r in records])
    dt = _max_dt(records)
    trunc = max(r.truncation for r in records)
    unit = c_tol * (abs(E[0]) + 1.0) * (dt + trunc)
    n = np.arange(len(records))
    margins = E + flux - E[0] - unit * n
    bad = np.nonzero(margins > 0)[0]
    monotone = bool(np.all(np.diff(E) <= step_slack * E[0]))
    el_monotone = bool(np.all(np.diff(Eel) <= step_slack * Eel[0]))
    return EnergyReport(
        passed=bad.size == 0 and monotone and el_monotone,
        first_fail_index=int(bad[0]) if bad.size else None,
        worst_excess=float(np.max(margins)),
        monotone=monotone,
        elastic_monotone=el_monotone,
        balance_residual=float(np.max(np.abs(E + flux + visc - E[0]))),
        viscous_slack=float(visc[-1]),
    )


@dataclass
class OscillationReport:
    passed: bool
    max_row_variation: tuple[float, float]
    max_row_oscillation: tuple[float, float]
    bound: float


def verify_oscillation_bound(state: DensityState, atol: float = 1e-8) -> OscillationReport:
    """Row-wise ``int_0^1 |d1 rho^{+-,per}| dx1`` and ``max |rho^{+-,per} - row mean|`` against ``2L``."""
    g = state.grid
    D1 = derivative_symbol(g, 1)
    tv, osc = [], []
    for f in (state.rho_plus_per.values, state.rho_minus_per.values):
        d = _ifft(D1 * np.fft.fft2(f))
        tv.append(float(np.max(np.mean(np.abs(d), axis=0))))
        osc.append(float(np.max(np.abs(f - np.mean(f, axis=0)[None, :]))))
    bound = 2.0 * state.slope_L + atol
    ok = max(tv) <= bound and max(osc) <= bound
    return OscillationReport(ok, (tv[0], tv[1]), (osc[0], osc[1]), bound)


@dataclass
class MeanEquationReport:
    max_residual: float
    row_residual: tuple[np.ndarray, np.ndarray] = field(repr=False)

    def passed(self, threshold: float) -> bool:
        return self.max_residual <= threshold


def verify_mean_equation(records: Sequence[DiagnosticsRecord]) -> MeanEquationReport:
    """Finite-difference residual of ``d_t m - eps d_22 m = I`` between consecutive records.

    Uses the implicit-midpoint form: mean-in-time of the right-hand side at
    both ends of each interval.
    """
    if len(records) < 2:
        raise ValueError("need at least two records")
    worst = [np.zeros_like(records[0].mean_profiles[0]) for _ in range(2)]
    for a, b in zip(records[:-1], records[1:]):
        h = b.time - a.time
        if h <= 0:
            continue
        for s in range(2):
            rhs = 0.5 * (
                a.epsilon * a.mean_curvature[s] + a.mean_forcing[s] + b.epsilon * b.mean_curvature[s] + b.mean_forcing[s]
            )
            res = np.abs((b.mean_profiles[s] - a.mean_profiles[s]) / h - rhs)
            worst[s] = np.maximum(worst[s], res)
    return MeanEquationReport(float(max(w.max() for w in worst)), (worst[0], worst[1]))


@dataclass
class DualityReport:
    ratios: list[float]
    max_ratio: float


def verify_duality_bound(trajectory: Sequence[DensityState], probes: Sequence) -> DualityReport:
    """Pairing ratios ``|int int psi R1^2R2^2 (d_t rho)| / ||psi||_{L2(W12)}``.

    Each probe is a RealField (constant in time), a callable ``(x1, x2, t)``,
    or a sequence of RealFields aligned with ``trajectory``. The time
    derivative uses centred differences (one-sided at the ends) and the time
    integrals use the trapezoid rule.
    """
    if len(trajectory) < 2:
        raise ValueError("need at least two states")
    g = trajectory[0].grid
    times = np.array([s.time for s in trajectory])
    R22 = riesz_symbol(g, 2, 2)
    vel = np.stack([_ifft(R22 * np.fft.fft2(s.rho.values)) for s in trajectory])
    dvel = np.gradient(vel, times, axis=0)

    ratios = []
    for probe in probes:
        if isinstance(probe, RealField):
            psi = [probe.values] * len(trajectory)
        elif callable(probe):
            psi = [np.asarray(probe(g.x1, g.x2, t), float) * np.ones(g.shape) for t in times]
        else:
            psi = [p.values for p in probe]
        pair = np.array([np.mean(p * d) for p, d in zip(psi, dvel)])
        norm_sq = np.array([sobolev_norm(p, 2.0, g) ** 2 for p in psi])
        num = abs(float(_trapezoid(pair, times)))
        den = math.sqrt(float(_trapezoid(norm_sq, times)))
        ratios.append(num / den if den > 0 else 0.0)
    return DualityReport(ratios, max(ratios) if ratios else 0.0)

"""Self-contained property checks used by the ``verify_suite`` mode.

Each check returns a JSON-serialisable dict with a ``passed`` flag and the
measured defects. Trajectory-level verifiers live in ``diagnostics``.
"""

from __future__ import annotations

import math

import numpy as np

from .dynamics import SolverConfig, run, step_imex
from .elasticity import LameParams, c1_constant, sigma12_direct, sigma12_spectral, solve_displacement
from .fields import DensityState, YoungFunction, luxemburg_norm
from .spectral import (
    RealField,
    TorusGrid,
    coeff_inner,
    forward_transform,
    partial_derivative,
    riesz,
)

__all__ = [
    "LAME_SETTINGS",
    "llogl_constant_root",
    "riesz_identities",
    "stress_equivalence",
    "invariant_subspaces",
    "orlicz_properties",
    "invariant_checks",
]

LAME_SETTINGS = (LameParams(1.0, 1.0), LameParams(0.0, 1.0), LameParams(2.0, 0.7), LameParams(-0.3, 1.0))


def llogl_constant_root(tol: float = 1e-15) -> float:
    """Root ``u*`` of ``u log(e + u) = 1`` by bisection; the L log L norm of 1 is ``1/u*``."""
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid * math.log(math.e + mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _random_field(grid: TorusGrid, rng: np.random.Generator) -> RealField:
    return RealField(grid, rng.standard_normal(grid.shape))


def riesz_identities(n: int, n_fields: int, seed: int = 0) -> dict:
    """Adjointness, commutation, derivative exchange, zero mode and zero row-mean defects."""
    grid = TorusGrid(n, n)
    rng = np.random.default_rng(seed)
    worst = dict(adjoint=0.0, commute=0.0, derivative_exchange=0.0, zero_mode=0.0, row_mean=0.0)
    for _ in range(n_fields):
        f, g = _random_field(grid, rng), _random_field(grid, rng)
        cf, cg = forward_transform(f), forward_transform(g)
        nf = math.sqrt(coeff_inner(cf, cf).real)
        ng = math.sqrt(coeff_inner(cg, cg).real)
        scale = max(np.abs(cf.coeffs).max(), 1e-300)
        for axis in (1, 2):
            d = abs(coeff_inner(riesz(cf, axis), cg) - coeff_inner(cf, riesz(cg, axis)))
            worst["adjoint"] = max(worst["adjoint"], d / (nf * ng))
            worst["zero_mode"] = max(worst["zero_mode"], abs(riesz(cf, axis).at(0, 0)))
        r12 = riesz(riesz(cf, 2), 1).coeffs
        r21 = riesz(riesz(cf, 1), 2).coeffs
        worst["commute"] = max(worst["commute"], float(np.abs(r12 - r21).max()) / scale)
        a = np.fft.ifft2(partial_derivative(riesz(cf, 2), 1).coeffs, norm="forward")
        b = np.fft.ifft2(partial_derivative(riesz(cf, 1), 2).coeffs, norm="forward")
        worst["derivative_exchange"] = max(worst["derivative_exchange"], float(np.abs(a - b).max()) / f.max_abs())
        r1g = np.fft.ifft2(riesz(cg, 1).coeffs, norm="forward")
        worst["row_mean"] = max(worst["row_mean"], float(np.abs(r1g.mean(axis=0)).max()) / g.max_abs())
    return {"n": n, "fields": n_fields, **worst, "passed": all(v < 1e-12 for v in worst.values())}


def stress_equivalence(n: int = 32, n_fields: int = 50, seed: int = 0) -> dict:
    """Relative max-norm gap between the closed-form and displacement-solve shear stress."""
    grid = TorusGrid(n, n)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_fields):
        rho = _random_field(grid, rng)
        rho = RealField(grid, rho.values - rho.values.mean())
        for p in LAME_SETTINGS:
            s1 = sigma12_spectral(rho, p).values
            s2 = sigma12_direct(solve_displacement(rho, p), rho, p).values
            worst = max(worst, float(np.abs(s1 - s2).max() / np.abs(s1).max()))
    c1 = c1_constant(LameParams(1.0, 1.0))
    return {"max_relative_gap": worst, "c1_unit": c1, "passed": worst < 1e-10 and c1 == 8.0 / 3.0}


def invariant_subspaces(n: int = 32) -> dict:
    """Equal-pair, x1-only (eps = 0) and pure-linear data."""
    grid = TorusGrid(n, n)
    x1, x2 = grid.x1, grid.x2
    common = RealField(grid, 0.05 * np.sin(2 * np.pi * (x1 + 2 * x2)) + 0.03 * np.cos(2 * np.pi * (2 * x1 - x2)))
    eq = DensityState(common, common, 1.0, 0.02)
    r = run(eq, SolverConfig(dt=0.01, t_end=1.0), diag_every=10**9, recorder=lambda s, p: None, keep_states=False)
    pair_gap = float(np.abs(r.final.rho_plus_per.values - r.final.rho_minus_per.values).max())

    x1only = DensityState(
        RealField(grid, 0.1 * np.sin(2 * np.pi * x1) + 0 * x2),
        RealField(grid, 0.05 * np.cos(4 * np.pi * x1) + 0 * x2),
        1.0,
        0.0,
    )
    r = run(x1only, SolverConfig(dt=0.01, t_end=0.5), diag_every=10**9, recorder=lambda s, p: None, keep_states=False)
    drift = max(
        float(np.abs(r.final.rho_plus_per.values - x1only.rho_plus_per.values).max()),
        float(np.abs(r.final.rho_minus_per.values - x1only.rho_minus_per.values).max()),
    )

    zero = DensityState(RealField.zeros(grid), RealField.zeros(grid), 1.0, 0.1)
    s = zero
    for _ in range(5):
        s = step_imex(s, SolverConfig(dt=0.1, t_end=1.0))
    fixed = max(float(np.abs(s.rho_plus_per.values).max()), float(np.abs(s.rho_minus_per.values).max()))
    return {
        "equal_pair_gap": pair_gap,
        "x1_only_drift": drift,
        "pure_linear_drift": fixed,
        "passed": pair_gap < 1e-12 and drift < 1e-10 and fixed == 0.0,
    }


def orlicz_properties(n: int = 32, n_fields: int = 100, seed: int = 0) -> dict:
    """Constant-field value against the root oracle, homogeneity, monotonicity and the norm-integral bound."""
    grid = TorusGrid(n, n)
    rng = np.random.default_rng(seed)
    ll = YoungFunction.llog(1.0)
    oracle = 1.0 / llogl_constant_root()
    const = luxemburg_norm(np.ones(grid.shape), ll)
    homog = mono = bound = 0.0
    for _ in range(n_fields):
        f = rng.standard_normal(grid.shape) * rng.uniform(0.1, 5.0)
        c = rng.uniform(-10, 10)
        nf = luxemburg_norm(f, ll)
        homog = max(homog, abs(luxemburg_norm(c * f, ll) - abs(c) * nf) / (abs(c) * nf))
        g = np.abs(f) * (1.0 + rng.uniform(0.0, 1.0, grid.shape))
        mono = max(mono, nf - luxemburg_norm(g, ll))
        bound = max(bound, nf - (1.0 + float(np.mean(ll(np.abs(f))))))
    return {
        "constant_field": const,
        "root_oracle": oracle,
        "homogeneity_gap": homog,
        "monotonicity_excess": mono,
        "norm_integral_excess": bound,
        "passed": abs(const - oracle) < 1e-6 and homog < 1e-6 and mono <= 1e-6 and bound <= 1e-6,
    }


def invariant_checks() -> dict:
    return {
        "riesz_identities_64": riesz_identities(64, 10),
        "riesz_identities_128": riesz_identities(128, 10),
        "stress_equivalence": stress_equivalence(32, 10),
        "invariant_subspaces": invariant_subspaces(),
        "orlicz_properties": orlicz_properties(32, 20),
    }


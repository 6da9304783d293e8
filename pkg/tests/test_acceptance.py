"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test prints (and attaches) a one-line summary; ``conftest.py`` collects
them into a PASS/FAIL block at the end of the session.
"""

import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from dislocdyn.checks import invariant_subspaces, llogl_constant_root, orlicz_properties, riesz_identities, stress_equivalence
from dislocdyn.config import parse_config
from dislocdyn.dynamics import MonotonicityLost, SolverConfig, run
from dislocdyn.elasticity import LameParams, c1_constant
from dislocdyn.experiments import CAUCHY_EPSILONS, cauchy_distances, run_experiment, run_matrix, standard_matrix
from dislocdyn.fields import ModeSpec, PerturbationSpec, build_initial, mollify
from dislocdyn.spectral import TorusGrid

QUIET = dict(recorder=lambda s, p: None, diag_every=10**9, keep_states=False)


def report(record_property, text):
    record_property("detail", text)
    print(text)


@pytest.fixture(scope="module")
def matrix():
    t0 = time.perf_counter()
    results = run_matrix(standard_matrix())
    return results, time.perf_counter() - t0


def test_criterion_01_riesz_suite(record_property):
    t0 = time.perf_counter()
    reps = [riesz_identities(n, 100, seed=n) for n in (64, 128)]
    elapsed = time.perf_counter() - t0
    keys = ("adjoint", "commute", "derivative_exchange", "zero_mode", "row_mean")
    worst = {k: max(r[k] for r in reps) for k in keys}
    report(record_property, f"worst defects {', '.join(f'{k}={v:.1e}' for k, v in worst.items())}; {elapsed:.1f}s")
    assert all(v < 1e-12 for v in worst.values())
    assert elapsed < 10


def test_criterion_02_stress_equivalence(record_property):
    t0 = time.perf_counter()
    rep = stress_equivalence(64, 50, seed=1)
    elapsed = time.perf_counter() - t0
    c1 = c1_constant(LameParams(1.0, 1.0))
    report(record_property, f"max relative gap {rep['max_relative_gap']:.1e}, C1(1,1) = {c1!r}; {elapsed:.1f}s")
    assert rep["max_relative_gap"] < 1e-10
    assert c1 == 8.0 / 3.0
    assert elapsed < 30


def test_criterion_03_entropy_inequality(matrix, record_property):
    results, elapsed = matrix
    failures = [r.spec.label for r in results if not r.verdicts["entropy"]["passed"]]
    by = {(r.spec.n, r.spec.slope_L, r.spec.epsilon, r.spec.perturbation): r for r in results}
    ratios = []
    for (n, L, eps, p), r in by.items():
        if n == 64:
            fine = by[(128, L, eps, p)].verdicts["entropy"]["balance_defect"]
            ratios.append(r.verdicts["entropy"]["balance_defect"] / fine)
    report(record_property, f"{len(results) - len(failures)}/{len(results)} runs within slack; defect shrink 64->128 min {min(ratios):.2f}x; matrix {elapsed:.0f}s")
    assert not failures, failures
    assert min(ratios) >= 2.0
    assert elapsed < 600


def test_criterion_04_energy_inequality(matrix, record_property):
    results, _ = matrix
    failures = [r.spec.label for r in results if not r.verdicts["energy"]["passed"]]
    coarse = [r for r in results if r.spec.n == 64]
    halved = run_matrix([replace(r.spec, solver=r.spec.solver.replace(dt=r.spec.solver.dt / 2)) for r in coarse])
    shrink = [a.verdicts["energy"]["balance_residual"] / b.verdicts["energy"]["balance_residual"] for a, b in zip(coarse, halved)]
    report(record_property, f"{len(results) - len(failures)}/{len(results)} runs monotone within slack; balance residual shrink under dt/2 min {min(shrink):.2f}x")
    assert not failures, failures
    assert min(shrink) > 1.0


def test_criterion_05_monotonicity(matrix, record_property):
    results, _ = matrix
    margin = min(r.verdicts["monotonicity"]["min_margin"] for r in results)
    state = build_initial(TorusGrid(8, 8), 1.0, PerturbationSpec(modes=(ModeSpec(1, 1, 0.999 / (2 * np.pi), "anti"),)))
    cfg = SolverConfig(dt=10.0, t_end=20.0, cfl_safety=1.0, dealias_products=False, scheme="IMEX_RK2")
    r = run(state, cfg, raise_errors=False, **QUIET)
    caught = isinstance(r.error, MonotonicityLost)
    report(record_property, f"min h3 margin over matrix {margin:.3f}; negative test raised {type(r.error).__name__} at t={getattr(r.error, 'time', float('nan')):.3g}")
    assert margin > 0
    assert caught


def test_criterion_06_invariant_subspaces(record_property):
    rep = invariant_subspaces(64)
    report(record_property, f"equal-pair gap {rep['equal_pair_gap']:.1e}, x1-only drift {rep['x1_only_drift']:.1e}, pure-linear drift {rep['pure_linear_drift']:.1e}")
    assert rep["equal_pair_gap"] < 1e-12
    assert rep["x1_only_drift"] < 1e-10
    assert rep["pure_linear_drift"] == 0.0


def test_criterion_07_picard_imex(tmp_path, record_property):
    t0 = time.perf_counter()
    rows = []
    for slab in (0.01, 0.05, 0.1):
        cfg = parse_config(
            f"""
            [experiment]
            mode = picard_compare
            output_dir = {tmp_path / f'slab{slab:g}'}
            [grid]
            n = 32
            [physics]
            epsilon = 0.05
            [perturbation]
            kind = random
            [picard]
            slab_T = {slab}
            quad_points = 64
            """.replace("\n            ", "\n")
        )
        assert run_experiment(cfg) in (0, 1)
        s = json.loads((tmp_path / f"slab{slab:g}" / "summary.json").read_text())
        rows.append((slab, s))
    elapsed = time.perf_counter() - t0
    worst_ratio = max(max(s["ratios"]) for _, s in rows)
    worst_rel = max(s["discrepancy"] / (s["quadrature_estimate"] + s["stepper_estimate"]) for _, s in rows)
    report(record_property, f"max contraction ratio {worst_ratio:.3f}; discrepancy / combined estimate max {worst_rel:.2f}; {elapsed:.0f}s")
    for _, s in rows:
        d = s["ratios"]
        assert max(d) < 0.5
        assert s["discrepancy"] <= 10 * (s["quadrature_estimate"] + s["stepper_estimate"])
    # geometric log: the k-th iteration difference is bounded by diff_0 * max_ratio^k
    for slab, s in rows:
        with open(tmp_path / f"slab{slab:g}" / "contraction_log.csv") as fh:
            diffs = [float(line.split(",")[1]) for line in fh.read().splitlines()[1:]]
        r = max(s["ratios"])
        assert all(d <= diffs[0] * r**k * (1 + 1e-9) for k, d in enumerate(diffs))
    assert elapsed < 120


def test_criterion_08_vanishing_viscosity_cauchy(record_property):
    base = build_initial(TorusGrid(128, 128), 1.0, PerturbationSpec.single_mode(1.0))
    _, dists = cauchy_distances(base, CAUCHY_EPSILONS, SolverConfig(dt=0.32 / 128, t_end=0.1))
    report(record_property, "L2 distances " + ", ".join(f"{d:.3e}" for d in dists))
    assert all(b < a for a, b in zip(dists[:-1], dists[1:]))


def test_criterion_09_rk2_order(record_property):
    s = mollify(build_initial(TorusGrid(32, 32), 1.0, PerturbationSpec.single_mode(1.0)), 0.05)
    f = [run(s, SolverConfig(dt=dt, t_end=0.5, scheme="IMEX_RK2", cfl_safety=1.0), **QUIET).final.rho.values for dt in (0.04, 0.02, 0.01)]
    e1 = np.sqrt(np.mean((f[0] - f[1]) ** 2))
    e2 = np.sqrt(np.mean((f[1] - f[2]) ** 2))
    order = math.log2(e1 / e2)
    report(record_property, f"Richardson order {order:.3f}")
    assert 1.7 <= order <= 2.3


def test_criterion_10_orlicz_layer(record_property):
    rep = orlicz_properties(32, 100, seed=2)
    root_value = 1.0 / llogl_constant_root()
    report(
        record_property,
        f"constant field {rep['constant_field']:.7f} (root oracle {root_value:.7f}, stated 1.25464); "
        f"homogeneity {rep['homogeneity_gap']:.1e}, monotonicity {rep['monotonicity_excess']:.1e}, bound {rep['norm_integral_excess']:.1e}",
    )
    assert rep["homogeneity_gap"] < 1e-6
    assert rep["monotonicity_excess"] <= 1e-6
    assert rep["norm_integral_excess"] <= 1e-6
    assert abs(rep["constant_field"] - 1.25464) < 1e-4


def test_criterion_11_oscillation_bound(matrix, record_property):
    results, _ = matrix
    worst = max(r.verdicts["oscillation"]["max_variation"] / (2 * r.spec.slope_L) for r in results)
    failures = [r.spec.label for r in results if not r.verdicts["oscillation"]["passed"]]
    report(record_property, f"max row variation / 2L = {worst:.3f} across {len(results)} runs")
    assert not failures, failures

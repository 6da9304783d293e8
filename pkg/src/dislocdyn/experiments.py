"""Experiment drivers and on-disk artifacts.

Every output directory holds ``config.echo.ini``, ``SCHEMA_VERSION`` and a
``MANIFEST.json`` listing each file with its sha256. The manifest is
written even after a failure, with ``"complete": false``.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import traceback
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diagnostics as dg
from .config import ConfigError, ExperimentConfig, dump_config
from .dynamics import MonotonicityLost, NonContractive, NonFiniteState, SolverConfig, picard_mild_solve, run
from .fields import DensityState, PerturbationSpec, build_initial, mollify
from .io import save_state
from .spectral import TorusGrid

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1"
ENV_OUTPUT_ROOT = "DISLOCDYN_OUTPUT_ROOT"
CAUCHY_EPSILONS = (0.1, 0.05, 0.025, 0.0125)

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_RUNTIME_ERROR = 2
EXIT_CONFIG_ERROR = 3

__all__ = [
    "SCHEMA_VERSION",
    "ENV_OUTPUT_ROOT",
    "MemberSpec",
    "MemberResult",
    "initial_state",
    "run_member",
    "standard_matrix",
    "run_matrix",
    "cauchy_distances",
    "write_records_csv",
    "run_experiment",
]


# ---------------------------------------------------------------------------
# Runs and verdicts
# ---------------------------------------------------------------------------


def _perturbation(kind: str, slope_L: float, k1: int = 1, k2: int = 1, n_modes: int = 3, kmax: int = 3, fraction: float = 0.5):
    if kind == "single":
        return PerturbationSpec.single_mode(slope_L, k1, k2)
    if kind == "random":
        return PerturbationSpec.random(n_modes, kmax, fraction)
    return PerturbationSpec()


def initial_state(n1: int, n2: int, slope_L: float, epsilon: float, perturbation: PerturbationSpec, seed: int = 0) -> DensityState:
    """Admissible data, mollified (slope raised to ``L + eps``) when ``epsilon > 0``."""
    s = build_initial(TorusGrid(n1, n2), slope_L, perturbation, seed)
    return mollify(s, epsilon) if epsilon > 0 else s


@dataclass(frozen=True)
class MemberSpec:
    n: int
    slope_L: float
    epsilon: float
    perturbation: str
    seed: int
    solver: SolverConfig
    c_tol: float = 1e-3
    mean_threshold: float = 1e-4
    keep_states: bool = False

    @property
    def label(self) -> str:
        return f"n{self.n}_L{self.slope_L:g}_eps{self.epsilon:g}_{self.perturbation}"


@dataclass
class MemberResult:
    spec: MemberSpec
    records: list
    verdicts: dict
    final: DensityState
    states: list = field(default_factory=list)


def evaluate(records: Sequence[dg.DiagnosticsRecord], oscillation: Sequence[dg.OscillationReport], c_tol: float, mean_threshold: float) -> dict:
    """Verdicts and margins for one trajectory, JSON-serialisable."""
    ent = dg.verify_entropy_inequality(records, c_tol)
    en = dg.verify_energy_inequality(records, c_tol)
    me = dg.verify_mean_equation(records)
    margins = [min(r.h3_margin) for r in records]
    ll0 = max(records[0].llogl_theta)
    llmax = max(max(r.llogl_theta) for r in records)
    v = {
        "entropy": {"passed": ent.passed, "worst_excess": ent.worst_excess, "one_step_ok": ent.one_step_ok, "balance_defect": ent.balance_defect, "first_fail_index": ent.first_fail_index},
        "energy": {"passed": en.passed, "worst_excess": en.worst_excess, "monotone": en.monotone, "elastic_monotone": en.elastic_monotone, "balance_residual": en.balance_residual, "viscous_slack": en.viscous_slack},
        "monotonicity": {"passed": min(margins) > 0, "min_margin": min(margins)},
        "oscillation": {"passed": all(o.passed for o in oscillation), "max_variation": max(max(o.max_row_variation) for o in oscillation), "max_oscillation": max(max(o.max_row_oscillation) for o in oscillation)},
        "mean_equation": {"passed": me.max_residual <= mean_threshold, "max_residual": me.max_residual, "threshold": mean_threshold},
        "entropy_clamp": {"passed": all(r.clamp_count == 0 for r in records), "count": int(sum(r.clamp_count for r in records))},
        "llogl_uniform": {"passed": llmax <= 1.1 * ll0, "initial": ll0, "max": llmax},
        "velocity_w12_sq_integral": records[-1].velocity_w12_sq_cum,
    }
    v["passed"] = all(x["passed"] for x in v.values() if isinstance(x, dict))
    return v


def run_member(spec: MemberSpec) -> MemberResult:
    s0 = initial_state(spec.n, spec.n, spec.slope_L, spec.epsilon, _perturbation(spec.perturbation, spec.slope_L), spec.seed)
    osc = []

    def recorder(state, prev):
        osc.append(dg.verify_oscillation_bound(state))
        return dg.record(state, prev)

    res = run(s0, spec.solver, diag_every=1, recorder=recorder, keep_states=spec.keep_states)
    return MemberResult(spec, res.records, evaluate(res.records, osc, spec.c_tol, spec.mean_threshold), res.final, res.states)


def standard_matrix(
    grids=(64, 128),
    slopes=(0.5, 1.0),
    epsilons=(0.1, 0.05, 0.025),
    perturbations=("single", "random"),
    dt_times_n: float = 0.32,
    t_end: float = 0.5,
    seed: int = 0,
    c_tol: float = 1e-3,
    mean_threshold: float = 1e-4,
    scheme: str = "IMEX_RK4",
) -> list[MemberSpec]:
    """The frozen verification matrix; ``dt = dt_times_n / n``."""
    out = []
    for n in grids:
        for L in slopes:
            for eps in epsilons:
                for p in perturbations:
                    solver = SolverConfig(dt=dt_times_n / n, t_end=t_end, scheme=scheme)
                    out.append(MemberSpec(n, L, eps, p, seed, solver, c_tol, mean_threshold))
    return out


def run_matrix(specs: Sequence[MemberSpec], jobs: int = 1) -> list[MemberResult]:
    """Run independent members, in worker processes when ``jobs > 1``; order is preserved."""
    if jobs <= 1:
        return [run_member(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_member, specs))


def l2_distance(a: DensityState, b: DensityState) -> float:
    d = (a.rho_plus_per.values - b.rho_plus_per.values) ** 2 + (a.rho_minus_per.values - b.rho_minus_per.values) ** 2
    return float(np.sqrt(np.mean(d)))


def cauchy_distances(base: DensityState, epsilons: Sequence[float], solver: SolverConfig) -> tuple[list[DensityState], list[float]]:
    """Final states of the eps-sweep from common unmollified ``base`` and consecutive L2 distances."""
    finals = []
    for eps in epsilons:
        s0 = mollify(base, eps) if eps > 0 else base
        finals.append(run(s0, solver, diag_every=10**9, recorder=lambda s, p: None, keep_states=False).final)
    return finals, [l2_distance(a, b) for a, b in zip(finals[:-1], finals[1:])]


# ---------------------------------------------------------------------------
# Output directory handling
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return f"{float(x):.16e}"


def write_records_csv(records: Sequence[dg.DiagnosticsRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dg.CSV_COLUMNS)
        for r in records:
            w.writerow([_fmt(x) for x in dg.record_row(r)])


def _write_table(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([x if isinstance(x, str) else _fmt(x) for x in row])


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o))


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default, allow_nan=True) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(root: Path, complete: bool, extra: dict | None = None) -> Path:
    files = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name != "MANIFEST.json":
            files[p.relative_to(root).as_posix()] = _sha256(p)
    manifest = {"schema_version": SCHEMA_VERSION, "complete": complete, "files": files}
    if extra:
        manifest.update(extra)
    out = root / "MANIFEST.json"
    _write_json(out, manifest)
    return out


def resolve_output_dir(output_dir: str) -> Path:
    p = Path(output_dir)
    root = os.environ.get(ENV_OUTPUT_ROOT)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _write_member(res: MemberResult, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(res.records, out / "trajectory.csv")
    np.savez(
        out / "mean_profiles.npz",
        time=np.array([r.time for r in res.records]),
        plus=np.stack([r.mean_profiles[0] for r in res.records]),
        minus=np.stack([r.mean_profiles[1] for r in res.records]),
    )
    save_state(res.final, out / "final_state.gbd")
    _write_json(out / "summary.json", {"label": res.spec.label, "verdicts": res.verdicts})


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _cfg_perturbation(cfg: ExperimentConfig) -> PerturbationSpec:
    p = cfg.perturbation
    return _perturbation(p.kind, cfg.slope_L, p.k1, p.k2, p.n_modes, p.kmax, p.fraction)


def _mode_single(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    s0 = initial_state(cfg.n1, cfg.n2, cfg.slope_L, cfg.epsilon, _cfg_perturbation(cfg), cfg.seed)
    osc = []

    def recorder(state, prev):
        osc.append(dg.verify_oscillation_bound(state))
        return dg.record(state, prev)

    ckpt = out / "checkpoints"
    res = run(
        s0,
        cfg.solver,
        cfg.diag_every,
        recorder=recorder,
        keep_states=False,
        checkpoint_dir=ckpt,
        checkpoint_every=cfg.checkpoint_every,
    )
    write_records_csv(res.records, out / "trajectory.csv")
    save_state(res.final, out / "final_state.gbd")
    if len(res.records) < 2:
        summary = {"samples": 1, "verdicts": {"passed": True, "note": "t_end = 0: initial record only"}}
        return True, summary
    v = evaluate(res.records, osc, cfg.verify.c_tol, cfg.verify.mean_threshold)
    return v["passed"], {"samples": len(res.records), "steps": len(res.dts), "verdicts": v}


def _mode_eps_sweep(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    base = build_initial(TorusGrid(cfg.n1, cfg.n2), cfg.slope_L, _cfg_perturbation(cfg), cfg.seed)
    finals, dists = cauchy_distances(base, cfg.epsilons, cfg.solver)
    for eps, f in zip(cfg.epsilons, finals):
        d = out / f"eps_{eps:g}"
        d.mkdir(parents=True, exist_ok=True)
        save_state(f, d / "final_state.gbd")
    rows = [(a, b, d) for a, b, d in zip(cfg.epsilons[:-1], cfg.epsilons[1:], dists)]
    _write_table(out / "cauchy_distances.csv", ("epsilon_a", "epsilon_b", "l2_distance"), rows)
    decreasing = all(b < a for a, b in zip(dists[:-1], dists[1:]))
    return decreasing, {"epsilons": list(cfg.epsilons), "distances": dists, "strictly_decreasing": decreasing}


def _truncate_to(state: DensityState, grid: TorusGrid) -> np.ndarray:
    """Resample the periodic parts of a finer state onto ``grid`` by Fourier truncation."""
    out = []
    n1, n2 = grid.shape
    for f in (state.rho_plus_per, state.rho_minus_per):
        c = np.fft.fft2(f.values, norm="forward")
        k1 = np.fft.fftfreq(n1, 1.0 / n1).astype(int)
        k2 = np.fft.fftfreq(n2, 1.0 / n2).astype(int)
        sub = c[np.ix_(k1 % f.grid.n1, k2 % f.grid.n2)]
        out.append(np.fft.ifft2(sub, norm="forward").real)
    return np.stack(out)


def _mode_resolution_sweep(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    grids = sorted(cfg.verify.grids)
    results = []
    for n in grids:
        solver = cfg.solver.replace(dt=cfg.verify.dt_times_n / n)
        spec = MemberSpec(n, cfg.slope_L, cfg.epsilon, cfg.perturbation.kind if cfg.perturbation.kind != "none" else "single", cfg.seed, solver, cfg.verify.c_tol, cfg.verify.mean_threshold)
        res = run_member(spec)
        _write_member(res, out / f"n{n}")
        results.append(res)
    finest = results[-1].final
    rows, table = [], []
    defects = [r.verdicts["entropy"]["balance_defect"] for r in results]
    for i, r in enumerate(results):
        g = r.final.grid
        diff = float(np.sqrt(np.mean((_truncate_to(finest, g) - np.stack([r.final.rho_plus_per.values, r.final.rho_minus_per.values])) ** 2)))
        order = math.log2(defects[i - 1] / defects[i]) if i and defects[i] > 0 else float("nan")
        rows.append((str(g.n1), r.spec.solver.dt, r.records[-1].entropy_N, r.records[-1].energy_E, defects[i], diff, order))
        table.append({"n": g.n1, "entropy_balance_defect": defects[i], "l2_to_finest": diff, "observed_order": order})
    _write_table(out / "convergence.csv", ("n", "dt", "entropy_N_final", "energy_E_final", "entropy_balance_defect", "l2_to_finest", "observed_order"), rows)
    ok = all(r.verdicts["passed"] for r in results)
    return ok, {"table": table, "members_passed": ok}


def _mode_verify_suite(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    from .checks import invariant_checks

    ve = cfg.verify
    specs = standard_matrix(ve.grids, ve.slopes, ve.epsilons, ve.perturbations, ve.dt_times_n, cfg.solver.t_end, cfg.seed, ve.c_tol, ve.mean_threshold, cfg.solver.scheme)
    results = run_matrix(specs, cfg.jobs)
    members = {}
    for r in results:
        _write_member(r, out / "members" / r.spec.label)
        members[r.spec.label] = r.verdicts
    refinement = {}
    if len(ve.grids) >= 2:
        lo, hi = sorted(ve.grids)[:2]
        by = {(r.spec.n, r.spec.slope_L, r.spec.epsilon, r.spec.perturbation): r for r in results}
        for (n, L, eps, p), r in by.items():
            if n == lo and (hi, L, eps, p) in by:
                a = r.verdicts["entropy"]["balance_defect"]
                b = by[(hi, L, eps, p)].verdicts["entropy"]["balance_defect"]
                refinement[f"L{L:g}_eps{eps:g}_{p}"] = {"coarse": a, "fine": b, "ratio": a / b if b > 0 else math.inf, "passed": b == 0 or a / b >= 2.0}
    checks = invariant_checks()
    ok = all(v["passed"] for v in members.values()) and all(v["passed"] for v in refinement.values()) and all(v["passed"] for v in checks.values())
    return ok, {"members": members, "entropy_refinement": refinement, "invariants": checks, "all_passed": ok}


def _mode_picard_compare(cfg: ExperimentConfig, out: Path) -> tuple[bool, dict]:
    s0 = initial_state(cfg.n1, cfg.n2, cfg.slope_L, cfg.epsilon, _cfg_perturbation(cfg), cfg.seed)
    pc = cfg.solver.picard
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        traj, rep = picard_mild_solve(s0, cfg.solver)
        coarse, _ = picard_mild_solve(s0, cfg.solver.replace(picard=replace(pc, quad_points=max(1, pc.quad_points // 2))))
    T = pc.slab_T

    def arr(s):
        return np.stack([s.rho_plus_per.values, s.rho_minus_per.values])

    stepper = {}
    for q in (pc.quad_points, 2 * pc.quad_points):
        r = run(s0, cfg.solver.replace(dt=T / q, t_end=T), diag_every=10**9, recorder=lambda s, p: None, keep_states=False)
        stepper[q] = arr(r.final)
    quad_err = float(np.max(np.abs(arr(traj[-1]) - arr(coarse[-1]))))
    step_err = float(np.max(np.abs(stepper[2 * pc.quad_points] - stepper[pc.quad_points])))
    disc = float(np.max(np.abs(arr(traj[-1]) - stepper[2 * pc.quad_points])))
    _write_table(out / "contraction_log.csv", ("iteration", "difference", "ratio"), [(str(i + 1), d, rep.ratios[i - 1] if i else float("nan")) for i, d in enumerate(rep.diffs)])
    _write_table(out / "discrepancy.csv", ("slab_T", "quad_points", "picard_vs_imex", "quadrature_estimate", "stepper_estimate"), [(T, str(pc.quad_points), disc, quad_err, step_err)])
    max_ratio = max(rep.ratios) if rep.ratios else 0.0
    ok = disc <= 10.0 * (quad_err + step_err) and max_ratio < 0.5
    summary = {
        "iterations": rep.iterations,
        "ratios": rep.ratios,
        "tstar_estimate": rep.tstar,
        "slab_exceeds_tstar": any("exceeds" in str(w.message) for w in caught),
        "discrepancy": disc,
        "quadrature_estimate": quad_err,
        "stepper_estimate": step_err,
        "passed": ok,
    }
    return ok, summary


_MODES = {
    "single": _mode_single,
    "eps_sweep": _mode_eps_sweep,
    "resolution_sweep": _mode_resolution_sweep,
    "verify_suite": _mode_verify_suite,
    "picard_compare": _mode_picard_compare,
}


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run ``cfg.mode`` and write its artifacts; returns the process exit code."""
    out = resolve_output_dir(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.echo.ini").write_text(dump_config(cfg))
        (out / "SCHEMA_VERSION").write_text(SCHEMA_VERSION + "\n")
    except OSError as e:
        log.error("cannot prepare output directory %s: %s", out, e)
        return EXIT_CONFIG_ERROR
    try:
        ok, summary = _MODES[cfg.mode](cfg, out)
    except (MonotonicityLost, NonFiniteState, NonContractive, ValueError, FloatingPointError, np.linalg.LinAlgError) as e:
        if isinstance(e, ConfigError):
            raise
        report = {"error": type(e).__name__, "message": str(e), "traceback": traceback.format_exc()}
        if hasattr(e, "time"):
            report["time"] = e.time
        if hasattr(e, "ratios"):
            report["ratios"] = e.ratios
        _write_json(out / "error.json", report)
        write_manifest(out, complete=False, extra={"mode": cfg.mode, "error": type(e).__name__})
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_RUNTIME_ERROR
    _write_json(out / "summary.json", {"mode": cfg.mode, "passed": ok, **summary})
    write_manifest(out, complete=True, extra={"mode": cfg.mode})
    return EXIT_OK if ok else EXIT_VERIFY_FAILED

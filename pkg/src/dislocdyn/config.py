"""Experiment configuration: an INI file with fixed sections and typed keys.

Example::

    [experiment]
    mode = single
    output_dir = runs/demo

    [grid]
    n = 64

    [physics]
    slope_L = 1.0
    epsilon = 0.05

    [solver]
    t_end = 0.5

Every key and its default is listed in ``SCHEMA``. ``epsilon`` may be a
comma-separated list only when ``mode = eps_sweep``; ``grids`` (used by
``resolution_sweep`` and ``verify_suite``) is always a list.
"""

from __future__ import annotations

import configparser
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from .dynamics import PicardConfig, SolverConfig

__all__ = ["ConfigError", "ExperimentConfig", "PerturbationConfig", "VerifyConfig", "SCHEMA", "parse_config", "dump_config", "MODES"]

MODES = ("single", "eps_sweep", "resolution_sweep", "verify_suite", "picard_compare")


class ConfigError(ValueError):
    def __init__(self, msg: str, key: str | None = None, line: int | None = None):
        where = []
        if key:
            where.append(f"key {key!r}")
        if line:
            where.append(f"line {line}")
        super().__init__(f"{msg} ({', '.join(where)})" if where else msg)
        self.key = key
        self.line = line


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(x) for x in s.split(",") if x.strip())


# (section, key) -> (parser, default as text)
SCHEMA: dict[tuple[str, str], tuple[Callable[[str], Any], str | None]] = {
    ("experiment", "mode"): (str, "single"),
    ("experiment", "output_dir"): (str, "runs/out"),
    ("experiment", "diag_every"): (int, "1"),
    ("experiment", "seed"): (int, "0"),
    ("experiment", "jobs"): (int, "1"),
    ("grid", "n"): (int, None),
    ("grid", "n1"): (int, "64"),
    ("grid", "n2"): (int, "64"),
    ("physics", "slope_L"): (float, "1.0"),
    ("physics", "epsilon"): (_floats, "0.05"),
    ("perturbation", "kind"): (str, "single"),
    ("perturbation", "k1"): (int, "1"),
    ("perturbation", "k2"): (int, "1"),
    ("perturbation", "n_modes"): (int, "3"),
    ("perturbation", "kmax"): (int, "3"),
    ("perturbation", "fraction"): (float, "0.5"),
    ("solver", "dt"): (float, "0.005"),
    ("solver", "t_end"): (float, "0.5"),
    ("solver", "cfl_safety"): (float, "0.4"),
    ("solver", "scheme"): (str, "IMEX_RK4"),
    ("solver", "dealias_products"): (_bool, "true"),
    ("solver", "checkpoint_every"): (int, "0"),
    ("picard", "slab_T"): (float, "0.05"),
    ("picard", "quad_points"): (int, "64"),
    ("picard", "tol"): (float, "1e-10"),
    ("picard", "max_iter"): (int, "60"),
    ("picard", "c0"): (float, "1.0"),
    ("verify", "c_tol"): (float, "0.001"),
    ("verify", "mean_threshold"): (float, "0.0001"),
    ("verify", "grids"): (_ints, "64, 128"),
    ("verify", "slopes"): (_floats, "0.5, 1.0"),
    ("verify", "epsilons"): (_floats, "0.1, 0.05, 0.025"),
    ("verify", "perturbations"): (lambda s: tuple(x.strip() for x in s.split(",") if x.strip()), "single, random"),
    ("verify", "dt_times_n"): (float, "0.32"),
}


@dataclass(frozen=True)
class PerturbationConfig:
    kind: str = "single"
    k1: int = 1
    k2: int = 1
    n_modes: int = 3
    kmax: int = 3
    fraction: float = 0.5


@dataclass(frozen=True)
class VerifyConfig:
    c_tol: float = 1e-3
    mean_threshold: float = 1e-4
    grids: tuple[int, ...] = (64, 128)
    slopes: tuple[float, ...] = (0.5, 1.0)
    epsilons: tuple[float, ...] = (0.1, 0.05, 0.025)
    perturbations: tuple[str, ...] = ("single", "random")
    dt_times_n: float = 0.32


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "single"
    n1: int = 64
    n2: int = 64
    slope_L: float = 1.0
    epsilons: tuple[float, ...] = (0.05,)
    perturbation: PerturbationConfig = field(default_factory=PerturbationConfig)
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    checkpoint_every: int = 0
    output_dir: str = "runs/out"
    diag_every: int = 1
    jobs: int = 1
    verify: VerifyConfig = field(default_factory=VerifyConfig)

    @property
    def epsilon(self) -> float:
        return self.epsilons[0]


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    lines: dict[tuple[str, str], int] = {}
    section = None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        m = re.match(r"^\[([^\]]+)\]$", s)
        if m:
            section = m.group(1).strip()
            lines.setdefault((section, ""), i)
        elif section and s and s[0] not in "#;" and ("=" in s or ":" in s):
            key = re.split(r"[=:]", s, maxsplit=1)[0].strip()
            lines[(section, key)] = i
    return lines


def _read_raw(text: str) -> tuple[dict[tuple[str, str], str], dict[tuple[str, str], int]]:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}", line=getattr(e, "lineno", None)) from e
    lines = _key_lines(text)
    raw = {}
    for sec in cp.sections():
        if not any(s == sec for s, _ in SCHEMA):
            raise ConfigError(f"unknown section [{sec}]", key=sec, line=lines.get((sec, "")))
        for key, val in cp.items(sec):
            raw[(sec, key)] = val
    return raw, lines


def parse_config(source: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Parse and validate an INI config given as a path or literal text.

    ``overrides`` maps dotted keys (``"solver.dt"``) to raw string values and
    is applied before validation. Raises ConfigError naming the key and line.
    """
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source and "[" not in source):
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from e
    else:
        text = str(source)
    raw, lines = _read_raw(text)
    for dotted, val in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError("override must use section.key syntax", key=dotted)
        sec, key = dotted.split(".", 1)
        raw[(sec, key)] = str(val)

    values: dict[tuple[str, str], Any] = {}
    for (sec, key), val in raw.items():
        dotted = f"{sec}.{key}"
        if (sec, key) not in SCHEMA:
            raise ConfigError("unknown key", key=dotted, line=lines.get((sec, key)))
        conv = SCHEMA[(sec, key)][0]
        try:
            values[(sec, key)] = conv(val)
        except ValueError as e:
            raise ConfigError(f"type mismatch: {e}", key=dotted, line=lines.get((sec, key))) from e
    for k, (conv, default) in SCHEMA.items():
        if k not in values and default is not None:
            values[k] = conv(default)
    return _build(values, lines)


def _build(v: dict[tuple[str, str], Any], lines: dict) -> ExperimentConfig:
    def fail(msg: str, sec: str, key: str):
        raise ConfigError(msg, key=f"{sec}.{key}", line=lines.get((sec, key)))

    mode = v[("experiment", "mode")]
    if mode not in MODES:
        fail(f"mode must be one of {MODES}", "experiment", "mode")
    n1, n2 = v[("grid", "n1")], v[("grid", "n2")]
    if ("grid", "n") in v:
        n1 = n2 = v[("grid", "n")]
    for key, n in (("n1", n1), ("n2", n2)):
        if n < 8 or n % 2:
            fail("grid size must be an even integer >= 8", "grid", key)
    eps = v[("physics", "epsilon")]
    if not eps:
        fail("epsilon is empty", "physics", "epsilon")
    if len(eps) > 1 and mode != "eps_sweep":
        fail("an epsilon list requires mode = eps_sweep", "physics", "epsilon")
    if mode == "eps_sweep" and len(eps) < 2:
        fail("eps_sweep needs at least two epsilon values", "physics", "epsilon")
    if any(e < 0 or e > 1 for e in eps):
        fail("epsilon must lie in [0, 1]", "physics", "epsilon")
    if not v[("physics", "slope_L")] > 0:
        fail("slope_L must be > 0", "physics", "slope_L")
    pert = PerturbationConfig(
        kind=v[("perturbation", "kind")],
        k1=v[("perturbation", "k1")],
        k2=v[("perturbation", "k2")],
        n_modes=v[("perturbation", "n_modes")],
        kmax=v[("perturbation", "kmax")],
        fraction=v[("perturbation", "fraction")],
    )
    if pert.kind not in ("single", "random", "none"):
        fail("kind must be single, random or none", "perturbation", "kind")
    if not 0 <= pert.fraction < 1:
        fail("fraction must lie in [0, 1)", "perturbation", "fraction")
    if pert.kind == "single" and pert.k1 == 0:
        fail("single-mode perturbation needs k1 != 0", "perturbation", "k1")
    if pert.n_modes < 1 or pert.kmax < 1:
        fail("n_modes and kmax must be >= 1", "perturbation", "n_modes")
    for sec, key in (("experiment", "diag_every"), ("experiment", "jobs")):
        if v[(sec, key)] < 1:
            fail("must be >= 1", sec, key)
    if v[("solver", "checkpoint_every")] < 0:
        fail("must be >= 0", "solver", "checkpoint_every")
    try:
        picard = PicardConfig(
            slab_T=v[("picard", "slab_T")],
            quad_points=v[("picard", "quad_points")],
            tol=v[("picard", "tol")],
            max_iter=v[("picard", "max_iter")],
            c0=v[("picard", "c0")],
        )
    except ValueError as e:
        raise ConfigError(str(e), key="picard") from e
    try:
        solver = SolverConfig(
            dt=v[("solver", "dt")],
            t_end=v[("solver", "t_end")],
            cfl_safety=v[("solver", "cfl_safety")],
            scheme=v[("solver", "scheme")],
            picard=picard,
            dealias_products=v[("solver", "dealias_products")],
        )
    except ValueError as e:
        raise ConfigError(str(e), key="solver") from e
    ver = VerifyConfig(
        c_tol=v[("verify", "c_tol")],
        mean_threshold=v[("verify", "mean_threshold")],
        grids=v[("verify", "grids")],
        slopes=v[("verify", "slopes")],
        epsilons=v[("verify", "epsilons")],
        perturbations=v[("verify", "perturbations")],
        dt_times_n=v[("verify", "dt_times_n")],
    )
    if not ver.c_tol > 0:
        fail("c_tol must be > 0", "verify", "c_tol")
    if not ver.grids or any(n < 8 or n % 2 for n in ver.grids):
        fail("grids must be even integers >= 8", "verify", "grids")
    if any(p not in ("single", "random") for p in ver.perturbations):
        fail("perturbations must be single or random", "verify", "perturbations")
    if any(s <= 0 for s in ver.slopes) or any(e < 0 or e > 1 for e in ver.epsilons):
        fail("slopes must be > 0 and epsilons in [0, 1]", "verify", "slopes")
    return ExperimentConfig(
        mode=mode,
        n1=n1,
        n2=n2,
        slope_L=v[("physics", "slope_L")],
        epsilons=tuple(eps),
        perturbation=pert,
        seed=v[("experiment", "seed")],
        solver=solver,
        checkpoint_every=v[("solver", "checkpoint_every")],
        output_dir=v[("experiment", "output_dir")],
        diag_every=v[("experiment", "diag_every")],
        jobs=v[("experiment", "jobs")],
        verify=ver,
    )


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if isinstance(x, tuple):
        return ", ".join(_fmt(e) for e in x)
    return str(x)


def dump_config(cfg: ExperimentConfig) -> str:
    """Canonical INI text with every key spelled out; ``parse_config`` inverts it."""
    s, p, pe, ve = cfg.solver, cfg.solver.picard, cfg.perturbation, cfg.verify
    sections = {
        "experiment": dict(mode=cfg.mode, output_dir=cfg.output_dir, diag_every=cfg.diag_every, seed=cfg.seed, jobs=cfg.jobs),
        "grid": dict(n1=cfg.n1, n2=cfg.n2),
        "physics": dict(slope_L=cfg.slope_L, epsilon=cfg.epsilons),
        "perturbation": dict(kind=pe.kind, k1=pe.k1, k2=pe.k2, n_modes=pe.n_modes, kmax=pe.kmax, fraction=pe.fraction),
        "solver": dict(
            dt=s.dt,
            t_end=s.t_end,
            cfl_safety=s.cfl_safety,
            scheme=s.scheme,
            dealias_products=s.dealias_products,
            checkpoint_every=cfg.checkpoint_every,
        ),
        "picard": dict(slab_T=p.slab_T, quad_points=p.quad_points, tol=p.tol, max_iter=p.max_iter, c0=p.c0),
        "verify": dict(
            c_tol=ve.c_tol,
            mean_threshold=ve.mean_threshold,
            grids=ve.grids,
            slopes=ve.slopes,
            epsilons=ve.epsilons,
            perturbations=ve.perturbations,
            dt_times_n=ve.dt_times_n,
        ),
    }
    buf = io.StringIO()
    for sec, kv in sections.items():
        buf.write(f"[{sec}]\n")
        for k, val in kv.items():
            buf.write(f"{k} = {_fmt(val)}\n")
        buf.write("\n")
    return buf.getvalue()

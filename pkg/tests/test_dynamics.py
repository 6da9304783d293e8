import math

import numpy as np
import pytest

from dislocdyn.dynamics import (
    MonotonicityLost,
    NonContractive,
    PicardConfig,
    SolverConfig,
    estimate_tstar,
    picard_mild_solve,
    run,
    step_imex,
    transport_tendency,
    velocity,
)
from dislocdyn.fields import DensityState, ModeSpec, PerturbationSpec, build_initial, mollify
from dislocdyn.io import load_state
from dislocdyn.spectral import RealField, TorusGrid

QUIET = dict(recorder=lambda s, p: None, diag_every=10**9, keep_states=False)


def sinsin(grid, amp=1.0):
    return RealField(grid, amp * np.sin(2 * np.pi * grid.x1) * np.sin(2 * np.pi * grid.x2))


def zero_state(grid, L=1.0, eps=0.0):
    return DensityState(RealField.zeros(grid), RealField.zeros(grid), L, eps)


def random_state(n=32, eps=0.05, seed=0):
    return mollify(build_initial(TorusGrid(n, n), 1.0, PerturbationSpec.random(), seed=seed), eps)


class TestVelocity:
    def test_equal_pair(self):
        g = TorusGrid(16, 16)
        f = sinsin(g, 0.01)
        assert np.all(velocity(DensityState(f, f, 1.0)).values == 0)

    def test_x1_only(self):
        g = TorusGrid(16, 16)
        f = RealField(g, 0.05 * np.sin(2 * np.pi * g.x1) + 0 * g.x2)
        assert np.abs(velocity(DensityState(f, RealField.zeros(g), 1.0)).values).max() == 0

    def test_sinsin(self):
        g = TorusGrid(16, 16)
        f = sinsin(g, 0.01)
        v = velocity(DensityState(f, RealField.zeros(g), 1.0)).values
        assert np.abs(v - 0.25 * f.values).max() < 1e-17


class TestTendency:
    def test_zero_cases(self):
        g = TorusGrid(16, 16)
        t = transport_tendency(zero_state(g))
        assert np.all(t.d_rho_plus_per.values == 0) and np.all(t.d_rho_minus_per.values == 0)
        f = sinsin(g, 0.01)
        t = transport_tendency(DensityState(f, f, 1.0))
        assert np.all(t.d_rho_plus_per.values == 0)

    def test_linear_part_for_small_data(self):
        g = TorusGrid(16, 16)
        f = sinsin(g, 1e-6)
        t = transport_tendency(DensityState(f, RealField.zeros(g), 2.0), dealias_products=False)
        # to leading order the tendency is -L v for the plus species and +L v for the minus one
        v = 0.25 * f.values
        assert np.abs(t.d_rho_plus_per.values + 2.0 * v).max() < 1e-10
        assert np.abs(t.d_rho_minus_per.values - 2.0 * v).max() < 1e-10

    def test_species_antisymmetry(self):
        s = random_state(16, 0.1, seed=3)
        swapped = DensityState(s.rho_minus_per, s.rho_plus_per, s.slope_L, s.epsilon)
        a = transport_tendency(s)
        b = transport_tendency(swapped)
        # swapping species flips v and the sign convention together
        assert np.abs(a.d_rho_plus_per.values - b.d_rho_minus_per.values).max() < 1e-15


class TestImex:
    def test_pure_linear_fixed_point(self):
        s = zero_state(TorusGrid(16, 16), eps=0.1)
        for _ in range(3):
            s = step_imex(s, SolverConfig(dt=0.1))
        assert np.all(s.rho_plus_per.values == 0)
        assert s.time == pytest.approx(0.3)

    @pytest.mark.parametrize("scheme", ["IMEX_RK2", "IMEX_RK4"])
    def test_heat_decay_of_equal_pair(self, scheme):
        g = TorusGrid(16, 16)
        eps, t_end = 0.01, 0.5
        f = sinsin(g, 0.02)
        r = run(DensityState(f, f, 1.0, eps), SolverConfig(dt=0.05, t_end=t_end, scheme=scheme), **QUIET)
        expect = f.values * math.exp(-8 * np.pi**2 * eps * t_end)
        assert np.abs(r.final.rho_plus_per.values - expect).max() < 1e-15

    @pytest.mark.parametrize("scheme,order", [("IMEX_RK2", 2), ("IMEX_RK4", 4)])
    def test_temporal_order(self, scheme, order):
        s0 = random_state(16, 0.05, seed=1)
        finals = []
        for dt in (0.04, 0.02, 0.01, 0.005):
            cfg = SolverConfig(dt=dt, t_end=0.4, scheme=scheme, cfl_safety=1.0)
            finals.append(run(s0, cfg, **QUIET).final.rho.values)
        e1 = np.abs(finals[0] - finals[1]).max()
        e2 = np.abs(finals[1] - finals[2]).max()
        assert 2**order / 1.5 < e1 / e2 < 2**order * 1.5

    def test_cfl_reduces_step(self):
        s0 = random_state(32, 0.05)
        s1 = step_imex(s0, SolverConfig(dt=10.0, cfl_safety=0.1))
        vmax = np.abs(velocity(s0).values).max()
        assert s1.time == pytest.approx(0.1 / 32 / vmax, rel=1e-12)


class TestRun:
    def test_zero_horizon(self):
        r = run(random_state(16), SolverConfig(t_end=0.0))
        assert len(r.records) == 1 and r.dts == [] and r.completed

    def test_lands_on_t_end(self):
        r = run(random_state(16), SolverConfig(dt=0.03, t_end=0.1), diag_every=2)
        assert r.final.time == 0.1
        assert sum(r.dts) == pytest.approx(0.1, abs=1e-14)
        assert r.records[-1].time == 0.1

    def test_deterministic(self):
        a = run(random_state(16, seed=4), SolverConfig(dt=0.01, t_end=0.1), **QUIET).final
        b = run(random_state(16, seed=4), SolverConfig(dt=0.01, t_end=0.1), **QUIET).final
        assert np.array_equal(a.rho_plus_per.values, b.rho_plus_per.values)

    def test_rejects_nonmonotone_viscous_start(self):
        g = TorusGrid(8, 8)
        f = RealField(g, np.sin(2 * np.pi * g.x1) / np.pi + 0 * g.x2)
        with pytest.raises(ValueError):
            run(DensityState(f, f, 1.0, 0.1), SolverConfig(t_end=0.1))

    def test_invalid_configs(self):
        for bad in (dict(dt=0.0), dict(t_end=-1.0), dict(cfl_safety=0.0), dict(scheme="RK45")):
            with pytest.raises(ValueError):
                SolverConfig(**bad)


class TestMonotonicityLoss:
    """Inviscid, nearly critical single mode stepped at the CFL limit with stability-violating Courant number."""

    def _state(self, n):
        g = TorusGrid(n, n)
        return build_initial(g, 1.0, PerturbationSpec(modes=(ModeSpec(1, 1, 0.999 / (2 * np.pi), "anti"),)))

    def _cfg(self, scheme):
        return SolverConfig(dt=10.0, t_end=20.0, cfl_safety=1.0, dealias_products=False, scheme=scheme)

    @pytest.mark.parametrize("n", [8, 16])
    @pytest.mark.parametrize("scheme", ["IMEX_RK2", "IMEX_RK4"])
    def test_raises(self, n, scheme):
        with pytest.raises(MonotonicityLost) as info:
            run(self._state(n), self._cfg(scheme), **QUIET)
        assert info.value.margin < 0
        assert 0 < info.value.time < 20.0

    def test_checkpoints_last_good(self, tmp_path):
        r = run(self._state(8), self._cfg("IMEX_RK2"), raise_errors=False, checkpoint_dir=tmp_path, **QUIET)
        assert not r.completed and isinstance(r.error, MonotonicityLost)
        saved = load_state(tmp_path / "checkpoint_last_good.gbd")
        assert saved.time == r.error.last_good.time < r.error.time
        assert np.array_equal(saved.rho_plus_per.values, r.error.last_good.rho_plus_per.values)


class TestTstar:
    def test_unperturbed(self):
        assert estimate_tstar(zero_state(TorusGrid(8, 8)), 1.0) == pytest.approx(1 / 16)

    def test_c0_scaling(self):
        s = random_state(16)
        assert estimate_tstar(s, 0.5) == pytest.approx(16 * estimate_tstar(s, 1.0), rel=1e-12)

    def test_rejects_bad_c0(self):
        with pytest.raises(ValueError):
            estimate_tstar(zero_state(TorusGrid(8, 8)), 0.0)


class TestPicard:
    def test_zero_data_single_iteration(self):
        s = zero_state(TorusGrid(16, 16), eps=0.1)
        traj, rep = picard_mild_solve(s, SolverConfig(picard=PicardConfig(slab_T=0.01, quad_points=8)))
        assert rep.iterations == 1 and rep.converged and len(traj) == 9
        assert traj[-1].time == pytest.approx(0.01)

    def test_requires_viscosity(self):
        with pytest.raises(ValueError):
            picard_mild_solve(zero_state(TorusGrid(8, 8)), SolverConfig())

    def test_non_contractive_after_max_iter(self):
        s = random_state(16, 0.05)
        cfg = SolverConfig(picard=PicardConfig(slab_T=0.01, quad_points=8, max_iter=2, tol=1e-30))
        with pytest.warns(RuntimeWarning):
            with pytest.raises(NonContractive) as info:
                picard_mild_solve(s, cfg)
        assert len(info.value.diffs) == 2

    def test_contracts_and_matches_imex(self):
        s = random_state(16, 0.05)
        slab = 0.02
        cfg = SolverConfig(picard=PicardConfig(slab_T=slab, quad_points=64, tol=1e-12))
        with pytest.warns(RuntimeWarning):
            traj, rep = picard_mild_solve(s, cfg)
        assert rep.converged and max(rep.ratios) < 0.5
        ref = run(s, SolverConfig(dt=slab / 64, t_end=slab), **QUIET).final
        assert np.abs(traj[-1].rho.values - ref.rho.values).max() < 1e-5

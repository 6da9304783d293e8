import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dislocdyn.spectral import (
    HermitianSymmetryError,
    RealField,
    SpectralCoeffs,
    TorusGrid,
    coeff_inner,
    dealias,
    forward_transform,
    heat_semigroup,
    integrate,
    inverse_laplacian,
    inverse_transform,
    laplacian,
    partial_derivative,
    riesz,
    riesz_composite,
    riesz_r1r2,
    riesz_r1sq_r2sq,
    row_means,
)


def random_field(grid, seed=0):
    return RealField(grid, np.random.default_rng(seed).standard_normal(grid.shape))


def sinsin(grid):
    return RealField(grid, np.sin(2 * np.pi * grid.x1) * np.sin(2 * np.pi * grid.x2))


class TestGrid:
    @pytest.mark.parametrize("n1,n2", [(7, 8), (8, 9), (6, 8), (0, 8)])
    def test_rejects_odd_or_small(self, n1, n2):
        with pytest.raises(ValueError):
            TorusGrid(n1, n2)

    def test_nodes_and_wavevectors(self):
        g = TorusGrid(8, 16)
        assert g.x1[1, 0] == pytest.approx(1 / 8)
        assert g.x2[0, 1] == pytest.approx(1 / 16)
        assert set(g.k1.ravel()) == set(range(-4, 4))
        assert g.kabs[g.wavevector_index(3, 4)] == pytest.approx(5.0)

    def test_dealias_mask_two_thirds(self):
        g = TorusGrid(12, 12)
        m = g.dealias_mask
        assert m[g.wavevector_index(4, 4)]
        assert not m[g.wavevector_index(5, 0)]
        assert not m[g.wavevector_index(0, -5)]


class TestRealField:
    def test_shape_and_finiteness(self):
        g = TorusGrid(8, 8)
        with pytest.raises(ValueError):
            RealField(g, np.zeros((8, 9)))
        bad = np.zeros((8, 8))
        bad[2, 3] = np.nan
        with pytest.raises(ValueError):
            RealField(g, bad)

    def test_flat_input_and_readonly(self):
        g = TorusGrid(8, 8)
        f = RealField(g, np.arange(64.0))
        assert f.values.shape == (8, 8)
        with pytest.raises(ValueError):
            f.values[0, 0] = 1.0


class TestTransforms:
    def test_constant(self):
        g = TorusGrid(8, 8)
        c = forward_transform(RealField(g, np.full(g.shape, 3.0)))
        assert c.at(0, 0) == pytest.approx(3.0)
        others = np.delete(c.coeffs.ravel(), 0)
        assert np.abs(others).max() < 1e-15

    def test_cosine(self):
        g = TorusGrid(16, 8)
        c = forward_transform(RealField.from_function(g, lambda x1, x2: np.cos(2 * np.pi * x1) + 0 * x2))
        assert c.at(1, 0) == pytest.approx(0.5)
        assert c.at(-1, 0) == pytest.approx(0.5)
        assert np.sort(np.abs(c.coeffs).ravel())[-3] < 1e-15

    def test_inverse_of_single_modes(self):
        g = TorusGrid(8, 8)
        c = np.zeros(g.shape, complex)
        c[0, 0] = 1.0
        assert np.allclose(inverse_transform(SpectralCoeffs(g, c)).values, 1.0)
        c = np.zeros(g.shape, complex)
        c[g.wavevector_index(1, 0)] = c[g.wavevector_index(-1, 0)] = 0.5
        f = inverse_transform(SpectralCoeffs(g, c)).values
        assert np.abs(f - np.cos(2 * np.pi * g.x1)).max() < 1e-15

    @pytest.mark.parametrize("n", [8, 32, 64])
    def test_round_trip(self, n):
        g = TorusGrid(n, n)
        f = random_field(g, n)
        back = inverse_transform(forward_transform(f))
        assert np.abs(back.values - f.values).max() / f.max_abs() < 1e-12

    def test_rejects_non_hermitian(self):
        g = TorusGrid(8, 8)
        c = np.zeros(g.shape, complex)
        c[g.wavevector_index(1, 2)] = 1.0
        with pytest.raises(HermitianSymmetryError):
            inverse_transform(SpectralCoeffs(g, c))

    def test_rejects_non_finite_input(self):
        g = TorusGrid(8, 8)
        f = RealField(g, np.zeros(g.shape))
        object.__setattr__(f, "values", np.full(g.shape, np.inf))
        with pytest.raises(ValueError):
            forward_transform(f)


class TestRiesz:
    def test_zero_mode_only(self):
        g = TorusGrid(8, 8)
        c = forward_transform(RealField(g, np.full(g.shape, 2.0)))
        for axis in (1, 2):
            assert np.abs(riesz(c, axis).coeffs).max() == 0.0

    def test_single_mode_multiplier(self):
        g = TorusGrid(8, 8)
        c = np.zeros(g.shape, complex)
        c[g.wavevector_index(1, 1)] = 1.0
        out = riesz(SpectralCoeffs(g, c), 1)
        assert out.at(1, 1) == pytest.approx(1 / np.sqrt(2))

    def test_r1_kills_x2_only_fields(self):
        g = TorusGrid(16, 16)
        f = RealField(g, np.sin(2 * np.pi * g.x2) + np.cos(6 * np.pi * g.x2) + 0 * g.x1)
        assert np.abs(riesz(forward_transform(f), 1).coeffs).max() == 0.0

    def test_composite_on_sinsin(self):
        g = TorusGrid(16, 16)
        f = sinsin(g)
        assert np.abs(riesz_r1sq_r2sq(f).values - 0.25 * f.values).max() < 1e-15
        expect = -0.5 * np.cos(2 * np.pi * g.x1) * np.cos(2 * np.pi * g.x2)
        assert np.abs(riesz_r1r2(f).values - expect).max() < 1e-15

    @pytest.mark.parametrize("p1,p2", [(1, 0), (0, 3), (2, 2), (1, 1), (3, 2)])
    def test_composite_equals_successive(self, p1, p2):
        g = TorusGrid(16, 16)
        c = forward_transform(random_field(g, 3))
        seq = c
        for _ in range(p1):
            seq = riesz(seq, 1)
        for _ in range(p2):
            seq = riesz(seq, 2)
        assert np.abs(riesz_composite(c, p1, p2).coeffs - seq.coeffs).max() < 1e-15

    def test_composite_rejects_identity(self):
        g = TorusGrid(8, 8)
        with pytest.raises(ValueError):
            riesz_composite(forward_transform(random_field(g)), 0, 0)

    def test_composite_on_constant(self):
        g = TorusGrid(8, 8)
        c = forward_transform(RealField(g, np.full(g.shape, 5.0)))
        assert np.abs(riesz_composite(c, 2, 1).coeffs).max() == 0.0

    def test_even_composite_real(self):
        g = TorusGrid(32, 32)
        c = riesz_composite(forward_transform(random_field(g, 1)), 2, 2)
        z = np.fft.ifft2(c.coeffs, norm="forward")
        assert np.abs(z.imag).max() < 1e-10 * np.abs(z.real).max()

    def test_l2_contraction(self):
        g = TorusGrid(32, 32)
        c = forward_transform(random_field(g, 2))
        for axis in (1, 2):
            r = riesz(c, axis)
            assert coeff_inner(r, r).real <= coeff_inner(c, c).real

    def test_bilinear_pairing_is_antisymmetric(self):
        # the real odd multiplier makes R_i self-adjoint only in the Hermitian pairing
        g = TorusGrid(16, 16)
        f, h = random_field(g, 4), random_field(g, 5)
        cf, ch = forward_transform(f), forward_transform(h)
        rf = np.fft.ifft2(riesz(cf, 1).coeffs, norm="forward")
        rh = np.fft.ifft2(riesz(ch, 1).coeffs, norm="forward")
        assert np.mean(rf * h.values) == pytest.approx(-np.mean(f.values * rh), abs=1e-14)
        assert np.mean(rf * h.values) == pytest.approx(np.mean(f.values * np.conj(rh)), abs=1e-14)


class TestDerivatives:
    def test_d1_sine(self):
        g = TorusGrid(16, 8)
        f = RealField(g, np.sin(2 * np.pi * g.x1) + 0 * g.x2)
        d = inverse_transform(partial_derivative(forward_transform(f), 1)).values
        assert np.abs(d - 2 * np.pi * np.cos(2 * np.pi * g.x1)).max() < 1e-12

    def test_d2_of_x1_only(self):
        g = TorusGrid(16, 8)
        f = RealField(g, np.sin(4 * np.pi * g.x1) + 0 * g.x2)
        assert np.abs(partial_derivative(forward_transform(f), 2).coeffs).max() == 0.0

    def test_derivative_exchange(self):
        g = TorusGrid(32, 32)
        c = forward_transform(random_field(g, 6))
        a = partial_derivative(riesz(c, 2), 1).coeffs
        b = partial_derivative(riesz(c, 1), 2).coeffs
        assert np.abs(a - b).max() < 1e-14

    def test_laplacian_inverse(self):
        g = TorusGrid(16, 16)
        f = random_field(g, 7)
        c = forward_transform(RealField(g, f.values - f.values.mean()))
        back = inverse_laplacian(laplacian(c)).coeffs
        assert np.abs(back - c.coeffs).max() < 1e-14


class TestHeat:
    def test_identity_at_zero(self):
        g = TorusGrid(16, 16)
        c = forward_transform(random_field(g))
        assert np.array_equal(heat_semigroup(c, 0.0).coeffs, c.coeffs)

    def test_single_mode_decay(self):
        g = TorusGrid(8, 8)
        c = np.zeros(g.shape, complex)
        c[g.wavevector_index(1, 0)] = c[g.wavevector_index(-1, 0)] = 0.5
        out = heat_semigroup(SpectralCoeffs(g, c), 1.0)
        assert out.at(1, 0).real == pytest.approx(0.5 * 7.157e-18, rel=1e-3)

    def test_negative_tau(self):
        g = TorusGrid(8, 8)
        with pytest.raises(ValueError):
            heat_semigroup(forward_transform(random_field(g)), -1e-3)

    @settings(max_examples=25, deadline=None)
    @given(a=st.floats(0, 0.05), b=st.floats(0, 0.05), seed=st.integers(0, 100))
    def test_semigroup_law(self, a, b, seed):
        g = TorusGrid(16, 16)
        c = forward_transform(random_field(g, seed))
        lhs = heat_semigroup(heat_semigroup(c, a), b).coeffs
        rhs = heat_semigroup(c, a + b).coeffs
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(c.coeffs).max()


class TestDealias:
    def test_idempotent_and_mask(self):
        g = TorusGrid(24, 24)
        c = forward_transform(random_field(g, 8))
        d = dealias(c)
        assert np.array_equal(dealias(d).coeffs, d.coeffs)
        assert np.all(d.coeffs[~g.dealias_mask] == 0)
        assert np.array_equal(d.coeffs[g.dealias_mask], c.coeffs[g.dealias_mask])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_row_mean_of_r1_vanishes(seed):
    g = TorusGrid(16, 16)
    c = forward_transform(random_field(g, seed))
    r1 = np.fft.ifft2(riesz(c, 1).coeffs, norm="forward")
    assert np.abs(r1.mean(axis=0)).max() < 1e-14


def test_quadrature_helpers():
    g = TorusGrid(16, 16)
    f = sinsin(g)
    assert integrate(f) == pytest.approx(0.0, abs=1e-16)
    assert integrate(RealField(g, f.values**2)) == pytest.approx(0.25)
    assert row_means(RealField(g, np.cos(2 * np.pi * g.x1) + g.x2)).shape == (16,)

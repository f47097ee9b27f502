import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import trapezoid

from oracles import image_sum_kernel
from twowall import KernelSpec, heat_kernel, make_grid, sample_noise


class TestMakeGrid:
    def test_small(self):
        g = make_grid(4, 4, 1.0)
        assert g.dx == 0.25
        assert g.dt == 0.25

    def test_spacings(self):
        g = make_grid(100, 400, 0.5)
        assert g.dx == pytest.approx(0.01, abs=1e-15)
        assert g.dt == pytest.approx(0.00125, abs=1e-15)

    @pytest.mark.parametrize("args", [(3, 10, 1.0), (10, 3, 1.0), (10, 10, 0.0),
                                      (10, 10, -1.0), (10.5, 10, 1.0), (0, 10, 1.0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            make_grid(*args)

    @given(nx=st.integers(4, 2000), nt=st.integers(4, 5000),
           T=st.floats(1e-3, 10.0, allow_nan=False))
    def test_invariants(self, nx, nt, T):
        g = make_grid(nx, nt, T)
        assert g.dx * g.nx == pytest.approx(1.0, rel=1e-15)
        assert abs(g.dt * g.nt - T) <= 2 * np.spacing(T)
        assert g.x[0] == 0.0 and g.x[-1] == 1.0
        assert g.t[-1] == pytest.approx(T, rel=1e-15)

    def test_snapping(self):
        g = make_grid(64, 512, 0.25)
        assert g.x_index(0.5) == 32
        assert g.x_index(0.507) == 32
        assert g.t_index(0.25) == 512
        assert g.t_index(1.0) == 512


class TestNoise:
    def test_deterministic(self):
        g = make_grid(16, 32, 1.0)
        a, b = sample_noise(g, 11), sample_noise(g, 11)
        assert a.xi.shape == (15, 32)
        assert np.array_equal(a.xi, b.xi)
        assert not np.array_equal(a.xi, sample_noise(g, 12).xi)
        assert not np.array_equal(a.xi, sample_noise(g, 11, stream=1).xi)

    def test_read_only(self):
        nf = sample_noise(make_grid(8, 8, 1.0), 0)
        with pytest.raises(ValueError):
            nf.xi[0, 0] = 1.0

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            sample_noise(make_grid(8, 8, 1.0), -1)

    def test_scales(self):
        g = make_grid(16, 64, 0.5)
        nf = sample_noise(g, 0)
        assert nf.forcing_scale == pytest.approx(np.sqrt(g.dt / g.dx))
        assert nf.sheet_scale == pytest.approx(np.sqrt(g.dx * g.dt))
        assert np.allclose(nf.sheet_increments(), nf.xi * nf.sheet_scale)

    def test_bumped_touches_one_entry(self):
        nf = sample_noise(make_grid(8, 8, 1.0), 0)
        bumped = nf.bumped(3, 5, 0.5)
        diff = bumped.xi - nf.xi
        assert diff[2, 5] == 0.5
        assert np.count_nonzero(diff) == 1

    def test_mean_over_seeds(self):
        g = make_grid(64, 256, 1.0)
        total = np.array([sample_noise(g, s).xi.mean() for s in range(100)])
        n = 100 * 63 * 256
        assert abs(total.mean()) < 4.0 / np.sqrt(n)

    def test_sheet_variance(self):
        # Brownian sheet over [0, 0.5] x [0, 0.5] has variance 0.25.
        g = make_grid(16, 16, 1.0)
        sums = np.array([sample_noise(g, s).sheet_increments()[:8, :8].sum()
                         for s in range(10_000)])
        assert sums.var() == pytest.approx(0.25, rel=0.05)


class TestHeatKernel:
    def test_boundary_zero(self):
        assert heat_kernel(0.0, 0.3, 0.01) == 0.0
        assert heat_kernel(1.0, 0.3, 0.01) == 0.0
        spec = KernelSpec((0.2, 0.7))
        assert heat_kernel(0.2, 0.4, 0.01, spec) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        x, y = rng.uniform(0, 1, 50), rng.uniform(0, 1, 50)
        for t in (1e-3, 1e-2, 0.1):
            assert np.allclose(heat_kernel(x, y, t), heat_kernel(y, x, t), rtol=0, atol=1e-14)

    def test_matches_images(self):
        assert heat_kernel(0.5, 0.5, 0.01) == pytest.approx(image_sum_kernel(0.5, 0.5, 0.01),
                                                            abs=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(l=st.floats(0.0, 0.45), w=st.floats(0.1, 0.55), fx=st.floats(0, 1), fy=st.floats(0, 1),
           t=st.floats(1e-3, 0.2))
    def test_subinterval_matches_images(self, l, w, fx, fy, t):
        r = min(l + w, 1.0)
        x, y = l + fx * (r - l), l + fy * (r - l)
        g = heat_kernel(x, y, t, KernelSpec((l, r)))
        ref = max(image_sum_kernel(x, y, t, l, r), 0.0)
        assert g == pytest.approx(ref, abs=1e-9)

    def test_rejects(self):
        with pytest.raises(ValueError):
            heat_kernel(0.5, 0.5, 0.0)
        with pytest.raises(ValueError):
            heat_kernel(0.1, 0.5, 0.01, KernelSpec((0.2, 0.8)))
        with pytest.raises(ValueError):
            KernelSpec((0.5, 0.5))
        with pytest.raises(ValueError):
            KernelSpec(n_terms=0)

    @pytest.mark.parametrize("t", [1e-3, 1e-2, 1e-1])
    def test_mass(self, t):
        y = np.linspace(0, 1, 1024)
        for x in (0.1, 0.5, 0.9):
            mass = trapezoid(heat_kernel(x, y, t), y)
            assert mass <= 1.0 + 1e-9
        if t == 1e-3:
            assert trapezoid(heat_kernel(0.5, y, t), y) == pytest.approx(1.0, abs=1e-6)

    def test_semigroup(self):
        z = np.linspace(0, 1, 4001)
        s, t = 0.01, 0.02
        for x, y in ((0.3, 0.6), (0.5, 0.5), (0.1, 0.8)):
            lhs = trapezoid(heat_kernel(x, z, s) * heat_kernel(z, y, t), z)
            assert lhs == pytest.approx(heat_kernel(x, y, s + t), abs=1e-6)

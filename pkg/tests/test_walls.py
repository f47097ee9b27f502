import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from twowall import CoefficientSet, Rule, WallPair, make_grid, validate_coefficients, validate_walls


def statuses(report):
    return {k: v["status"] for k, v in report.to_dict()["checks"].items()}


class TestWallPair:
    def test_defaults_filled(self):
        w = WallPair("affine", {"lower": -0.5})
        assert w.params == {"lower": -0.5, "lower_slope": 0.0, "upper": 1.0, "upper_slope": 0.0}

    def test_unknown_parameter(self):
        with pytest.raises(ValueError, match="lower_slop"):
            WallPair("affine", {"lower_slop": 1.0})
        with pytest.raises(ValueError, match="unknown kind"):
            WallPair("spiral")

    def test_evaluation(self):
        w = WallPair("sinusoidal", {"lower": -1.0, "lower_amplitude": 0.2, "upper": 1.0,
                                    "upper_amplitude": -0.1, "mode": 2.0})
        assert w.h1(0.25, 0.3) == pytest.approx(-0.8)
        assert w.h2(0.25, 0.3) == pytest.approx(0.9)
        assert w.dxx("lower", 0.25, 0.0) == pytest.approx(-(2 * np.pi) ** 2 * 0.2)
        a = WallPair("affine", {"lower": -1.0, "lower_slope": 0.5})
        assert a.h1(0.3, 2.0) == pytest.approx(0.0)
        assert a.dt("lower", 0.3, 2.0) == 0.5

    def test_on_grid_shape(self):
        g = make_grid(8, 16, 1.0)
        h1, h2 = WallPair.constant(-1, 1).on_grid(g)
        assert h1.shape == h2.shape == (9, 17)


class TestValidateWalls:
    def test_constant_passes(self):
        r = validate_walls(WallPair.constant(-1, 1), make_grid(16, 16, 1.0))
        assert r.ok
        assert statuses(r) == {"H1": "pass", "boundary": "pass", "H2": "pass", "H3": "pass",
                               "H4": "pass"}

    def test_crossing_walls_fail_h1(self):
        g = make_grid(16, 16, 1.0)
        r = validate_walls(WallPair("affine", {"lower": -1.0, "lower_slope": 2.0}), g)
        assert r["H1"].passed is False
        # the last time level is where the walls meet
        assert r["H1"].where[1] == g.nt
        assert r["H1"].margin == pytest.approx(0.0, abs=1e-12)

    def test_shrinking_gap_fails_h4(self):
        r = validate_walls(WallPair("affine", {"upper_slope": -0.5}), make_grid(16, 16, 1.0))
        assert r["H4"].passed is False
        assert r["H1"].passed is True
        assert r["H4"].margin == pytest.approx(-0.5 / 16)

    def test_boundary_sign(self):
        r = validate_walls(WallPair.constant(0.1, 1.0), make_grid(8, 8, 1.0))
        assert r["boundary"].passed is False

    def test_moving_boundary_flagged_only(self):
        r = validate_walls(WallPair("affine", {"lower": -1.0, "lower_slope": -0.2}),
                           make_grid(8, 8, 1.0))
        assert r["H3"].passed is False
        assert r["H1"].passed and r["H4"].passed and r["boundary"].passed

    def test_h2_norm(self):
        w = WallPair("sinusoidal", {"lower": -1.0, "lower_amplitude": 0.1, "mode": 1.0})
        r = validate_walls(w, make_grid(64, 64, 1.0))
        # ||pi^2 0.1 sin(pi x)||_L2 over [0,1]x[0,1] = 0.1 pi^2 / sqrt(2)
        assert r["H2"].margin == pytest.approx(0.1 * np.pi**2 / np.sqrt(2), rel=1e-3)

    @settings(max_examples=30, deadline=None)
    @given(lower=st.floats(-2.0, -0.05), upper=st.floats(0.05, 2.0),
           la=st.floats(-0.5, 0.5), ua=st.floats(-0.5, 0.5), mode=st.integers(1, 3),
           slope=st.floats(0.0, 1.0))
    def test_refinement_stable(self, lower, upper, la, ua, mode, slope):
        walls = [
            WallPair("sinusoidal", {"lower": lower, "lower_amplitude": la, "upper": upper,
                                    "upper_amplitude": ua, "mode": float(mode)}),
            WallPair("affine", {"lower": lower, "upper": upper, "upper_slope": slope}),
        ]
        for w in walls:
            gap = (w.params["upper"] - w.params["lower"])
            if w.kind == "sinusoidal" and gap - abs(la) - abs(ua) <= 1e-3:
                continue
            for k in range(3):
                g = make_grid(8 * 2**k, 8 * 2**k, 1.0)
                r = validate_walls(w, g)
                assert r["H1"].passed and r["H4"].passed and r["boundary"].passed, r.to_dict()

    def test_deterministic(self):
        w = WallPair("affine", {"upper_slope": -0.1})
        g = make_grid(8, 8, 1.0)
        assert validate_walls(w, g).to_dict() == validate_walls(w, g).to_dict()


class TestRules:
    @settings(max_examples=50, deadline=None)
    @given(kind=st.sampled_from(["linear", "sine"]), a=st.floats(-2, 2), b=st.floats(-2, 2),
           c=st.floats(0.1, 3), u=st.floats(-3, 3))
    def test_derivative_matches_difference(self, kind, a, b, c, u):
        params = ({"intercept": a, "slope": b} if kind == "linear"
                  else {"offset": a, "amplitude": b, "frequency": c})
        r = Rule(kind, params)
        h = 1e-6
        fd = (r(0.0, 0.0, u + h) - r(0.0, 0.0, u - h)) / (2 * h)
        assert r.du(0.0, 0.0, u) == pytest.approx(fd, abs=1e-6)

    def test_constant(self):
        r = Rule.constant(0.3)
        assert r.is_constant
        assert np.all(r(0.0, 0.0, np.linspace(-1, 1, 5)) == 0.3)
        assert np.all(r.du(0.0, 0.0, np.linspace(-1, 1, 5)) == 0.0)


class TestValidateCoefficients:
    def test_constants_pass(self):
        r = validate_coefficients(CoefficientSet(Rule.constant(0.0), Rule.constant(1.0),
                                                 L=0.0, M_sigma=1.0))
        assert r.ok
        assert r["F"].passed is True
        assert r["sigma_positive"].passed is None

    def test_unbounded_sigma(self):
        c = CoefficientSet(Rule.constant(0.0), Rule("linear", {"slope": 1.0}), L=1.0, M_sigma=1.0)
        r = validate_coefficients(c, box=(-10.0, 10.0))
        assert r["F_sigma_bounded"].passed is False
        assert r["F"].passed is False
        assert r["F_sigma_bounded"].margin == pytest.approx(-9.0)

    def test_sine_lipschitz(self):
        c = CoefficientSet(Rule.constant(0.0), Rule.sine(0.5, 0.4), L=0.4, M_sigma=0.9,
                           sigma_min=0.1)
        r = validate_coefficients(c)
        assert r.estimates["sigma_lipschitz"] == pytest.approx(0.4, abs=1e-6)
        assert r.ok

    def test_sigma_floor(self):
        c = CoefficientSet(Rule.constant(0.0), Rule.sine(0.0, 0.5), L=0.5, M_sigma=0.5,
                           sigma_min=0.1)
        r = validate_coefficients(c)
        assert r["sigma_positive"].passed is False

    def test_rejects_infinite_box(self):
        with pytest.raises(ValueError):
            validate_coefficients(CoefficientSet.constant(1.0), box=(-np.inf, 1.0))

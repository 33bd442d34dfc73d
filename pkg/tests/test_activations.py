import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elephant_cl import kernels
from elephant_cl.activations import (
    KINDS,
    ActivationSpec,
    act_eval,
    act_grad,
    evaluate,
    sparsity_estimate,
)

import oracles

SMOOTH = ("sigmoid", "tanh", "elu", "elephant")
finite = st.floats(-50, 50, allow_nan=False)


def spec(kind, a=0.7, d=4.0):
    return ActivationSpec(kind, a, d)


class TestSpec:
    def test_rejects_unknown_kind(self):
        with pytest.raises(ValueError):
            ActivationSpec("swish")

    @pytest.mark.parametrize("a", [0.0, -1.0, float("nan")])
    def test_rejects_bad_width(self, a):
        with pytest.raises(ValueError):
            ActivationSpec("elephant", a=a)

    def test_rejects_small_slope(self):
        with pytest.raises(ValueError):
            ActivationSpec("elephant", d=1.5)

    def test_round_trip(self):
        s = ActivationSpec("elephant", 0.04, 8.0)
        assert ActivationSpec.from_dict(s.to_dict()) == s

    def test_locality_flags(self):
        assert ActivationSpec("elephant").is_local and ActivationSpec("rect").is_local
        assert not any(ActivationSpec(k).is_local for k in ("relu", "sigmoid", "tanh", "elu"))


class TestValues:
    def test_elephant_fixed_points(self, backend):
        s = spec("elephant", a=1.0, d=4.0)
        assert act_eval(s, 0.0) == 1.0
        assert act_eval(s, 1.0) == pytest.approx(0.5)
        assert act_eval(s, -1.0) == pytest.approx(0.5)
        assert act_grad(s, 0.0) == 0.0

    def test_elephant_far_tail_is_zero_not_nan(self, backend):
        s = spec("elephant", a=0.01, d=8.0)
        f, g = evaluate(s, np.array([1e300, -1e300, 1e30]))
        assert np.all(np.isfinite(f)) and np.all(np.isfinite(g))
        assert np.all(f < 1e-100)

    def test_rect_is_limit_of_elephant(self, backend):
        x = np.array([-2.0, -0.5, 0.3, 0.99, 1.01, 3.0])
        r = act_eval(spec("rect", a=1.0), x)
        e = act_eval(spec("elephant", a=1.0, d=400.0), x)
        np.testing.assert_allclose(e, r, atol=0.02)

    def test_rect_boundary_and_gradient(self, backend):
        s = spec("rect", a=0.5)
        f, g = evaluate(s, np.array([-0.5, 0.5, 0.0, 0.6]))
        np.testing.assert_array_equal(f, [0.5, 0.5, 1.0, 0.0])
        np.testing.assert_array_equal(g, 0.0)

    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_scalar_oracle(self, kind, backend, rng):
        s = spec(kind)
        x = np.concatenate([rng.normal(0, 3, 200), [-40.0, -1e-9, 0.0, 1e-9, 40.0]])
        f, g = evaluate(s, x)
        for xi, fi, gi in zip(x, f, g):
            fo, go = oracles.act(kind, float(xi), s.a, s.d)
            assert fi == pytest.approx(fo, rel=1e-12, abs=1e-14)
            assert gi == pytest.approx(go, rel=1e-10, abs=1e-14)

    def test_shape_preserved(self, backend):
        h = np.arange(12.0).reshape(3, 4) - 6
        f, g = evaluate(spec("tanh"), h)
        assert f.shape == g.shape == (3, 4)

    def test_scalar_returns_float(self):
        assert isinstance(act_eval(spec("relu"), 2.0), float)
        assert isinstance(act_grad(spec("relu"), 2.0), float)


class TestBackends:
    @pytest.mark.skipif("cython" not in kernels.BACKENDS, reason="compiled kernels not built")
    @pytest.mark.parametrize("kind", KINDS)
    def test_compiled_agrees_with_fallback(self, kind, rng):
        s = spec(kind, a=0.3, d=8.0)
        h = rng.normal(0, 2, 5000)
        fc, gc = kernels.activate(s.code, h, s.a, s.d, backend="cython")
        fp, gp = kernels.activate(s.code, h, s.a, s.d, backend="python")
        np.testing.assert_allclose(fc, fp, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(gc, gp, rtol=1e-12, atol=1e-15)

    def test_env_forcing_documented_backends(self):
        assert kernels.BACKEND in kernels.BACKENDS
        assert "python" in kernels.BACKENDS


class TestGradients:
    @pytest.mark.parametrize("kind", SMOOTH + ("relu",))
    @settings(max_examples=60, deadline=None)
    @given(x=finite)
    def test_central_difference(self, kind, x):
        s = spec(kind)
        step = 1e-6
        if kind == "relu" and abs(x) <= step:
            return
        numeric = (act_eval(s, x + step) - act_eval(s, x - step)) / (2 * step)
        exact = act_grad(s, x)
        # 1e-9 covers the rounding floor of a central difference with this step
        assert abs(exact - numeric) <= 1e-4 * max(abs(exact), abs(numeric)) + 1e-9

    @settings(max_examples=100, deadline=None)
    @given(x=finite, a=st.floats(0.01, 5), d=st.sampled_from([2.0, 4.0, 8.0, 3.5]))
    def test_elephant_symmetric_and_bounded(self, x, a, d):
        s = spec("elephant", a, d)
        assert act_eval(s, x) == pytest.approx(act_eval(s, -x))
        assert 0.0 <= act_eval(s, x) <= 1.0
        assert act_grad(s, x) == pytest.approx(-act_grad(s, -x), abs=1e-300)

    @settings(max_examples=100, deadline=None)
    @given(x=st.floats(0.0, 50, allow_nan=False), a=st.floats(0.05, 5))
    def test_elephant_monotone_on_each_side(self, x, a):
        s = spec("elephant", a, 4.0)
        assert act_grad(s, x) <= 0.0
        assert act_grad(s, -x) >= 0.0


class TestSparsity:
    # reference (function, gradient) sparsity at eps=1e-3, C=1e4
    TABLE = {
        "relu": (0.5, 0.5),
        "sigmoid": (0.5, 1.0),
        "tanh": (0.0, 1.0),
        "elu": (0.0, 0.5),
        "elephant": (1.0, 1.0),
    }

    @pytest.mark.parametrize("kind", sorted(TABLE))
    def test_table_at_reduced_resolution(self, kind):
        r = sparsity_estimate(ActivationSpec(kind), 1e-3, 1e4, grid_points=200_001)
        fs, gs = self.TABLE[kind]
        assert r.function_sparsity == pytest.approx(fs, abs=0.01)
        assert r.gradient_sparsity == pytest.approx(gs, abs=0.01)

    @pytest.mark.parametrize("kind", KINDS)
    def test_matches_counting_oracle(self, kind):
        r = sparsity_estimate(ActivationSpec(kind, 1.0, 4.0), 1e-2, 20.0, grid_points=4001)
        fo, go = oracles.sparsity_by_counting(kind, 1e-2, 20.0, 4001, 1.0, 4.0)
        assert r.function_sparsity == pytest.approx(fo, abs=1e-12)
        assert r.gradient_sparsity == pytest.approx(go, abs=1e-12)

    def test_elephant_sparsity_grows_with_C(self):
        s = ActivationSpec("elephant")
        small = sparsity_estimate(s, 1e-3, 10.0, 10_001).function_sparsity
        big = sparsity_estimate(s, 1e-3, 1e3, 10_001).function_sparsity
        assert small < big

    @pytest.mark.parametrize("kw", [{"epsilon": 0}, {"C": -1.0}, {"grid_points": 10}])
    def test_rejects_bad_arguments(self, kw):
        with pytest.raises(ValueError):
            sparsity_estimate(ActivationSpec("relu"), **kw)

    def test_closed_form_elephant_function_sparsity(self):
        # |f| <= eps  <=>  |x| >= a (1/eps - 1)^(1/d)
        eps, C, a, d = 1e-3, 100.0, 1.0, 4.0
        edge = a * (1 / eps - 1) ** (1 / d)
        expected = 1 - edge / C
        r = sparsity_estimate(ActivationSpec("elephant", a, d), eps, C, 400_001)
        assert r.function_sparsity == pytest.approx(expected, abs=1e-4)
        assert math.isclose(expected, 1 - 5.62 / 100, abs_tol=1e-3)

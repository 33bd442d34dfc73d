import math

import numpy as np
import pytest

from elephant_cl.activations import ActivationSpec
from elephant_cl.models import (
    InitSpec,
    ModelParams,
    build_model,
    hidden,
    hidden_sparsity,
    load_checkpoint,
    predict,
    save_checkpoint,
    spread_biases,
)

import oracles
from conftest import small_model


class TestInit:
    def test_uniform_bounds(self):
        p = build_model(784, 1000, 10, ActivationSpec("relu"), InitSpec(seed=3))
        assert np.abs(p.V).max() <= 1 / math.sqrt(784)
        assert np.abs(p.U).max() <= 1 / math.sqrt(1000)
        # a uniform on (-r, r) has std r / sqrt(3)
        assert p.V.std() == pytest.approx(1 / math.sqrt(784) / math.sqrt(3), rel=0.01)

    def test_elephant_biases_evenly_spaced(self):
        p = build_model(1, 5, 1, ActivationSpec("elephant", 0.1), InitSpec(sigma_bias=1.0))
        r = math.sqrt(3)
        np.testing.assert_allclose(p.b, [-r, -r / 2, 0, r / 2, r])

    def test_spread_has_requested_std(self):
        b = spread_biases(100_001, 0.64)
        assert b.std() == pytest.approx(0.64, rel=1e-3)
        assert spread_biases(1, 0.5).tolist() == [0.0]

    @pytest.mark.parametrize("kind", ["relu", "tanh", "sigmoid", "elu"])
    def test_classical_biases_zero(self, kind):
        p = build_model(2, 9, 1, ActivationSpec(kind), InitSpec(sigma_bias=1.0))
        assert not p.b.any()

    def test_seeded(self):
        a = build_model(3, 20, 2, ActivationSpec("tanh"), InitSpec(seed=5))
        b = build_model(3, 20, 2, ActivationSpec("tanh"), InitSpec(seed=5))
        c = build_model(3, 20, 2, ActivationSpec("tanh"), InitSpec(seed=6))
        assert np.array_equal(a.V, b.V) and np.array_equal(a.U, b.U)
        assert not np.array_equal(a.V, c.V)

    def test_shape_validation(self):
        act = ActivationSpec("relu")
        with pytest.raises(ValueError):
            ModelParams(V=np.zeros((3, 2)), b=np.zeros(4), U=np.zeros((1, 3)), activation=act)
        with pytest.raises(ValueError):
            ModelParams(V=np.zeros((3, 2)), b=np.zeros(3), U=np.zeros((1, 5)), activation=act)
        with pytest.raises(ValueError):
            build_model(1, 3, 1, act, head="softmax")


class TestForward:
    @pytest.mark.parametrize("kind", ["relu", "tanh", "elephant", "rect", "elu", "sigmoid"])
    def test_matches_list_oracle(self, kind, rng):
        p = small_model(kind, n=3, m=6, o=2)
        X = rng.normal(size=(4, 3))
        out = predict(p, X)
        for x, row in zip(X, out):
            ref = oracles.net(p.V.tolist(), p.b.tolist(), p.U.tolist(), kind, x.tolist(), p.activation.a, p.activation.d)[3]
            np.testing.assert_allclose(row, ref, rtol=1e-12, atol=1e-14)

    def test_single_input_accepted(self):
        p = small_model(n=3)
        assert predict(p, np.ones(3)).shape == (1,)
        assert hidden(p, np.ones(3)).shape == (7,)

    def test_wrong_width_rejected(self):
        with pytest.raises(ValueError):
            predict(small_model(n=3), np.ones((2, 4)))

    def test_hidden_sparsity_of_narrow_elephant(self):
        p = build_model(1, 200, 1, ActivationSpec("elephant", 0.01, 8), InitSpec(sigma_bias=1.0))
        s = hidden_sparsity(p, np.linspace(0, 2, 50)[:, None], 1e-3)
        assert s > 0.9
        relu = build_model(1, 200, 1, ActivationSpec("relu"), InitSpec())
        assert hidden_sparsity(relu, np.linspace(0.1, 2, 50)[:, None], 1e-3) < 0.6


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = small_model("elephant", head="logits", o=3)
        path = tmp_path / "ck.npz"
        save_checkpoint(p, path)
        q = load_checkpoint(path)
        for k in ("U", "V", "b"):
            assert np.array_equal(p.arrays()[k], q.arrays()[k])
        assert q.activation == p.activation and q.head == "logits"

    def test_copy_is_deep(self):
        p = small_model()
        q = p.copy()
        q.V += 1
        assert not np.array_equal(p.V, q.V)

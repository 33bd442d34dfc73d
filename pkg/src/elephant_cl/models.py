"""One-hidden-layer networks ``f(x) = U sigma(V x + b)``: construction, prediction, checkpoints."""

import json
from dataclasses import dataclass

import numpy as np

from elephant_cl.activations import ActivationSpec, evaluate

PARAM_NAMES = ("U", "V", "b")
HEADS = ("linear", "logits")
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    """Weights of a one-hidden-layer network.

    ``V`` is ``(m, n)``, ``b`` is ``(m,)`` and ``U`` is ``(o, m)``. There is no
    output bias. ``head`` only records how outputs are read: ``linear`` for
    regression, ``logits`` for softmax classification.
    """

    V: np.ndarray
    b: np.ndarray
    U: np.ndarray
    activation: ActivationSpec
    head: str = "linear"

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        if self.V.ndim != 2 or self.b.ndim != 1 or self.U.ndim != 2:
            raise ValueError("V and U must be 2-D and b 1-D")
        m = self.V.shape[0]
        if self.b.shape[0] != m or self.U.shape[1] != m:
            raise ValueError(
                f"inconsistent hidden width: V has {m} rows, b has {self.b.shape[0]} entries, "
                f"U has {self.U.shape[1]} columns"
            )
        if self.head not in HEADS:
            raise ValueError(f"unknown output head {self.head!r}")

    @property
    def n(self):
        return self.V.shape[1]

    @property
    def m(self):
        return self.V.shape[0]

    @property
    def o(self):
        return self.U.shape[0]

    def arrays(self):
        return {"U": self.U, "V": self.V, "b": self.b}

    def copy(self):
        return ModelParams(self.V.copy(), self.b.copy(), self.U.copy(), self.activation, self.head)

    def all_finite(self):
        return all(np.isfinite(a).all() for a in self.arrays().values())


@dataclass(frozen=True)
class InitSpec:
    sigma_bias: float = 0.0
    seed: int = 0


def spread_biases(m, sigma_bias):
    """``m`` evenly spaced biases covering [-sqrt(3) s, sqrt(3) s], endpoints included."""
    if m == 1:
        return np.zeros(1)
    half = np.sqrt(3.0) * sigma_bias
    return np.linspace(-half, half, m)


def build_model(n, m, o, activation, init=InitSpec(), head="linear"):
    """Draw a fresh network.

    Weights of each layer are uniform on ``(-sqrt(k), sqrt(k))`` with
    ``k = 1 / in_features``; ``V`` is drawn before ``U`` from one PCG64 stream.
    Bell-shaped activations get spread-out hidden biases, all others zeros.
    """
    if min(n, m, o) < 1:
        raise ValueError(f"layer sizes must be >= 1, got n={n}, m={m}, o={o}")
    if init.sigma_bias < 0:
        raise ValueError(f"sigma_bias must be >= 0, got {init.sigma_bias}")
    rng = np.random.Generator(np.random.PCG64(init.seed))
    kv = np.sqrt(1.0 / n)
    ku = np.sqrt(1.0 / m)
    V = rng.uniform(-kv, kv, size=(m, n))
    U = rng.uniform(-ku, ku, size=(o, m))
    b = spread_biases(m, init.sigma_bias) if activation.is_local else np.zeros(m)
    return ModelParams(V=V, b=b, U=U, activation=activation, head=head)


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.n:
        raise ValueError(f"expected inputs with {params.n} features, got shape {x.shape}")
    return X, single


def hidden(params, x):
    """Hidden representation ``sigma(V x + b)`` for one input or a batch of rows."""
    X, single = _as_batch(params, x)
    F, _ = evaluate(params.activation, X @ params.V.T + params.b, with_grad=False)
    return F[0] if single else F


def predict(params, x):
    """Network output ``U sigma(V x + b)`` (logits for a classification head)."""
    X, single = _as_batch(params, x)
    Z = hidden(params, X) @ params.U.T
    return Z[0] if single else Z


def hidden_sparsity(params, inputs, epsilon=1e-3):
    """Fraction of hidden units with ``|phi_j(x)| <= epsilon``, averaged over input rows."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    F = hidden(params, np.atleast_2d(inputs))
    return float(np.mean(np.abs(F) <= epsilon))


def save_checkpoint(params, path):
    """Write shapes, activation and raw float64 arrays to an ``.npz`` file."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "n": params.n,
        "m": params.m,
        "o": params.o,
        "activation": params.activation.to_dict(),
        "head": params.head,
    }
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **params.arrays())


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        params = ModelParams(
            V=z["V"],
            b=z["b"],
            U=z["U"],
            activation=ActivationSpec.from_dict(meta["activation"]),
            head=meta["head"],
        )
    if (params.n, params.m, params.o) != (meta["n"], meta["m"], meta["o"]):
        raise ValueError("checkpoint arrays do not match the recorded shapes")
    return params

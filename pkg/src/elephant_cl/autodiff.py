"""Reverse-mode gradients for one-hidden-layer networks, Adam and RMSProp.

Dense arrays are plain float64 numpy arrays. The backward pass is written out
for the fixed graph ``X -> H = X V^T + b -> F = sigma(H) -> Z = F U^T -> loss``
rather than built from a general tape.
"""

from dataclasses import dataclass, field

import numpy as np

from elephant_cl.activations import evaluate
from elephant_cl.models import PARAM_NAMES

LOSSES = ("squared_error", "softmax_cross_entropy")

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
RMSPROP_EPS = 1e-8


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    def __init__(self, layer, message=None):
        self.layer = layer
        super().__init__(message or f"non-finite values in {layer}")


@dataclass
class GradientSet:
    dU: np.ndarray
    dV: np.ndarray
    db: np.ndarray

    @classmethod
    def zeros_like(cls, params):
        return cls(np.zeros_like(params.U), np.zeros_like(params.V), np.zeros_like(params.b))

    def arrays(self):
        return {"U": self.dU, "V": self.dV, "b": self.db}

    def __add__(self, other):
        return GradientSet(self.dU + other.dU, self.dV + other.dV, self.db + other.db)

    def dot(self, other):
        """Frobenius inner product summed over the three blocks."""
        return float(
            np.dot(self.dU.ravel(), other.dU.ravel())
            + np.dot(self.dV.ravel(), other.dV.ravel())
            + np.dot(self.db, other.db)
        )

    def norm(self):
        return float(np.sqrt(self.dot(self)))

    def all_finite(self):
        return all(np.isfinite(a).all() for a in self.arrays().values())


def _check_inputs(params, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.n:
        raise ShapeError(f"batch_inputs has shape {X.shape}; expected (batch, {params.n})")
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    return X


def _targets_matrix(params, Y, loss_kind, batch):
    """Squared error wants (batch, o) reals; cross-entropy wants a one-hot (batch, o)."""
    Y = np.asarray(Y)
    o = params.o
    if loss_kind == "squared_error":
        Y = Y.astype(np.float64)
        if Y.ndim == 1 and o == 1:
            Y = Y[:, None]
        if Y.shape != (batch, o):
            raise ShapeError(f"targets have shape {Y.shape}; expected ({batch}, {o})")
        return Y
    if Y.ndim == 1:
        if Y.shape[0] != batch:
            raise ShapeError(f"{Y.shape[0]} labels for a batch of {batch}")
        labels = Y.astype(np.int64)
        if np.any(labels != Y) or labels.min() < 0 or labels.max() >= o:
            raise ShapeError(f"class labels must be integers in [0, {o})")
        onehot = np.zeros((batch, o))
        onehot[np.arange(batch), labels] = 1.0
        return onehot
    if Y.shape != (batch, o):
        raise ShapeError(f"one-hot targets have shape {Y.shape}; expected ({batch}, {o})")
    return Y.astype(np.float64)


def _forward(params, X):
    # overflow is reported as NonFiniteError below, not as a numpy warning
    with np.errstate(over="ignore", invalid="ignore"):
        H = X @ params.V.T + params.b
        if not np.isfinite(H).all():
            raise NonFiniteError("hidden pre-activation")
        F, G = evaluate(params.activation, H)
        if not (np.isfinite(F).all() and np.isfinite(G).all()):
            raise NonFiniteError("hidden activation")
        Z = F @ params.U.T
    if not np.isfinite(Z).all():
        raise NonFiniteError("output")
    return F, G, Z


def _backward(params, X, F, G, dZ):
    dU = dZ.T @ F
    dH = (dZ @ params.U) * G
    dV = dH.T @ X
    db = dH.sum(axis=0)
    return GradientSet(dU, dV, db)


def _loss_and_seed(params, batch_inputs, batch_targets, loss_kind):
    if loss_kind not in LOSSES:
        raise ValueError(f"unknown loss {loss_kind!r}; expected one of {LOSSES}")
    X = _check_inputs(params, batch_inputs)
    B = X.shape[0]
    Y = _targets_matrix(params, batch_targets, loss_kind, B)
    F, G, Z = _forward(params, X)
    if loss_kind == "squared_error":
        R = Z - Y
        loss = float(np.mean(R * R))
        dZ = (2.0 / R.size) * R
    else:
        Zs = Z - Z.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(Zs).sum(axis=1, keepdims=True))
        logp = Zs - logsum
        loss = float(-np.sum(Y * logp) / B)
        dZ = (np.exp(logp) - Y) / B
    if not np.isfinite(loss):
        raise NonFiniteError("loss")
    return loss, X, F, G, dZ


def forward_backward(params, batch_inputs, batch_targets, loss_kind="squared_error"):
    """Batch-mean loss and its exact gradient with respect to ``U``, ``V`` and ``b``.

    Squared error averages over batch rows and output dimensions. Cross-entropy
    takes integer labels or one-hot rows and averages over the batch.
    """
    loss, X, F, G, dZ = _loss_and_seed(params, batch_inputs, batch_targets, loss_kind)
    return loss, _backward(params, X, F, G, dZ)


def forward_backward_fisher(params, batch_inputs, batch_targets, loss_kind="squared_error"):
    """``forward_backward`` plus the batch mean of squared per-sample gradients.

    Row ``i``'s own gradient is an outer product (``dz_i f_i^T`` for ``U``,
    ``dh_i x_i^T`` for ``V``), so the mean of their squares is again a pair of
    matrix products and no per-sample loop is needed. For a batch of one the
    result is the squared gradient.
    """
    loss, X, F, G, dZ = _loss_and_seed(params, batch_inputs, batch_targets, loss_kind)
    grads = _backward(params, X, F, G, dZ)
    B = X.shape[0]
    dZs = B * dZ  # per-sample loss gradients
    dHs = (dZs @ params.U) * G
    sq = GradientSet(
        dU=(dZs * dZs).T @ (F * F) / B,
        dV=(dHs * dHs).T @ (X * X) / B,
        db=np.mean(dHs * dHs, axis=0),
    )
    return loss, grads, sq


def output_gradient(params, x):
    """Gradient of the scalar output ``f(x)`` with respect to all weights (requires o == 1)."""
    if params.o != 1:
        raise ShapeError(f"output gradient needs a scalar-output model, got o={params.o}")
    X = _check_inputs(params, np.atleast_2d(x))
    if X.shape[0] != 1:
        raise ShapeError("output_gradient takes a single input")
    F, G, _ = _forward(params, X)
    return _backward(params, X, F, G, np.ones((1, 1)))


@dataclass
class OptimizerState:
    kind: str
    first: dict = field(default_factory=dict)
    second: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params, kind):
        if kind not in ("adam", "rmsprop"):
            raise ValueError(f"unknown optimizer {kind!r}")
        arrays = params.arrays()
        first = {k: np.zeros_like(v) for k, v in arrays.items()} if kind == "adam" else {}
        second = {k: np.zeros_like(v) for k, v in arrays.items()}
        return cls(kind=kind, first=first, second=second)


def _check_shapes(params, grads):
    for name, p, g in zip(PARAM_NAMES, params.arrays().values(), grads.arrays().values()):
        if p.shape != g.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")


def adam_step(params, grads, state, lr):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if state.kind != "adam":
        raise ValueError(f"adam_step given a {state.kind} state")
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    _check_shapes(params, grads)
    state.step += 1
    c1 = 1.0 - ADAM_BETA1**state.step
    c2 = 1.0 - ADAM_BETA2**state.step
    for name, g in grads.arrays().items():
        m = state.first[name]
        v = state.second[name]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1.0 - ADAM_BETA2) * (g * g)
        p = params.arrays()[name]
        p -= lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    return params, state


def rmsprop_step(params, grads, state, lr, decay=0.999):
    """``s <- decay s + (1 - decay) g^2``, ``p <- p - lr g / (sqrt(s) + eps)``, in place."""
    if state.kind != "rmsprop":
        raise ValueError(f"rmsprop_step given a {state.kind} state")
    if not 0 < decay < 1:
        raise ValueError(f"decay must lie in (0, 1), got {decay}")
    if not lr > 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    _check_shapes(params, grads)
    state.step += 1
    for name, g in grads.arrays().items():
        s = state.second[name]
        s *= decay
        s += (1.0 - decay) * (g * g)
        p = params.arrays()[name]
        p -= lr * g / (np.sqrt(s) + RMSPROP_EPS)
    return params, state


@dataclass
class FiniteDiffResult:
    max_relative_error: float
    checked: list
    skipped: list


def finite_diff_check(params, x, coord_count=20, step=1e-5, target=None,
                      loss_kind="squared_error", seed=0):
    """Compare reverse-mode gradients with central differences at random coordinates.

    The checked objective is ``forward_backward``'s loss on ``x`` (a single input
    or a batch) against ``target`` (zeros by default). A hidden-weight coordinate
    whose perturbation moves some pre-activation across an activation kink is
    skipped and listed in ``skipped``.
    """
    if not step > 0:
        raise ValueError(f"step must be > 0, got {step}")
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if target is None:
        if loss_kind == "squared_error":
            target = np.zeros((X.shape[0], params.o))
        else:
            target = np.zeros(X.shape[0], dtype=np.int64)
    _, grads = forward_backward(params, X, target, loss_kind)
    analytic = grads.arrays()
    arrays = params.arrays()

    coords = [(name, idx) for name in PARAM_NAMES for idx in np.ndindex(arrays[name].shape)]
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(len(coords), size=min(coord_count, len(coords)), replace=False)

    H = X @ params.V.T + params.b
    kinks = params.activation.kinks
    checked, skipped = [], []
    worst = 0.0
    for k in picks:
        name, idx = coords[k]
        if kinks and name in ("V", "b"):
            j = idx[0]
            reach = step * (np.abs(X[:, idx[1]]) if name == "V" else np.ones(X.shape[0]))
            if any(np.any(np.abs(H[:, j] - kink) <= reach) for kink in kinks):
                skipped.append((name, idx))
                continue
        p = arrays[name]
        orig = p[idx]
        p[idx] = orig + step
        up, _ = forward_backward(params, X, target, loss_kind)
        p[idx] = orig - step
        down, _ = forward_backward(params, X, target, loss_kind)
        p[idx] = orig
        numeric = (up - down) / (2.0 * step)
        exact = float(analytic[name][idx])
        err = abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-12)
        worst = max(worst, err)
        checked.append((name, idx, exact, numeric))
    return FiniteDiffResult(max_relative_error=worst, checked=checked, skipped=skipped)

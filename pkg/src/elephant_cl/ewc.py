"""Streaming EWC: a diagonal Fisher estimate refreshed after every mini-batch.

Each mini-batch is treated as its own task. After training on it, the squared
task-loss gradients (per sample, averaged over the batch) are folded into ``F``
with ``F <- gamma F + (1 - gamma) g^2`` and the anchor moves to the current weights. The penalty pulls later updates
back toward that anchor with strength ``lam``.
"""

from dataclasses import dataclass

import numpy as np

from elephant_cl.autodiff import GradientSet


@dataclass
class FisherState:
    F: dict
    anchor: object
    gamma: float
    lam: float

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"EWC gamma must lie in (0, 1), got {self.gamma}")
        if not self.lam > 0:
            raise ValueError(f"EWC lambda must be > 0, got {self.lam}")

    @classmethod
    def start(cls, params, gamma, lam):
        F = {k: np.zeros_like(v) for k, v in params.arrays().items()}
        return cls(F=F, anchor=params.copy(), gamma=gamma, lam=lam)


def fisher_update(state, grads, params, sq_grads=None):
    """Fold squared gradients into the Fisher estimate and re-anchor at ``params`` (in place).

    ``sq_grads``, when given, replaces ``grads * grads`` -- typically the batch
    mean of squared per-sample gradients from ``forward_backward_fisher``.
    """
    sq = sq_grads.arrays() if sq_grads is not None else None
    for name, g in grads.arrays().items():
        F = state.F[name]
        g2 = sq[name] if sq is not None else g * g
        if F.shape != g2.shape:
            raise ValueError(f"gradient for {name} has shape {g2.shape}, Fisher has {F.shape}")
        F *= state.gamma
        F += (1.0 - state.gamma) * g2
    state.anchor = params.copy()
    return state


def ewc_penalty(params, state):
    """``(lam / 2) sum F (w - anchor)^2`` and its gradient ``lam F (w - anchor)``."""
    anchor = state.anchor.arrays()
    total = 0.0
    grads = {}
    for name, w in params.arrays().items():
        delta = w - anchor[name]
        weighted = state.F[name] * delta
        total += float(np.dot(weighted.ravel(), delta.ravel()))
        grads[name] = state.lam * weighted
    return 0.5 * state.lam * total, GradientSet(grads["U"], grads["V"], grads["b"])

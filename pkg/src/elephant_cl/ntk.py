"""Empirical neural tangent kernel of a scalar-output one-hidden-layer network.

``ntk(x, x_t) = <grad_w f(x), grad_w f(x_t)>`` decides how much an update at
``x_t`` moves the prediction at ``x``. It is computed two independent ways:
from reverse-mode gradients, and from the closed form

    sigma(h)^T sigma(h_t) + (x^T x_t + 1) * sum_j u_j^2 sigma'(h_j) sigma'(h_t,j)

with ``h = V x + b``.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from elephant_cl.activations import evaluate
from elephant_cl.autodiff import ShapeError, output_gradient


def _require_scalar(params):
    if params.o != 1:
        raise ShapeError(f"NTK probe needs a scalar-output model, got o={params.o}")


def ntk_autodiff(params, x, x_t):
    _require_scalar(params)
    return output_gradient(params, x).dot(output_gradient(params, x_t))


def ntk_analytic(params, x, x_t, factored=False):
    """Closed-form kernel.

    With ``factored=True`` the second term uses ``(u^T u) * sigma'^T sigma'_t``
    instead of the per-unit ``sum_j u_j^2 sigma'_j sigma'_t,j``. The two agree
    only for a single hidden unit; the default is the exact kernel.
    """
    _require_scalar(params)
    x = np.asarray(x, dtype=np.float64).ravel()
    x_t = np.asarray(x_t, dtype=np.float64).ravel()
    if x.shape[0] != params.n or x_t.shape[0] != params.n:
        raise ShapeError(f"inputs must have {params.n} features")
    f, g = evaluate(params.activation, params.V @ x + params.b)
    f_t, g_t = evaluate(params.activation, params.V @ x_t + params.b)
    u = params.U[0]
    scale = float(np.dot(x, x_t)) + 1.0
    if factored:
        grad_term = float(np.dot(u, u)) * float(np.dot(g, g_t))
    else:
        grad_term = float(np.dot(u * u, g * g_t))
    return float(np.dot(f, f_t)) + scale * grad_term


@dataclass
class NtkProfile:
    anchor: np.ndarray
    grid: list
    raw_values: np.ndarray
    normalized_values: np.ndarray
    all_zero: bool = False
    metadata: dict = field(default_factory=dict)


def ntk_profile(params, x_t, grid, **metadata):
    """Kernel against ``x_t`` over a grid of inputs, scaled into [-1, 1] by the grid max."""
    _require_scalar(params)
    if len(grid) == 0:
        raise ValueError("grid must be nonempty")
    anchor = np.atleast_1d(np.asarray(x_t, dtype=np.float64))
    points = [np.atleast_1d(np.asarray(x, dtype=np.float64)) for x in grid]
    g_t = output_gradient(params, anchor)
    raw = np.array([output_gradient(params, x).dot(g_t) for x in points])
    peak = np.max(np.abs(raw))
    if peak > 0:
        normalized = raw / peak
    else:
        normalized = np.zeros_like(raw)
    return NtkProfile(anchor, points, raw, normalized, all_zero=bool(peak == 0), metadata=metadata)


def write_profile_csv(profile, path):
    """``# key=value`` metadata lines, then ``x,raw_ntk,normalized_ntk`` rows.

    The first column holds the input for 1-D grids and the grid index otherwise.
    """
    one_d = all(p.shape == (1,) for p in profile.grid)
    meta = {"anchor": " ".join(repr(float(v)) for v in profile.anchor), **profile.metadata}
    if profile.all_zero:
        meta["all_zero"] = "true"
    with open(path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh)
        w.writerow(["x" if one_d else "grid_index", "raw_ntk", "normalized_ntk"])
        for i, (p, r, s) in enumerate(zip(profile.grid, profile.raw_values, profile.normalized_values)):
            w.writerow([repr(float(p[0])) if one_d else i, repr(float(r)), repr(float(s))])

"""Pure numpy implementation of the elementwise activation kernels.

Mirrors ``_ckernels.pyx`` line for line; used whenever the compiled module is
unavailable or ``ELEPHANT_CL_BACKEND=python`` is set.
"""

import numpy as np

RELU, SIGMOID, TANH, ELU, ELEPHANT, RECT = range(6)


def activate(code, h, a, d, f, g):
    """Write sigma(h) into ``f`` and, if ``g`` is not None, sigma'(h) into ``g``.

    All arrays are 1-D contiguous float64 of equal length.
    """
    if code == RELU:
        np.maximum(h, 0.0, out=f)
        if g is not None:
            g[...] = h > 0.0
    elif code == SIGMOID:
        z = np.exp(-np.abs(h))
        inv = 1.0 / (1.0 + z)
        f[...] = np.where(h >= 0.0, inv, z * inv)
        if g is not None:
            g[...] = z * inv * inv
    elif code == TANH:
        np.tanh(h, out=f)
        if g is not None:
            z = np.exp(-2.0 * np.abs(h))
            g[...] = 4.0 * z / ((1.0 + z) * (1.0 + z))
    elif code == ELU:
        neg = np.minimum(h, 0.0)
        f[...] = np.where(h > 0.0, h, np.expm1(neg))
        if g is not None:
            g[...] = np.where(h > 0.0, 1.0, np.exp(neg))
    elif code == ELEPHANT:
        q = np.abs(h) / a
        with np.errstate(over="ignore"):
            r = q ** (d - 1.0)
            p = r * q
        fv = 1.0 / (1.0 + p)
        f[...] = fv
        if g is not None:
            # r * fv is bounded by 1/q, but inf * 0 shows up once p overflows
            with np.errstate(invalid="ignore"):
                t = np.where(np.isfinite(p), r * fv, 0.0)
            g[...] = (-d / a) * np.sign(h) * t * fv
    elif code == RECT:
        q = np.abs(h)
        f[...] = np.where(q < a, 1.0, np.where(q == a, 0.5, 0.0))
        if g is not None:
            g[...] = 0.0
    else:
        raise ValueError(f"unknown activation code {code}")

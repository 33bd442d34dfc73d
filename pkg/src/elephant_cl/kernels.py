"""Backend selection for the elementwise activation kernels.

The compiled Cython module is used when it was built; otherwise the numpy
fallback is used. ``ELEPHANT_CL_BACKEND=python`` forces the fallback.
"""

import os

import numpy as np

from elephant_cl import _pykernels

_FORCED = os.environ.get("ELEPHANT_CL_BACKEND", "").strip().lower()

try:
    if _FORCED == "python":
        raise ImportError("python backend forced by environment")
    from elephant_cl import _ckernels as _compiled
except ImportError:
    _compiled = None

BACKENDS = {"python": _pykernels.activate}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.activate

BACKEND = "cython" if _compiled is not None else "python"


def activate(code, h, a, d, with_grad=True, backend=None):
    """Apply activation ``code`` elementwise to an array of any shape.

    Returns ``(f, g)``; ``g`` is None when ``with_grad`` is False.
    """
    fn = BACKENDS[BACKEND if backend is None else backend]
    h = np.asarray(h, dtype=np.float64)
    flat = np.ascontiguousarray(h.reshape(-1))
    f = np.empty_like(flat)
    g = np.empty_like(flat) if with_grad else None
    fn(code, flat, float(a), float(d), f, g)
    f = f.reshape(h.shape)
    if g is not None:
        g = g.reshape(h.shape)
    return f, g

# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled elementwise activation kernels (value and derivative in one pass)."""

from libc.math cimport exp, expm1, fabs, pow, isfinite

DEF RELU = 0
DEF SIGMOID = 1
DEF TANH = 2
DEF ELU = 3
DEF ELEPHANT = 4
DEF RECT = 5


cdef inline double _ipow(double q, int k) noexcept nogil:
    cdef double out = 1.0
    while k:
        if k & 1:
            out *= q
        q *= q
        k >>= 1
    return out


cdef void _relu(const double* h, double* f, double* g, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        f[i] = h[i] if h[i] > 0.0 else 0.0
    if g != NULL:
        for i in range(n):
            g[i] = 1.0 if h[i] > 0.0 else 0.0


cdef void _sigmoid(const double* h, double* f, double* g, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double z, inv
    for i in range(n):
        z = exp(-fabs(h[i]))
        inv = 1.0 / (1.0 + z)
        f[i] = inv if h[i] >= 0.0 else z * inv
        if g != NULL:
            g[i] = z * inv * inv


cdef void _tanh(const double* h, double* f, double* g, Py_ssize_t n) noexcept nogil:
    # z = exp(-2|x|): tanh(|x|) = (1 - z) / (1 + z), sech^2(x) = 4 z / (1 + z)^2
    cdef Py_ssize_t i
    cdef double ax, e, z, t
    for i in range(n):
        ax = fabs(h[i])
        if ax < 0.35:
            e = expm1(-2.0 * ax)
            z = 1.0 + e
            t = -e / (2.0 + e)
        else:
            z = exp(-2.0 * ax)
            t = (1.0 - z) / (1.0 + z)
        f[i] = t if h[i] >= 0.0 else -t
        if g != NULL:
            g[i] = 4.0 * z / ((1.0 + z) * (1.0 + z))


cdef void _elu(const double* h, double* f, double* g, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double e
    for i in range(n):
        if h[i] > 0.0:
            f[i] = h[i]
            if g != NULL:
                g[i] = 1.0
        else:
            e = expm1(h[i])
            f[i] = e
            if g != NULL:
                g[i] = exp(h[i])


cdef void _elephant(const double* h, double* f, double* g, Py_ssize_t n,
                    double a, double d) noexcept nogil:
    cdef Py_ssize_t i
    cdef double q, r, p, fv, t, scale = d / a
    cdef int k = <int>d
    cdef bint integral = (k == d and k >= 2 and k <= 64)
    for i in range(n):
        q = fabs(h[i]) / a
        if integral:
            r = _ipow(q, k - 1)
        else:
            r = pow(q, d - 1.0)
        p = r * q
        fv = 1.0 / (1.0 + p)
        f[i] = fv
        if g != NULL:
            # r * fv <= 1/q, but inf * 0 appears once p overflows
            t = r * fv if isfinite(p) else 0.0
            if h[i] > 0.0:
                g[i] = -scale * t * fv
            elif h[i] < 0.0:
                g[i] = scale * t * fv
            else:
                g[i] = 0.0


cdef void _rect(const double* h, double* f, double* g, Py_ssize_t n, double a) noexcept nogil:
    cdef Py_ssize_t i
    cdef double q
    for i in range(n):
        q = fabs(h[i])
        f[i] = 1.0 if q < a else (0.5 if q == a else 0.0)
    if g != NULL:
        for i in range(n):
            g[i] = 0.0


def activate(int code, const double[::1] h, double a, double d,
             double[::1] f, double[::1] g=None):
    """Write sigma(h) into ``f`` and, if given, sigma'(h) into ``g``."""
    cdef Py_ssize_t n = h.shape[0]
    cdef double* gp = NULL
    if code < RELU or code > RECT:
        raise ValueError(f"unknown activation code {code}")
    if f.shape[0] != n or (g is not None and g.shape[0] != n):
        raise ValueError("output length does not match input")
    if n == 0:
        return
    if g is not None:
        gp = &g[0]
    with nogil:
        if code == RELU:
            _relu(&h[0], &f[0], gp, n)
        elif code == SIGMOID:
            _sigmoid(&h[0], &f[0], gp, n)
        elif code == TANH:
            _tanh(&h[0], &f[0], gp, n)
        elif code == ELU:
            _elu(&h[0], &f[0], gp, n)
        elif code == ELEPHANT:
            _elephant(&h[0], &f[0], gp, n, a, d)
        else:
            _rect(&h[0], &f[0], gp, n, a)

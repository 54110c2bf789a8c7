# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-entry kernels for the ZINB likelihood, entropy and quantiles.

Mirrors ``_pykernels`` function for function.  Inputs are flattened to
contiguous float64 and the results reshaped to the input shape.
"""
import numpy as np

from libc.math cimport exp, lgamma, log, log1p

cdef double ENTROPY_TOL = 1e-9
cdef long ENTROPY_CAP = 10000
cdef long QUANTILE_CAP = 10000000


cdef double _digamma(double x) noexcept nogil:
    cdef double acc = 0.0
    cdef double f
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    return acc + log(x) - 0.5 / x - f * (1.0 / 12 - f * (1.0 / 120 - f * (
        1.0 / 252 - f * (1.0 / 240 - f * (1.0 / 132)))))


cdef inline double _logaddexp(double a, double b) noexcept nogil:
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


cdef inline double _log_zero_mass(double pi, double n, double p, bint literal) noexcept nogil:
    cdef double a = n * log(p)
    if literal:
        return log(pi) + log1p(-pi) + a
    if pi <= 0.0:
        return a
    if pi >= 1.0:
        return 0.0
    return _logaddexp(log(pi), log1p(-pi) + a)


cdef inline double _nll_one(double pi, double n, double p, double y, bint literal) noexcept nogil:
    if y == 0.0:
        return -_log_zero_mass(pi, n, p, literal)
    return -(log1p(-pi) + (lgamma(n + y) - lgamma(y + 1.0) - lgamma(n)
                          + n * log(p) + y * log1p(-p)))


def _flat(a):
    return np.ascontiguousarray(a, dtype=np.float64).ravel()


def zinb_nll(pi, n, p, y, literal=False):
    shape = np.broadcast(pi, n, p, y).shape
    cdef const double[::1] vpi = _flat(np.broadcast_to(pi, shape))
    cdef const double[::1] vn = _flat(np.broadcast_to(n, shape))
    cdef const double[::1] vp = _flat(np.broadcast_to(p, shape))
    cdef const double[::1] vy = _flat(np.broadcast_to(y, shape))
    out = np.empty(vy.shape[0], dtype=np.float64)
    cdef double[::1] vo = out
    cdef Py_ssize_t i
    cdef bint lit = literal
    with nogil:
        for i in range(vy.shape[0]):
            vo[i] = _nll_one(vpi[i], vn[i], vp[i], vy[i], lit)
    return out.reshape(shape)


def zinb_nll_grad(pi, n, p, y, literal=False):
    shape = np.broadcast(pi, n, p, y).shape
    cdef const double[::1] vpi = _flat(np.broadcast_to(pi, shape))
    cdef const double[::1] vn = _flat(np.broadcast_to(n, shape))
    cdef const double[::1] vp = _flat(np.broadcast_to(p, shape))
    cdef const double[::1] vy = _flat(np.broadcast_to(y, shape))
    cdef Py_ssize_t m = vy.shape[0]
    nll = np.empty(m)
    dpi = np.empty(m)
    dn = np.empty(m)
    dp = np.empty(m)
    cdef double[::1] o0 = nll
    cdef double[::1] o1 = dpi
    cdef double[::1] o2 = dn
    cdef double[::1] o3 = dp
    cdef Py_ssize_t i
    cdef bint lit = literal
    cdef double a, b, c, yy, logp, log_s, q, w
    with nogil:
        for i in range(m):
            a = vpi[i]
            b = vn[i]
            c = vp[i]
            yy = vy[i]
            logp = log(c)
            o0[i] = _nll_one(a, b, c, yy, lit)
            if yy == 0.0:
                if lit:
                    o1[i] = -(1.0 / a - 1.0 / (1.0 - a))
                    o2[i] = -logp
                    o3[i] = -b / c
                else:
                    log_s = -o0[i]
                    q = exp(b * logp)
                    w = exp(log1p(-a) + b * logp - log_s)
                    o1[i] = -(1.0 - q) / exp(log_s)
                    o2[i] = -w * logp
                    o3[i] = -w * b / c
            else:
                o1[i] = 1.0 / (1.0 - a)
                o2[i] = -(_digamma(b + yy) - _digamma(b) + logp)
                o3[i] = -(b / c - yy / (1.0 - c))
    return (nll.reshape(shape), dpi.reshape(shape),
            dn.reshape(shape), dp.reshape(shape))


cdef inline void _start(double pi, double n, double p,
                        double* lnb, double* lf0) noexcept nogil:
    lnb[0] = n * log(p)
    if pi <= 0.0:
        lf0[0] = lnb[0]
    elif pi >= 1.0:
        lf0[0] = 0.0
    else:
        lf0[0] = _logaddexp(log(pi), log1p(-pi) + lnb[0])


cdef double _entropy_one(double pi, double n, double p) noexcept nogil:
    cdef double lnb, lf0, f, lf, h, cdf, log_scale, log1mp
    cdef long x = 0
    _start(pi, n, p, &lnb, &lf0)
    f = exp(lf0)
    h = -f * lf0 if f > 0.0 else 0.0
    cdf = f
    if pi >= 1.0:
        return h
    log_scale = log1p(-pi)
    log1mp = log1p(-p)
    while cdf <= 1.0 - ENTROPY_TOL and x < ENTROPY_CAP:
        lnb += log(x + n) - log(x + 1.0) + log1mp
        x += 1
        lf = log_scale + lnb
        f = exp(lf)
        if f > 0.0:
            h -= f * lf
        cdf += f
    return h


cdef long _quantile_one(double pi, double n, double p, double q) noexcept nogil:
    cdef double lnb, lf0, cdf, log_scale, log1mp
    cdef long x = 0
    _start(pi, n, p, &lnb, &lf0)
    cdf = exp(lf0)
    if pi >= 1.0:
        return 0
    log_scale = log1p(-pi)
    log1mp = log1p(-p)
    while cdf < q and x < QUANTILE_CAP:
        lnb += log(x + n) - log(x + 1.0) + log1mp
        x += 1
        cdf += exp(log_scale + lnb)
    return x


def zinb_entropy(pi, n, p):
    shape = np.broadcast(pi, n, p).shape
    cdef const double[::1] vpi = _flat(np.broadcast_to(pi, shape))
    cdef const double[::1] vn = _flat(np.broadcast_to(n, shape))
    cdef const double[::1] vp = _flat(np.broadcast_to(p, shape))
    out = np.empty(vpi.shape[0])
    cdef double[::1] vo = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(vpi.shape[0]):
            vo[i] = _entropy_one(vpi[i], vn[i], vp[i])
    return out.reshape(shape)


def zinb_quantile(pi, n, p, q):
    shape = np.broadcast(pi, n, p, q).shape
    cdef const double[::1] vpi = _flat(np.broadcast_to(pi, shape))
    cdef const double[::1] vn = _flat(np.broadcast_to(n, shape))
    cdef const double[::1] vp = _flat(np.broadcast_to(p, shape))
    cdef const double[::1] vq = _flat(np.broadcast_to(q, shape))
    out = np.empty(vpi.shape[0], dtype=np.int64)
    cdef long long[::1] vo = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(vpi.shape[0]):
            vo[i] = _quantile_one(vpi[i], vn[i], vp[i], vq[i])
    return out.reshape(shape)

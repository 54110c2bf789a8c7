"""Pure-Python/numpy implementations of the hot per-entry kernels.

Used when the compiled ``_ckernels`` extension is unavailable or when
``RISKGRAPH_PURE_PYTHON`` is set.  Signatures match ``_ckernels`` exactly.
"""
import math

import numpy as np
from scipy.special import digamma, gammaln

ENTROPY_TOL = 1e-9
ENTROPY_CAP = 10_000
QUANTILE_CAP = 10_000_000


def _arrays(*args):
    return [np.array(a, dtype=np.float64) for a in np.broadcast_arrays(*args)]


def _log_zero_mass(pi, n, p, literal):
    a = n * np.log(p)
    with np.errstate(divide="ignore"):
        if literal:
            return np.log(pi) + np.log1p(-pi) + a
        return np.logaddexp(np.log(pi), np.log1p(-pi) + a)


def zinb_nll(pi, n, p, y, literal=False):
    """Elementwise negative log-likelihood of the zero-inflated NB."""
    pi, n, p, y = _arrays(pi, n, p, y)
    out = np.empty_like(y)
    zero = y == 0
    out[zero] = -_log_zero_mass(pi[zero], n[zero], p[zero], literal)
    pos = ~zero
    nz, pz, yz = n[pos], p[pos], y[pos]
    with np.errstate(divide="ignore"):
        ll = (gammaln(nz + yz) - gammaln(yz + 1.0) - gammaln(nz)
              + nz * np.log(pz) + yz * np.log1p(-pz))
        out[pos] = -(np.log1p(-pi[pos]) + ll)
    return out


def zinb_nll_grad(pi, n, p, y, literal=False):
    """Return ``(nll, d/dpi, d/dn, d/dp)`` elementwise."""
    pi, n, p, y = _arrays(pi, n, p, y)
    nll = zinb_nll(pi, n, p, y, literal)
    dpi = np.empty_like(y)
    dn = np.empty_like(y)
    dp = np.empty_like(y)

    zero = y == 0
    pi0, n0, p0 = pi[zero], n[zero], p[zero]
    logp0 = np.log(p0)
    if literal:
        with np.errstate(divide="ignore"):
            dpi[zero] = -(1.0 / pi0 - 1.0 / (1.0 - pi0))
        dn[zero] = -logp0
        dp[zero] = -n0 / p0
    else:
        log_s = -nll[zero]
        q = np.exp(n0 * logp0)
        s = np.exp(log_s)
        with np.errstate(divide="ignore"):
            w = np.exp(np.log1p(-pi0) + n0 * logp0 - log_s)
        dpi[zero] = -(1.0 - q) / s
        dn[zero] = -w * logp0
        dp[zero] = -w * n0 / p0

    pos = ~zero
    pi1, n1, p1, y1 = pi[pos], n[pos], p[pos], y[pos]
    dpi[pos] = 1.0 / (1.0 - pi1)
    dn[pos] = -(digamma(n1 + y1) - digamma(n1) + np.log(p1))
    dp[pos] = -(n1 / p1 - y1 / (1.0 - p1))
    return nll, dpi, dn, dp


def _log_pmf_start(pi, n, p):
    """log NB(0) and log of the ZINB mass at zero."""
    lnb0 = n * math.log(p)
    if pi <= 0.0:
        return lnb0, lnb0
    if pi >= 1.0:
        return lnb0, 0.0
    a, b = math.log(pi), math.log1p(-pi) + lnb0
    hi = max(a, b)
    return lnb0, hi + math.log1p(math.exp(min(a, b) - hi))


def zinb_entropy(pi, n, p):
    """Truncated-sum Shannon entropy (nats) of each ZINB distribution."""
    pi, n, p = _arrays(pi, n, p)
    out = np.empty_like(pi)
    flat_pi, flat_n, flat_p = pi.ravel(), n.ravel(), p.ravel()
    res = out.ravel()
    for i in range(flat_pi.size):
        res[i] = _entropy_one(flat_pi[i], flat_n[i], flat_p[i])
    return out


def _entropy_one(pi, n, p):
    lnb, lf0 = _log_pmf_start(pi, n, p)
    f0 = math.exp(lf0)
    h = -f0 * lf0 if f0 > 0.0 else 0.0
    cdf = f0
    if pi >= 1.0:
        return h
    log_scale = math.log1p(-pi)
    log1mp = math.log1p(-p)
    x = 0
    while cdf <= 1.0 - ENTROPY_TOL and x < ENTROPY_CAP:
        lnb += math.log(x + n) - math.log(x + 1.0) + log1mp
        x += 1
        lf = log_scale + lnb
        f = math.exp(lf)
        if f > 0.0:
            h -= f * lf
        cdf += f
    return h


def zinb_quantile(pi, n, p, q):
    """Smallest integer x with CDF(x) >= q, elementwise."""
    pi, n, p, q = _arrays(pi, n, p, q)
    out = np.empty(pi.shape, dtype=np.int64)
    res = out.ravel()
    fpi, fn, fp, fq = pi.ravel(), n.ravel(), p.ravel(), q.ravel()
    for i in range(fpi.size):
        res[i] = _quantile_one(fpi[i], fn[i], fp[i], fq[i])
    return out


def _quantile_one(pi, n, p, q):
    lnb, lf0 = _log_pmf_start(pi, n, p)
    cdf = math.exp(lf0)
    if pi >= 1.0:
        return 0
    log_scale = math.log1p(-pi)
    log1mp = math.log1p(-p)
    x = 0
    while cdf < q and x < QUANTILE_CAP:
        lnb += math.log(x + n) - math.log(x + 1.0) + log1mp
        x += 1
        cdf += math.exp(log_scale + lnb)
    return x

"""Count and Gaussian distributions used as forecast heads.

Every function accepts scalars or numpy arrays (parameter records may hold
arrays of matching shape) and returns the same kind.  The NB convention is
the number of failures before the n-th success, success probability ``p``::

    NB(x; n, p) = C(x + n - 1, n - 1) (1 - p)^x p^n

with ``n`` real-valued through the log-gamma function.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, ndtr, ndtri, xlogy

from . import kernels

P_MIN = 1e-6
P_MAX = 1.0 - 1e-6
SIGMA_MIN = 1e-6
Y0_FORMS = ("exact", "paper_literal")


def _out(a):
    a = np.asarray(a)
    return a.item() if a.ndim == 0 else a


@dataclass(frozen=True)
class ZinbParams:
    """Zero-inflation ``pi``, NB size ``n`` and NB success probability ``p``.

    ``p`` is clamped into ``[P_MIN, P_MAX]`` on construction.
    """

    pi: object
    n: object
    p: object

    def __post_init__(self):
        pi, n = np.asarray(self.pi, dtype=float), np.asarray(self.n, dtype=float)
        if np.any(~np.isfinite(pi)) or np.any((pi < 0) | (pi > 1)):
            raise ValueError("pi must lie in [0, 1]")
        if np.any(~np.isfinite(n)) or np.any(n <= 0):
            raise ValueError("n must be positive")
        object.__setattr__(self, "p", _out(np.clip(np.asarray(self.p, dtype=float), P_MIN, P_MAX)))


@dataclass(frozen=True)
class NbParams:
    n: object
    p: object

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        if np.any(~np.isfinite(n)) or np.any(n <= 0):
            raise ValueError("n must be positive")
        object.__setattr__(self, "p", _out(np.clip(np.asarray(self.p, dtype=float), P_MIN, P_MAX)))

    def as_zinb(self):
        return ZinbParams(np.zeros_like(np.asarray(self.n, dtype=float)), self.n, self.p)


@dataclass(frozen=True)
class GaussParams:
    mu: object
    sigma: object

    def __post_init__(self):
        object.__setattr__(self, "sigma", _out(np.maximum(np.asarray(self.sigma, dtype=float), SIGMA_MIN)))


# ---------------------------------------------------------------- ZINB / NB


def _check_form(y0_form):
    if y0_form not in Y0_FORMS:
        raise ValueError(f"y0_form must be one of {Y0_FORMS}, got {y0_form!r}")
    return y0_form == "paper_literal"


def _nb_logpmf(n, p, x):
    return gammaln(x + n) - gammaln(x + 1.0) - gammaln(n) + n * np.log(p) + xlogy(x, 1.0 - p)


def zinb_pmf(params, x):
    x = np.asarray(x, dtype=float)
    nb = np.exp(_nb_logpmf(params.n, params.p, x))
    return _out(params.pi * (x == 0) + (1.0 - params.pi) * nb)


def zinb_cdf(params, x):
    """P(X <= x) by direct summation; ``x`` a scalar integer."""
    support = np.arange(int(x) + 1, dtype=float)
    return float(np.sum(zinb_pmf(ZinbParams(float(params.pi), float(params.n), float(params.p)), support)))


def zinb_prob_zero(params):
    return _out(params.pi + (1.0 - params.pi) * np.power(params.p, params.n))


def zinb_nll(params, y, y0_form="exact"):
    literal = _check_form(y0_form)
    return _out(kernels.zinb_nll(params.pi, params.n, params.p, y, literal))


def zinb_loglik(params, y, y0_form="exact"):
    """Exact log-likelihood; ``y0_form="paper_literal"`` swaps the zero branch
    for ``log pi + log((1 - pi) p^n)``, which is not a normalized density."""
    return _out(-np.asarray(zinb_nll(params, y, y0_form)))


def zinb_nll_grad(params, y, y0_form="exact"):
    """Gradient of the NLL as ``(d/dpi, d/dn, d/dp)``."""
    literal = _check_form(y0_form)
    _, dpi, dn, dp = kernels.zinb_nll_grad(params.pi, params.n, params.p, y, literal)
    return _out(dpi), _out(dn), _out(dp)


def zinb_mean(params):
    return _out((1.0 - params.pi) * params.n * (1.0 - params.p) / params.p)


def zinb_variance(params):
    nb_mean = params.n * (1.0 - params.p) / params.p
    nb_var = params.n * (1.0 - params.p) / params.p ** 2
    return _out((1.0 - params.pi) * nb_var + params.pi * (1.0 - params.pi) * nb_mean ** 2)


def zinb_entropy(params):
    """Shannon entropy in nats, summed until the CDF exceeds 1 - 1e-9
    (at most 10,000 terms)."""
    return _out(kernels.zinb_entropy(params.pi, params.n, params.p))


def zinb_quantile(params, q):
    return _out(kernels.zinb_quantile(params.pi, params.n, params.p, q))


def confidence_interval(params, level):
    """Equal-tailed integer interval ``(lo, hi)`` holding ``level`` mass."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    tail = (1.0 - level) / 2.0
    return zinb_quantile(params, tail), zinb_quantile(params, 1.0 - tail)


def nb_loglik(params, y):
    return zinb_loglik(params.as_zinb(), y)


def nb_loglik_grad(params, y):
    """Gradient of the NB log-likelihood as ``(d/dn, d/dp)``."""
    _, dn, dp = zinb_nll_grad(params.as_zinb(), y)
    return _out(-np.asarray(dn)), _out(-np.asarray(dp))


def nb_mean(params):
    return _out(params.n * (1.0 - params.p) / params.p)


# ---------------------------------------------------------------- Gaussian

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def gauss_loglik(params, y):
    z = (np.asarray(y, dtype=float) - params.mu) / params.sigma
    return _out(-_HALF_LOG_2PI - np.log(params.sigma) - 0.5 * z * z)


def gauss_loglik_grad(params, y):
    """Gradient of the Gaussian log-density as ``(d/dmu, d/dsigma)``."""
    r = np.asarray(y, dtype=float) - params.mu
    s2 = params.sigma ** 2
    return _out(r / s2), _out(r * r / (s2 * params.sigma) - 1.0 / params.sigma)


def gauss_prob_zero(params):
    """Mass the Gaussian puts on (-0.5, 0.5), the values that round to zero."""
    return _out(ndtr((0.5 - params.mu) / params.sigma) - ndtr((-0.5 - params.mu) / params.sigma))


def gauss_entropy(params):
    """Differential entropy in nats."""
    return _out(0.5 * np.log(2.0 * np.pi * np.e * np.asarray(params.sigma) ** 2))


def gauss_interval(params, level):
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    z = ndtri(1.0 - (1.0 - level) / 2.0)
    return _out(params.mu - z * params.sigma), _out(params.mu + z * params.sigma)


# ---------------------------------------------------------------- histograms


def kl_histogram(p_counts, q_counts, epsilon=1e-6):
    """KL(P || Q) between two histograms on the same integer support.

    Each histogram is normalized, ``epsilon`` is added to every bin and the
    result renormalized, so empty bins never produce infinities.
    """
    p_counts = np.asarray(p_counts, dtype=float)
    q_counts = np.asarray(q_counts, dtype=float)
    if p_counts.shape != q_counts.shape or p_counts.ndim != 1:
        raise ValueError("histograms must be 1-D over the same support")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if p_counts.size == 0 or (p_counts.sum() == 0 and q_counts.sum() == 0):
        raise ValueError("both histograms are empty")

    def smooth(c):
        total = c.sum()
        base = c / total if total > 0 else np.zeros_like(c)
        base = base + epsilon
        return base / base.sum()

    P, Q = smooth(p_counts), smooth(q_counts)
    return float(max(np.sum(P * np.log(P / Q)), 0.0))

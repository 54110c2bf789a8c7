"""GRU -> GAT -> dense head network emitting per-road, per-day distribution
parameters for a zero-inflated NB, NB, or Gaussian forecast."""
from dataclasses import asdict, dataclass

import numpy as np

from . import dist, kernels, nn

HEADS = ("zinb", "nb", "gauss")
HEAD_CHANNELS = {"zinb": 3, "nb": 2, "gauss": 2}
MODEL_NAMES = {"zinb": "STZINB", "nb": "STNB", "gauss": "STG"}
INPUT_SCALINGS = ("none", "node_max")


@dataclass
class ModelConfig:
    head: str = "zinb"
    T: int = 7
    k: int = 7
    gru_hidden: int = 32
    gat_hidden: int = 32
    gat_heads: int = 2
    gat_layers: int = 1
    seed: int = 0
    n_features: int = 8
    input_scaling: str = "none"

    def __post_init__(self):
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.input_scaling not in INPUT_SCALINGS:
            raise ValueError(f"input_scaling must be one of {INPUT_SCALINGS}")
        for name in ("T", "k", "gru_hidden", "gat_hidden", "gat_heads", "gat_layers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.n_features < 0:
            raise ValueError("n_features must be >= 0")

    def to_dict(self):
        return asdict(self)


class ForecastDistribution:
    """Per-entry forecast parameters, arrays shaped (..., V, k).

    ``params`` keys: ``pi, n, p`` (zinb), ``n, p`` (nb) or ``mu, sigma`` (gauss).
    """

    def __init__(self, head, params):
        if head not in HEADS:
            raise ValueError(f"unknown head {head!r}")
        self.head = head
        self.params = {k: np.asarray(v, dtype=float) for k, v in params.items()}

    @property
    def shape(self):
        return next(iter(self.params.values())).shape

    def _zinb(self):
        if self.head == "zinb":
            return dist.ZinbParams(self.params["pi"], self.params["n"], self.params["p"])
        return dist.ZinbParams(np.zeros(self.shape), self.params["n"], self.params["p"])

    def _gauss(self):
        return dist.GaussParams(self.params["mu"], self.params["sigma"])

    def mean(self):
        if self.head == "gauss":
            return np.array(self.params["mu"], copy=True)
        return np.asarray(dist.zinb_mean(self._zinb()))

    def prob_zero(self):
        if self.head == "gauss":
            return np.asarray(dist.gauss_prob_zero(self._gauss()))
        return np.asarray(dist.zinb_prob_zero(self._zinb()))

    def entropy(self):
        if self.head == "gauss":
            return np.asarray(dist.gauss_entropy(self._gauss()))
        return np.asarray(dist.zinb_entropy(self._zinb()))

    def interval(self, level):
        if not 0.0 < level < 1.0:
            raise ValueError("level must lie in (0, 1)")
        if self.head == "gauss":
            lo, hi = dist.gauss_interval(self._gauss(), level)
        else:
            lo, hi = dist.confidence_interval(self._zinb(), level)
        return np.asarray(lo), np.asarray(hi)

    def nll(self, Y, y0_form="exact"):
        """Elementwise negative log-likelihood of targets ``Y``."""
        Y = np.asarray(Y, dtype=float)
        if Y.shape != self.shape:
            raise nn.ShapeError(f"targets {Y.shape} do not match forecast {self.shape}")
        if self.head == "gauss":
            return -np.asarray(dist.gauss_loglik(self._gauss(), Y))
        literal = dist._check_form(y0_form) and self.head == "zinb"
        pi = self.params["pi"] if self.head == "zinb" else 0.0
        return kernels.zinb_nll(pi, self.params["n"], self.params["p"], Y, literal)

    def take(self, index):
        return ForecastDistribution(self.head, {k: v[index] for k, v in self.params.items()})


def batch_nll(fd, Y, y0_form="exact"):
    """Mean NLL over every entry; the zero and positive entries together
    make up the full loss."""
    return float(np.mean(fd.nll(Y, y0_form)))


def predict_point(fd):
    return fd.mean()


def predict_interval(fd, level):
    return fd.interval(level)


class STGNN:
    """Per-road GRU over ``[risk | features]``, GAT over roads, dense head.

    The head maps each road's spatial embedding to ``k * channels`` raw
    outputs which the link functions turn into valid parameters.
    """

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.params = nn.ParamStore()
        n_in = 1 + config.n_features
        for name, value in nn.gru_params(rng, n_in, config.gru_hidden).items():
            self.params.add(name, value)
        d_in = config.gru_hidden
        for layer in range(config.gat_layers):
            for name, value in nn.gat_params(rng, d_in, config.gat_hidden, config.gat_heads,
                                             f"gat{layer}.").items():
                self.params.add(name, value)
            d_in = config.gat_heads * config.gat_hidden
        n_out = config.k * HEAD_CHANNELS[config.head]
        self.params.add("head.W", nn.glorot(rng, d_in, n_out, (d_in, n_out)))
        self.params.add("head.b", np.zeros(n_out))

    def count_parameters(self):
        return self.params.size()

    def _gru(self, prefix="gru."):
        return {k: self.params[prefix + k] for k in nn.GRU_KEYS}

    def _inputs(self, X, F):
        X = np.asarray(X, dtype=float)
        F = np.asarray(F, dtype=float)
        cfg = self.config
        if X.shape[-1] != cfg.T:
            raise nn.ShapeError(f"input window has {X.shape[-1]} days, model expects T={cfg.T}")
        if F.shape != X.shape + (cfg.n_features,):
            raise nn.ShapeError(f"features {F.shape} do not match risk {X.shape} x {cfg.n_features}")
        if cfg.input_scaling == "node_max":
            X = X / np.maximum(X.max(axis=-1, keepdims=True), 1.0)
        return np.concatenate([X[..., None], F], axis=-1)

    def _forward(self, X, F, A):
        cfg = self.config
        seq = self._inputs(X, F)
        lead = seq.shape[:-2]
        h0 = np.zeros(lead + (cfg.gru_hidden,))
        H, gru_caches = nn.gru_encode_forward(seq, h0, self._gru())
        gat_caches = []
        for layer in range(cfg.gat_layers):
            H, c = nn.gat_forward(H, A, self.params[f"gat{layer}.W"], self.params[f"gat{layer}.a"])
            gat_caches.append(c)
        z, head_cache = nn.dense_forward(H, self.params["head.W"], self.params["head.b"])
        z = z.reshape(z.shape[:-1] + (cfg.k, HEAD_CHANNELS[cfg.head]))
        return z, (gru_caches, gat_caches, head_cache)

    def _link(self, z):
        head = self.config.head
        if head == "zinb":
            (pi, n, p), c = nn.link_zinb_forward(z)
            return {"pi": pi, "n": n, "p": p}, c
        if head == "nb":
            (n, p), c = nn.link_nb_forward(z)
            return {"n": n, "p": p}, c
        (mu, sigma), c = nn.link_gauss_forward(z)
        return {"mu": mu, "sigma": sigma}, c

    def forward(self, X, F, A):
        """Forecast for one window (``X``: V x T) or a batch (B x V x T)."""
        z, _ = self._forward(X, F, np.asarray(A, dtype=float))
        params, _ = self._link(z)
        return ForecastDistribution(self.config.head, params)

    def loss_and_grad(self, X, F, A, Y, y0_form="exact"):
        """Mean NLL over all entries of ``Y``; gradients written to ``params.grads``."""
        cfg = self.config
        A = np.asarray(A, dtype=float)
        z, (gru_caches, gat_caches, head_cache) = self._forward(X, F, A)
        params, link_cache = self._link(z)
        Y = np.asarray(Y, dtype=float)
        if Y.shape != z.shape[:-1]:
            raise nn.ShapeError(f"targets {Y.shape} do not match forecast {z.shape[:-1]}")
        m = Y.size
        if cfg.head == "gauss":
            gp = dist.GaussParams(params["mu"], params["sigma"])
            nll = -np.asarray(dist.gauss_loglik(gp, Y))
            dmu, dsig = dist.gauss_loglik_grad(gp, Y)
            dz = nn.link_gauss_backward(-np.asarray(dmu) / m, -np.asarray(dsig) / m, link_cache)
        elif cfg.head == "nb":
            nll, _, dn, dp = kernels.zinb_nll_grad(0.0, params["n"], params["p"], Y, False)
            dz = nn.link_nb_backward(dn / m, dp / m, link_cache)
        else:
            literal = dist._check_form(y0_form)
            nll, dpi, dn, dp = kernels.zinb_nll_grad(params["pi"], params["n"], params["p"], Y, literal)
            dz = nn.link_zinb_backward(dpi / m, dn / m, dp / m, link_cache)
        loss = float(np.sum(nll) / m)

        self.params.zero_grad()
        g = self.params.grads
        dz = dz.reshape(dz.shape[:-2] + (-1,))
        dH, dW, db = nn.dense_backward(dz, head_cache)
        g["head.W"] += dW
        g["head.b"] += db
        for layer in reversed(range(cfg.gat_layers)):
            dH, dW, da = nn.gat_backward(dH, gat_caches[layer])
            g[f"gat{layer}.W"] += dW
            g[f"gat{layer}.a"] += da
        gru_grads = {k: g["gru." + k] for k in nn.GRU_KEYS}
        nn.gru_encode_backward(dH, gru_caches, self._gru(), gru_grads)
        return loss


def count_parameters(model):
    return model.count_parameters()

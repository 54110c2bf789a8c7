"""Dense, GRU and GAT layers with closed-form backward passes.

Each layer is a ``*_forward`` returning ``(output, cache)`` and a
``*_backward`` consuming the upstream gradient and that cache.  All arrays
are float64; leading batch dimensions broadcast.
"""
import numpy as np

LEAKY_SLOPE = 0.2
N_FLOOR = 1e-4
P_MIN = 1e-6
P_MAX = 1.0 - 1e-6
PI_MAX = 1.0 - 1e-6
SIGMA_FLOOR = 1e-4


class ShapeError(ValueError):
    pass


class ParamStore:
    """Named parameter arrays with same-shape gradient buffers."""

    def __init__(self):
        self.values = {}
        self.grads = {}

    def add(self, name, value):
        if name in self.values:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.array(value, dtype=np.float64)
        self.values[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.values[name]

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def size(self):
        return sum(v.size for v in self.values.values())

    def copy_values(self):
        return {k: v.copy() for k, v in self.values.items()}

    def load_values(self, values):
        if set(values) != set(self.values):
            raise KeyError("parameter names do not match")
        for k, v in values.items():
            v = np.asarray(v, dtype=np.float64)
            if v.shape != self.values[k].shape:
                raise ShapeError(f"{k}: shape {v.shape} != {self.values[k].shape}")
            self.values[k][...] = v


def glorot(rng, fan_in, fan_out, shape):
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


# ---------------------------------------------------------------- elementwise


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softplus(x):
    return np.logaddexp(0.0, x)


def elu(x):
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def elu_grad(x):
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


# ---------------------------------------------------------------- dense


def dense_forward(x, W, b):
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ShapeError(f"dense: x{x.shape} W{W.shape} b{b.shape}")
    return x @ W + b, (x, W)


def dense_backward(dout, cache):
    x, W = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return dout @ W.T, x2.T @ d2, d2.sum(axis=0)


def dense(x, W, b):
    return dense_forward(np.asarray(x, dtype=float), W, b)[0]


# ---------------------------------------------------------------- GRU

GRU_KEYS = ("Wz", "Uz", "bz", "Wr", "Ur", "br", "Wh", "Uh", "bh")


def gru_params(rng, n_in, n_hid, prefix="gru."):
    """Glorot-initialized GRU weights keyed by ``prefix + GRU_KEYS``."""
    out = {}
    for gate in "zrh":
        out[f"{prefix}W{gate}"] = glorot(rng, n_in, n_hid, (n_in, n_hid))
        out[f"{prefix}U{gate}"] = glorot(rng, n_hid, n_hid, (n_hid, n_hid))
        out[f"{prefix}b{gate}"] = np.zeros(n_hid)
    return out


def gru_cell_forward(x, h, p):
    """One step: update gate z, reset gate r, candidate c.

    h' = (1 - z) * h + z * c, with c = tanh(x Wh + (r * h) Uh + bh).
    """
    if x.shape[-1] != p["Wz"].shape[0] or h.shape[-1] != p["Uz"].shape[0]:
        raise ShapeError(f"gru_cell: x{x.shape} h{h.shape} Wz{p['Wz'].shape}")
    z = sigmoid(x @ p["Wz"] + h @ p["Uz"] + p["bz"])
    r = sigmoid(x @ p["Wr"] + h @ p["Ur"] + p["br"])
    rh = r * h
    c = np.tanh(x @ p["Wh"] + rh @ p["Uh"] + p["bh"])
    h_new = (1.0 - z) * h + z * c
    return h_new, (x, h, z, r, rh, c)


def gru_cell_backward(dh_new, cache, p, grads):
    """Accumulate parameter gradients into ``grads``; return ``(dx, dh)``."""
    x, h, z, r, rh, c = cache
    x2 = x.reshape(-1, x.shape[-1])
    h2 = h.reshape(-1, h.shape[-1])
    dz = dh_new * (c - h)
    dh = dh_new * (1.0 - z)

    da_c = (dh_new * z) * (1.0 - c * c)
    d2 = da_c.reshape(-1, da_c.shape[-1])
    grads["Wh"] += x2.T @ d2
    grads["Uh"] += rh.reshape(-1, rh.shape[-1]).T @ d2
    grads["bh"] += d2.sum(axis=0)
    drh = da_c @ p["Uh"].T
    dh += drh * r
    dx = da_c @ p["Wh"].T

    da_r = (drh * h) * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)
    for a, gate in ((da_z, "z"), (da_r, "r")):
        a2 = a.reshape(-1, a.shape[-1])
        grads["W" + gate] += x2.T @ a2
        grads["U" + gate] += h2.T @ a2
        grads["b" + gate] += a2.sum(axis=0)
        dh += a @ p["U" + gate].T
        dx += a @ p["W" + gate].T
    return dx, dh


def gru_cell(x_t, h, p):
    return gru_cell_forward(np.asarray(x_t, dtype=float), np.asarray(h, dtype=float), p)[0]


def gru_encode_forward(seq, h0, p):
    """Fold the cell over axis -2 of ``seq`` (``(..., T, in)``)."""
    if seq.ndim < 2 or seq.shape[-2] < 1:
        raise ShapeError("gru_encode needs a non-empty sequence")
    h = h0
    caches = []
    for t in range(seq.shape[-2]):
        h, cache = gru_cell_forward(seq[..., t, :], h, p)
        caches.append(cache)
    return h, caches


def gru_encode_backward(dh, caches, p, grads):
    dseq = []
    for cache in reversed(caches):
        dx, dh = gru_cell_backward(dh, cache, p, grads)
        dseq.append(dx)
    return np.stack(dseq[::-1], axis=-2), dh


def gru_encode(sequence, h0, p):
    return gru_encode_forward(np.asarray(sequence, dtype=float), np.asarray(h0, dtype=float), p)[0]


# ---------------------------------------------------------------- GAT


def gat_params(rng, d_in, d_out, heads, prefix):
    return {
        f"{prefix}W": np.stack([glorot(rng, d_in, d_out, (d_in, d_out)) for _ in range(heads)]),
        f"{prefix}a": np.stack([glorot(rng, 2 * d_out, 1, (2 * d_out,)) for _ in range(heads)]),
    }


def gat_forward(H, A, W, a, activation="elu"):
    """Masked multi-head graph attention, heads concatenated.

    ``H``: (..., V, d_in); ``A``: (V, V) 0/1 with unit diagonal;
    ``W``: (K, d_in, d_out); ``a``: (K, 2 d_out) split into source and
    neighbor halves.  Returns (..., V, K * d_out).
    """
    V = H.shape[-2]
    if A.shape != (V, V):
        raise ShapeError(f"adjacency {A.shape} does not match {V} nodes")
    if not np.all(np.diagonal(A) == 1):
        raise ShapeError("GAT adjacency must contain self-loops")
    K, d_in, d_out = W.shape
    if H.shape[-1] != d_in or a.shape != (K, 2 * d_out):
        raise ShapeError(f"gat: H{H.shape} W{W.shape} a{a.shape}")
    mask = A > 0
    Wh = np.einsum("...vi,kio->...kvo", H, W)
    s_src = np.einsum("...kvo,ko->...kv", Wh, a[:, :d_out])
    s_dst = np.einsum("...kvo,ko->...kv", Wh, a[:, d_out:])
    pre = s_src[..., :, None] + s_dst[..., None, :]
    e = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    e = np.where(mask, e, -np.inf)
    e = e - e.max(axis=-1, keepdims=True)
    w = np.exp(e)
    alpha = w / w.sum(axis=-1, keepdims=True)
    out = alpha @ Wh
    out = np.moveaxis(out, -3, -2)
    out = out.reshape(out.shape[:-2] + (K * d_out,))
    act = elu(out) if activation == "elu" else out
    return act, (H, W, a, Wh, pre, alpha, out, activation)


def gat_backward(dact, cache):
    """Return ``(dH, dW, da)``."""
    H, W, a, Wh, pre, alpha, out, activation = cache
    K, d_in, d_out = W.shape
    dout = dact * elu_grad(out) if activation == "elu" else dact
    dO = np.moveaxis(dout.reshape(dout.shape[:-1] + (K, d_out)), -2, -3)
    dalpha = dO @ np.swapaxes(Wh, -1, -2)
    dWh = np.swapaxes(alpha, -1, -2) @ dO
    de = alpha * (dalpha - np.sum(alpha * dalpha, axis=-1, keepdims=True))
    dpre = np.where(pre > 0, de, LEAKY_SLOPE * de)
    ds_src = dpre.sum(axis=-1)
    ds_dst = dpre.sum(axis=-2)
    a_src, a_dst = a[:, :d_out], a[:, d_out:]
    dWh += ds_src[..., None] * a_src[:, None, :] + ds_dst[..., None] * a_dst[:, None, :]
    lead = "".join(chr(ord("b") + i) for i in range(Wh.ndim - 3))
    da = np.concatenate([
        np.einsum(f"{lead}kv,{lead}kvo->ko", ds_src, Wh),
        np.einsum(f"{lead}kv,{lead}kvo->ko", ds_dst, Wh),
    ], axis=1)
    dW = np.einsum(f"{lead}vi,{lead}kvo->kio", H, dWh)
    dH = np.einsum("...kvo,kio->...vi", dWh, W)
    return dH, dW, da


def gat_layer(H, A, W, a, activation="elu"):
    return gat_forward(np.asarray(H, dtype=float), np.asarray(A, dtype=float), W, a, activation)[0]


def gat_attention(H, A, W, a):
    """Attention coefficients (..., K, V, V) for inspection and tests."""
    return gat_forward(np.asarray(H, dtype=float), np.asarray(A, dtype=float), W, a)[1][5]


# ---------------------------------------------------------------- link heads


def link_zinb_forward(z):
    """Map raw (..., 3) outputs to ``(pi, n, p)``: channel 0 drives n,
    channel 1 drives p, channel 2 drives pi."""
    sz = softplus(z[..., 0])
    n = sz + N_FLOOR
    sp = sigmoid(z[..., 1])
    p = np.clip(sp, P_MIN, P_MAX)
    spi = sigmoid(z[..., 2])
    pi = np.clip(spi, 0.0, PI_MAX)
    return (pi, n, p), (z, sp, spi)


def link_zinb_backward(dpi, dn, dp, cache):
    z, sp, spi = cache
    dz = np.empty_like(z)
    dz[..., 0] = dn * sigmoid(z[..., 0])
    dz[..., 1] = np.where((sp > P_MIN) & (sp < P_MAX), dp * sp * (1.0 - sp), 0.0)
    dz[..., 2] = np.where(spi < PI_MAX, dpi * spi * (1.0 - spi), 0.0)
    return dz


def link_nb_forward(z):
    sz = softplus(z[..., 0])
    sp = sigmoid(z[..., 1])
    return (sz + N_FLOOR, np.clip(sp, P_MIN, P_MAX)), (z, sp)


def link_nb_backward(dn, dp, cache):
    z, sp = cache
    dz = np.empty_like(z)
    dz[..., 0] = dn * sigmoid(z[..., 0])
    dz[..., 1] = np.where((sp > P_MIN) & (sp < P_MAX), dp * sp * (1.0 - sp), 0.0)
    return dz


def link_gauss_forward(z):
    return (z[..., 0], softplus(z[..., 1]) + SIGMA_FLOOR), (z,)


def link_gauss_backward(dmu, dsigma, cache):
    (z,) = cache
    dz = np.empty_like(z)
    dz[..., 0] = dmu
    dz[..., 1] = dsigma * sigmoid(z[..., 1])
    return dz


def link_head(z):
    """``ZinbParams`` built from raw (..., 3) outputs."""
    from .dist import ZinbParams

    (pi, n, p), _ = link_zinb_forward(np.asarray(z, dtype=float))
    return ZinbParams(pi, n, p)


# ---------------------------------------------------------------- checking


class GradCheckError(ArithmeticError):
    pass


def grad_check(fun, params, eps=1e-5):
    """Largest relative error between analytic and central-difference gradients.

    ``fun(params)`` returns ``(value, grads)`` with ``grads`` keyed like
    ``params`` (a dict of float arrays, perturbed in place and restored).
    Relative error is ``|a - n| / max(1, |a|, |n|)``.
    """
    value, grads = fun(params)
    if not np.isfinite(value):
        raise GradCheckError("non-finite function value")
    worst = 0.0
    for name, arr in params.items():
        g = np.asarray(grads[name], dtype=float)
        if g.shape != np.shape(arr):
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {np.shape(arr)}")
        if not np.all(np.isfinite(g)):
            raise GradCheckError(f"non-finite analytic gradient for {name}")
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = fun(params)[0]
            flat[i] = orig - eps
            f_minus = fun(params)[0]
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise GradCheckError(f"non-finite value perturbing {name}[{i}]")
            num = (f_plus - f_minus) / (2.0 * eps)
            ana = gflat[i]
            err = abs(ana - num) / max(1.0, abs(ana), abs(num))
            worst = max(worst, err)
    return worst

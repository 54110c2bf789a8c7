"""Point, distributional, sparsity and hit-rate metrics plus the
historical-average baseline.

Conventions: MAPE skips entries whose truth is zero (with 98%+ zeros any
epsilon offset would dominate it); KLD compares integer histograms of
rounded point forecasts against the truth; an entry counts as "predicted
zero" when the forecast puts at least half its mass on zero.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import dist
from .ingest import stack_windows

METRICS = ("mae", "mape", "rmse", "kld", "zr", "hr20")
LOWER_IS_BETTER = {"mae": True, "mape": True, "rmse": True, "kld": True, "zr": False, "hr20": False}


class MetricError(ValueError):
    pass


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise MetricError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise MetricError("empty input")
    return pred, truth


def mae(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def rmse(pred, truth):
    pred, truth = _pair(pred, truth)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def mape(pred, truth):
    """Mean |pred - truth| / truth over entries with truth > 0."""
    pred, truth = _pair(pred, truth)
    pos = truth > 0
    if not pos.any():
        raise MetricError("MAPE undefined: every truth value is zero")
    return float(np.mean(np.abs(pred[pos] - truth[pos]) / truth[pos]))


def round_half_away(x):
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def kld_metric(pred, truth, epsilon=1e-6):
    """KL(truth histogram || rounded-prediction histogram) on bins 0..max.

    Negative rounded predictions are counted in bin 0.
    """
    pred, truth = _pair(pred, truth)
    p_int = np.maximum(round_half_away(pred), 0).astype(np.int64).ravel()
    t_int = np.maximum(round_half_away(truth), 0).astype(np.int64).ravel()
    top = int(max(p_int.max(), t_int.max()))
    return dist.kl_histogram(np.bincount(t_int, minlength=top + 1),
                             np.bincount(p_int, minlength=top + 1), epsilon)


def true_zero_rate(prob_zero, truth):
    """Share of zero-truth entries whose forecast has P(X = 0) >= 0.5.

    ``prob_zero`` may be an array or any forecast with a ``prob_zero()``.
    """
    if hasattr(prob_zero, "prob_zero"):
        prob_zero = prob_zero.prob_zero()
    pz, truth = _pair(prob_zero, truth)
    zeros = truth == 0
    if not zeros.any():
        raise MetricError("ZR undefined: no zero truth values")
    return float(np.mean(pz[zeros] >= 0.5))


def _top_count(n_roads, top_frac):
    return max(1, math.ceil(top_frac * n_roads - 1e-9))


def hit_rate_counts(mean, entropy, truth, top_frac=0.2):
    """``(hits, kept)`` for one window; arrays are (V, k)."""
    mean, truth = _pair(mean, truth)
    entropy = np.asarray(entropy, dtype=float)
    n_roads = mean.shape[0]
    if n_roads < 5:
        raise MetricError("hit rate needs at least 5 roads")
    risk = mean.mean(axis=1)
    road_entropy = entropy.mean(axis=1)
    top = np.argsort(-risk, kind="stable")[:_top_count(n_roads, top_frac)]
    kept = top[road_entropy[top] < road_entropy.mean()]
    hits = int(np.sum(np.any(truth[kept] > 0, axis=1)))
    return hits, int(kept.size)


def hit_rate(fd, truth, top_frac=0.2):
    """Hit rate among confident high-risk roads; ``None`` when none are kept.

    ``fd`` is a forecast (``mean()``/``entropy()``) over (V, k) or a batch
    (B, V, k); batches pool hits and kept roads across windows.
    """
    mean, ent = np.asarray(fd.mean()), np.asarray(fd.entropy())
    truth = np.asarray(truth, dtype=float)
    if mean.ndim == 2:
        mean, ent, truth = mean[None], ent[None], truth[None]
    hits = kept = 0
    for b in range(mean.shape[0]):
        h, k = hit_rate_counts(mean[b], ent[b], truth[b], top_frac)
        hits += h
        kept += k
    return hits / kept if kept else None


# ---------------------------------------------------------------- baseline


class HistoricalAverage:
    """Per-road training-period mean, constant over the horizon.

    The per-road histogram of training values stands in as its predictive
    distribution for ZR and entropy.
    """

    def __init__(self, train_values, k):
        train_values = np.asarray(train_values)
        if train_values.ndim != 2 or train_values.shape[1] == 0:
            raise MetricError("historical average needs a non-empty |V| x D training block")
        self.k = k
        self.road_mean = train_values.mean(axis=1)
        self.road_p_zero = np.mean(train_values == 0, axis=1)
        ent = np.zeros(train_values.shape[0])
        for i, row in enumerate(train_values):
            freq = np.bincount(row.astype(np.int64)) / row.size
            freq = freq[freq > 0]
            ent[i] = float(-np.sum(freq * np.log(freq)))
        self.road_entropy = ent
        self._lead = ()

    def batch(self, n_windows):
        """View shaped like a forecast over ``n_windows`` windows."""
        out = HistoricalAverage.__new__(HistoricalAverage)
        out.__dict__.update(self.__dict__)
        out._lead = (n_windows,)
        return out

    def _tile(self, per_road):
        return np.broadcast_to(per_road[:, None], self._lead + (per_road.size, self.k)).copy()

    def mean(self):
        return self._tile(self.road_mean)

    def prob_zero(self):
        return self._tile(self.road_p_zero)

    def entropy(self):
        return self._tile(self.road_entropy)


def historical_average(train_values, k):
    """``(point predictions |V| x k, baseline)``."""
    ha = HistoricalAverage(train_values, k)
    return ha.mean(), ha


# ---------------------------------------------------------------- reports


@dataclass
class MetricsReport:
    model: str
    window: str
    mae: float
    mape: float | None
    rmse: float
    kld: float
    zr: float | None
    hr20: float | None
    hr20_missing: bool
    n_entries: int

    def to_dict(self):
        return asdict(self)

    def write_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.to_dict(), indent=1) + "\n")


def _optional(fn, *args):
    try:
        return fn(*args)
    except MetricError:
        return None


def evaluate_forecast(fd, truth, model_name, window_label, top_frac=0.2, epsilon=1e-6):
    """All six metrics over every entry of ``truth`` (windows concatenated)."""
    truth = np.asarray(truth, dtype=float)
    point = np.asarray(fd.mean())
    hr = _optional(hit_rate, fd, truth, top_frac)
    return MetricsReport(
        model=model_name,
        window=window_label,
        mae=mae(point, truth),
        mape=_optional(mape, point, truth),
        rmse=rmse(point, truth),
        kld=kld_metric(point, truth, epsilon),
        zr=_optional(true_zero_rate, fd.prob_zero(), truth),
        hr20=hr,
        hr20_missing=hr is None,
        n_entries=int(truth.size),
    )


def evaluate_model(forecaster, test_samples, A, model_name, window_label,
                   top_frac=0.2, epsilon=1e-6):
    """Evaluate an ``STGNN`` or a ``HistoricalAverage`` on test windows."""
    if not test_samples:
        raise MetricError("empty test set")
    X, F, Y = stack_windows(test_samples)
    if isinstance(forecaster, HistoricalAverage):
        fd = forecaster.batch(len(test_samples))
    else:
        fd = forecaster.forward(X, F, A)
    return evaluate_forecast(fd, Y, model_name, window_label, top_frac, epsilon)


def _fmt(v):
    return "NA" if v is None else repr(float(v))


def write_comparison(path, reports):
    """Table with one row per metric, one column per model, plus the best model."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric"] + [r.model for r in reports] + ["best"])
        for metric in METRICS:
            vals = [getattr(r, metric) for r in reports]
            present = [(v, r.model) for v, r in zip(vals, reports) if v is not None]
            best = ""
            if present:
                pick = min if LOWER_IS_BETTER[metric] else max
                best = pick(present, key=lambda t: t[0])[1]
            w.writerow([metric] + [_fmt(v) for v in vals] + [best])

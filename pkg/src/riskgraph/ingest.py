"""Accident records to a daily road-level risk tensor, calendar features,
seq2seq windows, and synthetic ZINB data for oracle tests."""
import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .dist import ZinbParams
from .graph import build_graph, neighbors_k

SEVERITIES = ("slight", "serious", "fatal")
DEFAULT_SEVERITY_WEIGHTS = {"slight": 1.0, "serious": 2.0, "fatal": 3.0}
N_FEATURES = 8


class IngestError(ValueError):
    pass


@dataclass(frozen=True)
class AccidentRecord:
    date: dt.date
    severity: str
    road_id: str | None = None
    xy: tuple | None = None

    def __post_init__(self):
        if (self.road_id is None) == (self.xy is None):
            raise IngestError("exactly one of road_id / coordinates must be given")
        if self.severity not in SEVERITIES:
            raise IngestError(f"unknown severity {self.severity!r}")


@dataclass(frozen=True, eq=False)
class RiskTensor:
    """``values[i, d]``: integer risk of road ``i`` on ``day_index[d]``."""

    values: np.ndarray
    day_index: tuple

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[1] != len(self.day_index):
            raise IngestError("values must be |V| x D with D == len(day_index)")
        if v.size and (v.min() < 0 or not np.array_equal(v, np.round(v))):
            raise IngestError("risk values must be nonnegative integers")
        object.__setattr__(self, "values", v.astype(np.int64))

    @property
    def zero_rate(self):
        return float(np.mean(self.values == 0)) if self.values.size else 1.0


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Per node and day: Monday..Sunday one-hot then a weekend flag."""

    values: np.ndarray


@dataclass(frozen=True, eq=False)
class WindowSample:
    input_risk: np.ndarray
    input_features: np.ndarray
    target_risk: np.ndarray
    start_day: int


def study_days(start, end):
    if end < start:
        raise IngestError("study period ends before it starts")
    return tuple(start + dt.timedelta(days=i) for i in range((end - start).days + 1))


# ---------------------------------------------------------------- risk tensor


def assign_accidents(records, graph, day_index, severity_weights=None):
    """Accumulate severity weights onto (nearest road, day).

    Nearest is by Euclidean distance to node centroids; ties go to the
    lowest node index.
    """
    weights = DEFAULT_SEVERITY_WEIGHTS if severity_weights is None else severity_weights
    day_pos = {d: i for i, d in enumerate(day_index)}
    base = np.zeros((graph.n_nodes, len(day_index)))
    for rec in records:
        if rec.date not in day_pos:
            raise IngestError(f"accident date {rec.date} outside study period")
        if rec.road_id is not None:
            try:
                node = graph.index_of(rec.road_id)
            except KeyError:
                raise IngestError(f"unknown road_id {rec.road_id!r}") from None
        else:
            if graph.coords is None:
                raise IngestError("accident given by coordinates but graph has no coords")
            d2 = np.sum((graph.coords - np.asarray(rec.xy, dtype=float)) ** 2, axis=1)
            node = int(np.argmin(d2))
        base[node, day_pos[rec.date]] += weights[rec.severity]
    return base


def spillover_matrix(graph, alpha1, alpha2):
    """Sparse ``S`` with ``S[r, j]`` = share of road r's weight landing on j."""
    rows, cols, vals = [], [], []
    for r in range(graph.n_nodes):
        rows.append(r); cols.append(r); vals.append(1.0)
        for order, alpha in ((1, alpha1), (2, alpha2)):
            if alpha == 0:
                continue
            for j in sorted(neighbors_k(graph, r, order)):
                rows.append(r); cols.append(j); vals.append(alpha)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(graph.n_nodes, graph.n_nodes))


def spread_spillover(base, graph, alpha1, alpha2):
    """Real-valued spillover before rounding."""
    if not 0.0 <= alpha2 <= alpha1 <= 1.0:
        raise IngestError("spillover requires 0 <= alpha2 <= alpha1 <= 1")
    base = np.asarray(base, dtype=float)
    return np.asarray(spillover_matrix(graph, alpha1, alpha2).T @ base)


def apply_spillover(base, graph, alpha1, alpha2, day_index):
    """Spread each road-day weight to 1st/2nd-order neighbors, then round
    half away from zero."""
    spread = spread_spillover(base, graph, alpha1, alpha2)
    return RiskTensor(np.floor(spread + 0.5), tuple(day_index))


def build_features(day_index, n_nodes=1):
    days = len(day_index)
    block = np.zeros((days, N_FEATURES))
    for d, day in enumerate(day_index):
        wd = day.weekday()
        block[d, wd] = 1.0
        block[d, 7] = 1.0 if wd >= 5 else 0.0
    return FeatureTensor(np.broadcast_to(block, (n_nodes, days, N_FEATURES)))


# ---------------------------------------------------------------- windows


def make_windows(risk, features, T, k, stride=1):
    if T < 1 or k < 1 or stride < 1:
        raise IngestError("T, k and stride must be >= 1")
    D = risk.values.shape[1]
    if D < T + k:
        raise IngestError(f"need at least T + k = {T + k} days, have {D}")
    out = []
    for s in range(0, D - T - k + 1, stride):
        out.append(WindowSample(
            input_risk=risk.values[:, s:s + T],
            input_features=features.values[:, s:s + T],
            target_risk=risk.values[:, s + T:s + T + k],
            start_day=s,
        ))
    return out


def chronological_split(samples, train_frac, val_frac):
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise IngestError("fractions must be positive with sum < 1")
    samples = sorted(samples, key=lambda s: s.start_day)
    n = len(samples)
    n_train = math.floor(n * train_frac + 1e-9)
    n_val = math.floor(n * val_frac + 1e-9)
    parts = samples[:n_train], samples[n_train:n_train + n_val], samples[n_train + n_val:]
    if any(len(p) == 0 for p in parts):
        raise IngestError(f"{n} samples give an empty split at {train_frac}/{val_frac}")
    return parts


def stack_windows(samples):
    """Batch arrays ``(X, F, Y)`` of shapes (B,V,T), (B,V,T,8), (B,V,k)."""
    X = np.stack([s.input_risk for s in samples]).astype(float)
    F = np.stack([s.input_features for s in samples])
    Y = np.stack([s.target_risk for s in samples]).astype(float)
    return X, F, Y


# ---------------------------------------------------------------- synthetic


def generate_synthetic_graph(n_nodes, model="grid", seed=0):
    if n_nodes < 1:
        raise IngestError("n_nodes must be >= 1")
    ids = [f"road_{i:05d}" for i in range(n_nodes)]
    if model == "grid":
        width = math.ceil(math.sqrt(n_nodes))
        coords = np.array([(100.0 * (i % width), 100.0 * (i // width)) for i in range(n_nodes)])
        edges = []
        for i in range(n_nodes):
            if (i + 1) % width and i + 1 < n_nodes:
                edges.append((ids[i], ids[i + 1]))
            if i + width < n_nodes:
                edges.append((ids[i], ids[i + width]))
        return build_graph(ids, edges, coords)
    if model == "random_geometric":
        rng = np.random.default_rng(seed)
        side = 100.0 * math.sqrt(n_nodes)
        coords = rng.uniform(0.0, side, size=(n_nodes, 2))
        if n_nodes == 1:
            return build_graph(ids, [], coords)
        radius = side * math.sqrt(4.0 / (math.pi * (n_nodes - 1)))
        d2 = np.sum((coords[:, None, :] - coords[None, :, :]) ** 2, axis=-1)
        ii, jj = np.nonzero(np.triu(d2 <= radius * radius, k=1))
        return build_graph(ids, [(ids[i], ids[j]) for i, j in zip(ii, jj)], coords)
    raise IngestError(f"unknown graph model {model!r}")


def sample_node_params(n_nodes, pi_range, n_range, p_range, seed=0):
    """Uniform per-node ZINB parameters within the given closed ranges."""
    return sample_group_params(n_nodes, [{"share": 1.0, "pi": pi_range, "n": n_range, "p": p_range}], seed)


def _check_group(g):
    for name in ("pi", "n", "p"):
        lo, hi = g[name]
        if lo > hi:
            raise IngestError(f"{name} range is empty: [{lo}, {hi}]")
    if not (0 <= g["pi"][0] and g["pi"][1] <= 1):
        raise IngestError("pi range must lie in [0, 1]")
    if g["n"][0] <= 0:
        raise IngestError("n range must be positive")
    if not (0 < g["p"][0] and g["p"][1] < 1):
        raise IngestError("p range must lie in (0, 1)")
    if not g.get("share", 1.0) > 0:
        raise IngestError("group share must be positive")


def sample_group_params(n_nodes, groups, seed=0):
    """Per-node ZINB parameters from a mixture of parameter groups.

    Each group is ``{"share", "pi": (lo, hi), "n": (lo, hi), "p": (lo, hi)}``.
    Group sizes are the shares rounded down, remainder to the first group;
    nodes are assigned to groups by a seeded permutation.
    """
    if not groups:
        raise IngestError("at least one parameter group is required")
    for g in groups:
        _check_group(g)
    shares = np.array([g.get("share", 1.0) for g in groups], dtype=float)
    sizes = np.floor(shares / shares.sum() * n_nodes + 1e-9).astype(int)
    sizes[0] += n_nodes - sizes.sum()
    rng = np.random.default_rng(seed)
    owner = rng.permutation(np.repeat(np.arange(len(groups)), sizes))
    out = []
    for node in range(n_nodes):
        g = groups[owner[node]]
        out.append(ZinbParams(float(rng.uniform(*g["pi"])), float(rng.uniform(*g["n"])),
                              float(rng.uniform(*g["p"]))))
    return out


def generate_zinb_series(graph, D, params_per_node, seed=0, day_index=None):
    """Independent ZINB draws per road and day.

    With probability ``pi`` a zero, otherwise the number of failures before
    the n-th success (numpy accepts real ``n``).
    """
    if len(params_per_node) != graph.n_nodes:
        raise IngestError("need one parameter record per node")
    if day_index is None:
        day_index = study_days(dt.date(2019, 1, 1), dt.date(2019, 1, 1) + dt.timedelta(days=D - 1))
    pi = np.array([q.pi for q in params_per_node], dtype=float)[:, None]
    n = np.array([q.n for q in params_per_node], dtype=float)[:, None]
    p = np.array([q.p for q in params_per_node], dtype=float)[:, None]
    rng = np.random.default_rng(seed)
    inflate = rng.random((graph.n_nodes, D)) < pi
    counts = rng.negative_binomial(np.broadcast_to(n, (graph.n_nodes, D)),
                                   np.broadcast_to(p, (graph.n_nodes, D)))
    return RiskTensor(np.where(inflate, 0, counts), tuple(day_index))


# ---------------------------------------------------------------- file I/O


def _parse_date(text, where):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise IngestError(f"{where}: bad date {text!r}") from None


def read_accidents(path, start=None, end=None):
    """Parse ``date,road_id,x,y,severity``; errors carry file line numbers."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["date", "road_id", "x", "y", "severity"]
        if reader.fieldnames != expected:
            raise IngestError(f"{path}: header must be {','.join(expected)}")
        for line, row in enumerate(reader, start=2):
            where = f"{path}:{line}"
            if None in row or any(v is None for v in row.values()):
                raise IngestError(f"{where}: wrong number of fields")
            date = _parse_date(row["date"], where)
            if (start is not None and date < start) or (end is not None and date > end):
                raise IngestError(f"{where}: date {date} outside study period")
            rid = row["road_id"].strip() or None
            x, y = row["x"].strip(), row["y"].strip()
            xy = None
            if x or y:
                try:
                    xy = (float(x), float(y))
                except ValueError:
                    raise IngestError(f"{where}: bad coordinates") from None
            try:
                records.append(AccidentRecord(date, row["severity"].strip().lower(), rid, xy))
            except IngestError as exc:
                raise IngestError(f"{where}: {exc}") from None
    return records


def write_risk(path, risk, node_ids):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id"] + [d.isoformat() for d in risk.day_index])
        for rid, row in zip(node_ids, risk.values):
            w.writerow([rid] + [str(int(v)) for v in row])


def read_risk(path, node_ids=None):
    """Read a risk CSV; rows are reordered to ``node_ids`` when given."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "road_id":
            raise IngestError(f"{path}: first column must be road_id")
        days = tuple(_parse_date(h, f"{path}:1") for h in header[1:])
        rows = {}
        for line, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise IngestError(f"{path}:{line}: expected {len(header)} fields")
            try:
                rows[row[0]] = [int(v) for v in row[1:]]
            except ValueError:
                raise IngestError(f"{path}:{line}: non-integer risk value") from None
    order = list(rows) if node_ids is None else list(node_ids)
    missing = [r for r in order if r not in rows]
    if missing:
        raise IngestError(f"{path}: no risk row for road {missing[0]!r}")
    values = np.array([rows[r] for r in order], dtype=np.int64).reshape(len(order), len(days))
    return RiskTensor(values, days)


def write_params(path, node_ids, params):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id", "pi", "n", "p"])
        for rid, q in zip(node_ids, params):
            w.writerow([rid, repr(float(q.pi)), repr(float(q.n)), repr(float(q.p))])


def read_params(path):
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for line, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out[row["road_id"]] = ZinbParams(float(row["pi"]), float(row["n"]), float(row["p"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{line}: {exc}") from None
    return out

"""Acceptance criteria, one test each.

Every test records a ``criterion N: PASS|FAIL|SKIP`` line that is printed
in the terminal summary, then asserts at the stated tolerance.  Run alone
with ``pytest tests/test_acceptance.py -v`` or ``python3 tests/test_acceptance.py``.
"""
import datetime as dt
import itertools
import json
import math
import os
import shutil
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from riskgraph import dist, nn
from riskgraph import evaluate as ev
from riskgraph import ingest as ing
from riskgraph.config import RunConfig
from riskgraph.graph import adjacency
from riskgraph.model import STGNN, ModelConfig
from riskgraph.train import TrainConfig, train_model

from .conftest import ACCEPTANCE
from .gradcases import CASES, DIST_CASES

ROOT = Path(__file__).resolve().parents[1]


def record(number, ok, detail):
    status = {True: "PASS", False: "FAIL", None: "SKIP"}[ok]
    ACCEPTANCE.append((number, f"criterion {number}: {status}  {detail}"))
    print(f"criterion {number}: {status}  {detail}")


# ---------------------------------------------------------------- 1


def test_criterion_1_distribution_oracles():
    t0 = time.perf_counter()
    worst_norm, worst_pmf, worst_mom = 0.0, 0.0, 0.0
    ok = True
    for pi, n, p in itertools.product([0.0, 0.5, 0.99], [0.5, 1.0, 5.0], [0.1, 0.5, 0.9]):
        q = dist.ZinbParams(pi, n, p)
        oracle_cdf = pi + (1 - pi) * stats.nbinom.cdf(np.arange(20000), n, p)
        stop = int(np.argmax(oracle_cdf > 1 - 1e-9))
        total = float(np.sum(dist.zinb_pmf(q, np.arange(stop + 1))))
        ok &= 1 - 1e-6 <= total <= 1.0 + 1e-15
        worst_norm = max(worst_norm, 1 - total)

        y = np.arange(51)
        gap = np.max(np.abs(np.exp(dist.zinb_loglik(q, y)) - dist.zinb_pmf(q, y)))
        worst_pmf = max(worst_pmf, gap)
        ok &= gap <= 1e-12

        x = np.arange(int(np.argmax(oracle_cdf > 1 - 1e-12)) * 4 + 50)
        f = pi * (x == 0) + (1 - pi) * stats.nbinom.pmf(x, n, p)
        m1 = float(np.sum(x * f))
        var = float(np.sum((x - m1) ** 2 * f))
        for got, want in ((dist.zinb_mean(q), m1), (dist.zinb_variance(q), var)):
            err = abs(got - want) / max(1.0, abs(want))
            worst_mom = max(worst_mom, err)
            ok &= err <= 1e-8
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    record(1, ok, f"27-point grid: max(1-sum pmf)={worst_norm:.2e}, max|exp(ll)-pmf|={worst_pmf:.2e}, "
                  f"moment err={worst_mom:.2e}, {elapsed:.1f}s (< 10s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_gradient_suite():
    t0 = time.perf_counter()
    worst = {}
    for name in ("zinb_nll", "nb_nll", "gauss_nll", "dense", "gru_cell", "gat_layer"):
        worst[name] = max(nn.grad_check(*CASES[name](1000 + s), eps=1e-6) for s in range(100))
    # full model: 100 draws cycling through the three heads
    heads = ("model_zinb", "model_nb", "model_gauss")
    worst["model"] = max(nn.grad_check(*CASES[heads[s % 3]](2000 + s), eps=1e-6) for s in range(100))
    elapsed = time.perf_counter() - t0
    ok = all(v < (1e-5 if k in DIST_CASES else 1e-4) for k, v in worst.items()) and elapsed < 60
    record(2, ok, ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f", {elapsed:.1f}s (< 60s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_hand_examples():
    modules = ["test_graph.py", "test_ingest.py", "test_dist.py", "test_nn.py", "test_model.py",
               "test_train.py", "test_evaluate.py", "test_cli.py"]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           *[str(ROOT / "tests" / m) for m in modules]],
                          cwd=ROOT, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    record(3, proc.returncode == 0, f"unit suites holding every worked example: {tail}")
    assert proc.returncode == 0, proc.stdout[-3000:]


# ---------------------------------------------------------------- 4


def test_criterion_4_parameter_recovery():
    t0 = time.perf_counter()
    graph = ing.generate_synthetic_graph(100, "grid")
    A = adjacency(graph, self_loops=True)
    truth = ing.sample_node_params(100, (0.85, 0.99), (2.0, 2.0), (0.3, 0.3), seed=1)
    risk = ing.generate_zinb_series(graph, 365, truth, seed=2)
    windows = ing.make_windows(risk, ing.build_features(risk.day_index, 100), 7, 7)
    train, val, test = ing.chronological_split(windows, 0.6, 0.2)
    model = STGNN(ModelConfig("zinb", T=7, k=7, seed=0))
    model, _ = train_model(model, train, val, A, TrainConfig(epochs=30, seed=0, record_time=False))
    X, F, _ = ing.stack_windows(test)
    fd = model.forward(X, F, A)

    pi_true = np.array([q.pi for q in truth])
    mean_true = np.array([dist.zinb_mean(q) for q in truth])
    pi_hat = fd.params["pi"].mean(axis=(0, 2))
    mean_hat = fd.mean().mean(axis=(0, 2))
    pi_mae = float(np.mean(np.abs(pi_hat - pi_true)))
    mean_rel = abs(mean_hat.mean() - mean_true.mean()) / mean_true.mean()
    per_node = float(np.mean(np.abs(mean_hat - mean_true) / mean_true))
    # what a per-road estimator with the whole year in hand would achieve
    bound = float(np.mean(np.abs(risk.values.mean(axis=1) - mean_true) / mean_true))
    elapsed = time.perf_counter() - t0
    ok = pi_mae < 0.05 and mean_rel < 0.10 and elapsed < 600
    record(4, ok, f"pi MAE={pi_mae:.4f} (< 0.05), node-averaged mean rel err={mean_rel:.4f} (< 0.10), "
                  f"{elapsed:.0f}s; info: per-node rel err={per_node:.3f}, "
                  f"full-year empirical per-node rel err={bound:.3f}")
    assert ok


# ---------------------------------------------------------------- 5

SPARSE_GROUPS = [
    {"share": 0.92, "pi": (0.985, 0.999), "n": (1.0, 3.0), "p": (0.3, 0.6)},
    {"share": 0.08, "pi": (0.5, 0.65), "n": (10.0, 20.0), "p": (0.5, 0.6)},
]


def _directional_run(seed):
    graph = ing.generate_synthetic_graph(100, "grid")
    A = adjacency(graph, self_loops=True)
    params = ing.sample_group_params(100, SPARSE_GROUPS, seed=seed)
    risk = ing.generate_zinb_series(graph, 365, params, seed=seed + 100)
    windows = ing.make_windows(risk, ing.build_features(risk.day_index, 100), 7, 7)
    train, val, test = ing.chronological_split(windows, 0.6, 0.2)
    zr = {}
    for head in ("zinb", "nb", "gauss"):
        model = STGNN(ModelConfig(head, T=7, k=7, seed=seed))
        model, _ = train_model(model, train, val, A,
                               TrainConfig(epochs=60, seed=seed, record_time=False))
        zr[head] = ev.evaluate_model(model, test, A, head, "Short(7-7)").zr
    return risk.zero_rate, zr


@pytest.mark.slow
def test_criterion_5_directional_zero_rate():
    t0 = time.perf_counter()
    runs = [_directional_run(seed) for seed in range(3)]
    elapsed = time.perf_counter() - t0
    sparse = all(z >= 0.95 for z, _ in runs)
    over_g = sum(zr["zinb"] > zr["gauss"] for _, zr in runs)
    over_nb = sum(zr["zinb"] > zr["nb"] for _, zr in runs)
    ok = sparse and over_g == 3 and over_nb >= 2 and elapsed < 1800
    detail = "; ".join(f"seed {s}: zero rate {z:.3f}, ZR STZINB/STG/STNB="
                       f"{zr['zinb']:.4f}/{zr['gauss']:.4f}/{zr['nb']:.4f}"
                       for s, (z, zr) in enumerate(runs))
    record(5, ok, f"STZINB>STG in {over_g}/3, STZINB>STNB in {over_nb}/3, {elapsed:.0f}s; {detail}")
    assert ok


# ---------------------------------------------------------------- 6


def independent_ha(rows, train_days):
    """Per-road mean over the first ``train_days`` days, plain Python."""
    return [sum(r[:train_days]) / train_days for r in rows]


def independent_mae(means, rows, T, k, first_test, n_windows):
    total, count = 0.0, 0
    for s in range(first_test, first_test + n_windows):
        for road, r in enumerate(rows):
            for d in range(s + T, s + T + k):
                total += abs(means[road] - r[d])
                count += 1
    return total / count


def test_criterion_6_ha_determinism():
    graph = ing.generate_synthetic_graph(25, "grid")
    params = ing.sample_node_params(25, (0.8, 0.95), (1.0, 3.0), (0.3, 0.6), seed=4)
    risk = ing.generate_zinb_series(graph, 200, params, seed=5)
    T = k = 7
    windows = ing.make_windows(risk, ing.build_features(risk.day_index, 25), T, k)
    train, _, test = ing.chronological_split(windows, 0.6, 0.2)
    train_days = train[-1].start_day + T + k
    points, ha = ev.historical_average(risk.values[:, :train_days], k)
    report = ev.evaluate_model(ha, test, None, "HA", "Short(7-7)")

    rows = risk.values.tolist()
    n_windows = len(rows[0]) - T - k + 1
    n_train = math.floor(n_windows * 0.6 + 1e-9)
    n_val = math.floor(n_windows * 0.2 + 1e-9)
    means = independent_ha(rows, (n_train - 1) + T + k)
    mae = independent_mae(means, rows, T, k, n_train + n_val, n_windows - n_train - n_val)

    exact = all(points[i, j] == means[i] for i in range(25) for j in range(k))
    gap = abs(mae - report.mae)
    ok = exact and gap <= 1e-12
    record(6, ok, f"points identical={exact}, |MAE diff|={gap:.1e} (<= 1e-12)")
    assert ok


# ---------------------------------------------------------------- 7


def test_criterion_7_all_zero_targets():
    t0 = time.perf_counter()
    graph = ing.generate_synthetic_graph(5, "grid")
    A = adjacency(graph, self_loops=True)
    days = ing.study_days(dt.date(2019, 1, 1), dt.date(2019, 3, 31))
    risk = ing.RiskTensor(np.zeros((5, len(days))), days)
    windows = ing.make_windows(risk, ing.build_features(days, 5), 7, 7)
    train, val, test = ing.chronological_split(windows, 0.6, 0.2)
    model, hist = train_model(STGNN(ModelConfig("zinb", seed=0)), train, val, A,
                              TrainConfig(epochs=200, seed=0, record_time=False))
    X, F, Y = ing.stack_windows(test)
    fd = model.forward(X, F, A)
    p0 = float(fd.prob_zero().mean())
    zr = ev.true_zero_rate(fd, Y)
    elapsed = time.perf_counter() - t0
    ok = p0 >= 0.95 and zr == 1.0 and elapsed < 60
    record(7, ok, f"mean P(0)={p0:.5f} (>= 0.95), ZR={zr} after {len(hist.records) - 1} epochs, "
                  f"{elapsed:.1f}s (< 60s)")
    assert ok


# ---------------------------------------------------------------- 8

E2E_CONFIG = {
    "paths": {"output_dir": "run"},
    "study_period": {"start": "2019-01-01", "end": "2019-04-30"},
    "window": {"label": "short"},
    "model": {"gru_hidden": 8, "gat_hidden": 6},
    "train": {"epochs": 4, "record_time": False},
    "synthetic": {"n_nodes": 16},
    "seeds": {"data_seed": 11, "train_seed": 3},
}


def _pipeline(workdir):
    cfg = workdir / "config.json"
    cfg.write_text(json.dumps(E2E_CONFIG))
    env = dict(os.environ)
    steps = [["synth"], ["train"], ["train", "--head", "nb"], ["train", "--head", "gauss"],
             ["evaluate"],
             ["predict", "--checkpoint", str(workdir / "run" / "checkpoint_zinb.json"),
              "--as-of", "2019-04-30"]]
    for step in steps:
        proc = subprocess.run([sys.executable, "-m", "riskgraph.cli", step[0], "--config", str(cfg),
                               *step[1:]], capture_output=True, text=True, env=env)
        if proc.returncode != 0:
            raise AssertionError(f"{step} exited {proc.returncode}: {proc.stderr}")
    out = workdir / "run"
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_8_end_to_end_determinism(tmp_path):
    first = _pipeline(tmp_path)
    shutil.rmtree(tmp_path / "run")
    second = _pipeline(tmp_path)
    differing = sorted(k for k in first.keys() | second.keys() if first.get(k) != second.get(k))
    ok = not differing and len(first) >= 15
    record(8, ok, f"{len(first)} output files compared byte-for-byte across two runs; "
                  f"differing: {differing or 'none'}")
    assert ok


# ---------------------------------------------------------------- 9


def test_criterion_9_real_data_hook(tmp_path):
    """Set RISKGRAPH_LAMBETH_CONFIG to an ingest config over the public
    2019 Lambeth accident extract to run this check."""
    path = os.environ.get("RISKGRAPH_LAMBETH_CONFIG")
    if not path:
        record(9, None, "external check; set RISKGRAPH_LAMBETH_CONFIG to run (target 0.987 +/- 0.005)")
        pytest.skip("real accident data not supplied")
    from riskgraph import cli
    code = cli.main(["ingest", "--config", path, "--out", str(tmp_path)])
    zero_rate = json.loads((tmp_path / "summary.json").read_text())["zero_rate"] if code == 0 else None
    ok = zero_rate is not None and abs(zero_rate - 0.987) <= 0.005
    record(9, ok, f"ingest exit {code}, zero rate {zero_rate} (target 0.987 +/- 0.005)")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))

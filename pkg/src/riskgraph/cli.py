"""``riskgraph ingest|synth|train|evaluate|predict --config PATH [--out DIR]``.

Exit codes: 0 success, 2 config/validation error, 3 numeric failure,
4 I/O error.
"""
import argparse
import csv
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import ingest as ing
from .config import ConfigError, RunConfig
from .evaluate import HistoricalAverage, MetricError, evaluate_model, write_comparison
from .graph import GraphError, adjacency, read_graph, write_graph
from .model import HEADS, MODEL_NAMES, STGNN
from .train import (CheckpointError, NumericError, load_checkpoint, save_checkpoint,
                    train_model)

log = logging.getLogger("riskgraph")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _require(path, what):
    if path is None:
        raise ConfigError(f"paths.{what} is required for this command")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file {path} does not exist")
    return path


def _load_graph(cfg):
    nodes = _require(cfg.path("nodes", "nodes.csv"), "nodes")
    edges = _require(cfg.path("edges", "edges.csv"), "edges")
    return read_graph(nodes, edges)


def _load_risk(cfg, graph):
    risk = ing.read_risk(_require(cfg.path("risk", "risk.csv"), "risk"), graph.node_ids)
    return risk


def _splits(cfg, graph, risk):
    features = ing.build_features(risk.day_index, graph.n_nodes)
    s = cfg.raw["split"]
    samples = ing.make_windows(risk, features, cfg.T, cfg.k, int(s["stride"]))
    return ing.chronological_split(samples, s["train_frac"], s["val_frac"])


def _prepare_out(cfg):
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    cfg.write_resolved(out)
    return out


# ---------------------------------------------------------------- commands


def cmd_ingest(cfg, args):
    graph = _load_graph(cfg)
    accidents = _require(cfg.path("accidents"), "accidents")
    records = ing.read_accidents(accidents, cfg.start, cfg.end)
    days = ing.study_days(cfg.start, cfg.end)
    base = ing.assign_accidents(records, graph, days, cfg.raw["severity_weights"])
    sp = cfg.raw["spillover"]
    risk = ing.apply_spillover(base, graph, sp["alpha1"], sp["alpha2"], days)

    out = _prepare_out(cfg)
    ing.write_risk(out / "risk.csv", risk, graph.node_ids)
    _write_json(out / "summary.json", {
        "n_roads": graph.n_nodes,
        "n_days": len(days),
        "n_accidents": len(records),
        "zero_rate": risk.zero_rate,
        "total_risk": int(risk.values.sum()),
        "max_risk": int(risk.values.max()) if risk.values.size else 0,
        "features": {"encoding": "weekday one-hot (Mon..Sun) + weekend flag",
                     "n_features": ing.N_FEATURES,
                     "weekend_days": sum(d.weekday() >= 5 for d in days)},
    })
    log.info("ingested %d accidents onto %d roads; zero rate %.4f",
             len(records), graph.n_nodes, risk.zero_rate)


def cmd_synth(cfg, args):
    syn = cfg.raw["synthetic"]
    seed = cfg.raw["seeds"]["data_seed"]
    groups = []
    for g in syn["groups"]:
        try:
            groups.append({"share": float(g.get("share", 1.0)), "pi": tuple(g["pi"]),
                           "n": tuple(g["n"]), "p": tuple(g["p"])})
        except (KeyError, TypeError):
            raise ConfigError("each synthetic group needs pi, n and p ranges") from None
    days = ing.study_days(cfg.start, cfg.end)
    graph = ing.generate_synthetic_graph(int(syn["n_nodes"]), syn["graph_model"], seed)
    params = ing.sample_group_params(graph.n_nodes, groups, seed + 1)
    risk = ing.generate_zinb_series(graph, len(days), params, seed + 2, days)

    out = _prepare_out(cfg)
    write_graph(graph, out / "nodes.csv", out / "edges.csv")
    ing.write_risk(out / "risk.csv", risk, graph.node_ids)
    ing.write_params(out / "params.csv", graph.node_ids, params)
    _write_json(out / "summary.json", {
        "n_roads": graph.n_nodes, "n_edges": len(graph.edges), "n_days": len(days),
        "zero_rate": risk.zero_rate, "total_risk": int(risk.values.sum()),
    })
    log.info("synthesized %d roads x %d days; zero rate %.4f",
             graph.n_nodes, len(days), risk.zero_rate)


def cmd_train(cfg, args):
    head = args.head or cfg.raw["model"]["head"]
    if head not in HEADS:
        raise ConfigError(f"--head must be one of {HEADS}")
    model_cfg = cfg.model_config(head)
    train_cfg = cfg.train_config()
    graph = _load_graph(cfg)
    risk = _load_risk(cfg, graph)
    train, val, _ = _splits(cfg, graph, risk)
    A = adjacency(graph, self_loops=True)

    model = STGNN(model_cfg)
    model, history = train_model(model, train, val, A, train_cfg, log=log.debug)

    out = _prepare_out(cfg)
    save_checkpoint(model, out / f"checkpoint_{head}.json", graph.node_hash(),
                    train_cfg.seed, extra={"best_epoch": history.best_epoch,
                                           "window": cfg.window_label})
    history.write_csv(out / f"history_{head}.csv")
    log.info("trained %s: best epoch %d, val NLL %.6f", MODEL_NAMES[head], history.best_epoch,
             history.records[history.best_epoch].val_nll)


def _checkpoints(cfg, args):
    if args.checkpoint:
        return [Path(p) for p in args.checkpoint]
    out = cfg.output_dir
    return [out / f"checkpoint_{h}.json" for h in HEADS if (out / f"checkpoint_{h}.json").is_file()]


def cmd_evaluate(cfg, args):
    graph = _load_graph(cfg)
    risk = _load_risk(cfg, graph)
    train, _, test = _splits(cfg, graph, risk)
    A = adjacency(graph, self_loops=True)
    models = []
    for path in _checkpoints(cfg, args):
        if not path.is_file():
            raise ConfigError(f"checkpoint {path} does not exist")
        model, _ = load_checkpoint(path, graph.node_hash())
        if (model.config.T, model.config.k) != (cfg.T, cfg.k):
            raise ConfigError(f"{path}: trained for T={model.config.T}, k={model.config.k}")
        models.append(model)

    e = cfg.raw["eval"]
    reports = []
    for model in models:
        reports.append(evaluate_model(model, test, A, MODEL_NAMES[model.config.head],
                                      cfg.window_label, e["top_frac"], e["kld_epsilon"]))
    train_end = train[-1].start_day + cfg.T + cfg.k
    ha = HistoricalAverage(risk.values[:, :train_end], cfg.k)
    reports.append(evaluate_model(ha, test, A, "HA", cfg.window_label,
                                  e["top_frac"], e["kld_epsilon"]))

    out = _prepare_out(cfg)
    for r in reports:
        r.write_json(out / f"report_{r.model}.json")
    write_comparison(out / "comparison.csv", reports)
    for r in reports:
        log.info("%s: MAE %.4f RMSE %.4f KLD %.4f ZR %s HR %s", r.model, r.mae, r.rmse, r.kld,
                 r.zr, r.hr20)


def cmd_predict(cfg, args):
    if not args.as_of:
        raise ConfigError("predict needs --as-of YYYY-MM-DD")
    try:
        as_of = dt.date.fromisoformat(args.as_of)
    except ValueError:
        raise ConfigError(f"bad --as-of date {args.as_of!r}") from None
    paths = _checkpoints(cfg, args)
    if len(paths) != 1:
        raise ConfigError("predict needs exactly one checkpoint (use --checkpoint)")
    graph = _load_graph(cfg)
    risk = _load_risk(cfg, graph)
    if not paths[0].is_file():
        raise ConfigError(f"checkpoint {paths[0]} does not exist")
    model, _ = load_checkpoint(paths[0], graph.node_hash())
    T, k = model.config.T, model.config.k
    try:
        end = risk.day_index.index(as_of) + 1
    except ValueError:
        raise ConfigError(f"--as-of {as_of} is not within the risk tensor's days") from None
    if end < T:
        raise ConfigError(f"insufficient history: need {T} days up to {as_of}, have {end}")
    features = ing.build_features(risk.day_index, graph.n_nodes)
    X = risk.values[:, end - T:end].astype(float)
    F = np.asarray(features.values[:, end - T:end])
    fd = model.forward(X, F, adjacency(graph, self_loops=True))
    mean, p_zero, ent = fd.mean(), fd.prob_zero(), fd.entropy()
    lo, hi = fd.interval(cfg.raw["eval"]["interval_level"])

    out = _prepare_out(cfg)
    with open(out / f"predictions_{model.config.head}.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["road_id", "day_offset", "mean", "lo90", "hi90", "p_zero", "entropy"])
        for i, rid in enumerate(graph.node_ids):
            for j in range(k):
                w.writerow([rid, j + 1, repr(float(mean[i, j])), _num(lo[i, j]), _num(hi[i, j]),
                            repr(float(p_zero[i, j])), repr(float(ent[i, j]))])
    with open(out / f"predictions_{model.config.head}_params.json", "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"head": fd.head, "as_of": as_of.isoformat(),
                             "params": {n: v.tolist() for n, v in fd.params.items()}},
                            sort_keys=True) + "\n")
    log.info("wrote %d forecast rows", graph.n_nodes * k)


def _num(v):
    return str(int(v)) if isinstance(v, (np.integer, int)) else repr(float(v))


COMMANDS = {"ingest": cmd_ingest, "synth": cmd_synth, "train": cmd_train,
            "evaluate": cmd_evaluate, "predict": cmd_predict}


def build_parser():
    parser = argparse.ArgumentParser(prog="riskgraph", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="output directory (overrides paths.output_dir)")
    parser.add_argument("--head", choices=HEADS, help="train: override model.head")
    parser.add_argument("--checkpoint", action="append",
                        help="evaluate/predict: checkpoint file (repeatable)")
    parser.add_argument("--as-of", help="predict: last observed day, YYYY-MM-DD")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _thread_limit():
    value = os.environ.get("RISKGRAPH_THREADS")
    if not value:
        return None
    try:
        n = int(value)
    except ValueError:
        raise ConfigError(f"RISKGRAPH_THREADS must be an integer, got {value!r}") from None
    if n < 1:
        raise ConfigError("RISKGRAPH_THREADS must be >= 1")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        threads = _thread_limit()
        cfg = RunConfig.load(args.config, args.out)
        if threads is None:
            COMMANDS[args.command](cfg, args)
        else:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=threads):
                COMMANDS[args.command](cfg, args)
    except (ConfigError, GraphError, ing.IngestError, CheckpointError, MetricError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Mini-batch NLL training with Adam, early stopping and JSON checkpoints."""
import csv
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dist
from .ingest import stack_windows
from .model import ModelConfig, STGNN, batch_nll  # noqa: F401

CHECKPOINT_FORMAT = "riskgraph-checkpoint/1"


class NumericError(ArithmeticError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 200
    batch_size: int = 8
    patience: int = 20
    seed: int = 0
    y0_form: str = "exact"
    clip_norm: float = 5.0
    record_time: bool = True

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if self.patience < 0:
            raise ValueError("patience must be >= 0")
        dist._check_form(self.y0_form)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float
    seconds: float


@dataclass
class TrainHistory:
    """Row 0 is the untrained model; ``best_epoch`` is the argmin of val NLL."""

    records: list = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["epoch", "train_nll", "val_nll", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_nll), repr(r.val_nll), repr(r.seconds)])


class Adam:
    """Bias-corrected Adam over a ``ParamStore``; moment state persists."""

    def __init__(self, store, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.store = store
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in store.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in store.values.items()}
        self.t = 0

    def step(self):
        self.t += 1
        adam_step(self.store, self.lr, self.t, self.m, self.v, self.beta1, self.beta2, self.eps)


def adam_step(store, lr, t, m, v, beta1=0.9, beta2=0.999, eps=1e-8):
    """One in-place Adam update at step ``t >= 1`` using moments ``m``, ``v``."""
    if t < 1:
        raise ValueError("Adam step index starts at 1")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in store.grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {name!r}")
        m[name] *= beta1
        m[name] += (1.0 - beta1) * g
        v[name] *= beta2
        v[name] += (1.0 - beta2) * g * g
        store.values[name] -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + eps)


def clip_gradients(store, max_norm):
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in store.grads.values()))
    if norm > max_norm:
        scale = max_norm / norm
        for g in store.grads.values():
            g *= scale
    return norm


class EarlyStopping:
    """Stop once ``patience`` consecutive epochs fail to beat the best."""

    def __init__(self, patience, best=np.inf):
        self.patience = patience
        self.best = best
        self.wait = 0

    def update(self, value):
        """Record ``value``; return ``(improved, stop)``."""
        if value < self.best:
            self.best = value
            self.wait = 0
            return True, False
        self.wait += 1
        return False, self.wait > self.patience


def evaluate_nll(model, samples, A, y0_form="exact", batch_size=8):
    total, count = 0.0, 0
    for i in range(0, len(samples), batch_size):
        X, F, Y = stack_windows(samples[i:i + batch_size])
        nll = model.forward(X, F, A).nll(Y, y0_form)
        total += float(np.sum(nll))
        count += nll.size
    return total / count


def train_model(model, train_samples, val_samples, A, cfg, log=None):
    """Train in place; the model ends holding its best-validation parameters.

    Returns ``(model, history)``.
    """
    if not train_samples or not val_samples:
        raise ValueError("training and validation sets must be non-empty")
    A = np.asarray(A, dtype=float)
    opt = Adam(model.params, lr=cfg.lr)
    clock = time.perf_counter
    t0 = clock()

    init_val = evaluate_nll(model, val_samples, A, cfg.y0_form, cfg.batch_size)
    init_train = evaluate_nll(model, train_samples, A, cfg.y0_form, cfg.batch_size)
    if not (np.isfinite(init_val) and np.isfinite(init_train)):
        raise NumericError("non-finite NLL from the initial parameters")
    history = TrainHistory([EpochRecord(0, init_train, init_val,
                                        clock() - t0 if cfg.record_time else 0.0)])
    best_params = model.params.copy_values()
    stopper = EarlyStopping(cfg.patience, best=init_val)

    for epoch in range(1, cfg.epochs + 1):
        t_epoch = clock()
        order = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_samples))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [train_samples[i] for i in order[start:start + cfg.batch_size]]
            X, F, Y = stack_windows(batch)
            loss = model.loss_and_grad(X, F, A, Y, cfg.y0_form)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite NLL at epoch {epoch}, batch {b}")
            clip_gradients(model.params, cfg.clip_norm)
            opt.step()
            total += loss * Y.size
            count += Y.size
        val = evaluate_nll(model, val_samples, A, cfg.y0_form, cfg.batch_size)
        if not np.isfinite(val):
            raise NumericError(f"non-finite validation NLL at epoch {epoch}")
        history.records.append(EpochRecord(epoch, total / count, val,
                                           clock() - t_epoch if cfg.record_time else 0.0))
        improved, stop = stopper.update(val)
        if improved:
            best_params = model.params.copy_values()
            history.best_epoch = epoch
        if log is not None:
            log(f"epoch {epoch}: train {total / count:.6f} val {val:.6f}")
        if stop:
            break
    model.params.load_values(best_params)
    return model, history


# ---------------------------------------------------------------- checkpoints


def save_checkpoint(model, path, node_hash, train_seed=None, extra=None):
    doc = {
        "format": CHECKPOINT_FORMAT,
        "config": model.config.to_dict(),
        "node_hash": node_hash,
        "train_seed": train_seed,
        "params": {
            name: {"shape": list(v.shape), "data": [float(x) for x in v.ravel()]}
            for name, v in model.params.values.items()
        },
    }
    if extra:
        doc["extra"] = extra
    text = json.dumps(doc, sort_keys=True, indent=1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")


def load_checkpoint(path, node_hash=None):
    """Rebuild the model; raises ``CheckpointError`` on any defect."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint ({exc})") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: not a riskgraph checkpoint")
    if node_hash is not None and doc.get("node_hash") != node_hash:
        raise CheckpointError(f"{path}: node ordering hash does not match the graph")
    try:
        model = STGNN(ModelConfig(**doc["config"]))
        values = {}
        for name, rec in doc["params"].items():
            values[name] = np.array(rec["data"], dtype=np.float64).reshape(rec["shape"])
        model.params.load_values(values)
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: malformed checkpoint ({exc})") from None
    return model, doc


def config_dict(cfg):
    return asdict(cfg)

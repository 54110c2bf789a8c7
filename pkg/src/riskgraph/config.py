"""JSON run configuration with materialized defaults."""
import copy
import datetime as dt
import json
from pathlib import Path

from .ingest import DEFAULT_SEVERITY_WEIGHTS, SEVERITIES
from .model import HEADS, INPUT_SCALINGS, ModelConfig
from .train import TrainConfig

WINDOW_PRESETS = {"long": (14, 14), "short": (7, 7)}

DEFAULTS = {
    "paths": {"nodes": None, "edges": None, "accidents": None, "risk": None, "output_dir": "out"},
    "study_period": {"start": "2019-01-01", "end": "2019-12-31"},
    "window": {"label": "short", "T": None, "k": None},
    "split": {"train_frac": 0.6, "val_frac": 0.2, "stride": 1},
    "model": {"head": "zinb", "gru_hidden": 32, "gat_hidden": 32, "gat_heads": 2,
              "gat_layers": 1, "input_scaling": "none"},
    "train": {"lr": 1e-3, "epochs": 200, "batch_size": 8, "patience": 20,
              "clip_norm": 5.0, "record_time": True},
    "loss": {"y0_form": "exact"},
    "eval": {"top_frac": 0.2, "kld_epsilon": 1e-6, "interval_level": 0.9},
    "severity_weights": dict(DEFAULT_SEVERITY_WEIGHTS),
    "spillover": {"alpha1": 0.5, "alpha2": 0.25},
    "synthetic": {
        "n_nodes": 100,
        "graph_model": "grid",
        "groups": [{"share": 1.0, "pi": [0.9, 0.99], "n": [1.0, 3.0], "p": [0.3, 0.6]}],
    },
    "seeds": {"data_seed": 0, "train_seed": 0},
}

_PATH_KEYS = ("nodes", "edges", "accidents", "risk", "output_dir")


class ConfigError(ValueError):
    pass


def _merge(base, override, where=""):
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and key != "severity_weights":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def _date(text, name):
    try:
        return dt.date.fromisoformat(str(text))
    except ValueError:
        raise ConfigError(f"{name}: bad ISO date {text!r}") from None


class RunConfig:
    """Resolved configuration; ``raw`` holds the JSON-ready dictionary."""

    def __init__(self, raw, base_dir="."):
        self.raw = raw
        self.base_dir = Path(base_dir)
        self._validate()

    @classmethod
    def from_dict(cls, data, base_dir="."):
        raw = copy.deepcopy(DEFAULTS)
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _merge(raw, data)
        return cls(raw, base_dir)

    @classmethod
    def load(cls, path, out_dir=None):
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        cfg = cls.from_dict(data, base_dir=path.parent)
        if out_dir is not None:
            cfg.raw["paths"]["output_dir"] = str(Path(out_dir).resolve())
        return cfg

    def _validate(self):
        r = self.raw
        self.start = _date(r["study_period"]["start"], "study_period.start")
        self.end = _date(r["study_period"]["end"], "study_period.end")
        if self.end < self.start:
            raise ConfigError("study_period.end precedes start")

        w = r["window"]
        label = w["label"]
        if label in WINDOW_PRESETS:
            T, k = WINDOW_PRESETS[label]
            for name, want in (("T", T), ("k", k)):
                if w.get(name) is not None and int(w[name]) != want:
                    raise ConfigError(f"window {label!r} requires {name}={want}, got {w[name]}")
        elif label == "custom":
            if w.get("T") is None or w.get("k") is None:
                raise ConfigError("custom window needs T and k")
            T, k = int(w["T"]), int(w["k"])
        else:
            raise ConfigError(f"window.label must be long, short or custom, got {label!r}")
        if T < 1 or k < 1:
            raise ConfigError("window T and k must be >= 1")
        w["T"], w["k"] = T, k
        self.T, self.k = T, k
        self.window_label = {"long": f"Long({T}-{k})", "short": f"Short({T}-{k})"}.get(
            label, f"Custom({T}-{k})")

        s = r["split"]
        if not (s["train_frac"] > 0 and s["val_frac"] > 0 and s["train_frac"] + s["val_frac"] < 1):
            raise ConfigError("split fractions must be positive with sum < 1")
        if int(s["stride"]) < 1:
            raise ConfigError("split.stride must be >= 1")

        if r["model"]["head"] not in HEADS:
            raise ConfigError(f"model.head must be one of {HEADS}")
        if r["model"]["input_scaling"] not in INPUT_SCALINGS:
            raise ConfigError(f"model.input_scaling must be one of {INPUT_SCALINGS}")
        try:
            self.model_config()
            self.train_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

        e = r["eval"]
        if not 0 < e["top_frac"] <= 1:
            raise ConfigError("eval.top_frac must lie in (0, 1]")
        if not e["kld_epsilon"] > 0:
            raise ConfigError("eval.kld_epsilon must be positive")
        if not 0 < e["interval_level"] < 1:
            raise ConfigError("eval.interval_level must lie in (0, 1)")

        sw = r["severity_weights"]
        if set(sw) != set(SEVERITIES) or any(not float(v) >= 0 for v in sw.values()):
            raise ConfigError(f"severity_weights needs nonnegative values for {SEVERITIES}")
        a1, a2 = r["spillover"]["alpha1"], r["spillover"]["alpha2"]
        if not 0 <= a2 <= a1 <= 1:
            raise ConfigError("spillover requires 0 <= alpha2 <= alpha1 <= 1")

        syn = r["synthetic"]
        if int(syn["n_nodes"]) < 1:
            raise ConfigError("synthetic.n_nodes must be >= 1")
        if syn["graph_model"] not in ("grid", "random_geometric"):
            raise ConfigError("synthetic.graph_model must be grid or random_geometric")
        for seed_name in ("data_seed", "train_seed"):
            if not isinstance(r["seeds"][seed_name], int) or r["seeds"][seed_name] < 0:
                raise ConfigError(f"seeds.{seed_name} must be a nonnegative integer")

    def path(self, key, default_name=None):
        """Resolve ``paths.key`` against the config directory; fall back to
        ``output_dir / default_name``."""
        value = self.raw["paths"].get(key)
        if value is None:
            if default_name is None:
                return None
            return self.output_dir / default_name
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def output_dir(self):
        p = Path(self.raw["paths"]["output_dir"])
        return p if p.is_absolute() else self.base_dir / p

    def model_config(self, head=None):
        m = self.raw["model"]
        return ModelConfig(head=head or m["head"], T=self.T, k=self.k,
                           gru_hidden=int(m["gru_hidden"]), gat_hidden=int(m["gat_hidden"]),
                           gat_heads=int(m["gat_heads"]), gat_layers=int(m["gat_layers"]),
                           seed=self.raw["seeds"]["train_seed"],
                           input_scaling=m["input_scaling"])

    def train_config(self):
        t = self.raw["train"]
        return TrainConfig(lr=float(t["lr"]), epochs=int(t["epochs"]),
                           batch_size=int(t["batch_size"]), patience=int(t["patience"]),
                           seed=self.raw["seeds"]["train_seed"], y0_form=self.raw["loss"]["y0_form"],
                           clip_norm=float(t["clip_norm"]), record_time=bool(t["record_time"]))

    def resolved(self):
        out = copy.deepcopy(self.raw)
        for key in _PATH_KEYS:
            p = self.path(key)
            out["paths"][key] = None if p is None else str(p)
        out["paths"]["output_dir"] = str(self.output_dir)
        return out

    def write_resolved(self, directory):
        text = json.dumps(self.resolved(), indent=1, sort_keys=True) + "\n"
        (Path(directory) / "resolved_config.json").write_text(text, encoding="utf-8")

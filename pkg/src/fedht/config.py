"""Experiment configuration: YAML/JSON documents <-> validated dataclasses."""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import yaml

from .compressors import CompressorKind
from .schedules import ScheduleError, StepsizeSchedule


class ConfigError(ValueError):
    pass


_TOP_KEYS = {
    "seed", "n", "S", "E", "T", "eval_every", "batch_size", "full_participation",
    "model", "data", "compressor", "stepsize",
}
_MODEL_KEYS = {"kind", "hidden"}
_DATA_KEYS = {
    "blobs": {"kind", "samples", "features", "classes", "separation", "noise", "holdout",
              "labels_per_client", "scale", "seed"},
    "idx": {"kind", "train_images", "train_labels", "test_images", "test_labels", "classes",
            "labels_per_client", "limit", "seed"},
    "quadratic": {"kind", "dim", "mu", "L", "samples_per_client", "noise", "heterogeneity",
                  "x0_scale", "seed"},
}
_COMPRESSOR_KEYS = {
    "identity": {"kind"},
    "hard_threshold": {"kind", "lambda", "quantize"},
    "topk": {"kind", "k", "quantize"},
    "gamma_fedht": {"kind", "lambda0", "alpha", "quantize"},
}
_STEPSIZE_KEYS = {
    "inverse_proportional": {"kind", "beta", "b"},
    "exponential": {"kind", "gamma_init", "decay"},
    "constant": {"kind", "gamma_init"},
}


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "logistic"
    hidden: int = 64


@dataclass(frozen=True)
class DataConfig:
    kind: str = "blobs"
    # blobs
    samples: int = 2000
    features: int = 32
    classes: int = 10
    separation: float = 1.0
    noise: float = 1.0
    holdout: float = 0.2
    scale: str = "unit"
    labels_per_client: int | None = None
    # idx
    train_images: str | None = None
    train_labels: str | None = None
    test_images: str | None = None
    test_labels: str | None = None
    limit: int | None = None
    # quadratic
    dim: int = 10
    mu: float = 1.0
    L: float = 1.0
    samples_per_client: int = 100
    heterogeneity: float = 0.0
    x0_scale: float = 0.0
    seed: int | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    S: int
    E: int
    T: int
    model: ModelConfig
    data: DataConfig
    compressor: CompressorKind
    stepsize: StepsizeSchedule
    seed: int = 0
    eval_every: int = 1
    batch_size: int = 50
    full_participation: bool = False

    @property
    def rounds(self) -> int:
        return self.T // self.E

    @property
    def data_seed(self) -> int:
        return self.seed if self.data.seed is None else self.data.seed

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=seed)

    def with_compressor(self, comp: CompressorKind) -> "ExperimentConfig":
        return replace(self, compressor=comp)


def _reject_unknown(section: str, got: dict, allowed: set) -> None:
    extra = sorted(set(got) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(extra)}")


def compressor_from_dict(d: dict) -> CompressorKind:
    kind = d.get("kind", "identity")
    if kind not in _COMPRESSOR_KEYS:
        raise ConfigError(f"unknown compressor kind {kind!r}")
    _reject_unknown("compressor", d, _COMPRESSOR_KEYS[kind])
    q = bool(d.get("quantize", False))
    try:
        if kind == "hard_threshold":
            if "lambda" not in d:
                raise ConfigError("hard_threshold compressor needs 'lambda'")
            return CompressorKind("hard_threshold", float(d["lambda"]), q)
        if kind == "topk":
            if "k" not in d:
                raise ConfigError("topk compressor needs 'k'")
            return CompressorKind("topk", float(d["k"]), q)
        if kind == "gamma_fedht":
            if "lambda0" not in d:
                raise ConfigError("gamma_fedht compressor needs 'lambda0'")
            return CompressorKind(
                "gamma_fedht", quantize_after=q, lambda0=float(d["lambda0"]),
                alpha=float(d.get("alpha", 1.0)),
            )
        return CompressorKind("identity")
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def compressor_to_dict(c: CompressorKind) -> dict:
    if c.kind == "identity":
        return {"kind": "identity"}
    if c.kind == "hard_threshold":
        return {"kind": c.kind, "lambda": c.param, "quantize": c.quantize_after}
    if c.kind == "topk":
        return {"kind": c.kind, "k": c.param, "quantize": c.quantize_after}
    return {"kind": c.kind, "lambda0": c.lambda0, "alpha": c.alpha, "quantize": c.quantize_after}


def stepsize_from_dict(d: dict, T: int, E: int) -> StepsizeSchedule:
    kind = d.get("kind", "inverse_proportional")
    if kind not in _STEPSIZE_KEYS:
        raise ConfigError(f"unknown stepsize kind {kind!r}")
    _reject_unknown("stepsize", d, _STEPSIZE_KEYS[kind])
    kw = {k: float(v) for k, v in d.items() if k != "kind"}
    try:
        return StepsizeSchedule(kind=kind, T=T, E=E, **kw)
    except ScheduleError as exc:
        raise ConfigError(str(exc)) from None


def stepsize_to_dict(s: StepsizeSchedule) -> dict:
    if s.kind == "inverse_proportional":
        return {"kind": s.kind, "beta": s.beta, "b": s.b}
    if s.kind == "exponential":
        return {"kind": s.kind, "gamma_init": s.gamma_init, "decay": s.decay}
    return {"kind": s.kind, "gamma_init": s.gamma_init}


def from_dict(doc: dict, check_paths: bool = True) -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a mapping")
    _reject_unknown("config", doc, _TOP_KEYS)
    for key in ("n", "T"):
        if key not in doc:
            raise ConfigError(f"missing required key {key!r}")
    n = int(doc["n"])
    full = bool(doc.get("full_participation", False))
    S = n if full else int(doc.get("S", n))
    E = int(doc.get("E", 5))
    T = int(doc["T"])
    if n < 1:
        raise ConfigError("n must be >= 1")
    if S > n:
        raise ConfigError(f"S exceeds n ({S} > {n})")
    if S < 1:
        raise ConfigError("S must be >= 1")
    if E < 1:
        raise ConfigError("E must be >= 1")
    if T < E:
        raise ConfigError(f"T ({T}) must be at least E ({E})")
    if T % E:
        warnings.warn(f"T={T} is not a multiple of E={E}; truncating to {T - T % E}", stacklevel=2)
        T -= T % E
    eval_every = int(doc.get("eval_every", 1))
    batch_size = int(doc.get("batch_size", 50))
    if eval_every < 1 or batch_size < 1:
        raise ConfigError("eval_every and batch_size must be >= 1")

    mdoc = dict(doc.get("model", {}))
    _reject_unknown("model", mdoc, _MODEL_KEYS)
    model = ModelConfig(kind=mdoc.get("kind", "logistic"), hidden=int(mdoc.get("hidden", 64)))
    if model.kind not in ("logistic", "mlp", "quadratic"):
        raise ConfigError(f"unknown model kind {model.kind!r}")

    ddoc = dict(doc.get("data", {"kind": "quadratic" if model.kind == "quadratic" else "blobs"}))
    dkind = ddoc.get("kind", "blobs")
    if dkind not in _DATA_KEYS:
        raise ConfigError(f"unknown data kind {dkind!r}")
    _reject_unknown("data", ddoc, _DATA_KEYS[dkind])
    if (dkind == "quadratic") != (model.kind == "quadratic"):
        raise ConfigError("the quadratic model pairs only with quadratic data")
    data = DataConfig(**ddoc)
    _validate_data(data, n, check_paths)

    comp = compressor_from_dict(dict(doc.get("compressor", {"kind": "identity"})))
    step = stepsize_from_dict(dict(doc.get("stepsize", {})), T, E)
    return ExperimentConfig(
        n=n, S=S, E=E, T=T, model=model, data=data, compressor=comp, stepsize=step,
        seed=int(doc.get("seed", 0)), eval_every=eval_every, batch_size=batch_size,
        full_participation=full,
    )


def _validate_data(data: DataConfig, n: int, check_paths: bool) -> None:
    if data.kind == "idx":
        for key in ("train_images", "train_labels"):
            path = getattr(data, key)
            if not path:
                raise ConfigError(f"missing dataset path: data.{key}")
            if check_paths and not Path(path).exists():
                raise ConfigError(f"missing dataset path: {path}")
        if (data.test_images is None) != (data.test_labels is None):
            raise ConfigError("test_images and test_labels must be given together")
    if data.kind in ("blobs", "idx") and data.labels_per_client is not None:
        C = data.labels_per_client
        if C < 1 or C > data.classes:
            raise ConfigError(f"infeasible partition: labels_per_client={C} with {data.classes} classes")
        if n * C < data.classes:
            raise ConfigError(f"infeasible partition: {n} clients x {C} labels < {data.classes} classes")
    if data.kind == "blobs" and data.scale not in ("unit", "standard"):
        raise ConfigError(f"unknown blob scaling {data.scale!r}")
    if data.kind == "blobs" and not (0.0 <= data.holdout < 1.0):
        raise ConfigError("holdout must lie in [0, 1)")
    if data.kind == "quadratic" and not (0 < data.mu <= data.L):
        raise ConfigError("quadratic data needs 0 < mu <= L")


def to_dict(cfg: ExperimentConfig) -> dict:
    data = {"kind": cfg.data.kind}
    for key in sorted(_DATA_KEYS[cfg.data.kind] - {"kind"}):
        value = getattr(cfg.data, key)
        if value is not None:
            data[key] = value
    return {
        "seed": cfg.seed,
        "n": cfg.n,
        "S": cfg.S,
        "E": cfg.E,
        "T": cfg.T,
        "eval_every": cfg.eval_every,
        "batch_size": cfg.batch_size,
        "full_participation": cfg.full_participation,
        "model": {"kind": cfg.model.kind, "hidden": cfg.model.hidden},
        "data": data,
        "compressor": compressor_to_dict(cfg.compressor),
        "stepsize": stepsize_to_dict(cfg.stepsize),
    }


def parse_config(text: str, check_paths: bool = True) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed config document: {exc}") from None
    return from_dict(doc or {}, check_paths=check_paths)


def load_config(path, check_paths: bool = True) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), check_paths=check_paths)


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def canonical_json(cfg: ExperimentConfig) -> str:
    return json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()

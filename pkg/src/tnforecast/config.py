"""JSON experiment configuration with strict key checking."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .dynamics import LORENZ_DEFAULTS, ROSSLER_DEFAULTS, FlowSpec
from .forecast_metrics import LORENZ_LAMBDA1
from .model import DEFAULT_ACTIVATION, ParamMode
from .training import TrainConfig

FORMAT_VERSION = 1

# per-mode defaults used when the config leaves them null
DEFAULT_EPOCHS = {ParamMode.HOMOGENEOUS: 80, ParamMode.INHOMOGENEOUS: 60}
DEFAULT_THRESHOLD = {ParamMode.HOMOGENEOUS: 1.9, ParamMode.INHOMOGENEOUS: 2.1}
SWEEP_EPOCHS = 200


class ConfigError(ValueError):
    pass


def _strict(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed {sorted(known)}")
    return doc


def _params(doc, defaults: dict, where: str) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object")
    unknown = sorted(set(doc) - set(defaults))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    return {k: float(doc.get(k, v)) for k, v in defaults.items()}


@dataclass
class ModelConfig:
    d: int = 3
    D: int = 8
    mode: str = ParamMode.INHOMOGENEOUS.value
    seed: int = 0
    activation: str = DEFAULT_ACTIVATION


@dataclass
class TrainSection:
    learning_rate: float = 1e-3
    epochs: int | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    batch_size: int | None = 8


@dataclass
class EvalConfig:
    horizon_threshold: float | None = None
    lambda1: float = LORENZ_LAMBDA1
    forecast_steps: int = 100
    split: str = "val"


@dataclass
class ExperimentConfig:
    flow: FlowSpec = field(default_factory=FlowSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = "runs/default"
    format_version: int = FORMAT_VERSION

    @property
    def mode(self) -> ParamMode:
        return ParamMode(self.model.mode)

    def train_config(self) -> TrainConfig:
        t = self.train
        epochs = DEFAULT_EPOCHS[self.mode] if t.epochs is None else t.epochs
        return TrainConfig(learning_rate=t.learning_rate, epochs=epochs, beta1=t.beta1,
                           beta2=t.beta2, epsilon=t.epsilon, seed=t.seed, batch_size=t.batch_size)

    def threshold(self) -> float:
        th = self.eval.horizon_threshold
        return DEFAULT_THRESHOLD[self.mode] if th is None else th

    def to_dict(self) -> dict:
        f = self.flow
        return {
            "format_version": self.format_version,
            "flow": {
                "kind": f.kind,
                "lorenz": dict(f.lorenz),
                "rossler": dict(f.rossler),
                "h": f.h,
                "sample_every": f.sample_every,
                "n_samples": f.n_samples,
                "x0": list(f.x0),
                "transient_steps": f.transient_steps,
            },
            "model": asdict(self.model),
            "train": asdict(self.train),
            "eval": asdict(self.eval),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        _strict(cls, doc, "config")
        version = doc.get("format_version", FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ConfigError(f"unsupported format_version {version!r}")
        try:
            flow_doc = dict(_strict(FlowSpec, doc.get("flow", {}), "flow"))
            if "lorenz" in flow_doc:
                flow_doc["lorenz"] = _params(flow_doc["lorenz"], LORENZ_DEFAULTS, "flow.lorenz")
            if "rossler" in flow_doc:
                flow_doc["rossler"] = _params(flow_doc["rossler"], ROSSLER_DEFAULTS, "flow.rossler")
            if "x0" in flow_doc:
                flow_doc["x0"] = tuple(float(v) for v in flow_doc["x0"])
            cfg = cls(
                flow=FlowSpec(**flow_doc),
                model=ModelConfig(**_strict(ModelConfig, doc.get("model", {}), "model")),
                train=TrainSection(**_strict(TrainSection, doc.get("train", {}), "train")),
                eval=EvalConfig(**_strict(EvalConfig, doc.get("eval", {}), "eval")),
                output_dir=str(doc.get("output_dir", "runs/default")),
                format_version=version,
            )
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        try:
            ParamMode(self.model.mode)
        except ValueError:
            raise ConfigError(f"model.mode must be homogeneous or inhomogeneous, got {self.model.mode!r}") from None
        if self.model.d != 3:
            raise ConfigError("model.d must be 3 for three-dimensional flows")
        if self.model.D < 1:
            raise ConfigError("model.D must be >= 1")
        if self.eval.split not in ("train", "val", "test"):
            raise ConfigError("eval.split must be train, val or test")
        if self.eval.forecast_steps < 0:
            raise ConfigError("eval.forecast_steps must be >= 0")
        th = self.eval.horizon_threshold
        if th is not None and not th > 0:
            raise ConfigError("eval.horizon_threshold must be positive")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(f"train: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass
class SweepConfig:
    base: ExperimentConfig = field(default_factory=ExperimentConfig)
    bond_dimensions: list = field(default_factory=lambda: list(range(2, 9)))
    modes: list = field(default_factory=lambda: [m.value for m in ParamMode])
    epochs: int = SWEEP_EPOCHS
    seeds: list = field(default_factory=lambda: [0])

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "bond_dimensions": list(self.bond_dimensions),
                "modes": list(self.modes), "epochs": self.epochs, "seeds": list(self.seeds)}

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        _strict(cls, doc, "sweep")
        cfg = cls(
            base=ExperimentConfig.from_dict(doc.get("base", {})),
            bond_dimensions=[int(v) for v in doc.get("bond_dimensions", range(2, 9))],
            modes=[str(m) for m in doc.get("modes", [m.value for m in ParamMode])],
            epochs=int(doc.get("epochs", SWEEP_EPOCHS)),
            seeds=[int(s) for s in doc.get("seeds", [0])],
        )
        if not cfg.bond_dimensions or min(cfg.bond_dimensions) < 1:
            raise ConfigError("bond_dimensions must be a nonempty list of integers >= 1")
        if not cfg.seeds:
            raise ConfigError("seeds must be nonempty")
        for m in cfg.modes:
            try:
                ParamMode(m)
            except ValueError:
                raise ConfigError(f"unknown mode {m!r}") from None
        return cfg


def load_config(path) -> dict:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc

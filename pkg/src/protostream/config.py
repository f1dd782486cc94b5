"""Experiment configuration: dataclasses, defaults, TOML loading and
dry-run validation."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .autodiff import ContractViolation

OUTPUT_ROOT_ENV = "PROTOSTREAM_OUTPUT"

# fixed method-variant names and their ablation switches
METHOD_FLAGS: dict[str, dict[str, bool]] = {
    "online": dict(replay_on=False, contrastive_on=False, adapt_on=False),
    "lapnet": dict(replay_on=True, contrastive_on=True, adapt_on=True),
    "lapnet_no_contrastive": dict(replay_on=True, contrastive_on=False, adapt_on=True),
    "lapnet_no_replay_no_contrastive": dict(replay_on=False, contrastive_on=False,
                                            adapt_on=False),
}
METHODS = ["offline", *METHOD_FLAGS]


@dataclass
class PretrainConfig:
    epochs: int = 100
    batch_size: int = 200            # per-episode sample budget
    support_per_class: int = 5
    query_per_class: int = 15
    learning_rate: float = 1e-3

    def violations(self) -> list[str]:
        out = []
        if self.epochs < 0:
            out.append("pretrain.epochs must be >= 0")
        if self.batch_size < 1:
            out.append("pretrain.batch_size must be positive")
        if self.support_per_class < 1 or self.query_per_class < 1:
            out.append("pretrain support/query sizes must be positive")
        if self.learning_rate <= 0:
            out.append("pretrain.learning_rate must be positive")
        return out


@dataclass
class ContinualConfig:
    refresh_ratio: float = 0.5
    margin: float = 1.0
    replay_capacity: int = 6
    batch_size: int = 20
    learning_rate: float = 1e-3
    replay_on: bool = True
    contrastive_on: bool = True
    adapt_on: bool = True
    eval_stride: int = 1
    seed: int = 0
    optimizer: str = "adam"          # "adam" | "sgd" (plain descent)
    epochs_per_batch: int = 1

    def violations(self) -> list[str]:
        out = []
        if not 0.0 <= self.refresh_ratio <= 1.0:
            out.append(f"continual.refresh_ratio {self.refresh_ratio} outside [0, 1]")
        if self.margin <= 0:
            out.append("continual.margin must be positive")
        if self.replay_capacity < 1:
            out.append("continual.replay_capacity must be positive")
        if self.batch_size < 1:
            out.append("continual.batch_size must be positive")
        if self.learning_rate <= 0:
            out.append("continual.learning_rate must be positive")
        if self.eval_stride < 1:
            out.append("continual.eval_stride must be positive")
        if self.adapt_on and not self.replay_on:
            out.append("continual.adapt_on requires replay_on "
                       "(adaptation consumes the replay buffer)")
        if self.optimizer not in ("adam", "sgd"):
            out.append(f"continual.optimizer '{self.optimizer}' unknown")
        if self.epochs_per_batch < 1:
            out.append("continual.epochs_per_batch must be positive")
        return out

    def with_method(self, method: str) -> "ContinualConfig":
        if method not in METHOD_FLAGS:
            raise ContractViolation(f"unknown method variant '{method}'")
        return dataclasses.replace(self, **METHOD_FLAGS[method])


@dataclass
class SplitConfig:
    n_base: int = 5
    fraction: float = 0.5

    def violations(self) -> list[str]:
        out = []
        if self.n_base < 1:
            out.append("split.n_base must be positive")
        if not 0.0 < self.fraction < 1.0:
            out.append("split.fraction must lie in (0, 1)")
        return out


@dataclass
class EncoderSection:
    embedding_dim: int = 64
    hidden: tuple[int, ...] = (128,)
    arch: str = "dense"
    conv_filters: int = 32
    kernel_size: int = 5
    activation: str = "relu"

    def violations(self) -> list[str]:
        out = []
        if self.embedding_dim < 1:
            out.append("encoder.embedding_dim must be positive")
        if self.arch not in ("dense", "temporal_conv"):
            out.append(f"encoder.arch '{self.arch}' unknown")
        if self.activation not in ("relu", "tanh"):
            out.append(f"encoder.activation '{self.activation}' unknown")
        return out


@dataclass
class DatasetConfig:
    name: str = "synthetic"
    kind: str = "synthetic"          # "synthetic" | "csv"
    # synthetic fields
    n_classes: int = 8
    channels: int = 3
    timesteps: int = 8
    train_per_class: int = 100
    test_per_class: int = 50
    mean_scale: float = 1.0
    class_std: float = 1.0
    drift_per_sample: float = 0.0
    seed: int = 0
    # csv fields
    train_files: tuple[str, ...] = ()
    test_files: tuple[str, ...] = ()
    preset: str = ""                 # windowing preset name
    window_s: float = 0.0
    step_s: float = 0.0
    sample_rate_hz: float = 0.0      # 0 -> infer from timestamps
    normalize: bool = True

    def violations(self) -> list[str]:
        out = []
        if self.kind not in ("synthetic", "csv"):
            out.append(f"dataset.kind '{self.kind}' unknown")
        if self.kind == "synthetic":
            if self.n_classes < 2:
                out.append("dataset.n_classes must be >= 2")
            if self.channels < 1 or self.timesteps < 1:
                out.append("dataset channels/timesteps must be positive")
        if self.kind == "csv":
            if not self.train_files or not self.test_files:
                out.append("csv dataset needs train_files and test_files")
            if not self.preset and not (self.window_s > 0 and self.step_s > 0):
                out.append("csv dataset needs a windowing preset or window_s/step_s")
            from .ingest import WINDOW_PRESETS
            if self.preset and self.preset not in WINDOW_PRESETS:
                out.append(f"unknown windowing preset '{self.preset}'")
        return out


@dataclass
class ExperimentConfig:
    datasets: list[DatasetConfig] = field(default_factory=lambda: [DatasetConfig()])
    split: SplitConfig = field(default_factory=SplitConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    continual: ContinualConfig = field(default_factory=ContinualConfig)
    encoder: EncoderSection = field(default_factory=EncoderSection)
    methods: list[str] = field(default_factory=lambda: ["lapnet", "online"])
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])
    output_dir: str = ""
    workers: int = 1

    def resolved_output_dir(self) -> Path:
        if self.output_dir:
            return Path(self.output_dir)
        return Path(os.environ.get(OUTPUT_ROOT_ENV, "results"))

    def violations(self) -> list[str]:
        out = []
        if not self.datasets:
            out.append("at least one dataset must be configured")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            out.append("dataset names must be unique")
        for d in self.datasets:
            out.extend(d.violations())
        out.extend(self.split.violations())
        out.extend(self.pretrain.violations())
        out.extend(self.continual.violations())
        out.extend(self.encoder.violations())
        if not self.seeds:
            out.append("seeds list must be non-empty")
        for m in self.methods:
            if m not in METHODS:
                out.append(f"unknown method '{m}' (choose from {METHODS})")
        if self.workers < 1:
            out.append("workers must be positive")
        return out


def _build(cls, section: dict, path: str) -> object:
    """Construct a config dataclass from a TOML table, rejecting unknown keys."""
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ContractViolation(f"[{path}] unknown keys: {sorted(unknown)}")
    coerced = dict(section)
    for f in dataclasses.fields(cls):
        if f.name in coerced and isinstance(coerced[f.name], list) \
                and isinstance(f.default, tuple):
            coerced[f.name] = tuple(coerced[f.name])
    return cls(**coerced)


def load_config(path) -> ExperimentConfig:
    """Load an experiment description from a TOML file."""
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    kwargs = {}
    if "dataset" in raw and "datasets" in raw:
        raise ContractViolation("use either [dataset] or [[datasets]], not both")
    if "dataset" in raw:
        kwargs["datasets"] = [_build(DatasetConfig, raw.pop("dataset"), "dataset")]
    if "datasets" in raw:
        kwargs["datasets"] = [_build(DatasetConfig, d, "datasets") for d in raw.pop("datasets")]
    for key, cls in (("split", SplitConfig), ("pretrain", PretrainConfig),
                     ("continual", ContinualConfig), ("encoder", EncoderSection)):
        if key in raw:
            kwargs[key] = _build(cls, raw.pop(key), key)
    top = raw.pop("experiment", {})
    for key in ("methods", "seeds", "output_dir", "workers"):
        if key in top:
            kwargs[key] = top[key]
    unknown = set(raw) | (set(top) - {"methods", "seeds", "output_dir", "workers"})
    if unknown:
        raise ContractViolation(f"unknown config sections/keys: {sorted(unknown)}")
    return ExperimentConfig(**kwargs)

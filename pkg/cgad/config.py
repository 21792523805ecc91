"""
config.py
Pipeline configuration: one JSON file, one section per stage.
  • defaults live in the dataclasses below (the root config.json mirrors them)
  • `--set section.key=value` overrides win over the file
  • CGAD_OUTPUT_DIR (environment or .env) overrides the output directory
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from dotenv import load_dotenv

from .errors import ConfigError

ROOT        = Path(__file__).resolve().parent.parent
VERSION_FN  = ROOT / "version.txt"
OUTPUT_ENV  = "CGAD_OUTPUT_DIR"

ESTIMATORS   = ("histogram-plugin", "knn-kraskov")
CALIBRATIONS = ("validation", "test")


def read_core_version() -> str:
    if VERSION_FN.exists():
        return VERSION_FN.read_text().strip()
    return "unknown"


@dataclass(frozen=True)
class TEConfig:
    estimator: str = "histogram-plugin"
    bin_count: int = 8
    q: int = 1
    o: int = 1
    knn_k: int = 4
    chunk_window: int | None = None     # None -> min(2000, T - 1)
    sample_count: int = 5
    prune_threshold: float = 0.01
    rng_seed: int = 0
    workers: int = 1

    def validate(self) -> TEConfig:
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"te.estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.q < 1 or self.o < 1:
            raise ConfigError("te.q and te.o must be >= 1")
        if self.bin_count < 2:
            raise ConfigError("te.bin_count must be >= 2")
        if self.sample_count < 1:
            raise ConfigError("te.sample_count must be >= 1")
        if self.knn_k < 1:
            raise ConfigError("te.knn_k must be >= 1")
        if self.chunk_window is not None and self.chunk_window < self.q + self.o + 1:
            raise ConfigError(f"te.chunk_window must be >= q + o + 1 = {self.q + self.o + 1}")
        if self.prune_threshold < 0:
            raise ConfigError("te.prune_threshold must be >= 0")
        if self.workers < 1:
            raise ConfigError("te.workers must be >= 1")
        return self


@dataclass(frozen=True)
class ModelConfig:
    window_w: int = 15
    blocks: int = 3
    residual_channels: int = 16
    skip_channels: int = 32
    gcn_hidden: int = 32
    output_hidden: int = 64
    kernel_sizes: tuple[int, ...] = (2, 3, 5, 6)
    dilation: int = 1
    rng_seed: int = 0

    def validate(self) -> ModelConfig:
        if not self.kernel_sizes or min(self.kernel_sizes) < 1:
            raise ConfigError("model.kernel_sizes must be non-empty positive integers")
        if self.window_w < max(self.kernel_sizes):
            raise ConfigError(f"model.window_w must be >= largest kernel ({max(self.kernel_sizes)})")
        if self.blocks < 1:
            raise ConfigError("model.blocks must be >= 1")
        for name in ("residual_channels", "skip_channels", "gcn_hidden", "output_hidden"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if self.residual_channels % len(self.kernel_sizes):
            raise ConfigError("model.residual_channels must be divisible by the number of kernel sizes")
        if self.dilation != 1:
            raise ConfigError("model.dilation is fixed at 1")
        return self


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    val_fraction: float = 0.2
    shuffle: bool = True
    rng_seed: int = 0

    def validate(self) -> TrainConfig:
        if self.learning_rate <= 0:
            raise ConfigError("train.learning_rate must be > 0")
        if self.epochs < 1:
            raise ConfigError("train.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.optimizer != "adam":
            raise ConfigError(f"train.optimizer {self.optimizer!r} not supported (adam only)")
        if not 0 < self.val_fraction < 1:
            raise ConfigError("train.val_fraction must be in (0, 1)")
        return self


@dataclass(frozen=True)
class PotConfig:
    initial_quantile: float = 0.98
    risk_q: float = 1e-4
    min_peaks: int = 10
    calibration: str = "validation"
    mad_source: str = "test"

    def validate(self) -> PotConfig:
        if not 0 < self.initial_quantile < 1:
            raise ConfigError("pot.initial_quantile must be in (0, 1)")
        if self.risk_q <= 0:
            raise ConfigError("pot.risk_q must be > 0")
        if self.min_peaks < 1:
            raise ConfigError("pot.min_peaks must be >= 1")
        if self.calibration not in CALIBRATIONS:
            raise ConfigError(f"pot.calibration must be one of {CALIBRATIONS}")
        if self.mad_source not in CALIBRATIONS:
            raise ConfigError(f"pot.mad_source must be one of {CALIBRATIONS}")
        return self


@dataclass(frozen=True)
class ReportConfig:
    enabled: bool = True
    degree_histogram: bool = True
    scores: bool = True
    causal_events: bool = True
    event_block: int = 500
    top_events: int = 10
    top_k: int = 3
    event_pair: tuple[str, str] | None = None   # (source, target); None -> strongest edge

    def validate(self) -> ReportConfig:
        if self.event_block < 3:
            raise ConfigError("report.event_block must be >= 3")
        if self.top_events < 1 or self.top_k < 1:
            raise ConfigError("report.top_events and report.top_k must be >= 1")
        return self


@dataclass(frozen=True)
class SyntheticSpec:
    n: int = 10
    t: int = 5000
    coupling: tuple[tuple[int, int, int, float], ...] = ((0, 1, 1, 0.6),)
    noise_sigma: float = 0.1
    ar: float = 0.5
    anomaly_spec: tuple[tuple[int, int, int, float], ...] = ()
    train_fraction: float = 0.6
    rng_seed: int = 0

    @property
    def train_length(self) -> int:
        return int(self.t * self.train_fraction)

    def validate(self) -> SyntheticSpec:
        if self.n < 1 or self.t < 2:
            raise ConfigError("synth.n must be >= 1 and synth.t >= 2")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("synth.train_fraction must be in (0, 1)")
        if self.noise_sigma < 0:
            raise ConfigError("synth.noise_sigma must be >= 0")
        for src, dst, lag, _ in self.coupling:
            if not (0 <= src < self.n and 0 <= dst < self.n):
                raise ConfigError(f"synth coupling {src}->{dst} references an unknown node")
            if lag < 1:
                raise ConfigError(f"synth coupling {src}->{dst} has lag {lag} < 1")
        for start, end, node, _ in self.anomaly_spec:
            if not 0 <= start <= end < self.t:
                raise ConfigError(f"anomaly window ({start}, {end}) outside [0, {self.t})")
            if start < self.train_length:
                raise ConfigError(f"anomaly window ({start}, {end}) overlaps the training segment")
            if not 0 <= node < self.n:
                raise ConfigError(f"anomaly node {node} out of range")
        return self


SECTIONS = {
    "te":     TEConfig,
    "model":  ModelConfig,
    "train":  TrainConfig,
    "pot":    PotConfig,
    "report": ReportConfig,
    "synth":  SyntheticSpec,
}


@dataclass(frozen=True)
class PipelineConfig:
    train_csv: str | None = None
    test_csv: str | None = None
    test_labels: str | None = None
    output_dir: str = "runs/default"
    te: TEConfig = field(default_factory=TEConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    pot: PotConfig = field(default_factory=PotConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    @property
    def out(self) -> Path:
        return Path(self.output_dir)

    def validate(self) -> PipelineConfig:
        for name in SECTIONS:
            getattr(self, name).validate()
        return self

    def with_seed(self, seed: int) -> PipelineConfig:
        return replace(
            self,
            te=replace(self.te, rng_seed=seed),
            model=replace(self.model, rng_seed=seed),
            train=replace(self.train, rng_seed=seed),
            synth=replace(self.synth, rng_seed=seed),
        )


# ── parsing -----------------------------------------------------------------
def _tupled(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(cls, raw: dict, section: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {section!r} must be an object")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {section!r}: {', '.join(sorted(unknown))}")
    try:
        return cls(**{k: _tupled(v) for k, v in raw.items()})
    except TypeError as e:
        raise ConfigError(f"section {section!r}: {e}") from e


def from_dict(raw: dict) -> PipelineConfig:
    top = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - top
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    kwargs = {}
    for k, v in raw.items():
        kwargs[k] = _build(SECTIONS[k], v, k) if k in SECTIONS else v
    return PipelineConfig(**kwargs)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply `key=value` / `section.key=value` strings onto a raw config dict."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) == 1:
            raw[parts[0]] = _parse_value(value)
        elif len(parts) == 2 and parts[0] in SECTIONS:
            raw.setdefault(parts[0], {})[parts[1]] = _parse_value(value)
        else:
            raise ConfigError(f"override key {key!r} is not section.key")
    return raw


def load_config(path: Path | None = None, overrides: list[str] | None = None,
                seed: int | None = None) -> PipelineConfig:
    load_dotenv()
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as e:
            raise ConfigError(f"config file {path}: {e}") from e
    env_out = os.getenv(OUTPUT_ENV)
    if env_out:
        raw["output_dir"] = env_out
    apply_overrides(raw, overrides or [])
    cfg = from_dict(raw)
    if seed is not None:
        cfg = cfg.with_seed(seed)
    return cfg.validate()


def config_hash(obj: Any) -> str:
    if hasattr(obj, "__dataclass_fields__"):
        obj = asdict(obj)
    blob = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


PATH_FIELDS = ("train_csv", "test_csv", "test_labels", "output_dir")


def pipeline_hash(cfg: PipelineConfig) -> str:
    """config_hash of the method settings only; data paths and run directory excluded."""
    raw = asdict(cfg)
    for key in PATH_FIELDS:
        raw.pop(key)
    return config_hash(raw)

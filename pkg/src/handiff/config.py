"""Experiment configuration dataclasses and JSON config parsing."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    """Shared optimizer settings; the conditioning fields only apply to
    the generator."""

    epochs: int = 4
    batch_size: int = 16
    learning_rate: float = 1e-3
    grad_clip: float = 1.0
    cond_dropout: float = 0.1
    lambda_vlb: float = 1e-3

    def validate(self, where: str) -> None:
        if self.epochs < 1:
            raise ConfigError(f"{where}.epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError(f"{where}.batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigError(f"{where}.learning_rate must be > 0")
        if not 0.0 <= self.cond_dropout < 1.0:
            raise ConfigError(f"{where}.cond_dropout must be in [0, 1)")


@dataclass(frozen=True)
class ScheduleSettings:
    T: int = 200
    kind: str = "linear"
    beta_start: float = 1e-4
    beta_end: float = 0.02

    def validate(self) -> None:
        if self.T < 1:
            raise ConfigError("schedule.T must be >= 1")
        if not (0 < self.beta_start <= self.beta_end < 1):
            raise ConfigError("schedule betas must satisfy 0 < start <= end < 1")
        if self.kind != "linear":
            raise ConfigError(f"unsupported schedule.kind {self.kind!r}")


@dataclass(frozen=True)
class SamplerSettings:
    kind: str = "ddim"
    steps: int = 25

    def validate(self, T: int) -> None:
        if self.kind not in ("ddim", "ddpm"):
            raise ConfigError(f"sampler.kind must be 'ddim' or 'ddpm', got {self.kind!r}")
        if self.kind == "ddim" and not 1 <= self.steps <= T:
            raise ConfigError(f"sampler.steps must be in 1..{T}")


@dataclass(frozen=True)
class GuidanceSettings:
    gamma: float = 0.0
    eta: float = 0.0

    def validate(self) -> None:
        if self.gamma < 0 or self.eta < 0:
            raise ConfigError("guidance scales must be non-negative")


@dataclass(frozen=True)
class CorpusSettings:
    writers: int = 10
    words: int = 150
    unseen_words: int = 60
    train_writers_per_word: int = 2
    heldout_writers_per_word: int = 1
    lexicon_path: str | None = None  # defaults to the packaged word list

    def validate(self) -> None:
        if self.writers < 2:
            raise ConfigError("corpus.writers must be >= 2")
        if self.words < 1 or self.unseen_words < 0:
            raise ConfigError("corpus word counts must be positive")
        cover = self.train_writers_per_word + self.heldout_writers_per_word
        if self.train_writers_per_word < 1 or self.heldout_writers_per_word < 1:
            raise ConfigError("corpus writer coverage values must be >= 1")
        if cover > self.writers:
            raise ConfigError("corpus writer coverage exceeds the writer count")


@dataclass(frozen=True)
class SynthSettings:
    seen_per_word: int = 2
    unseen_per_word: int = 2
    interp_count: int = 40
    batch_size: int = 48

    def validate(self) -> None:
        if min(self.seen_per_word, self.unseen_per_word) < 0 or self.interp_count < 0:
            raise ConfigError("synth counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigError("synth.batch_size must be >= 1")


@dataclass(frozen=True)
class FilterSettings:
    tau: float = 0.7
    rounds: int = 3

    def validate(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"filter.tau must be in (0,1], got {self.tau}")
        if self.rounds < 1:
            raise ConfigError("filter.rounds must be >= 1")


@dataclass(frozen=True)
class ExperimentConfig:
    canvas_height: int = 32
    schedule: ScheduleSettings = field(default_factory=ScheduleSettings)
    sampler: SamplerSettings = field(default_factory=SamplerSettings)
    guidance: GuidanceSettings = field(default_factory=GuidanceSettings)
    corpus: CorpusSettings = field(default_factory=CorpusSettings)
    synth: SynthSettings = field(default_factory=SynthSettings)
    denoiser_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=6, batch_size=8))
    recognizer_train: TrainConfig = field(default_factory=lambda: TrainConfig(epochs=12, batch_size=32))
    filter: FilterSettings = field(default_factory=FilterSettings)
    seeds: tuple = (1, 2, 3, 4, 5)
    out_dir: str = "runs/experiment"
    workers: int = 1

    def validate(self) -> None:
        if self.canvas_height < 8 or self.canvas_height % 8 != 0:
            raise ConfigError("canvas_height must be a positive multiple of 8")
        self.schedule.validate()
        self.sampler.validate(self.schedule.T)
        self.guidance.validate()
        self.corpus.validate()
        self.synth.validate()
        self.denoiser_train.validate("denoiser_train")
        self.recognizer_train.validate("recognizer_train")
        self.filter.validate()
        if len(self.seeds) < 1:
            raise ConfigError("at least one seed is required")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def _build(cls, obj, where: str):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in obj.items():
        if key not in fields:
            raise ConfigError(f"unknown key {(where + '.' if where else '') + key!r}")
        ftype = fields[key].type
        sub = {
            "ScheduleSettings": ScheduleSettings,
            "SamplerSettings": SamplerSettings,
            "GuidanceSettings": GuidanceSettings,
            "CorpusSettings": CorpusSettings,
            "SynthSettings": SynthSettings,
            "FilterSettings": FilterSettings,
            "TrainConfig": TrainConfig,
        }.get(ftype if isinstance(ftype, str) else getattr(ftype, "__name__", ""))
        if sub is not None:
            kwargs[key] = _build(sub, value, (where + "." if where else "") + key)
        elif key == "seeds":
            if not isinstance(value, list) or not all(isinstance(s, int) for s in value):
                raise ConfigError("seeds must be a list of integers")
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = dataclasses.asdict(cfg)
    out["seeds"] = list(cfg.seeds)
    return out


def parse_config(path) -> ExperimentConfig:
    """Load, validate, and default-fill a JSON experiment config."""
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    cfg = _build(ExperimentConfig, obj, "")
    cfg.validate()
    return cfg


def echo_config(cfg: ExperimentConfig, out_dir) -> Path:
    """Write the effective (defaults resolved) config next to the outputs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "effective_config.json"
    path.write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path

"""Run configuration and its flat ``section.key = value`` text form.

Example file::

    # ETTh1 desk run
    data.path = "data/ETTh1.csv"
    data.ratios = [6, 2, 2]
    model.t_x = 512
    model.t_y = 96
    train.epochs = 30

Values are JSON literals; bare words are read as strings.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace


class ConfigError(ValueError):
    pass


RESIDUAL_MODES = ("residual", "original", "off")


@dataclass
class ModelConfig:
    t_x: int = 512
    t_y: int = 96
    v: int = 7
    t_c: int = 4
    l: int = 8
    v_c: int = 4
    # extension lengths; None means twice the original length of that mode
    t_e: int | None = None
    l_e: int | None = None
    v_e: int | None = None
    d: int = 64
    heads: int = 4
    tunnels: int = 0
    d_ff: int | None = None
    noise: bool = True
    noise_std: float = 1.0
    positional_encoding: bool = True
    residual_info: str = "residual"
    revin_affine: bool = True
    revin_eps: float = 1e-5
    repre_predictor: str = "temporal"
    mlp_hidden: int | None = None
    mlp_activations: int = 2
    approximate_gelu: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        self.validate()

    @property
    def t_ext(self):
        return self.t_e or 2 * self.t_x

    @property
    def l_ext(self):
        return self.l_e or 2

    @property
    def v_ext(self):
        return self.v_e or 2 * self.v

    def validate(self):
        for name in ("t_x", "t_y", "v", "t_c", "l", "v_c", "d", "heads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be >= 1")
        if not self.t_c <= self.t_x <= self.t_ext:
            raise ConfigError(f"need t_c <= t_x <= t_e, got {self.t_c}, {self.t_x}, {self.t_ext}")
        if self.v_c > self.v:
            raise ConfigError(f"v_c={self.v_c} exceeds v={self.v}")
        if self.d % self.heads:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.tunnels not in (0, 1, 2):
            raise ConfigError("model.tunnels must be 0, 1 or 2")
        if self.noise_std < 0:
            raise ConfigError("model.noise_std must be >= 0")
        if self.residual_info not in RESIDUAL_MODES:
            raise ConfigError(f"model.residual_info must be one of {RESIDUAL_MODES}")
        if self.repre_predictor not in ("temporal", "flat"):
            raise ConfigError("model.repre_predictor must be 'temporal' or 'flat'")
        if self.mlp_activations not in (1, 2):
            raise ConfigError("model.mlp_activations must be 1 or 2")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("model.dtype must be float32 or float64")


@dataclass
class JepaConfig:
    enabled: bool = True
    weight: float = 1.0
    momentum: float = 0.999
    chunk_beta: float = 0.9
    distance: str = "huber"
    # "predictor" compares Repre_Predictor(X3); "encoder" compares X3 itself
    pair: str = "predictor"

    def __post_init__(self):
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("jepa.momentum must lie in [0, 1]")
        if not 0.0 <= self.chunk_beta <= 1.0:
            raise ConfigError("jepa.chunk_beta must lie in [0, 1]")
        if self.weight < 0:
            raise ConfigError("jepa.weight must be >= 0")
        if self.distance not in ("huber", "l2"):
            raise ConfigError("jepa.distance must be 'huber' or 'l2'")
        if self.pair not in ("predictor", "encoder"):
            raise ConfigError("jepa.pair must be 'predictor' or 'encoder'")


@dataclass
class DataConfig:
    path: str = ""
    ratios: list = field(default_factory=lambda: [6, 2, 2])
    stride: int = 1
    train_stride: int = 1
    season: int = 24


@dataclass
class TrainConfig:
    lr: float = 5e-4
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 32
    epochs: int = 20
    patience: int = 3
    seed: int = 2021
    huber_delta: float = 1.0
    metrics_space: str = "standardized"
    max_batches_per_epoch: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("train.lr must be positive")
        if self.batch_size < 1:
            raise ConfigError("train.batch_size must be >= 1")
        if self.metrics_space not in ("standardized", "raw"):
            raise ConfigError("train.metrics_space must be 'standardized' or 'raw'")


@dataclass
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    jepa: JepaConfig = field(default_factory=JepaConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def to_flat(self) -> dict:
        flat = {}
        for section in ("model", "jepa", "data", "train"):
            for key, value in asdict(getattr(self, section)).items():
                flat[f"{section}.{key}"] = value
        return flat

    def to_text(self) -> str:
        return "".join(f"{k} = {json.dumps(v)}\n" for k, v in self.to_flat().items())

    @classmethod
    def from_flat(cls, flat: dict, base: "RunConfig | None" = None) -> "RunConfig":
        base = base or cls()
        sections = {s: {} for s in ("model", "jepa", "data", "train")}
        for key, value in flat.items():
            section, _, name = key.partition(".")
            if section not in sections:
                raise ConfigError(f"unknown config key {key!r}")
            known = {f.name for f in fields(getattr(base, section))}
            if name not in known:
                raise ConfigError(f"unknown config key {key!r}")
            sections[section][name] = value
        try:
            return cls(**{s: replace(getattr(base, s), **sections[s]) for s in sections})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_text(cls, text: str, base=None) -> "RunConfig":
        return cls.from_flat(parse_kv(text), base)

    def with_overrides(self, overrides: dict) -> "RunConfig":
        flat = self.to_flat()
        unknown = set(overrides) - set(flat)
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        return RunConfig.from_flat(overrides, self)


def parse_value(raw: str):
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        lowered = raw.lower()
        if lowered in ("true", "false"):
            return lowered == "true"
        if lowered in ("none", "null"):
            return None
        return raw


def parse_kv(text: str) -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        out[key.strip()] = parse_value(value)
    return out

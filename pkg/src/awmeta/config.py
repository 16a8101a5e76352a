"""Flat key=value experiment configuration.

The file format is one `key=value` per line with `#` comments, parseable
from any language. Command-line `--set key=value` pairs override file keys.
Unset optional values resolve to backend- and shot-dependent defaults at
build time, and the fully resolved mapping is echoed into every run
manifest so a run can be reproduced from its manifest alone.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, fields
from pathlib import Path

from .episodes import EpisodeSpec, MotherDataset
from .errors import ConfigError
from .maml import TRAIN_MODES, InnerConfig, MetaModel, OuterConfig
from .nn import MlpEncoder
from .protonet import ProtoModel
from .rng import make_rng
from .semantic import (
    MIXUP_LABELS_MODES,
    SemanticConfig,
    default_ema_rate,
    default_lambda,
)
from .synth import SynthSpec, load_features, make_gaussian_mother

BACKENDS = ("maml", "protonet")


@dataclass
class ExperimentConfig:
    backend: str = "maml"
    mode: str = "anyway"
    o: int = 12
    cardinality_pool: tuple[int, ...] = (3, 5, 7)
    fixed_n: int | None = None
    shots: int = 5
    queries: int = 15
    inner_lr: float = 0.5
    inner_steps: int = 5
    outer_lr: float = 0.001
    episodes: int = 2000
    meta_batch: int = 4
    lam: float | None = None  # file key "lambda"; None resolves by backend + shots
    semantic_enabled: bool = False
    mixup_enabled: bool = False
    mixup_labels: str = "shared"
    mixup_count: int | None = None
    semantic_to_encoder: bool = True
    ema_rate: float | None = None  # None resolves by shots
    data_train: str | None = None  # feature-file paths; unset means synthetic
    data_val: str | None = None
    data_test: str | None = None
    synth_d: int = 16
    synth_train_classes: int = 20
    synth_val_classes: int = 10
    synth_test_classes: int = 10
    synth_per_class: int = 50
    synth_mean_scale: float = 3.0
    synth_noise_sigma: float = 0.5
    hidden: tuple[int, ...] = (32,)
    feature_dim: int = 32
    eval_ns: tuple[int, ...] = (5, 10)
    eval_episodes: int = 600
    j_repeats: int = 1
    ensemble_method: str = "original"
    seed: int = 0
    val_interval: int = 25
    val_episodes: int = 40
    compare_seeds: int = 3

    # ---- typed file/flag parsing ------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        def bad(field_name: str, message: str):
            return ConfigError(f"{field_name}: {message}")

        if self.backend not in BACKENDS:
            raise bad("backend", f"must be one of {BACKENDS}")
        if self.mode not in TRAIN_MODES:
            raise bad("mode", f"must be one of {TRAIN_MODES}")
        if self.mode == "fixed":
            if self.fixed_n is None:
                raise bad("fixed_n", "required when mode=fixed")
            if self.backend == "maml" and self.o != self.fixed_n:
                raise bad("o", f"fixed mode uses a head exactly as wide as fixed_n={self.fixed_n}")
        if not self.cardinality_pool:
            raise bad("cardinality_pool", "must be non-empty")
        for name in ("shots", "queries", "meta_batch", "eval_episodes", "j_repeats", "compare_seeds"):
            if getattr(self, name) < 1:
                raise bad(name, "must be >= 1")
        for name in ("inner_lr", "outer_lr"):
            if getattr(self, name) < 0:
                raise bad(name, "must be >= 0")
        if self.inner_steps < 0:
            raise bad("inner_steps", "must be >= 0")
        if self.episodes < 0:
            raise bad("episodes", "must be >= 0")
        if self.lam is not None and self.lam < 0:
            raise bad("lambda", "must be >= 0")
        if self.ema_rate is not None and not 0 < self.ema_rate <= 1:
            raise bad("ema_rate", "must lie in (0, 1]")
        if self.mixup_labels not in MIXUP_LABELS_MODES:
            raise bad("mixup_labels", f"must be one of {MIXUP_LABELS_MODES}")
        if self.mixup_enabled:
            if not self.semantic_enabled:
                raise bad("mixup_enabled", "mixup needs semantic_enabled=true")
            if self.backend == "protonet":
                raise bad("mixup_enabled", "mixup is only defined for the maml backend")
        if self.backend == "maml":
            top = max(self.cardinality_pool) if self.fixed_n is None else self.fixed_n
            if max((top, *self.eval_ns)) > self.o:
                raise bad("o", f"must cover every trained and evaluated cardinality (max {max((top, *self.eval_ns))})")
            if self.mixup_enabled:
                extra = 1 if self.mixup_labels == "shared" else (self.mixup_count or self.shots)
                if top + extra > self.o:
                    raise bad("o", f"mixup adds {extra} label(s); head width {self.o} is too small")
        if self.ensemble_method not in ("original", "softmax", "max"):
            raise bad("ensemble_method", "must be one of ('original', 'softmax', 'max')")
        paths = (self.data_train, self.data_val, self.data_test)
        if any(p is not None for p in paths) and self.data_train is None:
            raise bad("data_train", "required when any data_* path is set")
        return self

    # ---- resolved values --------------------------------------------------------

    @property
    def resolved_lambda(self) -> float:
        if not self.semantic_enabled:
            return 0.0
        if self.lam is not None:
            return self.lam
        return default_lambda(self.backend, self.shots)

    @property
    def resolved_ema_rate(self) -> float:
        return self.ema_rate if self.ema_rate is not None else default_ema_rate(self.shots)

    # ---- builders ---------------------------------------------------------------

    def episode_spec(self) -> EpisodeSpec:
        if self.mode == "fixed":
            return EpisodeSpec(
                cardinality_pool=(self.fixed_n,),
                shots=self.shots,
                queries=self.queries,
                fixed_n=self.fixed_n,
            )
        return EpisodeSpec(cardinality_pool=self.cardinality_pool, shots=self.shots, queries=self.queries)

    def datasets(self) -> tuple[MotherDataset, MotherDataset, MotherDataset]:
        """Train/val/test mother datasets: loaded from files when paths are set,
        otherwise three synthetic pools with split-distinct seeds (their class
        identities are disjoint by construction)."""
        if self.data_train is not None:
            train = load_features(self.data_train)
            val = load_features(self.data_val) if self.data_val else train
            test = load_features(self.data_test) if self.data_test else train
            return train, val, test

        def split(split_name: str, m: int) -> MotherDataset:
            seed = zlib.crc32(f"{split_name}:{self.seed}".encode("utf-8"))
            return make_gaussian_mother(
                SynthSpec(
                    m=m,
                    d=self.synth_d,
                    per_class=self.synth_per_class,
                    mean_scale=self.synth_mean_scale,
                    noise_sigma=self.synth_noise_sigma,
                    seed=seed,
                )
            )

        return (
            split("train", self.synth_train_classes),
            split("val", self.synth_val_classes),
            split("test", self.synth_test_classes),
        )

    def semantic_config(self, class_count: int) -> SemanticConfig | None:
        if not self.semantic_enabled:
            return None
        return SemanticConfig(
            class_count=class_count,
            lam=self.resolved_lambda,
            mixup_enabled=self.mixup_enabled,
            mixup_count=self.mixup_count,
            mixup_labels=self.mixup_labels,
            to_encoder_in_outer=self.semantic_to_encoder,
        )

    def layer_dims(self, input_dim: int) -> list[int]:
        return [input_dim, *self.hidden, self.feature_dim]

    def build_model(self, input_dim: int, class_count: int):
        rng = make_rng(self.seed, "init")
        if self.backend == "protonet":
            return ProtoModel(MlpEncoder.init(self.layer_dims(input_dim), rng))
        semantic = class_count if self.semantic_enabled else None
        return MetaModel.init(self.layer_dims(input_dim), self.o, rng, semantic_classes=semantic)

    def inner_config(self) -> InnerConfig:
        return InnerConfig(steps=self.inner_steps, lr=self.inner_lr)

    def outer_config(self) -> OuterConfig:
        return OuterConfig(lr=self.outer_lr, episodes=self.episodes, meta_batch=self.meta_batch)

    def to_flat_dict(self) -> dict[str, str]:
        out: dict[str, str] = {}
        for f in fields(self):
            out[_FIELD_TO_KEY.get(f.name, f.name)] = _format_value(getattr(self, f.name))
        return out


_KEY_TO_FIELD = {"lambda": "lam"}
_FIELD_TO_KEY = {v: k for k, v in _KEY_TO_FIELD.items()}

_INT_TUPLE_FIELDS = {"cardinality_pool", "hidden", "eval_ns"}
_OPT_INT_FIELDS = {"fixed_n", "mixup_count"}
_OPT_FLOAT_FIELDS = {"lam", "ema_rate"}
_OPT_STR_FIELDS = {"data_train", "data_val", "data_test"}
_BOOL_FIELDS = {"semantic_enabled", "mixup_enabled", "semantic_to_encoder"}
_FLOAT_FIELDS = {"inner_lr", "outer_lr", "synth_mean_scale", "synth_noise_sigma"}
_STR_FIELDS = {"backend", "mode", "mixup_labels", "ensemble_method"}


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_bool(key: str, raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_value(field_name: str, key: str, raw: str):
    raw = raw.strip()
    try:
        if field_name in _INT_TUPLE_FIELDS:
            if not raw:
                raise ConfigError(f"{key}: expected a comma-separated integer list")
            return tuple(int(tok) for tok in raw.split(","))
        if field_name in _OPT_INT_FIELDS:
            return None if raw == "" else int(raw)
        if field_name in _OPT_FLOAT_FIELDS:
            return None if raw == "" else float(raw)
        if field_name in _OPT_STR_FIELDS:
            return None if raw == "" else raw
        if field_name in _BOOL_FIELDS:
            return _parse_bool(key, raw)
        if field_name in _FLOAT_FIELDS:
            return float(raw)
        if field_name in _STR_FIELDS:
            return raw
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from exc


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """key=value lines to a raw string mapping; `#` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(raw: dict[str, str]) -> ExperimentConfig:
    """Typed ExperimentConfig from raw strings; unknown keys are an error."""
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for key, raw_value in raw.items():
        field_name = _KEY_TO_FIELD.get(key, key)
        if field_name not in known:
            raise ConfigError(f"{key}: unknown configuration key")
        values[field_name] = _parse_value(field_name, key, raw_value)
    return ExperimentConfig(**values).validate()


def load_config(path=None, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    """Config file plus override pairs (overrides win), validated."""
    raw: dict[str, str] = {}
    if path is not None:
        raw.update(parse_config_text(Path(path).read_text(encoding="utf-8"), source=str(path)))
    if overrides:
        raw.update(overrides)
    return config_from_mapping(raw)

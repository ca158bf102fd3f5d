"""Experiment configuration: INI-style ``[section] key = value`` files plus CLI overrides."""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .clustering import DISTANCE_KINDS, FUZZY, MEMBERSHIP_KINDS, SOFTMAX, SQUARED_EUCLIDEAN
from .data import NORMALIZATIONS, UNIT_INTERVAL
from .errors import ConfigError
from .nn import DEFAULT_HIDDEN
from .training import (
    AE_KM,
    DKM_A,
    DKM_P,
    VARIANTS,
    AnnealingSchedule,
    TrainPlan,
    build_annealing_sequence,
    constant_schedule,
)

DATA_KINDS = ("csv", "idx", "termcounts", "blobs")
DEFAULT_LAMBDA_GRID = tuple(10.0 ** i for i in range(-4, 4))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).replace(",", " ").split())


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text):
    return None if text in (None, "", "none", "None") else int(text)


@dataclass
class ExperimentConfig:
    # [data]
    kind: str = "csv"
    path: str = ""
    labels_path: str = ""
    has_labels: bool = True
    normalization: str = UNIT_INTERVAL
    top_k: int = 2000
    subsample: int = 0
    blob_n_per_cluster: int = 100
    blob_dim: int = 10
    blob_spread: float = 10.0
    blob_sigma: float = 0.5
    blob_seed: int = 0
    # [model]
    variant: str = DKM_P
    n_clusters: int = 10
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    embedding_dim: int | None = None
    distance: str = SQUARED_EUCLIDEAN
    membership: str = SOFTMAX
    lam: float = 1.0
    # [train]
    batch_size: int = 256
    learning_rate: float = 0.001
    pretrain_epochs: int | None = None
    n_alpha_terms: int = 40
    alpha_start: float = 0.1
    epochs_per_alpha: int = 5
    alpha: float = 1000.0
    finetune_epochs: int = 100
    weight_decay: float = 0.0
    # [run]
    seeds: tuple[int, ...] = (0,)
    split_seed: int = 0
    output_dir: str = "runs"
    grid: tuple[float, ...] = field(default=DEFAULT_LAMBDA_GRID)

    def schedule(self) -> AnnealingSchedule:
        if self.variant == DKM_A:
            return build_annealing_sequence(self.n_alpha_terms, self.alpha_start, self.epochs_per_alpha)
        return constant_schedule(self.alpha, self.finetune_epochs)

    def resolved_pretrain_epochs(self) -> int:
        if self.pretrain_epochs is not None:
            return self.pretrain_epochs
        return 50 if self.variant in (DKM_P, AE_KM) else 0

    def plan(self, seed: int, lam: float | None = None) -> TrainPlan:
        try:
            schedule = self.schedule()
        except ValueError as exc:
            raise ConfigError("schedule", str(exc)) from None
        return TrainPlan(
            variant=self.variant, lam=self.lam if lam is None else lam, batch_size=self.batch_size,
            pretrain_epochs=self.resolved_pretrain_epochs(), schedule=schedule, seed=seed,
            weight_decay=self.weight_decay, learning_rate=self.learning_rate,
        ).validate()

    def validate(self) -> "ExperimentConfig":
        if self.kind not in DATA_KINDS:
            raise ConfigError("kind", f"must be one of {DATA_KINDS}")
        if self.kind != "blobs" and not self.path:
            raise ConfigError("path", "a data path is required")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError("normalization", f"must be one of {NORMALIZATIONS}")
        if self.variant not in VARIANTS:
            raise ConfigError("variant", f"must be one of {VARIANTS}")
        if self.n_clusters < 2:
            raise ConfigError("n_clusters", "must be at least 2")
        if self.distance not in DISTANCE_KINDS:
            raise ConfigError("distance", f"must be one of {DISTANCE_KINDS}")
        if self.membership not in MEMBERSHIP_KINDS:
            raise ConfigError("membership", f"must be one of {MEMBERSHIP_KINDS}")
        if not self.seeds:
            raise ConfigError("seeds", "at least one seed required")
        if any(h < 1 for h in self.hidden):
            raise ConfigError("hidden", "layer sizes must be positive")
        if self.embedding_dim is not None and self.embedding_dim < 1:
            raise ConfigError("embedding_dim", "must be positive")
        if self.subsample < 0:
            raise ConfigError("subsample", "must be nonnegative")
        for seed in self.seeds:
            plan = self.plan(seed)
        if self.membership == FUZZY and plan.variant != "km" and min(plan.schedule.terms) <= 1:
            raise ConfigError("membership", "fuzzy_cmeans needs every alpha > 1")
        return self


# (section, config key, attribute, parser)
FIELDS = [
    ("data", "kind", "kind", str),
    ("data", "path", "path", str),
    ("data", "labels_path", "labels_path", str),
    ("data", "has_labels", "has_labels", _bool),
    ("data", "normalization", "normalization", str),
    ("data", "top_k", "top_k", int),
    ("data", "subsample", "subsample", int),
    ("data", "blob_n_per_cluster", "blob_n_per_cluster", int),
    ("data", "blob_dim", "blob_dim", int),
    ("data", "blob_spread", "blob_spread", float),
    ("data", "blob_sigma", "blob_sigma", float),
    ("data", "blob_seed", "blob_seed", int),
    ("model", "variant", "variant", str),
    ("model", "n_clusters", "n_clusters", int),
    ("model", "hidden", "hidden", _ints),
    ("model", "embedding_dim", "embedding_dim", _opt_int),
    ("model", "distance", "distance", str),
    ("model", "membership", "membership", str),
    ("model", "lambda", "lam", float),
    ("train", "batch_size", "batch_size", int),
    ("train", "learning_rate", "learning_rate", float),
    ("train", "pretrain_epochs", "pretrain_epochs", _opt_int),
    ("train", "n_alpha_terms", "n_alpha_terms", int),
    ("train", "alpha_start", "alpha_start", float),
    ("train", "epochs_per_alpha", "epochs_per_alpha", int),
    ("train", "alpha", "alpha", float),
    ("train", "finetune_epochs", "finetune_epochs", int),
    ("train", "weight_decay", "weight_decay", float),
    ("run", "seeds", "seeds", _ints),
    ("run", "split_seed", "split_seed", int),
    ("run", "output_dir", "output_dir", str),
    ("run", "grid", "grid", _floats),
]

_ATTRS = {f.name for f in fields(ExperimentConfig)}
assert {a for _, _, a, _ in FIELDS} == _ATTRS


def apply_values(cfg: ExperimentConfig, values: dict[str, object]) -> ExperimentConfig:
    """Set fields from ``{config key: raw value}``, parsing each value."""
    by_key = {key: (attr, parse) for _, key, attr, parse in FIELDS}
    for key, raw in values.items():
        if key not in by_key:
            raise ConfigError(key, "unknown configuration key")
        attr, parse = by_key[key]
        try:
            setattr(cfg, attr, parse(raw) if isinstance(raw, str) else raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(key, f"invalid value {raw!r} ({exc})") from None
    return cfg


def load_config(path: str | Path | None = None, overrides: dict[str, object] | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is not None:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError("config", str(exc)) from None
        known = {(s, k) for s, k, _, _ in FIELDS}
        values = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if (section, key) not in known:
                    raise ConfigError(f"{section}.{key}", "unknown configuration key")
                values[key] = raw
        apply_values(cfg, values)
    if overrides:
        apply_values(cfg, {k: v for k, v in overrides.items() if v is not None})
    return cfg.validate()


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    section = None
    for sec, key, attr, _ in FIELDS:
        if sec != section:
            if section is not None:
                lines.append("")
            lines.append(f"[{sec}]")
            section = sec
        v = getattr(cfg, attr)
        if isinstance(v, tuple):
            v = ",".join(repr(x) if isinstance(x, float) else str(x) for x in v)
        elif v is None:
            v = "none"
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"

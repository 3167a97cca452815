"""Flat ``key = value`` experiment configuration files.

Keys are namespaced (``model.aspp_channels``, ``train.lr0``,
``aug.mcutout.a_max``).  Blank lines and ``#`` comments are ignored; unknown
keys and unparsable values are errors.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from ..augment import AugmentConfig
from ..datamodel import ModelConfig
from ..errors import ConfigError, ValidationError
from ..trainer import TrainConfig


def _bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple[int, ...]:
    return tuple(int(v) for v in s.replace("x", ",").split(",") if v.strip())


def _opt_int(s: str) -> int | None:
    return None if s.lower() in ("none", "") else int(s)


def _opt_size(s: str) -> tuple[int, int] | None:
    return None if s.lower() in ("none", "") else _ints(s)


# key -> (section, field, parser)
SCHEMA = {
    "model.num_classes": ("model", "num_classes", int),
    "model.stage_channels": ("model", "stage_channels", _ints),
    "model.aspp_channels": ("model", "aspp_channels", int),
    "model.aspp_dilations": ("model", "aspp_dilations", _ints),
    "model.ca_reduction": ("model", "ca_reduction", int),
    "model.input_size": ("model", "input_size", _ints),
    "model.backbone_kind": ("model", "backbone_kind", str),
    "model.use_dtm": ("model", "use_dtm", _bool),
    "model.use_srm": ("model", "use_srm", _bool),
    "train.lr0": ("train", "lr0", float),
    "train.momentum": ("train", "momentum", float),
    "train.weight_decay": ("train", "weight_decay", float),
    "train.epochs": ("train", "epochs", int),
    "train.batch_size": ("train", "batch_size", int),
    "train.decay_gamma": ("train", "decay_gamma", float),
    "train.seed": ("train", "seed", int),
    "train.mode": ("train", "mode", str),
    "train.variant": ("train", "variant", str),
    "train.unlabeled_frac": ("train", "unlabeled_frac", float),
    "train.max_steps": ("train", "max_steps", _opt_int),
    "aug.flip_prob": ("aug", "flip_prob", float),
    "aug.crop_prob": ("aug", "crop_prob", float),
    "aug.crop_size": ("aug", "crop_size", _opt_size),
    "aug.mcutout.prob": ("aug", "mcutout_prob", float),
    "aug.mcutout.a_min": ("aug", "area_min", float),
    "aug.mcutout.a_max": ("aug", "area_max", float),
    "aug.cutout.prob": ("aug", "cutout_prob", float),
    "aug.fill": ("aug", "fill", float),
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    aug: AugmentConfig = field(default_factory=AugmentConfig)


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    values: dict[str, dict] = {"model": {}, "train": {}, "aug": {}}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        section, name, parse = SCHEMA[key]
        try:
            values[section][name] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from None
    try:
        return ExperimentConfig(ModelConfig(**values["model"]), TrainConfig(**values["train"]),
                                AugmentConfig(**values["aug"]))
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))


def format_config(cfg: ExperimentConfig) -> str:
    """Serialise every key, so ``parse_config(format_config(c)) == c``."""
    sections = {"model": cfg.model, "train": cfg.train, "aug": cfg.aug}
    lines = []
    for key, (section, name, _) in SCHEMA.items():
        v = getattr(sections[section], name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{key} = {v}")
    return "\n".join(lines) + "\n"

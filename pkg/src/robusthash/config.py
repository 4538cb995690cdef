"""Flat key=value experiment configuration.

Config files are diff-able text: one `section.key = value` pair per line,
`#` comments, a mandatory seed, and a format version. Environment
variables prefixed ROBUSTHASH_ override file values (dots become double
underscores, e.g. ROBUSTHASH_ATTACK__EPSILON).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields

from .attack import AttackConfig
from .data import SynthSpec
from .defense import TrainConfig

CONFIG_VERSION = 1
ENV_PREFIX = "ROBUSTHASH_"


class ConfigError(ValueError):
    pass


@dataclass
class ModelSpec:
    hidden: tuple[int, ...] = (64,)
    bits: int = 16


@dataclass
class PretrainSpec:
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 0.03
    momentum: float = 0.9
    quantization_weight: float = 1e-4


@dataclass
class EvalSpec:
    top_k: int = 5000
    topn_grid: tuple[int, ...] = (1, 5, 10, 20, 50, 100)


@dataclass
class ExperimentConfig:
    seed: int
    dataset_path: str | None = None
    synth: SynthSpec = field(default_factory=SynthSpec)
    model: ModelSpec = field(default_factory=ModelSpec)
    pretrain: PretrainSpec = field(default_factory=PretrainSpec)
    attack: AttackConfig = field(default_factory=AttackConfig)
    defend: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalSpec = field(default_factory=EvalSpec)


_SECTIONS = {
    "synth": SynthSpec,
    "model": ModelSpec,
    "pretrain": PretrainSpec,
    "attack": AttackConfig,
    "defend": TrainConfig,
    "eval": EvalSpec,
}


def _parse_value(current, raw):
    raw = raw.strip()
    if isinstance(current, bool):
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        try:
            return float(raw)
        except ValueError:
            # AttackConfig.alpha admits the literal "scheduled"
            return raw
    if isinstance(current, tuple):
        return tuple(int(v) for v in raw.split(",") if v.strip())
    if isinstance(current, str) or current is None:
        return raw
    raise ConfigError(f"cannot parse value for type {type(current).__name__}")


def _apply(cfg: ExperimentConfig, key, value, origin):
    if key == "config_version":
        if int(value) != CONFIG_VERSION:
            raise ConfigError(f"{origin}: unsupported config version {value}")
        return
    if key == "seed":
        cfg.seed = int(value)
        return
    if key == "dataset.path":
        cfg.dataset_path = value.strip() or None
        return
    if "." not in key:
        raise ConfigError(f"{origin}: unknown key {key!r}")
    section, _, name = key.partition(".")
    if section not in _SECTIONS:
        raise ConfigError(f"{origin}: unknown section {section!r}")
    target = getattr(cfg, section if section != "eval" else "eval")
    if name == "alpha" and section == "attack":
        setattr(target, name, _parse_value(1.0, value))
        return
    if not any(f.name == name for f in fields(target)):
        raise ConfigError(f"{origin}: unknown key {key!r}")
    setattr(target, name, _parse_value(getattr(target, name), value))


def load_config(path) -> ExperimentConfig:
    cfg = ExperimentConfig(seed=0)
    saw_seed = False
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "seed":
                saw_seed = True
            _apply(cfg, key, value.strip(), f"{path}:{lineno}")
    for name, value in os.environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX):].lower().replace("__", ".")
            if key == "seed":
                saw_seed = True
            _apply(cfg, key, value, f"env {name}")
    if not saw_seed:
        raise ConfigError(f"{path}: seed is mandatory")
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    # re-run the dataclass validators on post-load values
    for section in ("synth", "attack", "defend"):
        obj = getattr(cfg, section)
        obj.__post_init__()
    if cfg.model.bits < 1 or any(h < 1 for h in cfg.model.hidden):
        raise ConfigError("model dims must be positive")
    if cfg.eval.top_k < 1:
        raise ConfigError("eval.top_k must be >= 1")


def dump_config(cfg: ExperimentConfig):
    """Canonical flat text rendering (also the hashing input)."""
    lines = [f"config_version = {CONFIG_VERSION}", f"seed = {cfg.seed}"]
    if cfg.dataset_path:
        lines.append(f"dataset.path = {cfg.dataset_path}")
    for section, _ in sorted(_SECTIONS.items()):
        obj = getattr(cfg, section)
        for f in fields(obj):
            value = getattr(obj, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{section}.{f.name} = {value}")
    return "\n".join(lines) + "\n"


def config_hash(cfg: ExperimentConfig):
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()


def save_config(cfg: ExperimentConfig, path):
    with open(path, "w") as fh:
        fh.write(dump_config(cfg))

"""Run configuration: one flat dataclass, loadable from an INI-style file
with [data]/[model]/[train]/[eval] sections and overridable from the CLI.

Every key is validated on load and unknown sections or keys are rejected
outright — a typo in a config file should fail the run, not silently train
with a default.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigError


@dataclass
class Config:
    # data
    source: str = "synth"  # "synth" or "files"
    train_files: tuple[str, ...] = ()
    test_files: tuple[str, ...] = ()
    n_scenes: int = 8
    n_test_scenes: int = 2
    n_classes: int = 5
    points_per_class: int = 400
    separation: float = 1.2
    noise: float = 0.18
    class_noise_scale: tuple[float, ...] = ()  # per-class noise multipliers; empty = all 1
    synth_seed: int = 7
    voxel_size: float = 0.04
    neighbor_k: int = 0
    shift_range: float = 0.0
    contrast_range: float = 0.0
    jitter_sigma: float = 0.0
    # model
    hidden_dims: tuple[int, ...] = (32, 32)
    n_features: int = 16
    n_primitives: int = 300
    n_categories: int = 0  # 0 = take the category count from the data
    logit_scale: float = 10.0  # inverse temperature of the cosine classifier head
    # train
    epochs: int = 200
    batch_scenes: int = 1
    lr: float = 1e-2
    lr_decay: float = 0.1  # multiplier applied when the lambda schedule switches
    sgd_momentum: float = 0.9
    tau: float = 0.7
    ema_momentum: float = 0.99
    temperature: float = 0.1
    lambda_structure: float = 1.0
    lambda_reasoning: float = 1.0
    schedule_fraction: float = 0.5
    recluster_interval: int = 5
    kmeans_restarts: int = 10
    reinit_banks_on_recluster: bool = False
    structure_per_point: bool = False
    stop_gradient_consistent: bool = False
    seed: int = 0
    checkpoint_interval: int = 0  # 0 = final checkpoint only
    # eval
    per_scene_alignment: bool = False

    def validate(self) -> "Config":
        if self.source not in ("synth", "files"):
            raise ConfigError(f"data.source must be 'synth' or 'files', got {self.source!r}")
        if self.source == "files" and not self.train_files:
            raise ConfigError("data.source = files requires data.train_files")
        if self.class_noise_scale:
            if len(self.class_noise_scale) != self.n_classes:
                raise ConfigError(
                    "data.class_noise_scale needs one entry per class "
                    f"({self.n_classes}), got {len(self.class_noise_scale)}"
                )
            if any(s <= 0 for s in self.class_noise_scale):
                raise ConfigError("data.class_noise_scale entries must be positive")
        positive_ints = (
            "n_scenes", "n_classes", "points_per_class", "n_features",
            "epochs", "batch_scenes", "recluster_interval", "kmeans_restarts",
        )
        for name in positive_ints:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("n_test_scenes", "neighbor_k", "checkpoint_interval", "n_categories"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        for name in ("separation", "noise", "shift_range", "contrast_range",
                     "jitter_sigma", "lambda_structure", "lambda_reasoning", "lr_decay"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.n_primitives < 2:
            raise ConfigError("n_primitives must be >= 2")
        if self.voxel_size <= 0 or self.lr <= 0 or self.temperature <= 0:
            raise ConfigError("voxel_size, lr, and temperature must be positive")
        if self.logit_scale <= 0:
            raise ConfigError(f"logit_scale must be positive, got {self.logit_scale}")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must lie in (0, 1), got {self.tau}")
        if not 0.0 <= self.ema_momentum < 1.0:
            raise ConfigError(f"ema_momentum must lie in [0, 1), got {self.ema_momentum}")
        if not 0.0 <= self.sgd_momentum < 1.0:
            raise ConfigError(f"sgd_momentum must lie in [0, 1), got {self.sgd_momentum}")
        if not 0.0 <= self.schedule_fraction <= 1.0:
            raise ConfigError("schedule_fraction must lie in [0, 1]")
        if any(d < 1 for d in self.hidden_dims):
            raise ConfigError("hidden_dims entries must be >= 1")
        return self


SECTIONS: dict[str, tuple[str, ...]] = {
    "data": (
        "source", "train_files", "test_files", "n_scenes", "n_test_scenes",
        "n_classes", "points_per_class", "separation", "noise", "class_noise_scale",
        "synth_seed", "voxel_size", "neighbor_k", "shift_range", "contrast_range",
        "jitter_sigma",
    ),
    "model": ("hidden_dims", "n_features", "n_primitives", "n_categories", "logit_scale"),
    "train": (
        "epochs", "batch_scenes", "lr", "lr_decay", "sgd_momentum", "tau", "ema_momentum",
        "temperature", "lambda_structure", "lambda_reasoning", "schedule_fraction",
        "recluster_interval", "kmeans_restarts", "reinit_banks_on_recluster",
        "structure_per_point", "stop_gradient_consistent", "seed", "checkpoint_interval",
    ),
    "eval": ("per_scene_alignment",),
}

_FIELD_SECTION = {key: section for section, keys in SECTIONS.items() for key in keys}
_BOOL_WORDS = {"true": True, "yes": True, "on": True, "1": True,
               "false": False, "no": False, "off": False, "0": False}


def _convert(key: str, raw: str):
    default = getattr(Config(), key)
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError(f"expected a boolean, got {raw!r}")
            return _BOOL_WORDS[raw.lower()]
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [t for t in raw.replace(",", " ").split() if t]
            if key == "hidden_dims":
                return tuple(int(t) for t in items)
            if key == "class_noise_scale":
                return tuple(float(t) for t in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {_FIELD_SECTION[key]}.{key}: {exc}") from None


def _set_key(cfg: Config, section: str, key: str, raw: str) -> None:
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in SECTIONS[section]:
        raise ConfigError(f"unknown key {key!r} in section [{section}]")
    setattr(cfg, key, _convert(key, raw))


def apply_overrides(cfg: Config, overrides: list[str]) -> Config:
    """Apply `section.key=value` strings in order, then re-validate."""
    for item in overrides:
        head, sep, value = item.partition("=")
        section, dot, key = head.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        _set_key(cfg, section.strip(), key.strip(), value)
    return cfg.validate()


def load_config(path, overrides: list[str] | None = None) -> Config:
    """Parse an INI-style config file, apply overrides, validate."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read(p)
    except configparser.Error as exc:
        raise ConfigError(f"{p}: {exc}") from None
    cfg = Config()
    for section in parser.sections():
        for key, raw in parser.items(section):
            _set_key(cfg, section, key, raw)
    return apply_overrides(cfg, overrides or [])


def config_text(cfg: Config) -> str:
    """Render a config as a loadable file, section by section."""
    lines = []
    for section, keys in SECTIONS.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = getattr(cfg, key)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


# the section table and the dataclass must cover exactly the same keys
assert {f.name for f in fields(Config)} == set(_FIELD_SECTION)

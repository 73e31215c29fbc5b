"""Pipeline configuration: one TOML or JSON file, env overrides for paths."""
from __future__ import annotations

import json
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .codec import SCALE_RANGE
from .contact import DEFAULT_EPSILON, DEFAULT_PENETRATION_THRESHOLD
from .conversation import KINDS, LEVELS
from .kinematics import BUNDLED_HANDS

PATH_FIELDS = ("meshes_dir", "labels_dir", "grasps", "objects", "output_dir", "templates")
ENV_PREFIX = "GRASPKIT_"


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    output_dir: Path
    meshes_dir: Path | None = None
    labels_dir: Path | None = None
    grasps: Path | None = None
    objects: Path | None = None
    templates: Path | None = None
    hands: list[str] = field(default_factory=lambda: list(BUNDLED_HANDS))
    epsilon: float = DEFAULT_EPSILON
    penetration_threshold: float = DEFAULT_PENETRATION_THRESHOLD
    bins: int = 384
    dediscretize_mode: str = "center"
    per_pattern: dict[str, int] = field(default_factory=lambda: {"dexterous": 1, "gripper": 3})
    seed: int = 0
    workers: int = 1
    kinds: list[str] = field(default_factory=lambda: list(KINDS))
    levels: list[str] = field(default_factory=lambda: list(LEVELS))
    variants: list[int] | None = None
    scale_range: list[float] = field(default_factory=lambda: list(SCALE_RANGE))
    pose_slack: float = 0.0
    max_failure_ratio: float = 0.1
    base_dir: Path = field(default=Path("."), repr=False)

    def validate(self) -> "PipelineConfig":
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0")
        if not self.penetration_threshold > 0:
            raise ConfigError("penetration_threshold must be > 0")
        if not 1 <= self.bins <= 512:
            raise ConfigError("bins must be within [1, 512]")
        if self.dediscretize_mode not in ("center", "paper"):
            raise ConfigError("dediscretize_mode must be 'center' or 'paper'")
        if any(int(v) < 1 for v in self.per_pattern.values()):
            raise ConfigError("per_pattern counts must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        bad = set(self.kinds) - set(KINDS)
        if bad:
            raise ConfigError(f"unknown dialogue kinds {sorted(bad)}")
        bad = set(self.levels) - set(LEVELS)
        if bad:
            raise ConfigError(f"unknown instruction levels {sorted(bad)}")
        if self.variants is not None:
            lo, hi = self.variants
            if not 1 <= lo <= hi:
                raise ConfigError("variants must be [lo, hi] with 1 <= lo <= hi")
        lo, hi = self.scale_range
        if not 0 < lo < hi:
            raise ConfigError("scale_range must satisfy 0 < lo < hi")
        if self.pose_slack < 0:
            raise ConfigError("pose_slack must be >= 0")
        for name in ("meshes_dir", "labels_dir", "grasps", "objects", "templates"):
            p = getattr(self, name)
            if p is not None and not p.exists():
                raise ConfigError(f"{name}: path does not exist: {p}")
        return self

    def require(self, *names: str) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ConfigError(f"config field {name!r} is required for this command")

    def hand_sources(self) -> list[str]:
        """Hand entries resolved to bundled names or absolute spec paths."""
        out = []
        for entry in self.hands:
            if entry in BUNDLED_HANDS:
                out.append(entry)
            else:
                p = Path(entry)
                out.append(str(p if p.is_absolute() else (self.base_dir / p).resolve()))
        return out


def config_from_dict(doc: dict, base_dir=".", env=None) -> PipelineConfig:
    env = os.environ if env is None else env
    base = Path(base_dir)
    known = {f.name for f in fields(PipelineConfig)} - {"base_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config fields {sorted(unknown)}")
    values = dict(doc)
    for name in PATH_FIELDS:
        override = env.get(ENV_PREFIX + name.upper())
        if override:
            values[name] = override
        if values.get(name) is not None:
            p = Path(values[name])
            values[name] = p if p.is_absolute() else (base / p).resolve()
    if "output_dir" not in values:
        raise ConfigError("config needs an output_dir")
    try:
        cfg = PipelineConfig(base_dir=base.resolve(), **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path, env=None, **overrides) -> PipelineConfig:
    path = Path(path)
    raw = path.read_bytes()
    try:
        if path.suffix.lower() == ".toml":
            doc = tomllib.loads(raw.decode("utf-8"))
        else:
            doc = json.loads(raw)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(doc, path.parent, env)

"""Run configuration: dataclass defaults, plain key=value config files, digests.

Precedence is built-in defaults < config file < command-line flags.
Unknown config-file keys are rejected by name.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

from .edge_ops import DETECTOR_KINDS
from .models import STUDENT_KINDS, TEACHER_KINDS


class ConfigError(ValueError):
    """Raised for invalid or contradictory configuration."""


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 16
    image_size: int = 352
    detector: str = "sobel"
    canny_low: float = 0.1
    canny_high: float = 0.2
    use_sam_guiding: bool = True
    use_eg: bool = True
    seed: int = 0
    teacher: str = "stub"
    student: str = "tiny"
    d: int = 256
    share_eg: bool = False
    hflip: bool = False
    vflip: bool = False
    teacher_seed: int = 1000
    student_channels: tuple = (64, 128, 320, 512)
    decoder_width: int = 64
    decoder_heads: int = 2
    teacher_weights: str | None = None
    student_weights: str | None = None

    def validate(self):
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"batch_size must be >= 2 (batch-norm training), got {self.batch_size}")
        if self.image_size < 32:
            raise ConfigError(f"image_size must be >= 32, got {self.image_size}")
        if self.detector not in DETECTOR_KINDS:
            raise ConfigError(f"detector must be one of {DETECTOR_KINDS}, got {self.detector!r}")
        if not (0.0 <= self.canny_low < self.canny_high <= 1.0):
            raise ConfigError(
                f"require 0 <= canny_low < canny_high <= 1, got {self.canny_low}/{self.canny_high}"
            )
        if self.use_eg and not self.use_sam_guiding:
            raise ConfigError("use_eg requires use_sam_guiding (edge guidance shapes the guide loss)")
        if self.teacher not in TEACHER_KINDS:
            raise ConfigError(f"teacher must be one of {TEACHER_KINDS}, got {self.teacher!r}")
        if self.student not in STUDENT_KINDS:
            raise ConfigError(f"student must be one of {STUDENT_KINDS}, got {self.student!r}")
        if self.d < 1:
            raise ConfigError(f"embedding dim d must be >= 1, got {self.d}")
        if len(self.student_channels) != 4 or any(int(c) < 1 for c in self.student_channels):
            raise ConfigError(f"student_channels needs four positive ints, got {self.student_channels}")
        if not 1 <= self.decoder_heads <= 4:
            raise ConfigError(f"decoder_heads must be in 1..4, got {self.decoder_heads}")
        if self.decoder_width < 1:
            raise ConfigError(f"decoder_width must be >= 1, got {self.decoder_width}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["student_channels"] = list(self.student_channels)
        return d

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        if "student_channels" in values:
            values = dict(values)
            values["student_channels"] = tuple(int(c) for c in values["student_channels"])
        return cls(**values)


def config_digest(config: TrainConfig) -> str:
    payload = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


_BOOL_WORDS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}

# config-file keys that name dataset roots rather than TrainConfig fields
DATA_KEYS = ("train_data", "val_data", "test_data")


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if target_type is bool:
        if raw.lower() not in _BOOL_WORDS:
            raise ConfigError(f"config key {name}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[raw.lower()]
    if target_type is int:
        return int(raw)
    if target_type is float:
        return float(raw)
    if name == "student_channels":
        return tuple(int(part) for part in raw.split(","))
    if raw.lower() == "none":
        return None
    return raw


@dataclass
class ConfigFile:
    overrides: dict
    train_data: list
    val_data: str | None
    test_data: dict


def parse_config_file(path: str) -> ConfigFile:
    """Parse a plain `key = value` document; unknown keys are rejected."""
    field_types = {f.name: f.type for f in fields(TrainConfig)}
    type_map = {
        "lr": float, "weight_decay": float, "canny_low": float, "canny_high": float,
        "epochs": int, "batch_size": int, "image_size": int, "seed": int,
        "teacher_seed": int, "d": int, "decoder_width": int, "decoder_heads": int,
        "use_sam_guiding": bool, "use_eg": bool, "share_eg": bool,
        "hflip": bool, "vflip": bool,
    }
    overrides: dict = {}
    train_data: list = []
    val_data = None
    test_data: dict = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc

    for lineno, line in enumerate(lines, start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {stripped!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key == "train_data":
            train_data.append(raw)
        elif key == "val_data":
            val_data = raw
        elif key == "test_data":
            if "=" in raw:
                name, root = (p.strip() for p in raw.split("=", 1))
            else:
                name, root = raw.rstrip("/").rsplit("/", 1)[-1], raw
            test_data[name] = root
        elif key in field_types:
            overrides[key] = _coerce(key, raw, type_map.get(key, str))
        else:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
    return ConfigFile(overrides=overrides, train_data=train_data, val_data=val_data, test_data=test_data)

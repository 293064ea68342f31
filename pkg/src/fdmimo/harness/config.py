from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from ..channel import SystemConfig
from ..pilots import SchemeKind

ESTIMATORS = ("LS", "MMSE", "CNN0", "CNN1", "CNN2", "CNN10")
TARGETS = ("SI", "UE")
THREADS_ENV = "FDMIMO_THREADS"


def cnn_depth(method: str) -> int | None:
    return int(method[3:]) if method.startswith("CNN") else None


@dataclass(frozen=True)
class TrainingConfig:
    """Inline training settings used when an NN method has no model file."""

    size: int = 50_000
    max_epochs: int = 200
    batch_size: int = 512
    lr: float = 1e-3
    patience: int = 10
    hidden_channels: int = 64


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = SystemConfig()
    scheme: str = "shared_nt"
    estimators: tuple = ("LS", "MMSE")
    targets: tuple = TARGETS
    snr_si_grid_db: tuple = (0.0,)
    snr_ue_grid_db: tuple = (0.0,)
    theta_as_grid_deg: tuple = (60.0,)
    kappa_grid_db: tuple = (40.0,)
    # None stands for an unquantized receiver
    bits: tuple = (None,)
    trials: int = 1000
    cancellation: tuple = (True,)
    seed: int = 0
    cov_realizations: int = 1000
    noise: bool = True
    models: dict = field(default_factory=dict)
    training: TrainingConfig = TrainingConfig()

    def __post_init__(self):
        for name in ("estimators", "targets", "snr_si_grid_db", "snr_ue_grid_db",
                     "theta_as_grid_deg", "kappa_grid_db", "bits", "cancellation"):
            value = getattr(self, name)
            if isinstance(value, (str, int, float, bool)) or value is None:
                value = (value,)
            value = tuple(value)
            if not value:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "estimators", tuple(e.upper() for e in self.estimators))
        object.__setattr__(self, "targets", tuple(t.upper() for t in self.targets))
        object.__setattr__(self, "bits", tuple(_bits(b) for b in self.bits))
        object.__setattr__(self, "cancellation", tuple(_onoff(c) for c in self.cancellation))
        for grid in ("snr_si_grid_db", "snr_ue_grid_db", "theta_as_grid_deg", "kappa_grid_db"):
            object.__setattr__(self, grid, tuple(float(v) for v in getattr(self, grid)))
        object.__setattr__(self, "scheme", SchemeKind.parse(self.scheme).value)
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown estimators {bad}; choose from {ESTIMATORS}")
        bad = [t for t in self.targets if t not in TARGETS]
        if bad:
            raise ValueError(f"unknown targets {bad}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["bits"] = ["inf" if b is None else b for b in self.bits]
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _bits(b):
    if b is None or (isinstance(b, str) and b.lower() in ("inf", "none", "")):
        return None
    if isinstance(b, float) and math.isinf(b):
        return None
    b = int(b)
    if b not in (1, 2, 3, 4):
        raise ValueError(f"quantizer resolution {b} not in 1..4")
    return b


def _onoff(c) -> bool:
    if isinstance(c, str):
        if c.lower() not in ("on", "off", "true", "false"):
            raise ValueError(f"cancellation must be on/off, got {c}")
        return c.lower() in ("on", "true")
    return bool(c)


def config_from_dict(d: dict) -> ExperimentConfig:
    d = dict(d)
    unknown = set(d) - {f.name for f in dataclasses.fields(ExperimentConfig)}
    if unknown:
        raise ValueError(f"unknown config keys {sorted(unknown)}")
    if "system" in d and not isinstance(d["system"], SystemConfig):
        d["system"] = SystemConfig(**(d["system"] or {}))
    if "training" in d and not isinstance(d["training"], TrainingConfig):
        d["training"] = TrainingConfig(**(d["training"] or {}))
    return ExperimentConfig(**d)


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML document; ``overrides`` (e.g. from CLI flags) win over file values.

    Override keys may use ``system.<field>`` to reach into the system block.
    """
    doc = {}
    if path is not None:
        doc = yaml.safe_load(Path(path).read_text()) or {}
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("system."):
            doc.setdefault("system", {})[key.split(".", 1)[1]] = value
        else:
            doc[key] = value
    return config_from_dict(doc)


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1

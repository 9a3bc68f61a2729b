"""Experiment configuration: presets, JSON (de)serialization, validation.

Two presets ship: ``paper`` carries the full-scale scenario constants (every
link/geometry constant appears exactly once, here), and ``desk`` shrinks the
arrays and the training schedule so the whole study suite runs on one core in
minutes.  Configs round-trip exactly through JSON (parse -> serialize ->
parse is the identity).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .geometry import SystemGeometry
from .ppo import TrainConfig

__all__ = [
    "ExperimentConfig",
    "SWEEP_AXES",
    "paper_preset",
    "desk_preset",
    "preset",
    "load_config",
    "save_config",
]

SWEEP_AXES = ("none", "distance", "power_dbm", "rician_db")


@dataclass
class ExperimentConfig:
    scenario: str = "scsi_joint"
    geometry: SystemGeometry = field(default_factory=SystemGeometry)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep_axis: str = "none"
    sweep_values: tuple[float, ...] = ()
    quantization_bits: tuple[int, ...] = (2, 3)
    seeds: tuple[int, ...] = (1, 2, 3)
    output_dir: str = "out"
    eval_episodes: int = 4
    eval_steps: int = 50
    eval_mc_samples: int = 10000

    def __post_init__(self):
        self.sweep_values = tuple(float(v) for v in self.sweep_values)
        self.quantization_bits = tuple(int(b) for b in self.quantization_bits)
        self.seeds = tuple(int(s) for s in self.seeds)
        if self.sweep_axis not in SWEEP_AXES:
            raise ValueError(f"sweep_axis must be one of {SWEEP_AXES}")
        if self.sweep_axis != "none":
            if not self.sweep_values:
                raise ValueError("sweep_values must be nonempty for a sweep")
            if list(self.sweep_values) != sorted(self.sweep_values):
                raise ValueError("sweep_values must be sorted")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if any(b < 1 for b in self.quantization_bits):
            raise ValueError("quantization bits must be >= 1")
        if min(self.eval_episodes, self.eval_steps, self.eval_mc_samples) < 1:
            raise ValueError("eval settings must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        geometry = SystemGeometry(**data.pop("geometry"))
        train = TrainConfig(**data.pop("train"))
        return cls(geometry=geometry, train=train, **data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


def paper_preset() -> ExperimentConfig:
    """Full-scale scenario: the geometry defaults plus the full training schedule."""
    return ExperimentConfig(
        geometry=SystemGeometry(),
        train=TrainConfig(),
    )


def desk_preset() -> ExperimentConfig:
    """Shrunk arrays and schedule for single-core runs: N=8, M=8, U=2, 200x200."""
    return ExperimentConfig(
        geometry=SystemGeometry(num_users=2, bs_dims=(4, 2), ris_dims=(4, 2)),
        train=TrainConfig(episodes=200, episode_length=200),
    )


_PRESETS = {"paper": paper_preset, "desk": desk_preset}


def preset(name: str) -> ExperimentConfig:
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(_PRESETS)}")
    return _PRESETS[name]()


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_json(Path(path).read_text())


def save_config(config: ExperimentConfig, path):
    Path(path).write_text(config.to_json() + "\n")

"""Dataclass configuration for models, data, losses, and runs.

Configs load from and dump to plain JSON. Unknown keys are rejected so
config-file typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields

from .scan import PriorityParams, Strategy


@dataclass(frozen=True)
class ScanConfig:
    """Grid geometry for scan dumps and kernel analysis."""

    grid_h: int = 6
    grid_w: int = 6
    region_size: int = 3
    strategy: str = Strategy.CENTER_PRIORITY.value


@dataclass(frozen=True)
class EncoderConfig:
    in_channels: int = 1
    embed_dim: int = 16
    num_stages: int = 4
    blocks_per_stage: int = 1
    region_size: int = 3
    adapter_dim: int = 4
    state_dim: int = 4
    downsample: int = 2


@dataclass(frozen=True)
class LossConfig:
    """Hierarchical loss weights and focusing/balancing knobs."""

    level_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    focal_gamma: float = 2.0
    class_balance: float = 1.0
    smooth: float = 1.0

    def __post_init__(self):
        if any(g < 0 for g in self.level_weights):
            raise ValueError("level weights must be nonnegative")
        if not 0.0 <= self.class_balance <= 1.0:
            raise ValueError("class_balance must lie in [0, 1]")


@dataclass(frozen=True)
class AblationConfig:
    """Module toggles: A scan adapters, B prior synthesis, C decoder memory."""

    A: bool = False
    B: bool = False
    C: bool = False

    @property
    def label(self) -> str:
        parts = [name for name in "ABC" if getattr(self, name)]
        return "base" if not parts else "+" + "+".join(parts)

    @classmethod
    def standard_sequence(cls):
        """The progressive enablement ladder used by the ablation runner."""
        return (
            cls(),
            cls(A=True),
            cls(A=True, B=True),
            cls(A=True, B=True, C=True),
        )


@dataclass(frozen=True)
class DatasetSpec:
    """Synthetic low-contrast lesion volumes."""

    height: int = 32
    width: int = 32
    slices: int = 8
    lesion_count: tuple[int, int] = (1, 3)
    radius: tuple[float, float] = (1.0, 4.0)
    contrast: tuple[float, float] = (0.05, 0.2)
    drift: int = 1
    noise_sigma: float = 0.02
    min_persistence: int = 3
    train_volumes: int = 40
    eval_volumes: int = 10


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 300
    batch_slices: int = 4
    lr: float = 1e-4
    # Step-decay schedule: halve at these fractions of total steps
    # (epoch 7 and 12 of a 200-epoch run, rescaled).
    lr_drop_fractions: tuple[float, ...] = (7 / 200, 12 / 200)

    def drop_steps(self):
        return tuple(int(self.steps * f) for f in self.lr_drop_fractions)


@dataclass(frozen=True)
class RunConfig:
    scan: ScanConfig = field(default_factory=ScanConfig)
    priority: PriorityParams = field(default_factory=PriorityParams)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    ablation: AblationConfig = field(default_factory=AblationConfig)
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    train: TrainConfig = field(default_factory=TrainConfig)


def _from_dict(cls, payload):
    if not isinstance(payload, dict):
        raise ValueError(f"expected an object for {cls.__name__}, got {type(payload).__name__}")
    known = {f.name: f for f in fields(cls)}
    unknown = set(payload) - set(known)
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in payload.items():
        ftype = known[name].type
        if dataclasses.is_dataclass(_resolve(ftype)):
            kwargs[name] = _from_dict(_resolve(ftype), value)
        elif isinstance(value, list):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_NESTED = {
    "scan": ScanConfig,
    "priority": PriorityParams,
    "encoder": EncoderConfig,
    "loss": LossConfig,
    "ablation": AblationConfig,
    "dataset": DatasetSpec,
    "train": TrainConfig,
}


def _resolve(ftype):
    if isinstance(ftype, str):
        return {
            "ScanConfig": ScanConfig,
            "PriorityParams": PriorityParams,
            "EncoderConfig": EncoderConfig,
            "LossConfig": LossConfig,
            "AblationConfig": AblationConfig,
            "DatasetSpec": DatasetSpec,
            "TrainConfig": TrainConfig,
        }.get(ftype, ftype)
    return ftype


def run_config_from_dict(payload: dict) -> RunConfig:
    unknown = set(payload) - set(_NESTED)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    kwargs = {name: _from_dict(cls, payload[name]) for name, cls in _NESTED.items() if name in payload}
    return RunConfig(**kwargs)


def load_run_config(path) -> RunConfig:
    with open(path) as fh:
        return run_config_from_dict(json.load(fh))


def run_config_to_json(cfg: RunConfig) -> str:
    return json.dumps(dataclasses.asdict(cfg), indent=2, sort_keys=True) + "\n"

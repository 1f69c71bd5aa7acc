"""Center-prioritized local scanning with state-space aggregation,
cross-slice prototype memory, and a memory-augmented deep-supervision
decoder, built on a minimal float64 autodiff core."""

__version__ = "0.1.0"

from .autodiff import Tensor, backward, finite_diff_grad, no_grad
from .config import (
    AblationConfig,
    DatasetSpec,
    EncoderConfig,
    LossConfig,
    RunConfig,
    TrainConfig,
)
from .scan import PriorityParams, RegionPartition, ScanPath, Strategy, partition, scan_order
from .ssm import CenterScanBlock, SsmParams, measure_effective_kernel, ssm_scan

__all__ = [
    "AblationConfig",
    "CenterScanBlock",
    "DatasetSpec",
    "EncoderConfig",
    "LossConfig",
    "PriorityParams",
    "RegionPartition",
    "RunConfig",
    "ScanPath",
    "SsmParams",
    "Strategy",
    "Tensor",
    "TrainConfig",
    "backward",
    "finite_diff_grad",
    "measure_effective_kernel",
    "no_grad",
    "partition",
    "scan_order",
    "ssm_scan",
]

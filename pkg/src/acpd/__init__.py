"""Distributed dual coordinate ascent with group-commit communication and
top-k filtered updates, reproduced on a deterministic cluster simulator."""

from .data import Dataset, Partition, normalize, parse_libsvm, partition, write_libsvm
from .objective import (HyperParams, LossSpec, duality_gap, dual_value,
                        estimate_sigma_max, primal_from_dual, primal_value,
                        theoretical_rounds)
from .simcluster import SimConfig, SimTrace, measure_time_to_gap, run_acpd, run_cocoaplus

__version__ = "0.1.0"

__all__ = [
    "Dataset", "Partition", "normalize", "parse_libsvm", "partition", "write_libsvm",
    "HyperParams", "LossSpec", "duality_gap", "dual_value", "estimate_sigma_max",
    "primal_from_dual", "primal_value", "theoretical_rounds",
    "SimConfig", "SimTrace", "measure_time_to_gap", "run_acpd", "run_cocoaplus",
    "__version__",
]

"""Geometric kernel block model: sampling, exact recovery, thresholds and oracles."""

from .geometry import BlockPartition, normalize, support_radius, torus_distance
from .info import ThresholdReport, ch_divergence, derived_constants, info_metric
from .kernel import Kernel, approximate, psi_n
from .model import GkbmInstance, GkbmParams, agreement, edge_probability, sample
from .recovery import full_pipeline, initial_block_recovery, phase1, propagate, refine

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "GkbmInstance",
    "GkbmParams",
    "Kernel",
    "ThresholdReport",
    "agreement",
    "approximate",
    "ch_divergence",
    "derived_constants",
    "edge_probability",
    "full_pipeline",
    "info_metric",
    "initial_block_recovery",
    "normalize",
    "phase1",
    "propagate",
    "psi_n",
    "refine",
    "sample",
    "support_radius",
    "torus_distance",
]

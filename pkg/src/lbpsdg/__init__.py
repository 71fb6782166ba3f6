"""Micro-expression features: LBP-TOP, single-direction gradient histograms (HSDG),
their concatenation (LBP-SDG), preprocessing, and LOSO SVM evaluation."""

__version__ = "0.1.0"

from .classify import EvalReport, KernelSpec, loso_evaluate, relative_rr, train
from .evm import EvmParams, alpha_sweep_schedule, magnify
from .features import BlockGrid, FeatureVector, PipelineConfig, extract, normalize_per_block_l1, partition
from .hsdg import HsdgParams, direction_offset, hsdg_histogram, quantize, sdg_gradient
from .lbp import CenterRegion, LbpTopParams, lbp_code, lbp_sip_histogram, lbp_top_histograms, uniform_map
from .tim import TimParams, normalize_length
from .volume import VideoVolume, load_manifest, load_volume, pixel, synth_motion_volume

__all__ = [
    "EvalReport", "KernelSpec", "loso_evaluate", "relative_rr", "train",
    "EvmParams", "alpha_sweep_schedule", "magnify",
    "BlockGrid", "FeatureVector", "PipelineConfig", "extract", "normalize_per_block_l1", "partition",
    "HsdgParams", "direction_offset", "hsdg_histogram", "quantize", "sdg_gradient",
    "CenterRegion", "LbpTopParams", "lbp_code", "lbp_sip_histogram", "lbp_top_histograms", "uniform_map",
    "TimParams", "normalize_length",
    "VideoVolume", "load_manifest", "load_volume", "pixel", "synth_motion_volume",
]

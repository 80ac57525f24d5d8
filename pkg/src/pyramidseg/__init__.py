"""Coarse-to-fine pyramid segmentation with a stacked region description
and knowledge-base annotation."""

from .describe import DescriptionStack, RegionDescriptor, reconstruct, register_regions
from .kb import KnowledgeBase, annotate, load_kb, match_region, verify_context
from .pyramid import Pyramid, build_pyramid
from .raster import GrayImage, load_image, save_image, synth_scene
from .refine import (
    LevelResult,
    RefineConfig,
    detect_deviants,
    expand_labels,
    refine_level,
    segment_image,
)
from .segment import LabelMap, RegionStats, cluster_intensities, connected_components, segment_top

__version__ = "0.1.0"

__all__ = [
    "DescriptionStack",
    "GrayImage",
    "KnowledgeBase",
    "LabelMap",
    "LevelResult",
    "Pyramid",
    "RefineConfig",
    "RegionDescriptor",
    "RegionStats",
    "annotate",
    "build_pyramid",
    "cluster_intensities",
    "connected_components",
    "detect_deviants",
    "expand_labels",
    "load_image",
    "load_kb",
    "match_region",
    "reconstruct",
    "refine_level",
    "register_regions",
    "save_image",
    "segment_image",
    "segment_top",
    "synth_scene",
    "verify_context",
]

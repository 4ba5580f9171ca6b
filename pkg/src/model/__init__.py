"""EDCFlow network modules."""

from src.model.correlation import CostVolume, CorrelationEncoder, build_cost_volume, lookup
from src.model.diffmotion import (
    DifferenceLayer,
    scale_flow,
    temporal_differences,
    warp_all,
    warp_factors,
)
from src.model.encoders import ContextState, FeaturePyramid, encode_context, encode_features
from src.model.network import EDCFlow, IterationTrace, build_model
from src.model.updater import MotionFusion, UpdateBlock, convex_upsample

__all__ = [
    "ContextState",
    "CorrelationEncoder",
    "CostVolume",
    "DifferenceLayer",
    "EDCFlow",
    "FeaturePyramid",
    "IterationTrace",
    "MotionFusion",
    "UpdateBlock",
    "build_cost_volume",
    "build_model",
    "convex_upsample",
    "encode_context",
    "encode_features",
    "lookup",
    "scale_flow",
    "temporal_differences",
    "warp_all",
    "warp_factors",
]

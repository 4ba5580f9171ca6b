"""Synthetic event camera with exact ground-truth flow."""

from src.synth.camera import (
    Scene,
    SyntheticSample,
    generate,
    ground_truth,
    make_dataset,
    sample_velocity,
    simulate_events,
)
from src.synth.textures import TEXTURES, bars, blobs, checkerboard, random_texture

__all__ = [
    "TEXTURES",
    "Scene",
    "SyntheticSample",
    "bars",
    "blobs",
    "checkerboard",
    "generate",
    "ground_truth",
    "make_dataset",
    "random_texture",
    "sample_velocity",
    "simulate_events",
]

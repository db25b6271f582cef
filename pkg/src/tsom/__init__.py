"""Small moving object detection with a tectum-inspired filtering cascade."""

from .core import DirectionalStack, Frame, PipelineConfig, Sequence, load_sequence
from .pipeline import TSOM, FrameLayers, PipelineResult
from .rt import Detection
from .synth import GroundTruth, SynthConfig, aerial_background, generate

__all__ = [
    "DirectionalStack",
    "Detection",
    "Frame",
    "FrameLayers",
    "GroundTruth",
    "PipelineConfig",
    "PipelineResult",
    "Sequence",
    "SynthConfig",
    "TSOM",
    "aerial_background",
    "generate",
    "load_sequence",
]

__version__ = "0.1.0"

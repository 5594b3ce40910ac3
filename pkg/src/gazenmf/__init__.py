"""Spatiotemporal decomposition of mobile eye-tracking recordings with NMF."""

from .components import ComponentAnalysis, analyze
from .estimators import GazeNMF, GazePatchExtractor
from .fixation import FixationParams, detect_fixations
from .ingest import GazeSample, Recording, load_recording
from .nmf import Algorithm, Factorization, FactorizationOptions, factorize
from .patchgrid import PatchMatrix, StencilSpec, build_patch_matrix

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ComponentAnalysis",
    "Factorization",
    "FactorizationOptions",
    "FixationParams",
    "GazeNMF",
    "GazePatchExtractor",
    "GazeSample",
    "PatchMatrix",
    "Recording",
    "StencilSpec",
    "analyze",
    "build_patch_matrix",
    "detect_fixations",
    "factorize",
    "load_recording",
]

"""Estimate leaf and canopy nitrogen from hyperspectral reflectance.

The package covers cube calibration, spectral preprocessing, redundant-band
removal, two band-selection methods and boosted-tree regression.
"""

from .config import PipelineConfig, load_config
from .cube import HyperCube, correct_reflectance, load_cube, parse_header, read_cube
from .ensemble import EnsembleConfig, run_ensemble_ranking, select_optimal_count
from .pipeline import grid_search, intersect_selections, kfold_cv, run_pipeline
from .plsr import fit_plsr, plsr_backward_select
from .preprocess import SpectralDataset, Spectrum
from .synth import SynthConfig, generate

__version__ = "0.1.0"

__all__ = [
    "EnsembleConfig", "HyperCube", "PipelineConfig", "SpectralDataset", "Spectrum",
    "SynthConfig", "correct_reflectance", "fit_plsr", "generate", "grid_search",
    "intersect_selections", "kfold_cv", "load_config", "load_cube", "parse_header",
    "plsr_backward_select", "read_cube", "run_ensemble_ranking", "run_pipeline",
    "select_optimal_count",
]

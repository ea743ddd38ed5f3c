"""Relevance intervals for L1 ordinal regression, with privileged information."""

from .data import Dataset, GroundTruth, LupiDataset, Relevance, load_csv, mmae, selection_scores
from .datagen import GenSpec, generate, generate_semantic_scenario, preset
from .lupi import LupiHyperParams, fit_lupi, relevance_profile_lupi
from .ordreg import Variant, cross_validate, fit, fit_explicit, fit_implicit, predict
from .relevance import ConstraintMode, RelevanceParams, relevance_profile
from .thresholding import classify, noise_populations, prediction_intervals

__version__ = "0.1.0"

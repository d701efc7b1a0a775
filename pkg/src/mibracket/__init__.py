"""Bracketed mutual-information estimation: MINE lower bound, CLUB upper bound, KSG anchor."""

from .attribution import AttributionResult, attribute, source_share
from .club import ClubEstimator
from .config import RunConfig
from .data import FeatureMatrix, SyntheticSpec, load_features, synth_generate, zscore
from .errors import MiBracketError
from .fusion import MiBracket, adaptive_weight, fuse, train_pair
from .ksg import KsgConfig, ksg_estimate
from .mine import MineEstimator

__version__ = "0.1.0"

__all__ = [
    "AttributionResult",
    "ClubEstimator",
    "FeatureMatrix",
    "KsgConfig",
    "MiBracket",
    "MiBracketError",
    "MineEstimator",
    "RunConfig",
    "SyntheticSpec",
    "adaptive_weight",
    "attribute",
    "fuse",
    "ksg_estimate",
    "load_features",
    "source_share",
    "synth_generate",
    "train_pair",
    "zscore",
]

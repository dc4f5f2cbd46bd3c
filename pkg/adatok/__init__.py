from ._calibration import (
    RatioSet,
    ScoreHistogram,
    Thresholds,
    calibrate_thresholds,
    classify_ratio,
    max_acceptable_ratio,
    tolerance_profile,
)
from ._checkpoint import load_checkpoint, load_model, save_checkpoint
from ._complexity import ComplexityScore, ImageDescription, dct_complexity
from ._errors import AdatokError
from ._latent_io import read_latents, write_latents
from ._nested_vae import NestedVae, NestedVaeConfig
from ._scoring import HttpScorerBackend, Scorer, score_description
from ._trainer import TrainConfig, Trainer

__all__ = ("NestedVae", "NestedVaeConfig", "Trainer", "TrainConfig", "Scorer",
           "HttpScorerBackend", "score_description", "ImageDescription", "ComplexityScore",
           "RatioSet", "ScoreHistogram", "Thresholds", "classify_ratio", "calibrate_thresholds",
           "max_acceptable_ratio", "tolerance_profile", "dct_complexity", "read_latents",
           "write_latents", "save_checkpoint", "load_checkpoint", "load_model",
           "AdatokError",)
__version__ = "0.1.0"

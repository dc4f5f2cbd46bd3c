from .._calibration import (
    CalibrationCandidate,
    MetricThresholds,
    RatioDistribution,
    RatioSet,
    ScoreHistogram,
    Thresholds,
)
from .._checkpoint import Checkpoint
from .._complexity import ComplexityScore, ImageDescription, PixelMetrics
from .._errors import (
    AdatokError,
    ConfigurationError,
    ContractViolation,
    FormatError,
    GradientCheckError,
    ScoreParseError,
    ScoreRangeError,
    ScorerTransportError,
    ScoringUnavailable,
    TrainingError,
    UndefinedCorrelation,
    UsageError,
)
from .._latent_io import LatentFileHeader, LatentFileRecord
from .._losses import Discriminator, LossTerms, LossWeights
from .._nested_vae import ForwardOutput, LatentDistribution, LatentSample
from .._optim import AdamW, AdamWState
from .._tables import ScoreRow
from .._trainer import Batch, LabeledDataset, LabeledRecord, StepMetrics
from .._types import (
    AttemptValue,
    DelayCallable,
    DelayValue,
    ExceptionType,
    LoggerCallable,
    Ratio,
    ScorerBackend,
    SwallowException,
)

__all__ = ("Ratio", "AttemptValue", "DelayValue", "DelayCallable", "ExceptionType",
           "LoggerCallable", "SwallowException", "ScorerBackend", "RatioSet", "Thresholds",
           "ScoreHistogram", "RatioDistribution", "CalibrationCandidate", "MetricThresholds",
           "ImageDescription", "ComplexityScore", "PixelMetrics", "LatentDistribution",
           "LatentSample", "ForwardOutput", "LatentFileHeader", "LatentFileRecord",
           "Checkpoint", "LossWeights", "LossTerms", "Discriminator", "AdamW", "AdamWState",
           "ScoreRow", "Batch", "LabeledDataset", "LabeledRecord", "StepMetrics",
           "AdatokError", "ContractViolation", "ConfigurationError", "ScoreParseError",
           "ScoreRangeError", "ScorerTransportError", "ScoringUnavailable",
           "UndefinedCorrelation", "GradientCheckError", "FormatError", "TrainingError",
           "UsageError",)

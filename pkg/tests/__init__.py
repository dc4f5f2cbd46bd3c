from .test_adaptive_benefit import TestAdaptiveBenefit
from .test_backend import TestAttention, TestConv2d, TestGradientCheck, TestGroupNorm, TestUpsample
from .test_calibration import (
    TestAverageCompression,
    TestCalibrateThresholds,
    TestClassify,
    TestOracle,
    TestRatioSet,
    TestStatistics,
    TestTokenAccounting,
)
from .test_checkpoint import TestCheckpoint
from .test_cli import TestCliBasics, TestCliPipeline
from .test_complexity import (
    TestDctComplexity,
    TestDescriptions,
    TestHeuristicScore,
    TestPerceptualProxy,
    TestPixelMetrics,
)
from .test_latent_io import TestLatentFiles, TestLatentFormat
from .test_losses import (
    TestAdversarial,
    TestPerceptual,
    TestReconstructionAndKl,
    TestTotalObjective,
)
from .test_nested_vae import (
    TestGradients,
    TestNestedVaeConfig,
    TestSampling,
    TestShapes,
    TestSharing,
)
from .test_optim import TestAdamW, TestAdamWStep, TestClipping, TestTorchBacking, TestWarmup
from .test_prompt import TestPrompt
from .test_scoring import TestHttpScorerBackend, TestScoreDescription, TestScorer
from .test_synthetic import TestSyntheticCorpus
from .test_tables import TestDescriptionSidecar, TestTables
from .test_trainer import (
    TestAssignRatios,
    TestLabeledDataset,
    TestMakeBatches,
    TestTrainConfig,
    TestTrainer,
)

__all__ = ("TestAdaptiveBenefit", "TestAttention", "TestConv2d", "TestGradientCheck",
           "TestGroupNorm", "TestUpsample", "TestAverageCompression", "TestCalibrateThresholds",
           "TestClassify", "TestOracle", "TestRatioSet", "TestStatistics", "TestTokenAccounting",
           "TestCheckpoint", "TestCliBasics", "TestCliPipeline", "TestDctComplexity",
           "TestDescriptions", "TestHeuristicScore", "TestPerceptualProxy", "TestPixelMetrics",
           "TestLatentFiles", "TestLatentFormat", "TestAdversarial", "TestPerceptual",
           "TestReconstructionAndKl", "TestTotalObjective", "TestGradients",
           "TestNestedVaeConfig", "TestSampling", "TestShapes", "TestSharing", "TestAdamW",
           "TestAdamWStep", "TestClipping", "TestTorchBacking", "TestWarmup", "TestPrompt",
           "TestHttpScorerBackend", "TestScoreDescription", "TestScorer", "TestSyntheticCorpus",
           "TestDescriptionSidecar", "TestTables", "TestAssignRatios", "TestLabeledDataset",
           "TestMakeBatches", "TestTrainConfig", "TestTrainer",)

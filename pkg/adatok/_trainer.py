"""Training: ratio labels from scores, homogeneous-ratio batches and the alternating loop."""
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor

from ._calibration import RatioSet, Thresholds, classify_ratio
from ._checkpoint import load_checkpoint, save_checkpoint
from ._complexity import ComplexityScore, ImageDescription
from ._errors import ConfigurationError, ContractViolation, TrainingError
from ._features import FeatureExtractor
from ._losses import (
    DISCRIMINATOR,
    GAN_LOSSES,
    GENERATOR,
    Discriminator,
    LossWeights,
    total_objective,
)
from ._nested_vae import NestedVae
from ._optim import AdamW, clip_global_norm, global_grad_norm, warmup_lr
from ._scoring import Scorer
from ._tables import METRICS_COLUMNS, ScoreRow, format_float, write_score_csv
from ._types import Ratio

__all__ = ("TrainConfig", "LabeledRecord", "LabeledDataset", "Batch", "StepMetrics",
           "RATIO_SAMPLING", "assign_ratios", "make_batches", "derive_seed", "Trainer",)

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

RATIO_SAMPLING = ("proportional", "uniform")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.95
    weight_decay: float = 0.1
    eps: float = 1e-8
    grad_clip: float = 5.0
    steps: int = 2000
    batch_size: int = 16
    gan_start_step: int = 500
    warmup_steps: int = 100
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_every: int = 500
    log_every: int = 50
    gan_loss: str = "non_saturating"
    ratio_sampling: str = "proportional"

    def __post_init__(self) -> None:
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", LossWeights.from_dict(self.weights))
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("betas must lie in (0, 1), got ({}, {})".format(
                self.beta1, self.beta2))
        if self.grad_clip <= 0:
            raise ConfigurationError("grad_clip must be positive, got {}".format(
                self.grad_clip))
        if self.steps < 0 or self.batch_size < 1:
            raise ConfigurationError("steps must be >= 0 and batch_size >= 1")
        if not 0 <= self.gan_start_step <= self.steps:
            raise ConfigurationError("gan_start_step {} must lie in [0, steps={}]".format(
                self.gan_start_step, self.steps))
        if self.lr < 0 or self.eps <= 0 or self.weight_decay < 0 or self.warmup_steps < 0:
            raise ConfigurationError("lr, weight_decay, warmup_steps must be >= 0 and eps > 0")
        if self.checkpoint_every < 0 or self.log_every < 0:
            raise ConfigurationError("checkpoint_every and log_every must be >= 0")
        if self.gan_loss not in GAN_LOSSES:
            raise ConfigurationError("gan_loss must be one of {}".format(GAN_LOSSES))
        if self.ratio_sampling not in RATIO_SAMPLING:
            raise ConfigurationError("ratio_sampling must be one of {}".format(RATIO_SAMPLING))

    @property
    def betas(self) -> Tuple[float, float]:
        return (self.beta1, self.beta2)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        return cls(**data)


@dataclass(frozen=True, eq=False)
class LabeledRecord:
    id: str
    image: Tensor
    description: ImageDescription
    ratio: Ratio


class LabeledDataset:
    def __init__(self, records: Sequence[LabeledRecord], ratios: RatioSet) -> None:
        for record in records:
            if record.ratio not in ratios:
                raise ContractViolation("record {!r} has ratio {} outside {}".format(
                    record.id, record.ratio, tuple(ratios)))
        shapes = {tuple(record.image.shape) for record in records}
        if len(shapes) > 1:
            raise ContractViolation("records mix image shapes {}".format(sorted(shapes)))
        self.records = list(records)
        self.ratios = ratios

    def __len__(self) -> int:
        return len(self.records)

    def __getitem__(self, index: int) -> LabeledRecord:
        return self.records[index]

    def __iter__(self) -> Iterator[LabeledRecord]:
        return iter(self.records)

    def labels(self) -> List[Ratio]:
        return [record.ratio for record in self.records]

    def relabeled(self, ratio: Ratio) -> "LabeledDataset":
        """Every record at ``ratio``: the fixed-compression baseline."""
        return LabeledDataset([LabeledRecord(r.id, r.image, r.description, ratio)
                               for r in self.records], self.ratios)


class Batch(NamedTuple):
    ratio: Ratio
    indices: Tuple[int, ...]


class StepMetrics(NamedTuple):
    step: int
    ratio: Ratio
    loss_total: float
    loss_l1: float
    loss_kl: float
    loss_perc: float
    loss_gan: float
    grad_norm: float
    lr: float
    applied: bool

    def to_row(self) -> List[Any]:
        return [self.step, self.ratio] + [format_float(value) for value in self[2:9]]


def assign_ratios(items: Sequence[Tuple[str, ImageDescription]], scorer: Scorer,
                  thresholds: Thresholds, ratios: RatioSet, *,
                  csv_path: Optional[PathLike] = None,
                  workers: int = 1) -> List[Tuple[str, ComplexityScore, Ratio]]:
    """Score each description and classify its ratio; optionally persist the score CSV."""
    scores = scorer.score_many([desc for _, desc in items], workers)
    labeled = [(image_id, score, classify_ratio(score, thresholds, ratios))
               for (image_id, _), score in zip(items, scores)]
    if csv_path is not None:
        write_score_csv((ScoreRow(image_id, score.value, ratio, source=score.source,
                                  attempts=score.attempts)
                         for image_id, score, ratio in labeled), csv_path)
    return labeled


def make_batches(dataset: LabeledDataset, batch_size: int, seed: int, *,
                 sampling: str = "proportional") -> List[Batch]:
    """Homogeneous-ratio batches covering every record exactly once.

    Each stratum is shuffled by ``seed`` and cut into batches (the last may be partial).
    The next batch's ratio is drawn with probability proportional to the records left in
    each stratum, or uniformly over non-empty strata.
    """
    assert batch_size >= 1
    if sampling not in RATIO_SAMPLING:
        raise ConfigurationError("ratio sampling must be one of {}".format(RATIO_SAMPLING))
    rng = np.random.default_rng(seed)
    queues: List[List[Batch]] = []
    remaining = []
    for ratio in dataset.ratios:
        members = [i for i, record in enumerate(dataset) if record.ratio == ratio]
        order = [members[i] for i in rng.permutation(len(members))]
        queues += [[Batch(ratio, tuple(order[start:start + batch_size]))
                    for start in range(0, len(order), batch_size)]]
        remaining += [len(order)]

    plan = []
    while any(remaining):
        if sampling == "uniform":
            weights = np.array([1.0 if left else 0.0 for left in remaining])
        else:
            weights = np.array(remaining, dtype=np.float64)
        stratum = int(rng.choice(len(remaining), p=weights / weights.sum()))
        batch = queues[stratum].pop(0)
        remaining[stratum] -= len(batch.indices)
        plan += [batch]
    return plan


def derive_seed(*parts: int) -> int:
    """Non-negative 63-bit seed mixed from ``parts``."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, dtype=np.uint64)[0]
               >> np.uint64(1))


class Trainer:
    """Owns the model, discriminator, feature extractor and both optimizers.

    The update path is single threaded and every random draw is seeded from
    ``(config.seed, step)``, so a run resumed from a checkpoint reproduces the
    uninterrupted run bit for bit.
    """

    def __init__(self, model: NestedVae, config: TrainConfig, *,
                 extractor: Optional[FeatureExtractor] = None,
                 discriminator: Optional[Discriminator] = None) -> None:
        self.model = model
        self.config = config
        in_channels = model.config.in_channels
        self.extractor = extractor if extractor is not None else \
            FeatureExtractor(in_channels, seed=derive_seed(config.seed, 1) % 2 ** 31)
        self.discriminator = discriminator if discriminator is not None else \
            Discriminator(in_channels, seed=derive_seed(config.seed, 2) % 2 ** 31)
        self.g_opt = AdamW(model.named_parameters(), lr=config.lr, betas=config.betas,
                           weight_decay=config.weight_decay, eps=config.eps)
        self.d_opt = AdamW(self.discriminator.named_parameters(), lr=config.lr,
                           betas=config.betas, weight_decay=config.weight_decay,
                           eps=config.eps)
        self.step = 0
        self.adapter_updates: Dict[Ratio, int] = {ratio: 0 for ratio in model.config.ratios}

    @property
    def hinge(self) -> bool:
        return self.config.gan_loss == "hinge"

    def train_step(self, images: Tensor, ratio: Ratio, step_index: int) -> StepMetrics:
        """Generator update at ``ratio``, then a discriminator update once GAN is on."""
        config = self.config
        lr = warmup_lr(step_index + 1, config.lr, config.warmup_steps)
        gan_active = step_index >= config.gan_start_step
        model, d = self.model, self.discriminator

        self.g_opt.zero_grad()
        d.requires_grad_(False)
        try:
            out = model(images, ratio, rng_seed=derive_seed(config.seed, step_index))
            terms = total_objective(images, out, config.weights, self.extractor,
                                    d if gan_active else None, GENERATOR, hinge=self.hinge)
        finally:
            d.requires_grad_(True)

        if not torch.isfinite(terms.total):
            logger.warning("step %d: non-finite loss %s, skipping", step_index,
                           terms.total.item())
            self.g_opt.skip()
            return StepMetrics(step_index, ratio, *(float(t.item()) for t in terms),
                               math.nan, lr, False)

        terms.total.backward()
        params = [p for _, p in self.g_opt.params]
        grad_norm = global_grad_norm(params)
        clip_global_norm(params, config.grad_clip)
        applied = self.g_opt.step(lr)
        if applied:
            self.adapter_updates[ratio] += 1

        if gan_active:
            self.d_opt.zero_grad()
            d_terms = total_objective(images, out, config.weights, self.extractor, d,
                                      DISCRIMINATOR, hinge=self.hinge)
            if torch.isfinite(d_terms.total):
                d_terms.total.backward()
                clip_global_norm([p for _, p in self.d_opt.params], config.grad_clip)
                self.d_opt.step(lr)
            else:
                logger.warning("step %d: non-finite discriminator loss, skipping", step_index)
                self.d_opt.skip()

        return StepMetrics(step_index, ratio, float(terms.total.item()),
                           float(terms.l1.item()), float(terms.kl.item()),
                           float(terms.perceptual.item()), float(terms.gan.item()),
                           grad_norm, lr, applied)

    def trainer_state(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "adapter_updates": {str(ratio): count
                                for ratio, count in self.adapter_updates.items()},
            "train_config": self.config.to_dict(),
        }

    def save(self, path: PathLike) -> int:
        return save_checkpoint(path, self.model, discriminator=self.discriminator,
                               generator_optimizer=self.g_opt.state,
                               discriminator_optimizer=self.d_opt.state,
                               trainer_state=self.trainer_state())

    def resume(self, path: PathLike) -> None:
        ckpt = load_checkpoint(path)
        if ckpt.config != self.model.config:
            raise TrainingError("{} was written for a different model config".format(path))
        if ckpt.trainer_state is None or ckpt.generator_optimizer is None or \
                ckpt.discriminator is None or ckpt.discriminator_optimizer is None:
            raise TrainingError("{} holds no resumable training state".format(path))
        try:
            self.model.load_state_dict(ckpt.params)
            self.discriminator.load_state_dict(ckpt.discriminator)
            self.g_opt.state = ckpt.generator_optimizer
            self.d_opt.state = ckpt.discriminator_optimizer
        except (RuntimeError, ValueError) as e:
            raise TrainingError("cannot resume from {}: {}".format(path, e)) from None
        state = ckpt.trainer_state
        self.step = int(state["step"])
        self.adapter_updates = {int(ratio): int(count)
                                for ratio, count in state["adapter_updates"].items()}
        logger.info("resumed from %s at step %d", path, self.step)

    def _prepare_dir(self, checkpoint_dir: PathLike) -> Path:
        directory = Path(checkpoint_dir)
        try:
            directory.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise TrainingError("cannot create checkpoint dir {}: {}".format(
                directory, e)) from None
        if not os.access(directory, os.W_OK):
            raise TrainingError("checkpoint dir {} is not writable".format(directory))
        return directory

    def train_loop(self, dataset: LabeledDataset, checkpoint_dir: PathLike, *,
                   metrics_path: Optional[PathLike] = None) -> Path:
        """Train from ``self.step`` to ``config.steps``; returns the final checkpoint path.

        Batches are planned per epoch from ``(seed, epoch)``; metrics rows are appended to
        ``metrics_path`` (default ``<checkpoint_dir>/metrics.csv``).
        """
        config = self.config
        directory = self._prepare_dir(checkpoint_dir)
        metrics_path = Path(metrics_path) if metrics_path is not None else \
            directory / "metrics.csv"
        if self.step > 0 and metrics_path.exists():
            _truncate_metrics(metrics_path, self.step)
        else:
            with open(metrics_path, "w", encoding="utf-8", newline="\n") as f:
                f.write(",".join(METRICS_COLUMNS) + "\n")

        if self.step < config.steps and len(dataset) == 0:
            raise TrainingError("cannot train on an empty dataset")

        # batch counts per stratum depend only on stratum sizes, so every epoch has the
        # same length
        per_epoch = len(self._plan(dataset, 0)) if len(dataset) else 0
        plan: List[Batch] = []
        epoch = -1
        with open(metrics_path, "a", encoding="utf-8", newline="\n") as log:
            while self.step < config.steps:
                if self.step // per_epoch != epoch:
                    epoch = self.step // per_epoch
                    plan = self._plan(dataset, epoch)
                batch = plan[self.step % per_epoch]
                images = torch.stack([dataset[i].image for i in batch.indices])
                metrics = self.train_step(images, batch.ratio, self.step)
                log.write(",".join(str(value) for value in metrics.to_row()) + "\n")
                self.step += 1
                if config.log_every and self.step % config.log_every == 0:
                    logger.info("step %d ratio %d loss %.5f l1 %.5f grad %.3f lr %.2e",
                                self.step, metrics.ratio, metrics.loss_total,
                                metrics.loss_l1, metrics.grad_norm, metrics.lr)
                if config.checkpoint_every and self.step % config.checkpoint_every == 0 and \
                        self.step < config.steps:
                    log.flush()
                    path = directory / "step-{:07d}.catm".format(self.step)
                    self.save(path)
                    logger.info("wrote checkpoint %s", path)

        final = directory / "final.catm"
        self.save(final)
        logger.info("wrote checkpoint %s at step %d", final, self.step)
        return final

    def _plan(self, dataset: LabeledDataset, epoch: int) -> List[Batch]:
        return make_batches(dataset, self.config.batch_size,
                            derive_seed(self.config.seed, 0x5EED, epoch) % 2 ** 32,
                            sampling=self.config.ratio_sampling)


def _truncate_metrics(path: Path, step: int) -> None:
    """Drop rows at or after ``step`` so a resumed run appends without duplicates."""
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    kept = lines[:1] + [line for line in lines[1:] if int(line.split(",", 1)[0]) < step]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("".join(line + "\n" for line in kept))

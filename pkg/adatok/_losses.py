"""Training objective: L1 reconstruction, KL to the unit Gaussian, perceptual proxy and GAN."""
from dataclasses import asdict, dataclass
from typing import Any, Dict, NamedTuple, Optional

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from ._complexity import pyramid_distance
from ._errors import ConfigurationError, ContractViolation
from ._features import FeatureExtractor
from ._layers import Conv2d
from ._nested_vae import ForwardOutput, LatentDistribution

__all__ = ("LossWeights", "LossTerms", "Discriminator", "recon_l1", "kl_gauss",
           "perceptual_loss", "gan_d_loss", "gan_g_loss", "total_objective", "GENERATOR",
           "DISCRIMINATOR", "GAN_LOSSES",)

GENERATOR = "generator"
DISCRIMINATOR = "discriminator"
GAN_LOSSES = ("non_saturating", "hinge")


@dataclass(frozen=True)
class LossWeights:
    recon: float = 1.0
    beta: float = 1e-6
    gamma: float = 1.0
    feature_proxy: float = 0.2
    delta: float = 0.5

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if value < 0:
                raise ConfigurationError("loss weight {} must be >= 0, got {}".format(
                    name, value))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LossWeights":
        return cls(**data)


class LossTerms(NamedTuple):
    total: Tensor
    l1: Tensor
    kl: Tensor
    perceptual: Tensor
    gan: Tensor


class Discriminator(nn.Module):
    """Patch discriminator: stride-2 convolutions with leaky ReLU, then a per-patch logit."""

    def __init__(self, in_channels: int = 3, channels: int = 16, num_layers: int = 4, *,
                 seed: int = 0) -> None:
        super().__init__()
        assert num_layers >= 2
        generator = torch.Generator().manual_seed(seed)
        convs = []
        previous = in_channels
        for layer in range(num_layers - 1):
            width = channels * 2 ** min(layer, 2)
            convs += [Conv2d(previous, width, 3, stride=2, generator=generator)]
            previous = width
        self.convs = nn.ModuleList(convs)
        self.logit = Conv2d(previous, 1, 3, generator=generator)

    def forward(self, x: Tensor) -> Tensor:
        for conv in self.convs:
            x = F.leaky_relu(conv(x), 0.2)
        return self.logit(x)


def _check_pair(x: Tensor, xhat: Tensor) -> None:
    if x.shape != xhat.shape:
        raise ContractViolation("shape mismatch: {} vs {}".format(tuple(x.shape),
                                                                  tuple(xhat.shape)))


def recon_l1(x: Tensor, xhat: Tensor) -> Tensor:
    _check_pair(x, xhat)
    return (xhat - x).abs().mean()


def kl_gauss(dist: LatentDistribution) -> Tensor:
    """Per-element KL(q || N(0, I)), mean-reduced so the weight is ratio independent."""
    mu, logvar = dist.mu, dist.logvar
    return 0.5 * (mu * mu + torch.exp(logvar) - 1.0 - logvar).mean()


def perceptual_loss(x: Tensor, xhat: Tensor, extractor: FeatureExtractor,
                    feature_proxy: float = 0.2) -> Tensor:
    """Pyramid feature distance plus a weighted distance of globally pooled top features."""
    _check_pair(x, xhat)
    fx = extractor(x)
    fy = extractor(xhat)
    pooled = fx[-1].mean(dim=(-2, -1)) - fy[-1].mean(dim=(-2, -1))
    return pyramid_distance(fx, fy) + feature_proxy * (pooled * pooled).mean()


def gan_d_loss(d: Discriminator, x_real: Tensor, x_fake: Tensor, *,
               hinge: bool = False) -> Tensor:
    real = d(x_real)
    fake = d(x_fake.detach())
    if hinge:
        return F.relu(1.0 - real).mean() + F.relu(1.0 + fake).mean()
    return F.softplus(-real).mean() + F.softplus(fake).mean()


def gan_g_loss(d: Discriminator, x_fake: Tensor, *, hinge: bool = False) -> Tensor:
    fake = d(x_fake)
    if hinge:
        return -fake.mean()
    return F.softplus(-fake).mean()


def total_objective(x: Tensor, out: ForwardOutput, weights: LossWeights,
                    extractor: FeatureExtractor, d: Optional[Discriminator], phase: str, *,
                    hinge: bool = False) -> LossTerms:
    """Weighted objective for one phase; ``d=None`` disables the adversarial term."""
    zero = x.new_zeros(())
    if phase == DISCRIMINATOR:
        if d is None:
            raise ContractViolation("the discriminator phase needs a discriminator")
        d_loss = gan_d_loss(d, x, out.recon, hinge=hinge)
        return LossTerms(d_loss, zero, zero, zero, d_loss)
    if phase != GENERATOR:
        raise ContractViolation("phase must be {!r} or {!r}, got {!r}".format(
            GENERATOR, DISCRIMINATOR, phase))

    l1 = recon_l1(x, out.recon)
    kl = kl_gauss(out.dist)
    perceptual = perceptual_loss(x, out.recon, extractor, weights.feature_proxy)
    gan = zero if d is None else gan_g_loss(d, out.recon, hinge=hinge)
    total = weights.recon * l1 + weights.beta * kl + weights.gamma * perceptual
    if d is not None:
        total = total + weights.delta * gan
    return LossTerms(total, l1, kl, perceptual, gan)

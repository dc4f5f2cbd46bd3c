"""Nested variational autoencoder with one parameter set for three compression ratios.

The encoder is a stack of blocks whose spatial factor doubles block by block. The block
whose output factor equals a ratio is that ratio's *tap*: its activation goes through
the ratio's channel-matching adapter into the shared middle block, and the shared head
produces the latent mean and log-variance. The decoder mirrors this: a shared input
convolution and middle block, then the ratio's adapter routes into the upsampling stage
that mirrors the tap, bypassing the deeper stages.
"""
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Tuple

import torch
from torch import Tensor, nn

from ._backend import silu
from ._calibration import RatioSet
from ._errors import ConfigurationError, ContractViolation
from ._layers import Conv2d, Downsample, GroupNorm, MiddleBlock, ResnetBlock, Upsample
from ._types import Ratio

__all__ = ("NestedVaeConfig", "LatentDistribution", "LatentSample", "ForwardOutput",
           "NestedVae", "reparameterize", "LOGVAR_MIN", "LOGVAR_MAX",)

LOGVAR_MIN = -30.0
LOGVAR_MAX = 20.0


@dataclass(frozen=True)
class NestedVaeConfig:
    resolution: int = 64
    in_channels: int = 3
    block_out_channels: Tuple[int, ...] = (32, 64, 64, 128)
    latent_channels: int = 4
    ratios: RatioSet = field(default_factory=lambda: RatioSet(4, 8, 16))
    middle_block_units: int = 2
    norm_groups: int = 8
    layers_per_block: int = 1
    middle_channels: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_out_channels", tuple(self.block_out_channels))
        if isinstance(self.ratios, (list, tuple)):
            object.__setattr__(self, "ratios", RatioSet(*self.ratios))
        if self.resolution % self.ratios.f3 != 0:
            raise ConfigurationError("resolution {} is not divisible by f3={}".format(
                self.resolution, self.ratios.f3))
        if self.latent_channels < 1:
            raise ConfigurationError("latent_channels must be >= 1")
        if self.in_channels < 1:
            raise ConfigurationError("in_channels must be >= 1")
        if self.middle_block_units < 0 or self.layers_per_block < 1:
            raise ConfigurationError("middle_block_units must be >= 0, layers_per_block >= 1")
        halvings = self.ratios.f3.bit_length() - 1
        if len(self.block_out_channels) not in (halvings, halvings + 1):
            raise ConfigurationError(
                "f3={} needs {} or {} encoder blocks, got {}".format(
                    self.ratios.f3, halvings, halvings + 1, len(self.block_out_channels)))
        for channels in self.block_out_channels + (self.middle_width,):
            if channels % self.norm_groups != 0:
                raise ConfigurationError("{} channels are not divisible into {} groups".format(
                    channels, self.norm_groups))

    @property
    def middle_width(self) -> int:
        if self.middle_channels is None:
            return self.block_out_channels[-1]
        return self.middle_channels

    @property
    def block_downsamples(self) -> Tuple[bool, ...]:
        """Whether each encoder block halves resolution (at its start)."""
        halvings = self.ratios.f3.bit_length() - 1
        first = len(self.block_out_channels) == halvings
        return tuple(first or i > 0 for i in range(len(self.block_out_channels)))

    def factor_after(self, block: int) -> int:
        return 2 ** sum(self.block_downsamples[:block + 1])

    def tap_index(self, ratio: Ratio) -> int:
        if ratio not in self.ratios:
            raise ConfigurationError("ratio {} is not one of {}".format(
                ratio, tuple(self.ratios)))
        for block in range(len(self.block_out_channels)):
            if self.factor_after(block) == ratio:
                return block
        raise ConfigurationError("no encoder block reaches factor {}".format(ratio))

    def latent_side(self, ratio: Ratio) -> int:
        self.tap_index(ratio)
        return self.resolution // ratio

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["block_out_channels"] = list(self.block_out_channels)
        data["ratios"] = self.ratios.to_list()
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NestedVaeConfig":
        data = dict(data)
        data["block_out_channels"] = tuple(data["block_out_channels"])
        data["ratios"] = RatioSet(*data["ratios"])
        return cls(**data)


@dataclass(frozen=True, eq=False)
class LatentDistribution:
    mu: Tensor
    logvar: Tensor
    ratio: Ratio

    def __post_init__(self) -> None:
        if self.mu.shape != self.logvar.shape:
            raise ContractViolation("mu shape {} differs from logvar shape {}".format(
                tuple(self.mu.shape), tuple(self.logvar.shape)))

    @property
    def spatial_side(self) -> int:
        return self.mu.shape[-1]

    @property
    def std(self) -> Tensor:
        return torch.exp(0.5 * self.logvar)


@dataclass(frozen=True, eq=False)
class LatentSample:
    z: Tensor
    ratio: Ratio

    @property
    def spatial_side(self) -> int:
        return self.z.shape[-1]


class ForwardOutput(NamedTuple):
    recon: Tensor
    dist: LatentDistribution
    z: LatentSample


def reparameterize(dist: LatentDistribution, rng_seed: int) -> LatentSample:
    generator = torch.Generator(device=dist.mu.device).manual_seed(rng_seed)
    eps = torch.randn(dist.mu.shape, generator=generator, dtype=dist.mu.dtype,
                      device=dist.mu.device)
    return LatentSample(dist.mu + dist.std * eps, dist.ratio)


class _EncoderBlock(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, downsample: bool,
                 config: NestedVaeConfig, generator: torch.Generator) -> None:
        super().__init__()
        self.downsample = Downsample(in_channels, generator=generator) if downsample else None
        resnets = []
        for layer in range(config.layers_per_block):
            width = in_channels if layer == 0 else out_channels
            resnets += [ResnetBlock(width, out_channels, config.norm_groups,
                                    generator=generator)]
        self.resnets = nn.ModuleList(resnets)

    def forward(self, x: Tensor) -> Tensor:
        if self.downsample is not None:
            x = self.downsample(x)
        for resnet in self.resnets:
            x = resnet(x)
        return x


class _DecoderBlock(nn.Module):
    def __init__(self, channels: int, out_channels: int, upsample: bool,
                 config: NestedVaeConfig, generator: torch.Generator) -> None:
        super().__init__()
        self.resnets = nn.ModuleList([
            ResnetBlock(channels, channels, config.norm_groups, generator=generator)
            for _ in range(config.layers_per_block)
        ])
        assert upsample or channels == out_channels
        self.upsample = Upsample(channels, out_channels, generator=generator) if upsample \
            else None

    def forward(self, x: Tensor) -> Tensor:
        for resnet in self.resnets:
            x = resnet(x)
        if self.upsample is not None:
            x = self.upsample(x)
        return x


class NestedVae(nn.Module):
    def __init__(self, config: NestedVaeConfig, *, seed: int = 0) -> None:
        super().__init__()
        self.config = config
        generator = torch.Generator().manual_seed(seed)
        channels = config.block_out_channels
        middle = config.middle_width
        groups = config.norm_groups

        self.conv_in = Conv2d(config.in_channels, channels[0], 3, generator=generator)
        blocks = []
        previous = channels[0]
        for width, downsample in zip(channels, config.block_downsamples):
            blocks += [_EncoderBlock(previous, width, downsample, config, generator)]
            previous = width
        self.down_blocks = nn.ModuleList(blocks)
        self.encoder_adapters = nn.ModuleDict({
            str(ratio): ResnetBlock(channels[config.tap_index(ratio)], middle, groups,
                                    generator=generator)
            for ratio in config.ratios
        })
        self.encoder_middle = MiddleBlock(middle, config.middle_block_units, groups,
                                          generator=generator)
        self.encoder_norm_out = GroupNorm(middle, groups)
        self.encoder_head = Conv2d(middle, 2 * config.latent_channels, 3, generator=generator)
        with torch.no_grad():
            self.encoder_head.bias.zero_()

        self.decoder_in = Conv2d(config.latent_channels, middle, 3, generator=generator)
        self.decoder_middle = MiddleBlock(middle, config.middle_block_units, groups,
                                          generator=generator)
        self.decoder_adapters = nn.ModuleDict({
            str(ratio): ResnetBlock(middle, channels[config.tap_index(ratio)], groups,
                                    generator=generator)
            for ratio in config.ratios
        })
        # up_blocks[s] mirrors encoder block len - 1 - s
        stages = []
        for block in reversed(range(len(channels))):
            out_width = channels[max(block - 1, 0)]
            stages += [_DecoderBlock(channels[block], out_width,
                                     config.block_downsamples[block], config, generator)]
        self.up_blocks = nn.ModuleList(stages)
        self.decoder_norm_out = GroupNorm(channels[0], groups)
        self.decoder_head = Conv2d(channels[0], config.in_channels, 3,
                                   generator=generator).zero_()

    def _check_image(self, image: Tensor) -> None:
        expected = (self.config.in_channels, self.config.resolution, self.config.resolution)
        if image.dim() not in (3, 4) or tuple(image.shape[-3:]) != expected:
            raise ContractViolation("image shape {} does not match (..., {}, {}, {})".format(
                tuple(image.shape), *expected))

    def encoder_features(self, image: Tensor, ratio: Ratio) -> List[Tensor]:
        """Encoder block outputs up to and including the tap for ``ratio``."""
        self._check_image(image)
        tap = self.config.tap_index(ratio)
        h = self.conv_in(image)
        features = []
        for block in self.down_blocks[:tap + 1]:
            h = block(h)
            features += [h]
        return features

    def encode(self, image: Tensor, ratio: Ratio) -> LatentDistribution:
        h = self.encoder_features(image, ratio)[-1]
        h = self.encoder_adapters[str(ratio)](h)
        h = self.encoder_middle(h)
        h = self.encoder_head(silu(self.encoder_norm_out(h)))
        mu, logvar = torch.chunk(h, 2, dim=-3)
        return LatentDistribution(mu, logvar.clamp(LOGVAR_MIN, LOGVAR_MAX), ratio)

    def decode(self, sample: LatentSample) -> Tensor:
        config = self.config
        side = config.latent_side(sample.ratio)
        expected = (config.latent_channels, side, side)
        z = sample.z
        if z.dim() not in (3, 4) or tuple(z.shape[-3:]) != expected:
            raise ContractViolation("latent shape {} does not match {} for ratio {}".format(
                tuple(z.shape), expected, sample.ratio))
        h = self.decoder_in(z)
        h = self.decoder_middle(h)
        h = self.decoder_adapters[str(sample.ratio)](h)
        start = len(self.up_blocks) - 1 - config.tap_index(sample.ratio)
        for stage in self.up_blocks[start:]:
            h = stage(h)
        return self.decoder_head(silu(self.decoder_norm_out(h)))

    def forward(self, image: Tensor, ratio: Ratio, rng_seed: int = 0) -> ForwardOutput:
        dist = self.encode(image, ratio)
        sample = reparameterize(dist, rng_seed)
        return ForwardOutput(self.decode(sample), dist, sample)

    def adapter_parameters(self, ratio: Ratio) -> List[nn.Parameter]:
        key = str(ratio)
        return list(self.encoder_adapters[key].parameters()) + \
            list(self.decoder_adapters[key].parameters())

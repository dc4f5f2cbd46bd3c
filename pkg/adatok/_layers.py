import math
from typing import Optional

import torch
from torch import Tensor, nn

from ._backend import (
    AttentionParams,
    attention_layer,
    conv2d,
    group_norm,
    silu,
    upsample_nearest,
)

__all__ = ("Conv2d", "GroupNorm", "ResnetBlock", "AttentionBlock", "MiddleBlock",
           "Downsample", "Upsample",)


def _uniform_(tensor: Tensor, fan_in: int, generator: Optional[torch.Generator]) -> None:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=generator)


class Conv2d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, *,
                 stride: int = 1, generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        self.stride = stride
        self.padding = kernel_size // 2
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels,
                                               kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.empty(out_channels))
        fan_in = in_channels * kernel_size * kernel_size
        _uniform_(self.weight, fan_in, generator)
        _uniform_(self.bias, fan_in, generator)

    def zero_(self) -> "Conv2d":
        with torch.no_grad():
            self.weight.zero_()
            self.bias.zero_()
        return self

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class GroupNorm(nn.Module):
    def __init__(self, channels: int, groups: int, eps: float = 1e-6) -> None:
        super().__init__()
        self.groups = groups
        self.eps = eps
        self.gamma = nn.Parameter(torch.ones(channels))
        self.beta = nn.Parameter(torch.zeros(channels))

    def forward(self, x: Tensor) -> Tensor:
        return group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class ResnetBlock(nn.Module):
    """Two 3x3 convolutions with a skip; a 1x1 projection when the width changes."""

    def __init__(self, in_channels: int, out_channels: int, groups: int, *,
                 generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        self.norm1 = GroupNorm(in_channels, groups)
        self.conv1 = Conv2d(in_channels, out_channels, 3, generator=generator)
        self.norm2 = GroupNorm(out_channels, groups)
        self.conv2 = Conv2d(out_channels, out_channels, 3, generator=generator)
        self.shortcut: Optional[Conv2d] = None
        if in_channels != out_channels:
            self.shortcut = Conv2d(in_channels, out_channels, 1, generator=generator)

    def forward(self, x: Tensor) -> Tensor:
        h = self.conv1(silu(self.norm1(x)))
        h = self.conv2(silu(self.norm2(h)))
        residual = x if self.shortcut is None else self.shortcut(x)
        return residual + h


class AttentionBlock(nn.Module):
    def __init__(self, channels: int, groups: int, *,
                 generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        self.norm = GroupNorm(channels, groups)
        names = ("q", "k", "v", "out")
        for name in names:
            weight = nn.Parameter(torch.empty(channels, channels))
            bias = nn.Parameter(torch.empty(channels))
            _uniform_(weight, channels, generator)
            _uniform_(bias, channels, generator)
            self.register_parameter("{}_weight".format(name), weight)
            self.register_parameter("{}_bias".format(name), bias)

    def params(self) -> AttentionParams:
        return AttentionParams(*(getattr(self, field) for field in AttentionParams._fields))

    def forward(self, x: Tensor) -> Tensor:
        return attention_layer(self.norm(x), self.params(), residual=x)


class MiddleBlock(nn.Module):
    """``units`` repetitions of (resnet, attention) at a fixed channel width.

    No parameter depends on the spatial size, so one instance serves every ratio.
    """

    def __init__(self, channels: int, units: int, groups: int, *,
                 generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        layers = []
        for _ in range(units):
            layers += [ResnetBlock(channels, channels, groups, generator=generator),
                       AttentionBlock(channels, groups, generator=generator)]
        self.layers = nn.ModuleList(layers)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class Downsample(nn.Module):
    def __init__(self, channels: int, *, generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        self.conv = Conv2d(channels, channels, 3, stride=2, generator=generator)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(x)


class Upsample(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, *,
                 generator: Optional[torch.Generator] = None) -> None:
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, 3, generator=generator)

    def forward(self, x: Tensor) -> Tensor:
        return self.conv(upsample_nearest(x, 2))

from typing import List, Sequence

import torch
from torch import Tensor, nn

from ._backend import silu
from ._layers import Conv2d

__all__ = ("FeatureExtractor",)


class FeatureExtractor(nn.Module):
    """Fixed, randomly initialized convolutional pyramid standing in for pretrained features.

    Level 0 keeps resolution; every further level halves it. Parameters never require
    gradients.
    """

    def __init__(self, in_channels: int = 3, widths: Sequence[int] = (8, 16, 32), *,
                 seed: int = 1234) -> None:
        super().__init__()
        self.seed = seed
        generator = torch.Generator().manual_seed(seed)
        convs = []
        previous = in_channels
        for level, width in enumerate(widths):
            convs += [Conv2d(previous, width, 3, stride=1 if level == 0 else 2,
                             generator=generator)]
            previous = width
        self.convs = nn.ModuleList(convs)
        self.requires_grad_(False)

    def train(self, mode: bool = True) -> "FeatureExtractor":
        return super().train(False)

    def forward(self, x: Tensor) -> List[Tensor]:
        features = []
        for conv in self.convs:
            x = silu(conv(x))
            features += [x]
        return features

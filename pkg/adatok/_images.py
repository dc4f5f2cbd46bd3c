from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image
from torch import Tensor

from ._errors import ContractViolation

__all__ = ("to_uint8", "from_uint8", "load_png", "save_png",)

PathLike = Union[str, Path]


def to_uint8(image: Tensor) -> np.ndarray:
    """``(c, h, w)`` tensor in [0, 1] to an ``(h, w, c)`` uint8 array, round-half-even."""
    if image.dim() != 3:
        raise ContractViolation("expected an image of shape (c, h, w), got {}".format(
            tuple(image.shape)))
    array = image.detach().cpu().to(torch.float64).clamp(0.0, 1.0).numpy() * 255.0
    return np.rint(array).astype(np.uint8).transpose(1, 2, 0)


def from_uint8(array: np.ndarray) -> Tensor:
    if array.ndim == 2:
        array = array[:, :, None]
    return torch.from_numpy(array.transpose(2, 0, 1).astype(np.float32) / 255.0)


def load_png(path: PathLike) -> Tensor:
    with Image.open(path) as image:
        return from_uint8(np.asarray(image.convert("RGB")))


def save_png(image: Tensor, path: PathLike) -> None:
    array = to_uint8(image)
    if array.shape[2] == 1:
        Image.fromarray(array[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(array, mode="RGB").save(path, format="PNG")

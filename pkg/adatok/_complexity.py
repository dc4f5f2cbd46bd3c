"""Image complexity: caption-side descriptions and scores, and pixel-side baselines."""
import io
import math
import re
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Sequence

import numpy as np
import torch
from PIL import Image
from scipy.fft import dctn
from torch import Tensor

from ._errors import ContractViolation, ScoreRangeError
from ._features import FeatureExtractor
from ._images import to_uint8

__all__ = ("ImageDescription", "ComplexityScore", "PixelMetrics", "heuristic_mock_score",
           "label_caption", "luma_quant_table", "dct_complexity", "encoded_size_complexity",
           "pillow_jpeg_encoder", "pixel_metrics", "pyramid_distance", "lpips_proxy",
           "PSNR_SENTINEL",)

PSNR_SENTINEL = 100.0

_STOPWORDS = frozenset("""
a an the in on of at to with and or for from by into onto over under near its it is are
this that there some many few two three one image picture photo photograph view shot
""".split())

LUMA_QUANT_MATRIX = np.array([
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
], dtype=np.int64).reshape(8, 8)


@dataclass(frozen=True)
class ImageDescription:
    caption: str
    has_text: bool = False
    has_faces: bool = False

    def __post_init__(self) -> None:
        if not self.caption or not self.caption.strip():
            raise ContractViolation("caption must be non-empty")

    def to_json(self) -> Dict[str, Any]:
        return {"caption": self.caption, "has_text": self.has_text,
                "has_faces": self.has_faces}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "ImageDescription":
        flags = []
        for key in ("has_text", "has_faces"):
            value = data.get(key, False)
            if not isinstance(value, bool):
                raise TypeError("{} must be true or false, got {!r}".format(key, value))
            flags += [value]
        return cls(str(data["caption"]), *flags)


@dataclass(frozen=True)
class ComplexityScore:
    value: int
    response: Optional[str] = field(default=None, compare=False)
    source: str = field(default="heuristic", compare=False)
    attempts: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if not 1 <= self.value <= 9:
            raise ScoreRangeError("score {} outside 1..9".format(self.value))

    def __int__(self) -> int:
        return self.value


class PixelMetrics(NamedTuple):
    mse: float
    psnr: float


def label_caption(label: str) -> str:
    """Caption used when only a class label is known."""
    return "this is an image of {}".format(label)


def heuristic_mock_score(desc: ImageDescription) -> ComplexityScore:
    """Deterministic offline score.

    Base is ``1 + distinct_content_words // 2`` clamped to 1..5, where content words are
    alphabetic tokens of three or more letters outside a small stopword list; +2 for text,
    +2 for faces, clamped to 1..9.
    """
    tokens = re.findall(r"[a-z]+", desc.caption.lower())
    content = {token for token in tokens if len(token) > 2 and token not in _STOPWORDS}
    score = min(max(1 + len(content) // 2, 1), 5)
    if desc.has_text:
        score += 2
    if desc.has_faces:
        score += 2
    return ComplexityScore(min(max(score, 1), 9), source="heuristic")


def luma_quant_table(quality: int) -> np.ndarray:
    """IJG luminance quantization table scaled to ``quality`` (baseline, max 255)."""
    if not 1 <= quality <= 100:
        raise ContractViolation("quality must lie in 1..100, got {}".format(quality))
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    table = (LUMA_QUANT_MATRIX * scale + 50) // 100
    return np.clip(table, 1, 255)


def _luma(image: Tensor) -> np.ndarray:
    if image.dim() != 3 or image.numel() == 0:
        raise ContractViolation("expected a non-empty image of shape (c, h, w), got {}".format(
            tuple(image.shape)))
    pixels = image.detach().cpu().to(torch.float64).numpy()
    if pixels.shape[0] == 1:
        return pixels[0]
    if pixels.shape[0] != 3:
        raise ContractViolation("expected 1 or 3 channels, got {}".format(pixels.shape[0]))
    return 0.299 * pixels[0] + 0.587 * pixels[1] + 0.114 * pixels[2]


def dct_complexity(image: Tensor, quality: int = 75) -> int:
    """Coded 8x8 DCT coefficients of the luma plane: one DC per block plus nonzero AC.

    A monotone proxy for baseline JPEG size; dimensions are edge-padded to multiples of 8.
    """
    table = luma_quant_table(quality)
    luma = _luma(image) * 255.0 - 128.0
    height, width = luma.shape
    pad_h, pad_w = (-height) % 8, (-width) % 8
    if pad_h or pad_w:
        luma = np.pad(luma, ((0, pad_h), (0, pad_w)), mode="edge")
    rows, cols = luma.shape[0] // 8, luma.shape[1] // 8
    blocks = luma.reshape(rows, 8, cols, 8).transpose(0, 2, 1, 3)
    coefficients = dctn(blocks, type=2, axes=(-2, -1), norm="ortho")
    quantized = np.rint(coefficients / table)
    quantized[..., 0, 0] = 0
    # baseline JPEG codes every DC term, zero or not
    return rows * cols + int(np.count_nonzero(quantized))


def pillow_jpeg_encoder(quality: int = 75) -> Callable[[np.ndarray], bytes]:
    def encode(array: np.ndarray) -> bytes:
        buffer = io.BytesIO()
        mode = "L" if array.shape[2] == 1 else "RGB"
        Image.fromarray(array.squeeze(2) if mode == "L" else array, mode=mode).save(
            buffer, format="JPEG", quality=quality)
        return buffer.getvalue()
    return encode


def encoded_size_complexity(image: Tensor, encoder: Optional[Callable[[np.ndarray], bytes]]
                            = None, *, quality: int = 75) -> int:
    """Byte size of ``image`` under a real codec (baseline JPEG via Pillow by default)."""
    if image.dim() != 3 or image.numel() == 0:
        raise ContractViolation("expected a non-empty image of shape (c, h, w)")
    if encoder is None:
        encoder = pillow_jpeg_encoder(quality)
    return len(encoder(to_uint8(image)))


def pixel_metrics(x: Tensor, xhat: Tensor) -> PixelMetrics:
    if x.shape != xhat.shape:
        raise ContractViolation("shape mismatch: {} vs {}".format(tuple(x.shape),
                                                                  tuple(xhat.shape)))
    diff = x.detach().to(torch.float64) - xhat.detach().to(torch.float64)
    mse = float((diff * diff).mean())
    if mse == 0.0:
        return PixelMetrics(0.0, PSNR_SENTINEL)
    return PixelMetrics(mse, min(10.0 * math.log10(1.0 / mse), PSNR_SENTINEL))


def _unit_normalize(features: Tensor, eps: float = 1e-10) -> Tensor:
    norm = torch.sqrt((features * features).sum(dim=-3, keepdim=True))
    return features / (norm + eps)


def pyramid_distance(fx: Sequence[Tensor], fy: Sequence[Tensor]) -> Tensor:
    distances = []
    for a, b in zip(fx, fy):
        delta = _unit_normalize(a) - _unit_normalize(b)
        distances += [(delta * delta).mean()]
    return torch.stack(distances).mean()


def lpips_proxy(x: Tensor, xhat: Tensor, extractor: FeatureExtractor) -> Tensor:
    """Mean over pyramid levels of the mean squared distance of channel-normalized features."""
    if x.shape != xhat.shape:
        raise ContractViolation("shape mismatch: {} vs {}".format(tuple(x.shape),
                                                                  tuple(xhat.shape)))
    return pyramid_distance(extractor(x), extractor(xhat))

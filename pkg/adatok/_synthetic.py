"""Offline three-stratum corpus: flat gradients, textured blobs and glyph grids.

Captions are written so the heuristic scorer orders the strata: flat images score 3,
textures 5 and glyph grids 6 (text flag included).
"""
from typing import List, NamedTuple

import numpy as np
import torch
from torch import Tensor

from ._complexity import ImageDescription

__all__ = ("STRATA", "SyntheticImage", "flat_gradient", "textured_blobs", "glyph_grid",
           "generate_corpus",)

STRATA = ("flat", "texture", "glyphs")

_COLORS = (
    ("red", (0.85, 0.15, 0.15)),
    ("green", (0.2, 0.7, 0.25)),
    ("blue", (0.15, 0.3, 0.85)),
    ("yellow", (0.9, 0.85, 0.2)),
    ("purple", (0.55, 0.2, 0.7)),
    ("orange", (0.95, 0.55, 0.1)),
    ("white", (0.95, 0.95, 0.95)),
    ("black", (0.05, 0.05, 0.05)),
)


class SyntheticImage(NamedTuple):
    id: str
    image: Tensor
    description: ImageDescription
    stratum: str


def _grid(resolution: int) -> np.ndarray:
    axis = (np.arange(resolution) + 0.5) / resolution
    return np.stack(np.meshgrid(axis, axis, indexing="ij"))


def _two_colors(rng: np.random.Generator) -> List[int]:
    return [int(i) for i in rng.choice(len(_COLORS), size=2, replace=False)]


def flat_gradient(rng: np.random.Generator, resolution: int = 64) -> SyntheticImage:
    first, second = _two_colors(rng)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    yy, xx = _grid(resolution)
    t = (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5)) / np.sqrt(0.5) + 0.5
    t = np.clip(t, 0.0, 1.0)
    start = np.asarray(_COLORS[first][1])[:, None, None]
    end = np.asarray(_COLORS[second][1])[:, None, None]
    pixels = start * (1.0 - t) + end * t
    caption = "a smooth gradient from {} to {}".format(_COLORS[first][0], _COLORS[second][0])
    return SyntheticImage("", _to_tensor(pixels), ImageDescription(caption), "flat")


def textured_blobs(rng: np.random.Generator, resolution: int = 64) -> SyntheticImage:
    yy, xx = _grid(resolution)
    background = np.asarray(_COLORS[int(rng.integers(len(_COLORS)))][1])[:, None, None]
    pixels = np.broadcast_to(background, (3, resolution, resolution)).copy()
    for _ in range(int(rng.integers(4, 9))):
        cy, cx = rng.uniform(0.0, 1.0, size=2)
        radius = rng.uniform(0.05, 0.2)
        weight = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius ** 2))
        color = rng.uniform(0.0, 1.0, size=3)[:, None, None]
        pixels = pixels * (1.0 - weight) + color * weight
    frequency = rng.uniform(6.0, 14.0)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    ripples = 0.08 * np.sin(2.0 * np.pi * frequency * (xx + 0.5 * yy) + phase)
    pixels = pixels + ripples + rng.normal(0.0, 0.03, size=pixels.shape)
    caption = "a textured surface covered with soft colored blobs and fine rippled patterns"
    return SyntheticImage("", _to_tensor(pixels), ImageDescription(caption), "texture")


def glyph_grid(rng: np.random.Generator, resolution: int = 64,
               cell: int = 4) -> SyntheticImage:
    """Rows of random 3x3 glyphs, one per ``cell``-sized square, dark ink on light paper."""
    cells = resolution // cell
    glyphs = rng.random((cells, cells, 3, 3)) < 0.5
    ink = np.zeros((resolution, resolution), dtype=bool)
    for row in range(cells):
        for col in range(cells):
            top, left = row * cell, col * cell
            ink[top:top + 3, left:left + 3] = glyphs[row, col]
    paper = rng.uniform(0.85, 1.0)
    shade = rng.uniform(0.0, 0.2)
    plane = np.where(ink, shade, paper)
    pixels = np.stack([plane, plane, plane])
    caption = "a dense page of printed characters arranged in many rows and columns"
    return SyntheticImage("", _to_tensor(pixels), ImageDescription(caption, has_text=True),
                          "glyphs")


def _to_tensor(pixels: np.ndarray) -> Tensor:
    return torch.from_numpy(np.clip(pixels, 0.0, 1.0).astype(np.float32))


_MAKERS = {"flat": flat_gradient, "texture": textured_blobs, "glyphs": glyph_grid}


def generate_corpus(per_stratum: int, resolution: int = 64, *,
                    seed: int = 0) -> List[SyntheticImage]:
    """``per_stratum`` images of each stratum, ids ``<stratum>-<index>``, interleaved."""
    assert per_stratum >= 0
    rng = np.random.default_rng(seed)
    corpus = []
    for index in range(per_stratum):
        for stratum in STRATA:
            item = _MAKERS[stratum](rng, resolution)
            corpus += [item._replace(id="{}-{:04d}".format(stratum, index))]
    return corpus

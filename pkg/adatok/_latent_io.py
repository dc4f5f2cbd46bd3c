"""CATL: a stream of variable-shape latents.

Header ``"CATL" | u16 version | u16 latent_channels | u32 record_count``; each record is
``u16 id_len | id | u16 ratio | u16 spatial_side | u8 kind | f32 payload``. Kind 1
carries mu then logvar, kind 2 a sample z. Little-endian throughout, no padding.
"""
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor

from ._binary import BinaryReader, pack_array, pack_str
from ._errors import ContractViolation
from ._nested_vae import LatentDistribution, LatentSample

__all__ = ("LATENT_MAGIC", "LATENT_VERSION", "KIND_DISTRIBUTION", "KIND_SAMPLE",
           "LatentFileHeader", "LatentFileRecord", "encode_latents", "decode_latents",
           "write_latents", "read_latents",)

PathLike = Union[str, Path]

LATENT_MAGIC = b"CATL"
LATENT_VERSION = 1
KIND_DISTRIBUTION = 1
KIND_SAMPLE = 2

_HEADER = struct.Struct("<4sHHI")
_ARRAYS_PER_KIND = {KIND_DISTRIBUTION: 2, KIND_SAMPLE: 1}


@dataclass(frozen=True)
class LatentFileHeader:
    latent_channels: int
    record_count: int
    version: int = LATENT_VERSION


@dataclass(frozen=True, eq=False)
class LatentFileRecord:
    """One latent; ``arrays`` is ``(mu, logvar)`` for kind 1 and ``(z,)`` for kind 2."""

    id: str
    ratio: int
    kind: int
    arrays: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if self.kind not in _ARRAYS_PER_KIND:
            raise ContractViolation("unknown payload kind {}".format(self.kind))
        if len(self.arrays) != _ARRAYS_PER_KIND[self.kind]:
            raise ContractViolation("payload kind {} needs {} arrays, got {}".format(
                self.kind, _ARRAYS_PER_KIND[self.kind], len(self.arrays)))
        shapes = {array.shape for array in self.arrays}
        if len(shapes) != 1:
            raise ContractViolation("payload arrays differ in shape: {}".format(shapes))
        shape = self.arrays[0].shape
        if len(shape) != 3 or shape[1] != shape[2]:
            raise ContractViolation("payload must be (c, side, side), got {}".format(shape))

    @property
    def latent_channels(self) -> int:
        return int(self.arrays[0].shape[0])

    @property
    def spatial_side(self) -> int:
        return int(self.arrays[0].shape[1])

    @classmethod
    def from_distribution(cls, id: str, dist: LatentDistribution) -> "LatentFileRecord":
        return cls(id, dist.ratio, KIND_DISTRIBUTION, (_to_array(dist.mu),
                                                        _to_array(dist.logvar)))

    @classmethod
    def from_sample(cls, id: str, sample: LatentSample) -> "LatentFileRecord":
        return cls(id, sample.ratio, KIND_SAMPLE, (_to_array(sample.z),))

    def to_sample(self) -> LatentSample:
        """The sample, or the mean for a distribution record."""
        return LatentSample(torch.from_numpy(self.arrays[0].copy()), self.ratio)

    def to_distribution(self) -> LatentDistribution:
        if self.kind != KIND_DISTRIBUTION:
            raise ContractViolation("record {!r} holds a sample, not a distribution".format(
                self.id))
        mu, logvar = (torch.from_numpy(array.copy()) for array in self.arrays)
        return LatentDistribution(mu, logvar, self.ratio)

    def same_as(self, other: "LatentFileRecord") -> bool:
        """Field-wise and bit-wise equality."""
        return (self.id, self.ratio, self.kind) == (other.id, other.ratio, other.kind) and \
            all(a.shape == b.shape and a.tobytes() == b.tobytes()
                for a, b in zip(self.arrays, other.arrays))


DecodedLatents = Tuple[LatentFileHeader, List[LatentFileRecord]]


def _to_array(tensor: Tensor) -> np.ndarray:
    if tensor.dim() == 4 and tensor.shape[0] == 1:
        tensor = tensor[0]
    return tensor.detach().cpu().to(torch.float32).numpy()


def encode_latents(records: Sequence[LatentFileRecord],
                   latent_channels: Optional[int] = None) -> bytes:
    channels = {record.latent_channels for record in records}
    if latent_channels is not None:
        channels.add(latent_channels)
    if len(channels) > 1:
        raise ContractViolation("records mix latent channel counts {}".format(
            sorted(channels)))
    parts = [_HEADER.pack(LATENT_MAGIC, LATENT_VERSION, channels.pop() if channels else 0,
                          len(records))]
    for record in records:
        parts += [pack_str(record.id),
                  struct.pack("<HHB", record.ratio, record.spatial_side, record.kind)]
        parts += [pack_array(array) for array in record.arrays]
    return b"".join(parts)


def decode_latents(data: bytes, *, what: str = "latent file") -> DecodedLatents:
    reader = BinaryReader(data, what=what)
    magic = reader.take(4, "magic")
    if magic != LATENT_MAGIC:
        raise reader.fail("bad magic {!r}".format(magic), 0)
    version = reader.u16("version")
    if version != LATENT_VERSION:
        raise reader.fail("unsupported version {}".format(version), 4)
    header = LatentFileHeader(reader.u16("latent channels"), reader.u32("record count"),
                              version)

    records = []
    for index in range(header.record_count):
        reader.record_index = index
        image_id = reader.string("record id")
        ratio, side, kind = reader.unpack("HHB", "record header")
        if kind not in _ARRAYS_PER_KIND:
            raise reader.fail("unknown payload kind {}".format(kind), reader.offset - 1)
        count = header.latent_channels * side * side
        shape = (header.latent_channels, side, side)
        arrays = tuple(reader.floats(count, "payload").reshape(shape)
                       for _ in range(_ARRAYS_PER_KIND[kind]))
        records += [LatentFileRecord(image_id, ratio, kind, arrays)]
    reader.record_index = None
    if reader.remaining:
        raise reader.fail("{} trailing bytes after {} declared records".format(
            reader.remaining, header.record_count))
    return header, records


def write_latents(records: Sequence[LatentFileRecord], path: PathLike, *,
                  latent_channels: Optional[int] = None) -> int:
    """Write ``records`` in order; returns the number of bytes written."""
    data = encode_latents(records, latent_channels)
    try:
        with open(path, "wb") as f:
            f.write(data)
    except OSError as e:
        raise OSError("cannot write latents to {}: {}".format(path, e)) from e
    return len(data)


def read_latents(path: PathLike) -> List[LatentFileRecord]:
    with open(path, "rb") as f:
        data = f.read()
    return decode_latents(data, what=str(path))[1]

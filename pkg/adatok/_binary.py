"""Little-endian primitives shared by the latent and checkpoint formats."""
import struct
from typing import Dict, Optional, Tuple

import numpy as np
import torch
from torch import Tensor

from ._errors import FormatError

__all__ = ("BinaryReader", "pack_str", "pack_array", "pack_tensor_table",)


def pack_str(text: str) -> bytes:
    data = text.encode("utf-8")
    if len(data) > 0xFFFF:
        raise FormatError("name too long for a u16 length prefix: {!r}".format(text[:40]))
    return struct.pack("<H", len(data)) + data


def pack_array(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def pack_tensor_table(tensors: Dict[str, Tensor]) -> bytes:
    """``u32 count`` then, per tensor, ``name | u8 ndim | u32 dims | f32 data``."""
    parts = [struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        array = tensor.detach().cpu().to(torch.float32).numpy()
        parts += [pack_str(name), struct.pack("<B", array.ndim)]
        parts += [struct.pack("<{}I".format(array.ndim), *array.shape), pack_array(array)]
    return b"".join(parts)


class BinaryReader:
    def __init__(self, data: bytes, *, offset: int = 0, what: str = "file") -> None:
        self.data = data
        self.offset = offset
        self.what = what
        self.record_index: Optional[int] = None

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def fail(self, message: str, offset: Optional[int] = None) -> FormatError:
        return FormatError("{}: {}".format(self.what, message),
                           offset=self.offset if offset is None else offset,
                           record_index=self.record_index)

    def take(self, count: int, what: str) -> bytes:
        if count > self.remaining:
            raise self.fail("truncated {}: need {} bytes, {} left".format(
                what, count, self.remaining))
        chunk = self.data[self.offset:self.offset + count]
        self.offset += count
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple[int, ...]:
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt), what))

    def u8(self, what: str) -> int:
        return self.unpack("B", what)[0]

    def u16(self, what: str) -> int:
        return self.unpack("H", what)[0]

    def u32(self, what: str) -> int:
        return self.unpack("I", what)[0]

    def u64(self, what: str) -> int:
        return self.unpack("Q", what)[0]

    def string(self, what: str) -> str:
        start = self.offset
        raw = self.take(self.u16(what + " length"), what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise self.fail("{} is not valid UTF-8".format(what), start) from None

    def floats(self, count: int, what: str) -> np.ndarray:
        return np.frombuffer(self.take(4 * count, what), dtype="<f4").astype(np.float32)

    def tensor_table(self) -> Dict[str, Tensor]:
        tensors = {}
        for _ in range(self.u32("tensor count")):
            name = self.string("tensor name")
            if name in tensors:
                raise self.fail("duplicate tensor {!r}".format(name))
            ndim = self.u8("tensor rank")
            shape = self.unpack("{}I".format(ndim), "tensor shape") if ndim else ()
            count = int(np.prod(shape, dtype=np.int64)) if shape else 1
            array = self.floats(count, "tensor {!r}".format(name)).reshape(shape)
            tensors[name] = torch.from_numpy(array)
        return tensors

"""CATM model checkpoints.

``"CATM" | u16 version | u32 config_len | config JSON | tensor table`` followed by optional
sections ``tag(4) | u64 payload_len | payload``: ``DISC`` (discriminator tensor table),
``OPTG``/``OPTD`` (``u64 step | u64 skipped | tensor table`` of optimizer moments) and
``TRNS`` (trainer state JSON).
"""
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Union

from torch import Tensor, nn

from ._binary import BinaryReader, pack_tensor_table
from ._errors import FormatError
from ._nested_vae import NestedVae, NestedVaeConfig
from ._optim import AdamWState

__all__ = ("CHECKPOINT_MAGIC", "CHECKPOINT_VERSION", "Checkpoint", "encode_checkpoint",
           "decode_checkpoint", "save_checkpoint", "load_checkpoint", "load_model",)

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"CATM"
CHECKPOINT_VERSION = 1

TAG_DISCRIMINATOR = b"DISC"
TAG_GENERATOR_OPTIMIZER = b"OPTG"
TAG_DISCRIMINATOR_OPTIMIZER = b"OPTD"
TAG_TRAINER = b"TRNS"


def _dump_json(data: Dict[str, Any]) -> bytes:
    return json.dumps(data, sort_keys=True, separators=(",", ":")).encode("utf-8")


@dataclass(eq=False)
class Checkpoint:
    config: NestedVaeConfig
    params: Dict[str, Tensor]
    discriminator: Optional[Dict[str, Tensor]] = None
    generator_optimizer: Optional[AdamWState] = None
    discriminator_optimizer: Optional[AdamWState] = None
    trainer_state: Optional[Dict[str, Any]] = None

    def build_model(self) -> NestedVae:
        model = NestedVae(self.config)
        model.load_state_dict(self.params)
        return model


def _section(tag: bytes, payload: bytes) -> bytes:
    return tag + struct.pack("<Q", len(payload)) + payload


def _optimizer_payload(state: AdamWState) -> bytes:
    return struct.pack("<QQ", state.step, state.skipped) + pack_tensor_table(state.tensors())


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    config = _dump_json(ckpt.config.to_dict())
    parts = [CHECKPOINT_MAGIC, struct.pack("<HI", CHECKPOINT_VERSION, len(config)), config,
             pack_tensor_table(ckpt.params)]
    if ckpt.discriminator is not None:
        parts += [_section(TAG_DISCRIMINATOR, pack_tensor_table(ckpt.discriminator))]
    if ckpt.generator_optimizer is not None:
        parts += [_section(TAG_GENERATOR_OPTIMIZER,
                           _optimizer_payload(ckpt.generator_optimizer))]
    if ckpt.discriminator_optimizer is not None:
        parts += [_section(TAG_DISCRIMINATOR_OPTIMIZER,
                           _optimizer_payload(ckpt.discriminator_optimizer))]
    if ckpt.trainer_state is not None:
        parts += [_section(TAG_TRAINER, _dump_json(ckpt.trainer_state))]
    return b"".join(parts)


def _read_optimizer(reader: BinaryReader) -> AdamWState:
    step = reader.u64("optimizer step")
    skipped = reader.u64("optimizer skipped count")
    start = reader.offset
    try:
        return AdamWState.from_tensors(step, skipped, reader.tensor_table())
    except ValueError as e:
        raise reader.fail(str(e), start) from None


def _verify_params(reader: BinaryReader, config: NestedVaeConfig,
                   params: Dict[str, Tensor]) -> None:
    expected = NestedVae(config).state_dict()
    missing = [name for name in expected if name not in params]
    if missing:
        raise reader.fail("missing tensor(s) {}".format(", ".join(missing[:5])))
    unexpected = [name for name in params if name not in expected]
    if unexpected:
        raise reader.fail("unexpected tensor(s) {}".format(", ".join(unexpected[:5])))
    for name, tensor in expected.items():
        if tuple(params[name].shape) != tuple(tensor.shape):
            raise reader.fail("tensor {} has shape {}, config expects {}".format(
                name, tuple(params[name].shape), tuple(tensor.shape)))


def decode_checkpoint(data: bytes, *, what: str = "checkpoint") -> Checkpoint:
    reader = BinaryReader(data, what=what)
    magic = reader.take(4, "magic")
    if magic != CHECKPOINT_MAGIC:
        raise reader.fail("bad magic {!r}".format(magic), 0)
    version = reader.u16("version")
    if version != CHECKPOINT_VERSION:
        raise reader.fail("unsupported version {}".format(version), 4)
    start = reader.offset
    raw = reader.take(reader.u32("config length"), "config")
    try:
        config = NestedVaeConfig.from_dict(json.loads(raw.decode("utf-8")))
    except (ValueError, KeyError, TypeError) as e:
        raise reader.fail("bad model config: {}".format(e), start) from None
    params = reader.tensor_table()
    _verify_params(reader, config, params)
    ckpt = Checkpoint(config, params)

    seen = set()
    while reader.remaining:
        tag_offset = reader.offset
        tag = reader.take(4, "section tag")
        payload = reader.take(reader.u64("section length"), "section {!r}".format(tag))
        if tag in seen:
            raise reader.fail("duplicate section {!r}".format(tag), tag_offset)
        seen.add(tag)
        section = BinaryReader(payload, what="{} section {}".format(what, tag.decode(
            "ascii", "replace")))
        if tag == TAG_DISCRIMINATOR:
            ckpt.discriminator = section.tensor_table()
        elif tag == TAG_GENERATOR_OPTIMIZER:
            ckpt.generator_optimizer = _read_optimizer(section)
        elif tag == TAG_DISCRIMINATOR_OPTIMIZER:
            ckpt.discriminator_optimizer = _read_optimizer(section)
        elif tag == TAG_TRAINER:
            try:
                raw = section.take(section.remaining, "trainer state")
                ckpt.trainer_state = json.loads(raw.decode("utf-8"))
            except ValueError as e:
                raise reader.fail("bad trainer state: {}".format(e), tag_offset) from None
        else:
            continue
        if section.remaining:
            raise section.fail("{} trailing bytes".format(section.remaining))
    return ckpt


def save_checkpoint(path: PathLike, model: NestedVae, *,
                    discriminator: Optional[nn.Module] = None,
                    generator_optimizer: Optional[AdamWState] = None,
                    discriminator_optimizer: Optional[AdamWState] = None,
                    trainer_state: Optional[Dict[str, Any]] = None) -> int:
    """Write atomically (temporary file, then rename); returns the byte count."""
    ckpt = Checkpoint(model.config, dict(model.state_dict()),
                      None if discriminator is None else dict(discriminator.state_dict()),
                      generator_optimizer, discriminator_optimizer, trainer_state)
    data = encode_checkpoint(ckpt)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(data)
    os.replace(tmp, path)
    return len(data)


def load_checkpoint(path: PathLike) -> Checkpoint:
    with open(path, "rb") as f:
        data = f.read()
    return decode_checkpoint(data, what=str(path))


def load_model(path: PathLike) -> NestedVae:
    try:
        return load_checkpoint(path).build_model()
    except RuntimeError as e:
        raise FormatError("{}: {}".format(path, e)) from None

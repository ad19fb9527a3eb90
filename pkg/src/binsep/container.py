"""Self-describing binary tensor container.

Layout, all little-endian:

    magic   4 bytes  'BSRW'
    version u32
    desc    u32 byte length + UTF-8 structured text ('key = value' lines)
    records until EOF, each:
        name    u32 byte length + UTF-8 name
        rank    u32
        dims    rank * u32
        payload prod(dims) * float32

The descriptor is free-form key/value text; higher layers decide what a
given 'kind' of container must describe. A partial record at EOF is a
truncation error, never silently ignored.
"""

import struct
from pathlib import Path

import numpy as np

from .configio import parse_config

MAGIC = b"BSRW"
VERSION = 1

_MAX_RANK = 8
_MAX_DIM = 1 << 31


class ContainerError(ValueError):
    """Bad magic/version, truncated file, or inconsistent tensor shape."""


def _descriptor_text(descriptor: dict) -> str:
    lines = [f"{key} = {value}" for key, value in descriptor.items()]
    return "\n".join(lines) + "\n"


def _parse_descriptor(text: str, source: str) -> dict:
    sections = parse_config(text, source=source)
    if len(sections) > 1 or (sections and sections[0].name != ""):
        raise ContainerError(f"{source}: descriptor must be flat key = value text")
    if not sections:
        return {}
    return {key: value for key, (value, _) in sections[0].entries.items()}


def write_container(path, descriptor: dict, tensors: dict):
    """Write tensors (converted to float32) with a descriptor block."""
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", VERSION)
    desc = _descriptor_text(descriptor).encode("utf-8")
    blob += struct.pack("<I", len(desc))
    blob += desc
    for name, tensor in tensors.items():
        arr = np.ascontiguousarray(tensor, dtype=np.float32)
        encoded = name.encode("utf-8")
        blob += struct.pack("<I", len(encoded))
        blob += encoded
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes(order="C")
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ContainerError(f"{self.source}: truncated container")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.data)


def read_container(path):
    """Read (descriptor, tensors) from a container file.

    Tensors come back float32 in file order; callers cast as needed.
    """
    source = str(path)
    reader = _Reader(Path(path).read_bytes(), source)
    if reader.take(4) != MAGIC:
        raise ContainerError(f"{source}: bad magic (not a tensor container)")
    version = reader.u32()
    if version != VERSION:
        raise ContainerError(f"{source}: unsupported container version {version}")
    desc_len = reader.u32()
    descriptor = _parse_descriptor(reader.take(desc_len).decode("utf-8"), source)

    tensors = {}
    while not reader.exhausted:
        name_len = reader.u32()
        if name_len > 4096:
            raise ContainerError(f"{source}: implausible tensor name length {name_len}")
        name = reader.take(name_len).decode("utf-8")
        rank = reader.u32()
        if rank > _MAX_RANK:
            raise ContainerError(f"{source}: tensor {name!r} has implausible rank {rank}")
        dims = struct.unpack(f"<{rank}I", reader.take(4 * rank))
        n_values = 1
        for d in dims:
            if d == 0 or d > _MAX_DIM:
                raise ContainerError(f"{source}: tensor {name!r} has bad dimension {d}")
            n_values *= d
        payload = reader.take(4 * n_values)
        if name in tensors:
            raise ContainerError(f"{source}: duplicate tensor {name!r}")
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims)
    return descriptor, tensors

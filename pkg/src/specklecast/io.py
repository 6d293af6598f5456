"""File formats: the IRR4 binary tensor container, PNG export, INI configs.

IRR4 layout (all integers little-endian):

    magic   4 bytes  b"IRR4"
    version u16      currently 1
    ndim    u8       1, 2 or 3
    dims    ndim * u32
    payload prod(dims) * f64, row-major

A *named* container is a concatenation of records, each record being a
u16 name length, the UTF-8 name, then one IRR4 block.  Parameter
bundles (dissipation / upsampler weights) use this so a run can be
reproduced either from its seed or from the saved file.
"""

from __future__ import annotations

import configparser
import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"IRR4"
VERSION = 1

__all__ = [
    "save_tensor",
    "load_tensor",
    "tensor_bytes",
    "save_named_tensors",
    "load_named_tensors",
    "save_png",
    "read_config",
    "write_config",
]


def tensor_bytes(arr) -> bytes:
    """Serialize a 1-D/2-D/3-D float array to one IRR4 block."""
    a = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
    if a.ndim not in (1, 2, 3):
        raise ValueError(f"IRR4 stores 1-D, 2-D or 3-D tensors, got ndim={a.ndim}")
    header = MAGIC + struct.pack("<HB", VERSION, a.ndim)
    header += struct.pack(f"<{a.ndim}I", *a.shape)
    payload = a.astype("<f8").tobytes(order="C")
    return header + payload


def _parse_block(buf: bytes, offset: int) -> tuple[np.ndarray, int]:
    if buf[offset:offset + 4] != MAGIC:
        raise ValueError("not an IRR4 tensor (bad magic bytes)")
    offset += 4
    version, ndim = struct.unpack_from("<HB", buf, offset)
    offset += 3
    if version != VERSION:
        raise ValueError(f"unsupported IRR4 version {version}")
    if ndim not in (1, 2, 3):
        raise ValueError(f"unsupported IRR4 ndim {ndim}")
    dims = struct.unpack_from(f"<{ndim}I", buf, offset)
    offset += 4 * ndim
    count = int(np.prod(dims))
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(dims)
    offset += 8 * count
    return np.ascontiguousarray(arr.astype(np.float64)), offset


def save_tensor(path, arr) -> None:
    """Write one tensor to ``path`` in the IRR4 format."""
    Path(path).write_bytes(tensor_bytes(arr))


def load_tensor(path) -> np.ndarray:
    """Read one IRR4 tensor from ``path``."""
    buf = Path(path).read_bytes()
    arr, offset = _parse_block(buf, 0)
    if offset != len(buf):
        raise ValueError(f"trailing bytes after IRR4 payload in {path}")
    return arr


def save_named_tensors(path, tensors: dict) -> None:
    """Write an ordered name -> array mapping as a record sequence."""
    out = bytearray()
    for name, arr in tensors.items():
        encoded = str(name).encode("utf-8")
        out += struct.pack("<H", len(encoded)) + encoded + tensor_bytes(arr)
    Path(path).write_bytes(bytes(out))


def load_named_tensors(path) -> dict:
    """Read a record sequence back into an ordered name -> array dict."""
    buf = Path(path).read_bytes()
    offset = 0
    tensors: dict[str, np.ndarray] = {}
    while offset < len(buf):
        (name_len,) = struct.unpack_from("<H", buf, offset)
        offset += 2
        name = buf[offset:offset + name_len].decode("utf-8")
        offset += name_len
        arr, offset = _parse_block(buf, offset)
        tensors[name] = arr
    return tensors


def save_png(path, arr) -> None:
    """Export a field (grayscale) or 3-channel stack (RGB) as 8-bit PNG.

    Values are clipped to [0, 1] and mapped by ``round(v * 255)``.
    """
    a = np.asarray(arr, dtype=np.float64)
    quantized = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    if quantized.ndim == 2:
        img = Image.fromarray(quantized, mode="L")
    elif quantized.ndim == 3 and quantized.shape[0] == 3:
        img = Image.fromarray(np.moveaxis(quantized, 0, -1), mode="RGB")
    else:
        raise ValueError(f"PNG export needs a 2-D field or 3xHxW stack, got shape {a.shape}")
    img.save(Path(path), format="PNG")


def read_config(path) -> dict[str, dict[str, str]]:
    """Read a sectioned key-value config file into nested string dicts."""
    parser = configparser.ConfigParser()
    read = parser.read(Path(path))
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    return {section: dict(parser.items(section)) for section in parser.sections()}


def write_config(path, sections: dict[str, dict]) -> None:
    """Write nested dicts as a sectioned key-value config file."""
    parser = configparser.ConfigParser()
    for section, values in sections.items():
        parser[section] = {k: str(v) for k, v in values.items()}
    with open(Path(path), "w") as fh:
        parser.write(fh)

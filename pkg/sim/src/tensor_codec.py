"""
Named-tensor container used for network weight files
- Fixed preamble: magic, format version, JSON header length
- JSON header (sorted keys) followed by framed tensors
- Each tensor: name, explicit dimension list, row-major float64 little-endian data
"""
import json
import logging
import struct
from io import BytesIO
from pathlib import Path
from typing import Any, BinaryIO, Dict, Mapping, Optional, Tuple

import numpy as np

from src.errors import LoadFault

log = logging.getLogger(__name__)

MAGIC = b"IGNW"
FORMAT_VERSION = 1

PREAMBLE = struct.Struct("<4sHI")   # magic, version, header length
NAME_LEN = struct.Struct("<H")
NDIM = struct.Struct("<B")
DIM = struct.Struct("<I")


def _read_exact(stream: BinaryIO, n: int, what: str, tensor: Optional[str] = None) -> bytes:
    """Read exactly n bytes or fail with a load fault naming what was being read"""
    buf = stream.read(n)
    if len(buf) != n:
        raise LoadFault(f"truncated file while reading {what} ({len(buf)} of {n} bytes)", tensor=tensor)
    return buf


def encode_tensors(header: Mapping, tensors: Mapping[str, np.ndarray]) -> bytes:
    meta = dict(header)
    meta["format_version"] = FORMAT_VERSION
    meta["tensors"] = list(tensors.keys())
    header_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")

    out = BytesIO()
    out.write(PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(header_bytes)))
    out.write(header_bytes)
    for name, array in tensors.items():
        data = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        out.write(NAME_LEN.pack(len(encoded)))
        out.write(encoded)
        out.write(NDIM.pack(data.ndim))
        for dim in data.shape:
            out.write(DIM.pack(dim))
        out.write(data.tobytes(order="C"))
    return out.getvalue()


def decode_tensors(stream: BinaryIO, expected: Optional[Mapping[str, Tuple[int, ...]]] = None,
                   header_fields: Optional[Mapping[str, Any]] = None):
    """
    Parse a container; expected maps tensor name -> shape
    - header_fields are checked before any tensor is read
    - the first missing or mismatched tensor raises LoadFault naming it
    """
    magic, version, header_len = PREAMBLE.unpack(_read_exact(stream, PREAMBLE.size, "preamble"))
    if magic != MAGIC:
        raise LoadFault(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise LoadFault(f"unsupported format version {version}")
    try:
        header = json.loads(_read_exact(stream, header_len, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LoadFault(f"corrupt header: {exc}") from exc
    for key, want in (header_fields or {}).items():
        got = header.get(key)
        if got != want:
            raise LoadFault(f"header field {key} is {got!r}, expected {want!r}", field=key)

    tensors: Dict[str, np.ndarray] = {}
    for listed in header.get("tensors", []):
        (name_len,) = NAME_LEN.unpack(_read_exact(stream, NAME_LEN.size, "tensor name length", listed))
        name = _read_exact(stream, name_len, "tensor name", listed).decode("utf-8")
        (ndim,) = NDIM.unpack(_read_exact(stream, NDIM.size, "tensor rank", name))
        dims = tuple(DIM.unpack(_read_exact(stream, DIM.size, "tensor dims", name))[0] for _ in range(ndim))
        if expected is not None:
            want = expected.get(name)
            if want is None:
                raise LoadFault(f"unexpected tensor {name}", tensor=name)
            if tuple(want) != dims:
                raise LoadFault(f"tensor {name} has shape {dims}, expected {tuple(want)}", tensor=name)
        count = int(np.prod(dims)) if dims else 1
        raw = _read_exact(stream, 8 * count, "tensor data", name)
        tensors[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(dims)

    if expected is not None:
        for name in expected:
            if name not in tensors:
                raise LoadFault(f"missing tensor {name}", tensor=name)
    return header, tensors


def write_tensor_file(path: Path, header: Mapping, tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensors(header, tensors))
    log.info("Saved %d tensors to %s", len(tensors), path)
    return path


def read_tensor_file(path: Path, expected: Optional[Mapping[str, Tuple[int, ...]]] = None,
                     header_fields: Optional[Mapping[str, Any]] = None):
    path = Path(path)
    try:
        with open(path, "rb") as f:
            return decode_tensors(f, expected, header_fields)
    except OSError as exc:
        raise LoadFault(f"cannot read {path}: {exc}") from exc

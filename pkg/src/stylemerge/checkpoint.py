"""Named-tensor checkpoint files.

Layout (bit-exact): bytes 0-7 hold a little-endian u64 header length N;
bytes 8..8+N a JSON object mapping tensor names to
{"dtype": "F32"|"F16", "shape": [...], "data_offsets": [begin, end]}, with an
optional "__metadata__" string map; the rest is the tensor byte buffer with
offsets relative to its start. Writes are canonical: metadata first, names
sorted, offsets contiguous from zero, so identical checkpoints produce
bitwise-identical files.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointFormatError, ShapeError

_DTYPE_SIZE = {"F32": 4, "F16": 2}
_DTYPE_NP = {"F32": np.dtype("<f4"), "F16": np.dtype("<f2")}


@dataclass
class TensorRecord:
    """One named tensor. `data` is always float32 in memory; `dtype` records
    the on-disk precision (F16 payloads are up-converted on read)."""
    dtype: str
    shape: tuple
    data: np.ndarray

    def __post_init__(self):
        if self.dtype not in _DTYPE_SIZE:
            raise CheckpointFormatError(f"unsupported dtype {self.dtype!r}")
        self.shape = tuple(int(s) for s in self.shape)
        self.data = np.ascontiguousarray(self.data, dtype=np.float32).reshape(self.shape)


@dataclass
class Checkpoint:
    tensors: dict = field(default_factory=dict)   # name -> TensorRecord
    metadata: dict = field(default_factory=dict)  # str -> str

    def names(self):
        return sorted(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name].data

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def set(self, name: str, data: np.ndarray, dtype: str = "F32") -> None:
        if not name:
            raise CheckpointFormatError("tensor name must be non-empty")
        arr = np.ascontiguousarray(data, dtype=np.float32)
        self.tensors[name] = TensorRecord(dtype, arr.shape, arr)

    def copy(self) -> "Checkpoint":
        out = Checkpoint(metadata=dict(self.metadata))
        for name, rec in self.tensors.items():
            out.tensors[name] = TensorRecord(rec.dtype, rec.shape, rec.data.copy())
        return out


def _payload_bytes(rec: TensorRecord) -> bytes:
    return rec.data.astype(_DTYPE_NP[rec.dtype]).tobytes()


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    header = {}
    if ckpt.metadata:
        header["__metadata__"] = {str(k): str(v) for k, v in sorted(ckpt.metadata.items())}
    payloads = []
    offset = 0
    for name in sorted(ckpt.tensors):
        rec = ckpt.tensors[name]
        raw = _payload_bytes(rec)
        header[name] = {
            "dtype": rec.dtype,
            "shape": list(rec.shape),
            "data_offsets": [offset, offset + len(raw)],
        }
        payloads.append(raw)
        offset += len(raw)
    hdr = json.dumps(header, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(struct.pack("<Q", len(hdr)))
        f.write(hdr)
        for raw in payloads:
            f.write(raw)


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 8:
        raise CheckpointFormatError("truncated file: missing 8-byte header length")
    (hlen,) = struct.unpack("<Q", blob[:8])
    if len(blob) < 8 + hlen:
        raise CheckpointFormatError(
            f"truncated file: header length {hlen} exceeds file size {len(blob)}")
    try:
        header = json.loads(blob[8:8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"malformed JSON header: {e}") from e
    if not isinstance(header, dict):
        raise CheckpointFormatError("header is not a JSON object")

    buf = blob[8 + hlen:]
    ckpt = Checkpoint()
    meta = header.pop("__metadata__", {})
    if not isinstance(meta, dict):
        raise CheckpointFormatError("__metadata__ is not a string map")
    ckpt.metadata = {str(k): str(v) for k, v in meta.items()}

    spans = []
    for name, entry in header.items():
        if not name:
            raise CheckpointFormatError("empty tensor name in header")
        if not isinstance(entry, dict):
            raise CheckpointFormatError(f"entry for {name!r} is not an object")
        dtype = entry.get("dtype")
        if dtype not in _DTYPE_SIZE:
            raise CheckpointFormatError(f"unknown dtype {dtype!r} for tensor {name!r}")
        shape = entry.get("shape")
        if not isinstance(shape, list) or any(not isinstance(s, int) or s < 0 for s in shape):
            raise CheckpointFormatError(f"bad shape for tensor {name!r}: {shape!r}")
        offs = entry.get("data_offsets")
        if (not isinstance(offs, list) or len(offs) != 2
                or any(not isinstance(o, int) for o in offs)):
            raise CheckpointFormatError(f"bad data_offsets for tensor {name!r}: {offs!r}")
        begin, end = offs
        if begin < 0 or end < begin or end > len(buf):
            raise CheckpointFormatError(
                f"data_offsets out of bounds for tensor {name!r}: "
                f"[{begin}, {end}) vs buffer size {len(buf)}")
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        expected = n * _DTYPE_SIZE[dtype]
        if end - begin != expected:
            raise CheckpointFormatError(
                f"byte length mismatch for tensor {name!r}: "
                f"offsets give {end - begin}, dtype x shape gives {expected}")
        spans.append((begin, end, name))
        raw = np.frombuffer(buf[begin:end], dtype=_DTYPE_NP[dtype]).reshape(shape)
        ckpt.tensors[name] = TensorRecord(dtype, tuple(shape), raw.astype(np.float32))

    spans.sort()
    for (b0, e0, n0), (b1, e1, n1) in zip(spans, spans[1:]):
        if b1 < e0:
            raise CheckpointFormatError(f"overlapping data_offsets: {n0!r} and {n1!r}")
    return ckpt


@dataclass
class DiffReport:
    missing_in_a: list
    missing_in_b: list
    max_abs: dict  # shared name -> float

    def all_zero(self) -> bool:
        return (not self.missing_in_a and not self.missing_in_b
                and all(v == 0.0 for v in self.max_abs.values()))


def checkpoint_diff(a: Checkpoint, b: Checkpoint) -> DiffReport:
    names_a, names_b = set(a.tensors), set(b.tensors)
    report = DiffReport(
        missing_in_a=sorted(names_b - names_a),
        missing_in_b=sorted(names_a - names_b),
        max_abs={},
    )
    for name in sorted(names_a & names_b):
        ra, rb = a.tensors[name], b.tensors[name]
        if ra.shape != rb.shape:
            raise ShapeError(f"tensor {name!r}: shapes {ra.shape} and {rb.shape} differ")
        d = np.abs(ra.data - rb.data)
        report.max_abs[name] = float(d.max()) if d.size else 0.0
    return report


def fingerprint(path) -> str:
    """Hex sha256 of a file, for run manifests."""
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()

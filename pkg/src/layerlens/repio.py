"""On-disk tensor container and representation-set round-trip.

Container layout, all integers little-endian:

    magic "LLNS" | version u16 | tensor_count u32 | tensor*

    tensor := name_len u16 | name UTF-8 | dtype u8 | ndim u8
              | dims u64 * ndim | payload (row-major)

dtype tags: f32 = 1, f64 = 2. Tensor names are unique within a container.
Representation sets are stored in f32 ("R_0".."R_M") with a UTF-8 key=value
manifest sidecar at ``<path>.manifest``; all in-memory math runs in f64.

The reader is designed to survive arbitrary bytes: every read is bounds
checked against the buffer before it happens, payload sizes are validated
before allocation, and every failure surfaces as FormatError (or
ValidationError for semantic violations), never as an unstructured crash.
"""

from __future__ import annotations

import datetime
import os
import struct

import numpy as np

from .errors import FormatError, ValidationError
from .importance import Architecture, RepresentationSet
from .similarity import RepresentationMatrix, TokenRule

MAGIC = b"LLNS"
VERSION = 1
DTYPE_TAGS = {"f32": 1, "f64": 2}
TAG_DTYPES = {1: np.dtype("<f4"), 2: np.dtype("<f8")}
MANIFEST_SUFFIX = ".manifest"
MANIFEST_KEYS = (
    "model_id",
    "architecture",
    "layer_count",
    "sample_count",
    "token_rule",
    "dataset_id",
    "created_utc",
)


class _Cursor:
    """Bounds-checked sequential reader over an immutable byte string."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(
                f"truncated payload: needed {n} bytes for {what} at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def uint(self, size: int, what: str) -> int:
        return int.from_bytes(self.take(size, what), "little")

    @property
    def remaining(self) -> int:
        return len(self.data) - self.pos


def _atomic_write(path: str, data: bytes) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_tensors(path: str, tensors: dict, dtype: str = "f32") -> None:
    """Write named arrays to ``path`` in container order = dict order."""
    if dtype not in DTYPE_TAGS:
        raise ValidationError(f"dtype must be one of {sorted(DTYPE_TAGS)}, got {dtype!r}")
    tag = DTYPE_TAGS[dtype]
    np_dtype = TAG_DTYPES[tag]
    chunks = [MAGIC, struct.pack("<HI", VERSION, len(tensors))]
    seen = set()
    for name, array in tensors.items():
        encoded = str(name).encode("utf-8")
        if not 1 <= len(encoded) <= 0xFFFF:
            raise ValidationError(f"tensor name {name!r} must encode to 1..65535 bytes")
        if name in seen:
            raise ValidationError(f"duplicate tensor name {name!r}")
        seen.add(name)
        arr = np.ascontiguousarray(array, dtype=np_dtype)
        if arr.ndim > 0xFF:
            raise ValidationError(f"tensor {name!r} has too many dimensions: {arr.ndim}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", tag, arr.ndim))
        for dim in arr.shape:
            chunks.append(struct.pack("<Q", dim))
        chunks.append(arr.tobytes(order="C"))
    _atomic_write(path, b"".join(chunks))


def read_tensors(path: str) -> dict:
    """Read a container back as name -> float64 array, preserving file order."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    return parse_tensors(data)


def parse_tensors(data: bytes) -> dict:
    """Parse container bytes. Raises FormatError on any malformation."""
    cur = _Cursor(data)
    if cur.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a LLNS container")
    version = cur.uint(2, "version")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    count = cur.uint(4, "tensor count")
    tensors = {}
    for index in range(count):
        name_len = cur.uint(2, f"name length of tensor {index}")
        try:
            name = cur.take(name_len, f"name of tensor {index}").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor {index} name is not valid UTF-8") from exc
        if not name:
            raise FormatError(f"tensor {index} has an empty name")
        if name in tensors:
            raise FormatError(f"duplicate tensor name {name!r}")
        tag = cur.uint(1, f"dtype of {name!r}")
        if tag not in TAG_DTYPES:
            raise FormatError(f"unknown dtype tag {tag} on tensor {name!r}")
        np_dtype = TAG_DTYPES[tag]
        ndim = cur.uint(1, f"ndim of {name!r}")
        dims = tuple(cur.uint(8, f"dim {d} of {name!r}") for d in range(ndim))
        elements = 1
        for dim in dims:
            elements *= dim
        # Size math happens on Python ints before any allocation, so a corrupt
        # header claiming 2^60 elements fails as truncation. Individual dims
        # must also fit the platform index type: a zero dim next to a huge one
        # keeps the product small but would still overflow numpy's strides.
        index_max = np.iinfo(np.intp).max
        if elements > index_max or any(dim > index_max for dim in dims):
            raise FormatError(f"tensor {name!r} header claims an oversized shape")
        payload_len = elements * np_dtype.itemsize
        payload = cur.take(payload_len, f"payload of {name!r}")
        try:
            tensors[name] = (
                np.frombuffer(payload, dtype=np_dtype).astype(np.float64).reshape(dims)
            )
        except ValueError as exc:
            raise FormatError(f"tensor {name!r} payload does not fit its shape: {exc}") from exc
    if cur.remaining:
        raise FormatError(f"{cur.remaining} trailing bytes after the last tensor")
    return tensors


def _utc_now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_manifest(path: str, fields: dict) -> None:
    missing = [k for k in MANIFEST_KEYS if k not in fields]
    if missing:
        raise ValidationError(f"manifest missing keys: {missing}")
    lines = []
    for key in MANIFEST_KEYS:
        value = str(fields[key])
        if "\n" in value or "=" in value:
            raise ValidationError(f"manifest value for {key} may not contain '=' or newlines")
        lines.append(f"{key}={value}")
    _atomic_write(path, ("\n".join(lines) + "\n").encode("utf-8"))


def read_manifest(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("manifest is not valid UTF-8") from exc
    fields = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"manifest line {lineno} is not key=value: {line!r}")
        key, value = line.split("=", 1)
        if key in fields:
            raise FormatError(f"manifest repeats key {key!r}")
        fields[key] = value
    missing = [k for k in MANIFEST_KEYS if k not in fields]
    if missing:
        raise FormatError(f"manifest missing keys: {missing}")
    return fields


def manifest_path(path: str) -> str:
    return f"{path}{MANIFEST_SUFFIX}"


def write_representation_set(
    reps: RepresentationSet, path: str, dataset_id: str = "", created_utc: str = ""
) -> None:
    """Store R_0..R_M in f32 plus the manifest sidecar."""
    tensors = {f"R_{i}": m.data for i, m in enumerate(reps.matrices)}
    write_tensors(path, tensors, dtype="f32")
    write_manifest(
        manifest_path(path),
        {
            "model_id": reps.model_id,
            "architecture": reps.architecture.value,
            "layer_count": reps.layer_count,
            "sample_count": reps.sample_count,
            "token_rule": reps.architecture.token_rule.value,
            "dataset_id": dataset_id,
            "created_utc": created_utc or _utc_now(),
        },
    )


def read_representation_set(path: str) -> RepresentationSet:
    """Load and fully validate a representation set written by this module."""
    tensors = read_tensors(path)
    manifest = read_manifest(manifest_path(path))
    try:
        layer_count = int(manifest["layer_count"])
        sample_count = int(manifest["sample_count"])
    except ValueError as exc:
        raise FormatError(f"manifest counts are not integers: {exc}") from exc
    try:
        architecture = Architecture(manifest["architecture"])
    except ValueError:
        raise FormatError(
            f"manifest architecture {manifest['architecture']!r} unknown"
        ) from None
    try:
        token_rule = TokenRule(manifest["token_rule"])
    except ValueError:
        raise FormatError(f"manifest token_rule {manifest['token_rule']!r} unknown") from None
    if token_rule is not architecture.token_rule:
        raise FormatError(
            f"token_rule {token_rule.value} inconsistent with {architecture.value}"
        )
    expected = [f"R_{i}" for i in range(layer_count + 1)]
    if list(tensors) != expected:
        raise FormatError(
            f"container holds {list(tensors)} but manifest layer_count={layer_count} "
            f"expects {expected}"
        )
    matrices = []
    for i, name in enumerate(expected):
        arr = tensors[name]
        if arr.ndim != 2:
            raise FormatError(f"{name} is {arr.ndim}-D, expected 2-D")
        if arr.shape[0] != sample_count:
            raise FormatError(
                f"{name} has {arr.shape[0]} rows, manifest sample_count={sample_count}"
            )
        matrices.append(RepresentationMatrix(arr, i, token_rule))
    return RepresentationSet(
        tuple(matrices), architecture, manifest["model_id"], sample_count
    )

"""Compressed stream layout, NPY ingestion and job manifests.

Stream layout (all integers little-endian)::

    header   "DCBC" | version u16 (=1) | tensor_count u32
    record   kind u8 | name_len u16 | name utf-8 | rank u32 | dims u32 * rank
             | delta f32 | n_flags u8
             | [kind 2: codebook_size u32 | zero_index u32 | centers f32 * size]
             | payload_len u32 | payload | crc32 u32

The CRC-32 covers the whole record, from the kind byte to the end of the payload.

Record kinds: 0 = arithmetic-coded levels on the grid ``delta * level``;
1 = raw float32 values, stored uncompressed (delta = 0, n_flags = 0);
2 = arithmetic-coded codebook indices, ``value = centers[level + zero_index]``.
The context-model configuration (update rate, clamp, context layout and the
Exp-Golomb order cap of 31) is fixed by the version number.
"""

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bitio import BitSink, BitSource
from .errors import (BadMagicError, ChecksumError, ContractError, FormatError,
                     IngestionError, TruncatedStreamError, TruncationError,
                     UnsupportedVersionError)
from .quantizers import ImportanceMap, WeightTensor

MAGIC = b"DCBC"
VERSION = 1
HEADER_SIZE = 10

KIND_LEVELS, KIND_RAW, KIND_CODEBOOK = 0, 1, 2


@dataclass
class StreamHeader:
    magic: bytes = MAGIC
    version: int = VERSION
    tensor_count: int = 0


@dataclass
class TensorRecord:
    name: str
    shape: Tuple[int, ...]
    delta: float
    n_flags: int
    payload: bytes = field(repr=False)
    kind: int = KIND_LEVELS
    codebook: Optional[np.ndarray] = field(default=None, repr=False)
    zero_index: int = 0

    def __post_init__(self):
        self.shape = tuple(int(d) for d in self.shape)
        # the stream stores delta as f32; keep the in-memory value identical
        self.delta = float(np.float32(self.delta))
        if self.codebook is not None:
            self.codebook = np.asarray(self.codebook, dtype=np.float32).ravel()

    @property
    def count(self) -> int:
        return math.prod(self.shape)

    def validate(self):
        if self.kind not in (KIND_LEVELS, KIND_RAW, KIND_CODEBOOK):
            raise FormatError(f"{self.name}: unknown record kind {self.kind}")
        if self.kind == KIND_LEVELS and not (self.delta > 0 and math.isfinite(self.delta)):
            raise FormatError(f"{self.name}: step size must be positive, got {self.delta}")
        if self.kind != KIND_RAW and not 1 <= self.n_flags <= 255:
            raise FormatError(f"{self.name}: n_flags must be in 1..255")
        if self.kind == KIND_RAW and len(self.payload) != 4 * self.count:
            raise FormatError(f"{self.name}: raw payload holds {len(self.payload)} bytes "
                              f"for {self.count} float32 values")
        if self.kind == KIND_CODEBOOK:
            if self.codebook is None or not 0 <= self.zero_index < self.codebook.size:
                raise FormatError(f"{self.name}: codebook zero index out of range")


def write_stream(records: Sequence[TensorRecord]) -> bytes:
    sink = BitSink()
    sink.write_bytes(MAGIC)
    sink.write_bytes(VERSION.to_bytes(2, "little"))
    sink.write_bytes(len(records).to_bytes(4, "little"))
    for r in records:
        r.validate()
        start = len(sink)
        name = r.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise ContractError("tensor name too long")
        sink.write_byte(r.kind)
        sink.write_bytes(len(name).to_bytes(2, "little"))
        sink.write_bytes(name)
        sink.write_bytes(np.array([len(r.shape), *r.shape], dtype="<u4").tobytes())
        sink.write_bytes(np.array([r.delta], dtype="<f4").tobytes())
        sink.write_byte(r.n_flags)
        if r.kind == KIND_CODEBOOK:
            sink.write_bytes(np.array([r.codebook.size, r.zero_index], dtype="<u4").tobytes())
            sink.write_bytes(r.codebook.astype("<f4").tobytes())
        sink.write_bytes(len(r.payload).to_bytes(4, "little"))
        sink.write_bytes(r.payload)
        sink.write_bytes(zlib.crc32(sink.buffer[start:]).to_bytes(4, "little"))
    return sink.getvalue()


def _u(src: BitSource, n: int) -> int:
    return int.from_bytes(src.read_bytes(n), "little")


def read_header(src: BitSource) -> StreamHeader:
    try:
        magic = src.read_bytes(4)
    except TruncatedStreamError:
        raise TruncationError("stream shorter than its header") from None
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    try:
        version, count = _u(src, 2), _u(src, 4)
    except TruncatedStreamError:
        raise TruncationError("stream shorter than its header") from None
    if version != VERSION:
        raise UnsupportedVersionError(f"stream version {version} not supported (expected {VERSION})")
    return StreamHeader(magic, version, count)


def _read_record(src: BitSource, index: int) -> TensorRecord:
    name = f"#{index}"
    start = src.cursor // 8
    try:
        kind = _u(src, 1)
        raw_name = src.read_bytes(_u(src, 2))
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"record {index}: name is not valid UTF-8") from None
        rank = _u(src, 4)
        if rank > 64:
            raise FormatError(f"{name}: implausible rank {rank}")
        shape = tuple(np.frombuffer(src.read_bytes(4 * rank), dtype="<u4").tolist())
        delta = float(np.frombuffer(src.read_bytes(4), dtype="<f4")[0])
        n_flags = _u(src, 1)
        codebook, zero_index = None, 0
        if kind == KIND_CODEBOOK:
            size, zero_index = _u(src, 4), _u(src, 4)
            codebook = np.frombuffer(src.read_bytes(4 * size), dtype="<f4").copy()
        payload = src.read_bytes(_u(src, 4))
        end = src.cursor // 8
        crc = _u(src, 4)
    except TruncatedStreamError:
        raise TruncationError(f"stream truncated inside tensor {name!r}", tensor=name) from None
    if zlib.crc32(src.buffer[start:end]) != crc:
        raise ChecksumError(f"checksum mismatch in tensor {name!r}", tensor=name)
    rec = TensorRecord(name, shape, delta, n_flags, payload, kind, codebook, zero_index)
    rec.validate()
    return rec


def read_stream(data: bytes) -> List[TensorRecord]:
    src = BitSource(data)
    header = read_header(src)
    records = [_read_record(src, i) for i in range(header.tensor_count)]
    if src.bits_remaining:
        raise FormatError(f"{src.bits_remaining // 8} trailing bytes after the last record")
    return records


# -- ingestion -------------------------------------------------------------------

def _read_npy_header(f, path):
    fmt = np.lib.format
    try:
        version = fmt.read_magic(f)
    except ValueError as exc:
        raise IngestionError(f"{path}: not an NPY file ({exc})") from None
    if version == (1, 0):
        return fmt.read_array_header_1_0(f)
    if version == (2, 0):
        return fmt.read_array_header_2_0(f)
    raise IngestionError(f"{path}: NPY version {version[0]}.{version[1]} not supported")


def _load_npy_array(path, require_f32: bool) -> np.ndarray:
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror}") from None
    with f:
        try:
            shape, fortran_order, dtype = _read_npy_header(f, path)
        except ValueError as exc:
            raise IngestionError(f"{path}: malformed NPY header ({exc})") from None
        if fortran_order:
            raise IngestionError(f"{path}: Fortran-ordered arrays are not supported")
        if require_f32:
            if dtype != np.dtype("<f4"):
                raise IngestionError(f"{path}: expected little-endian float32, got {dtype.str}")
        elif dtype.kind not in "fiu" or (dtype.byteorder == ">" or
                                         (dtype.byteorder == "=" and np.little_endian is False)):
            raise IngestionError(f"{path}: expected a little-endian real array, got {dtype.str}")
        count = math.prod(shape)
        data = np.fromfile(f, dtype=dtype, count=count)
        if data.size != count:
            raise IngestionError(f"{path}: file holds {data.size} of {count} values")
    return data.reshape(shape)


def load_npy(path) -> WeightTensor:
    """Load a C-ordered little-endian float32 NPY file; the name is the file stem."""
    array = _load_npy_array(path, require_f32=True)
    try:
        return WeightTensor(Path(path).stem, array.shape, array.reshape(-1))
    except ContractError as exc:
        raise IngestionError(f"{path}: {exc}") from None


IMPORTANCE_KINDS = ("fisher", "sigma", "uniform")


def load_importance(path, tensor: WeightTensor, kind: str = "fisher") -> ImportanceMap:
    """Importance map for ``tensor``.

    ``kind="fisher"`` reads F directly, ``"sigma"`` reads standard deviations and
    uses ``F = 1 / max(sigma, 1e-8)**2``, ``"uniform"`` (or no path) gives all ones.
    """
    if kind not in IMPORTANCE_KINDS:
        raise ContractError(f"unknown importance kind {kind!r}")
    if kind == "uniform" or path is None:
        return ImportanceMap.ones(tensor.size)
    values = _load_npy_array(path, require_f32=False).astype(np.float64).ravel()
    if values.size != tensor.size:
        raise IngestionError(f"{path}: {values.size} importance values for "
                             f"{tensor.size} weights of {tensor.name!r}")
    if not np.isfinite(values).all() or (values < 0).any():
        raise IngestionError(f"{path}: importance entries must be finite and nonnegative")
    try:
        if kind == "sigma":
            return ImportanceMap.from_sigma(values)
        return ImportanceMap(values)
    except ContractError as exc:
        raise IngestionError(f"{path}: {exc}") from None


@dataclass
class ManifestEntry:
    name: str
    weights: Path
    importance: Optional[Path] = None
    raw: bool = False


def manifest_parse(path) -> List[ManifestEntry]:
    """Read ``{"tensors": [{"weights", "importance", "name", "raw"?}, ...]}``.

    Relative paths resolve against the manifest's directory. Entry order is the
    layer scan order.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IngestionError(f"{path}: {exc.strerror}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("tensors"), list):
        raise IngestionError(f"{path}: expected an object with a 'tensors' list")
    base = path.parent
    entries, seen = [], set()
    for i, item in enumerate(doc["tensors"]):
        if not isinstance(item, dict) or not isinstance(item.get("weights"), str):
            raise IngestionError(f"{path}: tensors[{i}] needs a 'weights' path")
        weights = base / item["weights"]
        imp = item.get("importance")
        if imp is not None and not isinstance(imp, str):
            raise IngestionError(f"{path}: tensors[{i}].importance must be a path or null")
        importance = base / imp if imp is not None else None
        name = item.get("name", weights.stem)
        if not isinstance(name, str) or not name:
            raise IngestionError(f"{path}: tensors[{i}].name must be non-empty text")
        if name in seen:
            raise IngestionError(f"{path}: duplicate tensor name {name!r}")
        seen.add(name)
        for p in (weights, importance):
            if p is not None and not p.is_file():
                raise IngestionError(f"{path}: missing file {p}")
        entries.append(ManifestEntry(name, weights, importance, bool(item.get("raw", False))))
    return entries

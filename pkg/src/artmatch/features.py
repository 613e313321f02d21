"""Visual feature ingestion: SEMF files, conv-map files, and RMAC pooling.

SEMF is the binary interchange format for per-image feature vectors,
little-endian throughout:

    magic  b"SEMF"
    version u32      1 = vector records, 2 = conv-map records
    count   u64
    dim     u32      (version 1)   |   C, H, W  u32 x 3  (version 2)
    records: id_len u16, id UTF-8 bytes, then dim (or C*H*W) float32 values

Values are stored as float32; in-memory stores keep that dtype so a
write/read cycle is bit-exact. Compute paths upcast to float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import CorruptFileError, FormatError, SchemaError

MAGIC = b"SEMF"
VERSION_VECTORS = 1
VERSION_CONV_MAPS = 2


@dataclass
class ConvFeatureMap:
    """C x H x W activation tensor from a convolutional layer."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 1:
            raise ValueError(f"conv map must be C x H x W with all dims >= 1, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("conv map contains non-finite values")

    @property
    def channels(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


class FeatureStore:
    """id -> feature vector, all sharing one dimension (float32 storage)."""

    def __init__(self, dim: int):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        self._vectors: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._vectors)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._vectors

    def ids(self) -> list[str]:
        return list(self._vectors)

    def add(self, sample_id: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.float32)
        if values.shape != (self.dim,):
            raise SchemaError(
                f"feature for {sample_id!r} has shape {values.shape}, expected ({self.dim},)"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError(f"feature for {sample_id!r} contains non-finite values")
        if sample_id in self._vectors:
            raise SchemaError(f"feature for {sample_id!r} already present")
        self._vectors[sample_id] = values

    def get(self, sample_id: str) -> np.ndarray:
        return self._vectors[sample_id]

    def matrix(self, ids: list[str]) -> np.ndarray:
        """Stack the vectors for `ids` as float64 rows, in order."""
        missing = [i for i in ids if i not in self._vectors]
        if missing:
            raise KeyError(f"feature store is missing id(s): {missing[:5]}")
        return np.stack([self._vectors[i] for i in ids]).astype(np.float64)


def _read_exact(fh, n: int, what: str) -> bytes:
    offset = fh.tell()
    chunk = fh.read(n)
    if len(chunk) != n:
        raise CorruptFileError(f"truncated while reading {what}", offset)
    return chunk


def save_feature_file(store: FeatureStore, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQI", VERSION_VECTORS, len(store), store.dim))
        for sample_id in store.ids():
            encoded = sample_id.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(store.get(sample_id).astype("<f4").tobytes())


def load_feature_file(path) -> FeatureStore:
    """Read a version-1 SEMF file into a FeatureStore."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, count, dim = struct.unpack("<IQI", _read_exact(fh, 16, "header"))
        if version != VERSION_VECTORS:
            raise FormatError(f"{path}: unsupported version {version} for a feature-vector file")
        store = FeatureStore(dim=dim)
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "record id length"))
            sample_id = _read_exact(fh, id_len, "record id").decode("utf-8")
            raw = _read_exact(fh, 4 * dim, f"values of record {sample_id!r}")
            store.add(sample_id, np.frombuffer(raw, dtype="<f4"))
        trailing = fh.read(1)
        if trailing:
            raise CorruptFileError("trailing bytes after final record", fh.tell() - 1)
    return store


def save_conv_maps(maps: dict[str, ConvFeatureMap], path) -> None:
    """Write the version-2 (conv-map) SEMF variant; all maps share C,H,W."""
    if not maps:
        raise ValueError("no conv maps to save")
    shapes = {m.values.shape for m in maps.values()}
    if len(shapes) != 1:
        raise SchemaError(f"conv maps must share one shape, got {sorted(shapes)}")
    c, h, w = next(iter(shapes))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQIII", VERSION_CONV_MAPS, len(maps), c, h, w))
        for sample_id, fmap in maps.items():
            encoded = sample_id.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(fmap.values.astype("<f4").tobytes())


def load_conv_maps(path) -> dict[str, ConvFeatureMap]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version, count, c, h, w = struct.unpack("<IQIII", _read_exact(fh, 24, "header"))
        if version != VERSION_CONV_MAPS:
            raise FormatError(f"{path}: unsupported version {version} for a conv-map file")
        maps: dict[str, ConvFeatureMap] = {}
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "record id length"))
            sample_id = _read_exact(fh, id_len, "record id").decode("utf-8")
            raw = _read_exact(fh, 4 * c * h * w, f"values of record {sample_id!r}")
            if sample_id in maps:
                raise SchemaError(f"duplicate conv-map id {sample_id!r}")
            maps[sample_id] = ConvFeatureMap(
                np.frombuffer(raw, dtype="<f4").reshape(c, h, w).astype(np.float64)
            )
    return maps


class Region(NamedTuple):
    """A pooling window, clipped to map bounds."""

    top: int
    left: int
    height: int
    width: int


def _axis_starts(extent: int, side: int) -> list[int]:
    """Window starts along one axis.

    The window count is the smallest n whose ideal (real-valued) uniform
    spacing keeps consecutive windows overlapping >= 40% of the side;
    starts are that ideal spacing rounded half-up to cell boundaries.
    """
    if side >= extent:
        return [0]
    span = extent - side
    n = 1 + int(np.ceil(span / (0.6 * side)))
    return [int(np.floor(i * span / (n - 1) + 0.5)) for i in range(n)]


def rmac_regions(width: int, height: int, levels: int = 3) -> list[Region]:
    """Square pooling windows over an H x W map at `levels` scales.

    At scale l (1-based) the window side is ceil(2*min(W,H)/(l+1)); windows
    are clipped to the map and deduplicated.
    """
    if width < 1 or height < 1 or levels < 1:
        raise ValueError("width, height, and levels must all be >= 1")
    regions: set[Region] = set()
    for level in range(1, levels + 1):
        side = int(np.ceil(2 * min(width, height) / (level + 1)))
        for top in _axis_starts(height, side):
            for left in _axis_starts(width, side):
                regions.add(
                    Region(top, left, min(side, height - top), min(side, width - left))
                )
    return sorted(regions)


class PooledFeature(NamedTuple):
    """RMAC output; degenerate marks an all-zero (unpoolable) input."""

    values: np.ndarray
    degenerate: bool


def rmac_pool(fmap: ConvFeatureMap, levels: int = 3) -> PooledFeature:
    """Regional max pooling: per-region channelwise max, l2-normalized,
    summed over regions, then l2-normalized again.

    Regions whose max vector is exactly zero contribute nothing; an
    all-zero map yields the zero vector flagged degenerate.
    """
    values = fmap.values
    total = np.zeros(fmap.channels)
    for region in rmac_regions(fmap.width, fmap.height, levels):
        window = values[
            :,
            region.top : region.top + region.height,
            region.left : region.left + region.width,
        ]
        pooled = window.max(axis=(1, 2))
        norm = np.linalg.norm(pooled)
        if norm > 0.0:
            total += pooled / norm
    norm = np.linalg.norm(total)
    if norm == 0.0:
        return PooledFeature(values=total, degenerate=True)
    return PooledFeature(values=total / norm, degenerate=False)


def rmac_store(maps: dict[str, ConvFeatureMap], levels: int = 3) -> FeatureStore:
    """Pool a batch of conv maps into a FeatureStore (degenerate maps kept as zeros)."""
    if not maps:
        raise ValueError("no conv maps given")
    dims = {m.channels for m in maps.values()}
    if len(dims) != 1:
        raise SchemaError(f"conv maps must share channel count, got {sorted(dims)}")
    store = FeatureStore(dim=dims.pop())
    for sample_id, fmap in maps.items():
        store.add(sample_id, rmac_pool(fmap, levels).values)
    return store

"""SEMF writers (the wire format consumed by the retrieval engine).

Little-endian: magic b"SEMF", version u32 (1 = vectors, 2 = conv maps),
record count u64, then dim u32 (version 1) or C,H,W u32 (version 2).
Records: id length u16, id UTF-8 bytes, float32 values.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"SEMF"


def _write_record(fh, record_id: str, values: np.ndarray) -> None:
    encoded = record_id.encode("utf-8")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    fh.write(np.ascontiguousarray(values, dtype="<f4").tobytes())


def write_vectors(path, dim: int, records: list[tuple[str, np.ndarray]]) -> None:
    for record_id, values in records:
        if values.shape != (dim,):
            raise ValueError(f"record {record_id!r} has shape {values.shape}, expected ({dim},)")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQI", 1, len(records), dim))
        for record_id, values in records:
            _write_record(fh, record_id, values)


def write_conv_maps(path, shape: tuple[int, int, int], records: list[tuple[str, np.ndarray]]) -> None:
    c, h, w = shape
    for record_id, values in records:
        if values.shape != (c, h, w):
            raise ValueError(
                f"record {record_id!r} has shape {values.shape}, expected {(c, h, w)}"
            )
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQIII", 2, len(records), c, h, w))
        for record_id, values in records:
            _write_record(fh, record_id, values)

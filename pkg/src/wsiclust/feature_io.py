"""Reading and writing feature files.

Binary "TCF1" layout (all integers little-endian):

    bytes 0..3   magic "TCF1"
    u32          N, number of rows
    u32          d, feature dimension
    N*d f32      feature values, row-major
    N records    u16 byte length + that many bytes of UTF-8 region id

A plain-text CSV alternative is accepted on ingest: header line
``region_id,f0,...,f{d-1}`` followed by one comma-separated row per region.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .features import FeatureMatrix

MAGIC = b"TCF1"


def write_tcf(path, features: FeatureMatrix) -> None:
    path = Path(path)
    n, d = features.data.shape
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", n, d))
        fh.write(np.ascontiguousarray(features.data, dtype="<f4").tobytes())
        for rid in features.region_ids:
            raw = rid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ValueError(f"region id too long: {len(raw)} bytes")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)


def read_tcf(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not a TCF1 file (magic {magic!r})")
        n, d = struct.unpack("<II", fh.read(8))
        raw = fh.read(4 * n * d)
        if len(raw) != 4 * n * d:
            raise ValueError(f"{path}: truncated value block")
        values = np.frombuffer(raw, dtype="<f4")
        ids = []
        for _ in range(n):
            raw = fh.read(2)
            if len(raw) != 2:
                raise ValueError(f"{path}: truncated id block")
            (length,) = struct.unpack("<H", raw)
            text = fh.read(length)
            if len(text) != length:
                raise ValueError(f"{path}: truncated id block")
            ids.append(text.decode("utf-8"))
    data = values.reshape(n, d).astype(np.float64)
    return FeatureMatrix(tuple(ids), data)


def write_csv(path, features: FeatureMatrix) -> None:
    path = Path(path)
    d = features.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region_id"] + [f"f{i}" for i in range(d)])
        for rid, row in zip(features.region_ids, features.data):
            writer.writerow([rid] + [repr(float(v)) for v in row])


def read_csv(path) -> FeatureMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "region_id":
            raise ValueError(f"{path}: missing 'region_id,f0,...' header")
        d = len(header) - 1
        ids, rows = [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{line_no}: expected {d + 1} fields, got {len(row)}")
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    return FeatureMatrix(tuple(ids), np.array(rows, dtype=np.float64).reshape(len(ids), d))


def load_features(path) -> FeatureMatrix:
    """Load a feature file, sniffing binary TCF1 vs text CSV."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return read_tcf(path)
    return read_csv(path)

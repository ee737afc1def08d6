"""File formats: spectral dataset CSV, deterministic JSON, curve/prediction CSVs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .preprocess import SampleMeta, SpectralDataset, SpectrumError

META_COLUMNS = ("sample_id", "cultivar", "stage", "season", "level", "N_pct")


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def dataset_to_csv(ds: SpectralDataset) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(list(META_COLUMNS) + [repr(float(g)) for g in ds.grid])
    for i, m in enumerate(ds.meta):
        w.writerow([m.sample_id, m.cultivar, m.stage, m.season, m.level, _fmt(ds.y[i])]
                   + [repr(float(v)) for v in ds.X[i]])
    return out.getvalue()


def dataset_from_csv(text: str) -> SpectralDataset:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SpectrumError("empty dataset file") from None
    if tuple(h.strip() for h in header[:6]) != META_COLUMNS:
        raise SpectrumError(f"dataset header must start with {','.join(META_COLUMNS)}")
    try:
        grid = np.array([float(h) for h in header[6:]])
    except ValueError:
        raise SpectrumError("wavelength columns must be numeric") from None
    rows, ys, meta = [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise SpectrumError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        meta.append(SampleMeta(*[c.strip() for c in row[:5]]))
        ys.append(float(row[5]) if row[5].strip() else float("nan"))
        rows.append([float(v) for v in row[6:]])
    X = np.array(rows, dtype=float).reshape(len(rows), grid.size)
    return SpectralDataset(grid, X, np.array(ys), tuple(meta))


def read_dataset(path) -> SpectralDataset:
    return dataset_from_csv(Path(path).read_text())


def write_dataset(path, ds: SpectralDataset) -> None:
    Path(path).write_text(dataset_to_csv(ds))


def git_blob_digest(data: bytes) -> str:
    """Content digest computed the way git hashes a blob."""
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def write_rows(path, header, rows) -> None:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating))
                                          else v) for v in row])
    Path(path).write_text(out.getvalue())

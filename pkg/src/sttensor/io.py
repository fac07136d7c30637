"""Tensor ingestion and serialization plus a planted-structure synthetic
generator for desk-scale validation.

Binary format (STT1)
--------------------
Little-endian byte layout:

    magic    4 bytes   b"STT1"
    version  u32       currently 1
    I, J, K  u64 x 3   tensor extents (time, space, variable)
    payload  I*J*K float64 in linear order i + I*j + I*J*k
    crc32    u32       zlib CRC-32 of the payload bytes

An optional JSON sidecar ``<path>.meta.json`` carries the dataset
descriptor (variable names, calendar, grid geometry, provenance).
``load_binary`` synthesizes a clearly-marked placeholder descriptor when
the sidecar is absent.

CSV-long format
---------------
Header ``date,cell_id,variable,value``; ISO-8601 dates; ``cell_id`` is the
0-based active-cell index. Every (date, cell, variable) combination must
appear exactly once.
"""

from __future__ import annotations

import datetime
import json
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import FormatError
from .stats import TimeIndex
from .tensor import CpModel, DenseTensor3, cp_reconstruct, normalize_model

__all__ = [
    "GridSpec",
    "DatasetDescriptor",
    "SyntheticConfig",
    "SyntheticTruth",
    "save_binary",
    "load_binary",
    "load_csv_long",
    "generate_synthetic",
]

_MAGIC = b"STT1"
_VERSION = 1
_HEADER = struct.Struct("<4sIQQQ")
_MAX_ELEMENTS = 1 << 40  # refuse absurd headers before allocating


@dataclass
class GridSpec:
    """Rectangular grid with an active-cell mask.

    ``active`` is a flat row-major boolean array of length n_rows*n_cols;
    active cells are numbered 0..J-1 in row-major scan order. ``lat`` and
    ``lon``, when present, give one coordinate per active cell in that
    order.
    """

    n_rows: int
    n_cols: int
    active: np.ndarray | None = None
    lat: np.ndarray | None = None
    lon: np.ndarray | None = None

    def __post_init__(self):
        self.n_rows = int(self.n_rows)
        self.n_cols = int(self.n_cols)
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid extents must be >= 1")
        n_total = self.n_rows * self.n_cols
        if self.active is None:
            self.active = np.ones(n_total, dtype=bool)
        else:
            self.active = np.asarray(self.active, dtype=bool).ravel()
            if self.active.size != n_total:
                raise ValueError(f"active mask length {self.active.size} != {n_total}")
        if not self.active.any():
            raise ValueError("grid has no active cells")
        for name in ("lat", "lon"):
            val = getattr(self, name)
            if val is not None:
                val = np.asarray(val, dtype=np.float64).ravel()
                if val.size != self.n_active:
                    raise ValueError(f"{name} must have one value per active cell")
                setattr(self, name, val)

    @classmethod
    def full(cls, n_rows: int, n_cols: int) -> "GridSpec":
        return cls(n_rows, n_cols)

    @property
    def n_active(self) -> int:
        return int(self.active.sum())

    def active_rowcol(self) -> tuple[np.ndarray, np.ndarray]:
        """(row, col) grid coordinates of each active cell, in index order."""
        flat = np.flatnonzero(self.active)
        return flat // self.n_cols, flat % self.n_cols

    def to_dict(self) -> dict:
        out = {
            "n_rows": self.n_rows,
            "n_cols": self.n_cols,
            "active": [bool(v) for v in self.active],
        }
        if self.lat is not None:
            out["lat"] = [float(v) for v in self.lat]
        if self.lon is not None:
            out["lon"] = [float(v) for v in self.lon]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(
            n_rows=d["n_rows"],
            n_cols=d["n_cols"],
            active=d.get("active"),
            lat=d.get("lat"),
            lon=d.get("lon"),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GridSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class DatasetDescriptor:
    """Axis metadata paired with a tensor: variables, calendar, grid."""

    variables: list[str]
    time_index: TimeIndex
    grid: GridSpec
    provenance: str = ""

    def __post_init__(self):
        self.variables = [str(v) for v in self.variables]
        if len(self.variables) < 1:
            raise ValueError("need at least one variable name")
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("variable names must be unique")

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.time_index.length, self.grid.n_active, len(self.variables))

    def check_tensor(self, tensor: DenseTensor3):
        if tensor.dims != self.dims:
            raise ValueError(
                f"descriptor dims {self.dims} do not match tensor dims {tensor.dims}"
            )

    def to_dict(self) -> dict:
        return {
            "variables": self.variables,
            "time": {
                "start": self.time_index.start.isoformat(),
                "length": self.time_index.length,
                "calendar": self.time_index.calendar,
            },
            "grid": self.grid.to_dict(),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetDescriptor":
        t = d["time"]
        return cls(
            variables=d["variables"],
            time_index=TimeIndex(t["start"], t["length"], t.get("calendar", "gregorian")),
            grid=GridSpec.from_dict(d["grid"]),
            provenance=d.get("provenance", ""),
        )


def _sidecar_path(path) -> Path:
    return Path(str(path) + ".meta.json")


def save_binary(path, tensor: DenseTensor3, descriptor: DatasetDescriptor | None = None):
    """Write an STT1 file (and a descriptor sidecar when one is supplied)."""
    if descriptor is not None:
        descriptor.check_tensor(tensor)
    i, j, k = tensor.dims
    payload = np.ascontiguousarray(tensor.data.ravel(order="F"), dtype="<f8").tobytes()
    crc = zlib.crc32(payload) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, i, j, k))
        fh.write(payload)
        fh.write(struct.pack("<I", crc))
    if descriptor is not None:
        _sidecar_path(path).write_text(json.dumps(descriptor.to_dict()))


def load_binary(path) -> tuple[DenseTensor3, DatasetDescriptor]:
    """Parse an STT1 file; round-trips bit-exactly with :func:`save_binary`.

    Raises FormatError with a distinct code per failure mode (see
    :mod:`sttensor.errors`).
    """
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError("truncated", f"file is {len(blob)} bytes, header needs {_HEADER.size}")
    magic, version, i, j, k = _HEADER.unpack_from(blob)
    if magic != _MAGIC:
        raise FormatError("bad-magic", f"unexpected magic {magic!r}")
    if version != _VERSION:
        raise FormatError("bad-version", f"unsupported version {version}")
    if min(i, j, k) < 1 or i * j * k > _MAX_ELEMENTS:
        raise FormatError("dim-overflow", f"header dims ({i}, {j}, {k}) are not usable")
    n = i * j * k
    expected = _HEADER.size + 8 * n + 4
    if len(blob) != expected:
        body = len(blob) - _HEADER.size
        if body >= 4 and (body - 4) % 8 == 0:
            raise FormatError(
                "length-mismatch",
                f"payload holds {(body - 4) // 8} values but header dims imply {n}",
            )
        raise FormatError("truncated", f"file is {len(blob)} bytes, expected {expected}")
    payload = blob[_HEADER.size : _HEADER.size + 8 * n]
    (crc_stored,) = struct.unpack_from("<I", blob, _HEADER.size + 8 * n)
    if zlib.crc32(payload) & 0xFFFFFFFF != crc_stored:
        raise FormatError("bad-checksum", "payload CRC-32 does not match")
    values = np.frombuffer(payload, dtype="<f8")
    bad = ~np.isfinite(values)
    if bad.any():
        raise FormatError("non-finite", f"non-finite payload value at linear index {int(bad.argmax())}")
    tensor = DenseTensor3(values.reshape((i, j, k), order="F"))

    sidecar = _sidecar_path(path)
    if sidecar.exists():
        descriptor = DatasetDescriptor.from_dict(json.loads(sidecar.read_text()))
        descriptor.check_tensor(tensor)
    else:
        descriptor = DatasetDescriptor(
            variables=[f"var{v}" for v in range(k)],
            time_index=TimeIndex(datetime.date(1970, 1, 1), i),
            grid=GridSpec.full(1, j),
            provenance="synthesized descriptor: no metadata sidecar found",
        )
    return tensor, descriptor


def load_csv_long(path, descriptor: DatasetDescriptor) -> DenseTensor3:
    """Build a dense tensor from long-format CSV rows.

    Every (date, cell, variable) combination in the descriptor's range must
    be present exactly once; violations raise FormatError naming the first
    offending combination.
    """
    try:
        df = pd.read_csv(path, dtype={"date": str, "variable": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise FormatError("parse-error", f"could not parse CSV: {exc}") from exc
    required = ["date", "cell_id", "variable", "value"]
    missing_cols = [c for c in required if c not in df.columns]
    if missing_cols:
        raise FormatError("bad-header", f"missing CSV columns: {', '.join(missing_cols)}")

    n_steps, n_cells, n_vars = descriptor.dims
    dates = descriptor.time_index.date_strings()

    var_to_k = {name: idx for idx, name in enumerate(descriptor.variables)}
    k_idx = df["variable"].map(var_to_k)
    if k_idx.isna().any():
        bad = df["variable"][k_idx.isna()].iloc[0]
        raise FormatError("unknown-variable", f"unknown variable name {bad!r}")

    date_to_i = {s: idx for idx, s in enumerate(dates)}
    i_idx = df["date"].map(date_to_i)
    if i_idx.isna().any():
        bad = df["date"][i_idx.isna()].iloc[0]
        raise FormatError("unknown-date", f"date {bad!r} is outside the descriptor's calendar")

    cells = pd.to_numeric(df["cell_id"], errors="coerce")
    if cells.isna().any() or (np.asarray(cells) % 1 != 0).any():
        raise FormatError("bad-cell-id", "cell_id must be an integer")
    j_idx = np.asarray(cells, dtype=np.int64)
    if ((j_idx < 0) | (j_idx >= n_cells)).any():
        bad = j_idx[(j_idx < 0) | (j_idx >= n_cells)][0]
        raise FormatError("bad-cell-id", f"cell_id {bad} out of range [0, {n_cells})")

    try:
        values = np.asarray(df["value"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise FormatError("parse-error", f"non-numeric value column: {exc}") from exc

    i_arr = np.asarray(i_idx, dtype=np.int64)
    k_arr = np.asarray(k_idx, dtype=np.int64)
    flat = i_arr + n_steps * (j_idx + n_cells * k_arr)
    total = n_steps * n_cells * n_vars
    counts = np.bincount(flat, minlength=total)

    def _describe(linear):
        i = linear % n_steps
        rest = linear // n_steps
        j = rest % n_cells
        k = rest // n_cells
        return f"(date={dates[i]}, cell_id={j}, variable={descriptor.variables[k]})"

    if (counts > 1).any():
        raise FormatError("duplicate-entry", f"duplicate row for {_describe(int((counts > 1).argmax()))}")
    if (counts == 0).any():
        raise FormatError("missing-entry", f"missing row for {_describe(int((counts == 0).argmax()))}")

    dense = np.empty(total, dtype=np.float64)
    dense[flat] = values
    bad = ~np.isfinite(dense)
    if bad.any():
        raise FormatError("non-finite", f"non-finite value for {_describe(int(bad.argmax()))}")
    tensor = DenseTensor3(dense.reshape((n_steps, n_cells, n_vars), order="F"))
    descriptor.check_tensor(tensor)
    return tensor


@dataclass
class SyntheticConfig:
    """Knobs for the planted-structure generator.

    Spatial factor columns are Gaussian bumps (std ``smoothness`` in cell
    units) at well-separated grid sites; temporal columns are unit-amplitude
    harmonics at frequencies 1..rank cycles per record; the variable factor
    is uniform positive. ``noise_sigma`` is the absolute std of the additive
    Gaussian noise.
    """

    n_steps: int = 365
    n_rows: int = 12
    n_cols: int = 12
    n_variables: int = 3
    rank: int = 3
    smoothness: float = 1.5
    n_clusters: int | None = None
    noise_sigma: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters is None:
            self.n_clusters = self.rank
        if min(self.n_rows, self.n_cols) < 2:
            raise ValueError("grid must be at least 2x2")
        if self.n_variables < 1 or self.rank < 1:
            raise ValueError("n_variables and rank must be >= 1")
        if self.n_steps < 2 * self.rank + 1:
            raise ValueError("n_steps too short for the requested rank's harmonics")
        if self.rank > self.n_rows * self.n_cols:
            raise ValueError("rank exceeds the number of grid cells")
        if not self.smoothness > 0:
            raise ValueError("smoothness must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not 1 <= self.n_clusters <= self.rank:
            raise ValueError("n_clusters must be in [1, rank]")


@dataclass
class SyntheticTruth:
    """The planted model behind a synthetic tensor."""

    model: CpModel
    labels: np.ndarray
    noise_sigma: float
    seed: int


def _spread_sites(rows, cols, count, rng) -> np.ndarray:
    """Greedy farthest-point selection of ``count`` distinct cells."""
    first = int(rng.integers(rows.size))
    chosen = [first]
    d2 = (rows - rows[first]) ** 2 + (cols - cols[first]) ** 2
    while len(chosen) < count:
        nxt = int(np.argmax(d2))
        chosen.append(nxt)
        d2 = np.minimum(d2, (rows - rows[nxt]) ** 2 + (cols - cols[nxt]) ** 2)
    return np.asarray(chosen)


def generate_synthetic(config: SyntheticConfig) -> tuple[DenseTensor3, SyntheticTruth]:
    """Deterministic planted-structure tensor plus its ground truth.

    The planted model is normalized (unit factor columns, descending
    weights); cluster labels assign each cell to its nearest bump site.
    """
    rng = np.random.default_rng(config.seed)
    grid = GridSpec.full(config.n_rows, config.n_cols)
    rows, cols = grid.active_rowcol()
    n_cells = grid.n_active
    rank = config.rank

    sites = _spread_sites(rows, cols, max(rank, config.n_clusters), rng)

    spatial = np.empty((n_cells, rank))
    denom = 2.0 * config.smoothness**2
    for r in range(rank):
        d2 = (rows - rows[sites[r]]) ** 2 + (cols - cols[sites[r]]) ** 2
        spatial[:, r] = np.exp(-d2 / denom)

    t_axis = np.arange(config.n_steps)
    temporal = np.empty((config.n_steps, rank))
    for r in range(rank):
        angle = 2.0 * np.pi * (r + 1) * t_axis / config.n_steps
        temporal[:, r] = np.sin(angle) if r % 2 == 0 else np.cos(angle)

    variable = rng.uniform(0.5, 1.5, size=(config.n_variables, rank))
    base = 0.8 ** np.arange(rank)
    model = normalize_model(CpModel(base, (temporal, spatial, variable)))

    clean = cp_reconstruct(model).data
    if config.noise_sigma > 0:
        data = clean + config.noise_sigma * rng.standard_normal(clean.shape)
    else:
        data = clean

    site_rows = rows[sites[: config.n_clusters]]
    site_cols = cols[sites[: config.n_clusters]]
    d2 = (rows[:, None] - site_rows[None, :]) ** 2 + (cols[:, None] - site_cols[None, :]) ** 2
    labels = d2.argmin(axis=1)

    truth = SyntheticTruth(model, labels, config.noise_sigma, config.seed)
    return DenseTensor3(data), truth

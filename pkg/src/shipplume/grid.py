"""Regular lat/lon rasters: quality filtering, regridding of point samples, cropping.

Cells are half-open boxes, so every point falls in exactly one cell. Raster
values are unit-agnostic reals; a boolean mask marks cells that carry data.
Invalid cells are excluded from every downstream statistic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

M_PER_DEG_LAT = 111320.0  # meters per degree of latitude


def fmt_float(x: float) -> str:
    """Shortest decimal form that parses back to the same float."""
    return repr(float(x))


@dataclass(frozen=True)
class GridSpec:
    """Regular grid; cell (r, c) covers
    [lat_min + r*cell, lat_min + (r+1)*cell) x [lon_min + c*cell, lon_min + (c+1)*cell).
    """

    lat_min: float
    lon_min: float
    cell_size: float = 0.045
    n_rows: int = 1
    n_cols: int = 1

    def __post_init__(self) -> None:
        if not self.cell_size > 0:
            raise ValueError("cell_size must be > 0")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid needs at least one row and one column")

    @property
    def lat_max(self) -> float:
        return self.lat_min + self.n_rows * self.cell_size

    @property
    def lon_max(self) -> float:
        return self.lon_min + self.n_cols * self.cell_size

    def lat_centers(self) -> np.ndarray:
        return self.lat_min + (np.arange(self.n_rows) + 0.5) * self.cell_size

    def lon_centers(self) -> np.ndarray:
        return self.lon_min + (np.arange(self.n_cols) + 0.5) * self.cell_size

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (self.lat_min + (row + 0.5) * self.cell_size,
                self.lon_min + (col + 0.5) * self.cell_size)

    def cell_index(self, lat: float, lon: float) -> tuple[int, int]:
        """Index of the cell containing the point (may be out of range)."""
        r = math.floor((lat - self.lat_min) / self.cell_size)
        c = math.floor((lon - self.lon_min) / self.cell_size)
        return r, c

    def contains(self, lat: float, lon: float) -> bool:
        return (self.lat_min <= lat <= self.lat_max
                and self.lon_min <= lon <= self.lon_max)


@dataclass
class GridImage:
    """A raster plus its validity mask, both shaped (n_rows, n_cols)."""

    spec: GridSpec
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        shape = (self.spec.n_rows, self.spec.n_cols)
        if self.values.shape != shape or self.valid.shape != shape:
            raise ValueError(f"values/valid must have shape {shape}")

    def valid_values(self) -> np.ndarray:
        return self.values[self.valid]

    def copy(self) -> "GridImage":
        return GridImage(self.spec, self.values.copy(), self.valid.copy())


@dataclass(frozen=True)
class PointSample:
    """One scattered observation with its quality descriptors."""

    lat: float
    lon: float
    value: float
    qa: float = 1.0
    cloud_fraction: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.qa <= 1.0:
            raise ValueError("qa must lie in [0, 1]")
        if not 0.0 <= self.cloud_fraction <= 1.0:
            raise ValueError("cloud_fraction must lie in [0, 1]")


def quality_filter(samples: list[PointSample], qa_min: float = 0.5,
                   cloud_max: float = 0.5) -> list[PointSample]:
    """Keep samples with qa strictly above qa_min and cloud fraction strictly
    below cloud_max; input order is preserved."""
    return [s for s in samples if s.qa > qa_min and s.cloud_fraction < cloud_max]


def regrid(samples: list[PointSample], spec: GridSpec) -> GridImage:
    """Average sample values per cell; cells without samples are invalid and
    samples outside the grid extent are ignored."""
    sums = np.zeros((spec.n_rows, spec.n_cols))
    counts = np.zeros((spec.n_rows, spec.n_cols), dtype=int)
    if samples:
        lat = np.array([s.lat for s in samples])
        lon = np.array([s.lon for s in samples])
        val = np.array([s.value for s in samples])
        r = np.floor((lat - spec.lat_min) / spec.cell_size).astype(int)
        c = np.floor((lon - spec.lon_min) / spec.cell_size).astype(int)
        inb = (r >= 0) & (r < spec.n_rows) & (c >= 0) & (c < spec.n_cols)
        np.add.at(sums, (r[inb], c[inb]), val[inb])
        np.add.at(counts, (r[inb], c[inb]), 1)
    valid = counts > 0
    values = np.full((spec.n_rows, spec.n_cols), np.nan)
    values[valid] = sums[valid] / counts[valid]
    return GridImage(spec, values, valid)


def crop(image: GridImage, center_lat: float, center_lon: float,
         half_extent: float = 0.4) -> GridImage:
    """Sub-raster of the cells whose centers fall in the closed square
    center +- half_extent; georeferencing is preserved.

    With the default cell size the result never exceeds 18 cells per axis.
    """
    spec = image.spec
    if not spec.contains(center_lat, center_lon):
        raise ValueError("center out of bounds")
    lat_c = spec.lat_centers()
    lon_c = spec.lon_centers()
    rsel = np.nonzero((lat_c >= center_lat - half_extent)
                      & (lat_c <= center_lat + half_extent))[0]
    csel = np.nonzero((lon_c >= center_lon - half_extent)
                      & (lon_c <= center_lon + half_extent))[0]
    if rsel.size == 0 or csel.size == 0:
        raise ValueError("empty crop")
    r0, r1 = int(rsel[0]), int(rsel[-1])
    c0, c1 = int(csel[0]), int(csel[-1])
    sub = GridSpec(lat_min=spec.lat_min + r0 * spec.cell_size,
                   lon_min=spec.lon_min + c0 * spec.cell_size,
                   cell_size=spec.cell_size,
                   n_rows=r1 - r0 + 1, n_cols=c1 - c0 + 1)
    return GridImage(sub, image.values[r0:r1 + 1, c0:c1 + 1].copy(),
                     image.valid[r0:r1 + 1, c0:c1 + 1].copy())


# --- file formats ---------------------------------------------------------

def grid_to_csv(image: GridImage) -> str:
    """Serialize to grid-csv: '#key=value' header lines, then one comma-joined
    row of values per grid row; invalid cells are written as nan."""
    spec = image.spec
    lines = [
        f"#lat_min={fmt_float(spec.lat_min)}",
        f"#lon_min={fmt_float(spec.lon_min)}",
        f"#cell_size={fmt_float(spec.cell_size)}",
        f"#n_rows={spec.n_rows}",
        f"#n_cols={spec.n_cols}",
    ]
    vals = np.where(image.valid, image.values, np.nan)
    for r in range(spec.n_rows):
        lines.append(",".join(fmt_float(v) for v in vals[r]))
    return "\n".join(lines) + "\n"


def parse_grid_csv(text: str) -> GridImage:
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            header[key] = value
        elif line.strip():
            rows.append([float(tok) for tok in line.split(",")])
    spec = GridSpec(lat_min=float(header["lat_min"]),
                    lon_min=float(header["lon_min"]),
                    cell_size=float(header["cell_size"]),
                    n_rows=int(header["n_rows"]),
                    n_cols=int(header["n_cols"]))
    values = np.array(rows, dtype=float)
    if values.shape != (spec.n_rows, spec.n_cols):
        raise ValueError("grid-csv body does not match declared shape")
    return GridImage(spec, values, ~np.isnan(values))


SAMPLES_HEADER = "lat,lon,value,qa,cloud_fraction"


def samples_to_csv(samples: list[PointSample]) -> str:
    lines = [SAMPLES_HEADER]
    for s in samples:
        lines.append(",".join(fmt_float(x) for x in
                              (s.lat, s.lon, s.value, s.qa, s.cloud_fraction)))
    return "\n".join(lines) + "\n"


def parse_samples_csv(text: str) -> list[PointSample]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != SAMPLES_HEADER:
        raise ValueError("bad point-sample CSV header")
    out = []
    for ln in lines[1:]:
        lat, lon, value, qa, cf = (float(tok) for tok in ln.split(","))
        out.append(PointSample(lat, lon, value, qa, cf))
    return out

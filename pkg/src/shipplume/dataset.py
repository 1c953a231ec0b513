"""Ship selection rules and assembly of the per-pixel feature dataset.

Each sector pixel becomes one row: continuous features (Moran's I, NO2, wind
speed, wind direction as sine/cosine, ship speed, ship length) followed by
one-hot level and sub-sector indicators. The auxiliary moran_high column
carries the Moran-on-high-NO2 value used by the corresponding single-feature
benchmark; it is not part of the model feature vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import GridImage, fmt_float
from .sector import NormalizedPixel, ShipSector
from .tracks import KNOT_MS, ShipInfo, Track, WindVector

FEATURE_BASE = ("moran_i", "no2", "wind_speed", "wind_dir_sin", "wind_dir_cos",
                "ship_speed", "ship_length")


def feature_names(n_levels: int = 5, n_subsectors: int = 5) -> list[str]:
    names = list(FEATURE_BASE)
    names += [f"level_{i}" for i in range(1, n_levels + 1)]
    names += [f"subsector_{i}" for i in range(1, n_subsectors + 1)]
    return names


@dataclass(frozen=True)
class FeatureRow:
    group_id: str
    row: int
    col: int
    features: tuple[float, ...]
    moran_high: float
    label: int | None = None


@dataclass
class LabeledDataset:
    rows: list[FeatureRow]
    n_levels: int = 5
    n_subsectors: int = 5
    n_dropped: int = 0

    @property
    def class_counts(self) -> tuple[int, int]:
        """(n_negative, n_positive) over labeled rows."""
        neg = sum(1 for r in self.rows if r.label == 0)
        pos = sum(1 for r in self.rows if r.label == 1)
        return neg, pos

    def feature_matrix(self) -> np.ndarray:
        return np.array([r.features for r in self.rows], dtype=float)

    def labels(self) -> np.ndarray:
        if any(r.label is None for r in self.rows):
            raise ValueError("dataset contains unlabeled rows")
        return np.array([r.label for r in self.rows], dtype=int)

    def groups(self) -> list[str]:
        return [r.group_id for r in self.rows]

    def moran_high_values(self) -> np.ndarray:
        return np.array([r.moran_high for r in self.rows], dtype=float)

    def subset(self, indices) -> "LabeledDataset":
        return LabeledDataset(rows=[self.rows[i] for i in indices],
                              n_levels=self.n_levels,
                              n_subsectors=self.n_subsectors)


@dataclass
class ShipImage:
    """Everything needed to emit feature rows for one analyzed ship."""

    group_id: str
    info: ShipInfo
    wind: WindVector
    crop: GridImage
    moran: GridImage
    moran_high: GridImage
    sector: ShipSector
    pixels: list[tuple[int, int]]
    normalized: list[NormalizedPixel]


def _track_center(track) -> tuple[float, float]:
    lats = [p.lat for p in track.points]
    lons = [p.lon for p in track.points]
    return sum(lats) / len(lats), sum(lons) / len(lons)


def select_ships(candidates: list[tuple[ShipInfo, Track]],
                 min_speed_kt: float = 14.0,
                 dedup_radius_deg: float = 0.4) -> list[tuple[ShipInfo, Track]]:
    """Drop ships at or below the speed threshold, then collapse transitive
    clusters of plume-image centers (track means) within dedup_radius_deg,
    keeping only the fastest ship of each cluster (ties go to the smaller mmsi).
    """
    fast = [(info, tr) for info, tr in candidates
            if info.speed_ms / KNOT_MS > min_speed_kt]
    n = len(fast)
    if n == 0:
        return []
    centers = [_track_center(tr) for _, tr in fast]

    parent = list(range(n))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            d = math.hypot(centers[i][0] - centers[j][0],
                           centers[i][1] - centers[j][1])
            if d <= dedup_radius_deg:
                parent[find(i)] = find(j)

    best: dict[int, int] = {}
    for i in range(n):
        root = find(i)
        if root not in best:
            best[root] = i
        else:
            cur = fast[best[root]][0]
            cand = fast[i][0]
            if (cand.speed_ms, -cand.mmsi) > (cur.speed_ms, -cur.mmsi):
                best[root] = i
    keep = sorted(best.values())
    return [fast[i] for i in keep]


def wind_direction_features(wind: WindVector) -> tuple[float, float]:
    """Sine and cosine of the direction the wind blows toward (atan2(v, u))."""
    ang = math.atan2(wind.v, wind.u)
    return math.sin(ang), math.cos(ang)


def assemble(images: list[ShipImage],
             labels: dict[tuple[str, int, int], int] | None = None,
             n_levels: int = 5, n_subsectors: int = 5) -> LabeledDataset:
    """One FeatureRow per sector pixel, groups ordered by group_id.

    When a label table is given, listed pixels take their label and the rest
    default to 0; a label keyed to a pixel that was never assembled raises
    "orphan label". Rows with any non-finite feature are dropped and counted.
    """
    rows: list[FeatureRow] = []
    dropped = 0
    seen: set[tuple[str, int, int]] = set()
    for im in sorted(images, key=lambda im: im.group_id):
        wind_speed = im.wind.speed
        dsin, dcos = wind_direction_features(im.wind)
        for npx in im.normalized:
            r, c = npx.row, npx.col
            key = (im.group_id, r, c)
            seen.add(key)
            onehot_level = [0.0] * n_levels
            onehot_level[npx.level - 1] = 1.0
            onehot_sub = [0.0] * n_subsectors
            onehot_sub[npx.sub_sector - 1] = 1.0
            feats = (float(im.moran.values[r, c]), float(im.crop.values[r, c]),
                     wind_speed, dsin, dcos,
                     im.info.speed_ms, im.info.length_m,
                     *onehot_level, *onehot_sub)
            mh = float(im.moran_high.values[r, c])
            if not all(math.isfinite(f) for f in feats) or not math.isfinite(mh):
                dropped += 1
                continue
            label = None
            if labels is not None:
                label = int(labels.get(key, 0))
            rows.append(FeatureRow(group_id=im.group_id, row=r, col=c,
                                   features=feats, moran_high=mh, label=label))
    if labels is not None:
        orphans = set(labels) - seen
        if orphans:
            gid, r, c = sorted(orphans)[0]
            raise ValueError(f"orphan label: {gid},{r},{c}")
    return LabeledDataset(rows=rows, n_levels=n_levels,
                          n_subsectors=n_subsectors, n_dropped=dropped)


# --- file formats ---------------------------------------------------------

LABELS_HEADER = "group_id,row,col,label"


def labels_to_csv(labels: dict[tuple[str, int, int], int]) -> str:
    lines = [LABELS_HEADER]
    for (gid, r, c) in sorted(labels):
        lines.append(f"{gid},{r},{c},{labels[(gid, r, c)]}")
    return "\n".join(lines) + "\n"


def parse_labels_csv(text: str) -> dict[tuple[str, int, int], int]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != LABELS_HEADER:
        raise ValueError("bad label CSV header")
    out: dict[tuple[str, int, int], int] = {}
    for ln in lines[1:]:
        gid, r, c, label = ln.split(",")
        value = int(label)
        if value not in (0, 1):
            raise ValueError("labels must be 0 or 1")
        out[(gid, int(r), int(c))] = value
    return out


def dataset_header(n_levels: int = 5, n_subsectors: int = 5) -> str:
    return ",".join(["group_id", "row", "col",
                     *feature_names(n_levels, n_subsectors),
                     "moran_high", "label"])


def dataset_to_csv(ds: LabeledDataset) -> str:
    lines = [dataset_header(ds.n_levels, ds.n_subsectors)]
    for r in ds.rows:
        feats = ",".join(fmt_float(f) for f in r.features)
        label = "" if r.label is None else str(int(r.label))
        lines.append(f"{r.group_id},{r.row},{r.col},{feats},"
                     f"{fmt_float(r.moran_high)},{label}")
    return "\n".join(lines) + "\n"


def parse_dataset_csv(text: str) -> LabeledDataset:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty dataset CSV")
    cols = lines[0].split(",")
    n_levels = sum(1 for c in cols if c.startswith("level_"))
    n_subsectors = sum(1 for c in cols if c.startswith("subsector_"))
    if cols != dataset_header(n_levels, n_subsectors).split(","):
        raise ValueError("bad dataset CSV header")
    n_feat = len(FEATURE_BASE) + n_levels + n_subsectors
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != n_feat + 5:
            raise ValueError("bad dataset CSV row")
        gid, r, c = parts[0], int(parts[1]), int(parts[2])
        feats = tuple(float(tok) for tok in parts[3:3 + n_feat])
        mh = float(parts[3 + n_feat])
        label_tok = parts[4 + n_feat]
        label = None if label_tok == "" else int(label_tok)
        rows.append(FeatureRow(gid, r, c, feats, mh, label))
    return LabeledDataset(rows=rows, n_levels=n_levels, n_subsectors=n_subsectors)

"""End-to-end per-ship processing: from scene files (raster, AIS, wind,
registry) to sector geometry, enhanced crops, and normalized pixel features.

Both the feature-extraction CLI and the synthetic-scene label writer run
through this module, so sector pixels are computed identically on both sides.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass
from pathlib import Path

from .dataset import (LabeledDataset, ShipImage, assemble, parse_labels_csv,
                      select_ships)
from .enhance import moran_enhance, moran_on_high
from .grid import GridImage, crop, parse_grid_csv
from .sector import ShipSector, build_sector, normalize, pixels_in_sector
from .tracks import (AISRecord, ShipInfo, WindSample, extreme_tracks,
                     interpolate_track, lookup_wind, overpass_speed_ms,
                     parse_ais_csv, parse_registry_csv, parse_wind_csv,
                     wind_shift)


@dataclass(frozen=True)
class PipelineParams:
    qa_min: float = 0.5
    cloud_max: float = 0.5
    half_extent: float = 0.4
    window_s: float = 7200.0
    step_s: float = 300.0
    dspeed: float = 5.0
    dangle: float = 40.0
    target_angle: float = 320.0
    n_levels: int = 5
    n_subsectors: int = 5
    min_speed_kt: float = 14.0
    dedup_radius_deg: float = 0.4


def group_id_for(mmsi: int, t_overpass: float) -> str:
    date = datetime.datetime.fromtimestamp(t_overpass,
                                           tz=datetime.timezone.utc).date()
    return f"{mmsi}_{date.isoformat()}"


def _mean_position(track) -> tuple[float, float]:
    lats = [p.lat for p in track.points]
    lons = [p.lon for p in track.points]
    return sum(lats) / len(lats), sum(lons) / len(lons)


def build_ship_images(image: GridImage, records: list[AISRecord],
                      wind_samples: list[WindSample], registry: dict[int, float],
                      t_overpass: float, params: PipelineParams,
                      ) -> tuple[list[ShipImage], dict[str, int]]:
    """Run the sector pipeline for every ship that passes the selection rules.

    Ships that cannot be processed (too few AIS records, crop outside the
    raster, degenerate sector, constant crop) are skipped and tallied.
    """
    skipped: dict[str, int] = {}

    def skip(reason: str) -> None:
        skipped[reason] = skipped.get(reason, 0) + 1

    by_mmsi: dict[int, list[AISRecord]] = {}
    for rec in records:
        by_mmsi.setdefault(rec.mmsi, []).append(rec)

    prepared = []
    for mmsi in sorted(by_mmsi):
        recs = by_mmsi[mmsi]
        if mmsi not in registry:
            skip("no registry entry")
            continue
        try:
            track = interpolate_track(recs, t_overpass,
                                      window_s=params.window_s,
                                      step_s=params.step_s)
        except ValueError:
            skip("insufficient AIS coverage")
            continue
        info = ShipInfo(mmsi=mmsi, length_m=registry[mmsi],
                        speed_ms=overpass_speed_ms(recs, t_overpass))
        wind = lookup_wind(wind_samples, t_overpass, *_mean_position(track))
        shifted = wind_shift(track, wind, t_overpass)
        prepared.append((info, track, wind, shifted))

    selected = select_ships([(info, shifted) for info, _, _, shifted in prepared],
                            min_speed_kt=params.min_speed_kt,
                            dedup_radius_deg=params.dedup_radius_deg)
    keep = {info.mmsi for info, _ in selected}
    skipped_sel = len(prepared) - len(keep)
    if skipped_sel:
        skipped["speed/duplicate selection"] = skipped_sel

    images: list[ShipImage] = []
    for info, track, wind, shifted in prepared:
        if info.mmsi not in keep:
            continue
        center_lat, center_lon = _mean_position(shifted)
        try:
            cimg = crop(image, center_lat, center_lon, params.half_extent)
            enhanced = moran_enhance(cimg)
            enhanced_high = moran_on_high(cimg)
            ext_left, ext_right = extreme_tracks(track, wind, t_overpass,
                                                 dspeed=params.dspeed,
                                                 dangle=params.dangle)
            sec = build_sector(track, ext_left, ext_right,
                               angle_half_width=params.dangle)
            pixels = pixels_in_sector(sec, cimg)
            if not pixels:
                skip("empty sector")
                continue
            norm = normalize(sec, pixels, cimg,
                             target_angle=params.target_angle,
                             n_levels=params.n_levels,
                             n_subsectors=params.n_subsectors)
        except ValueError as exc:
            skip(str(exc))
            continue
        images.append(ShipImage(group_id=group_id_for(info.mmsi, t_overpass),
                                info=info, wind=wind, crop=cimg,
                                moran=enhanced, moran_high=enhanced_high,
                                sector=sec, pixels=pixels, normalized=norm))
    return images, skipped


def build_sectors(records: list[AISRecord], wind_samples: list[WindSample],
                  t_overpass: float, params: PipelineParams) -> list[ShipSector]:
    """Sector polygons only (no raster work), one per processable ship."""
    by_mmsi: dict[int, list[AISRecord]] = {}
    for rec in records:
        by_mmsi.setdefault(rec.mmsi, []).append(rec)
    sectors = []
    for mmsi in sorted(by_mmsi):
        try:
            track = interpolate_track(by_mmsi[mmsi], t_overpass,
                                      window_s=params.window_s,
                                      step_s=params.step_s)
            wind = lookup_wind(wind_samples, t_overpass, *_mean_position(track))
            ext_left, ext_right = extreme_tracks(track, wind, t_overpass,
                                                 dspeed=params.dspeed,
                                                 dangle=params.dangle)
            sectors.append(build_sector(track, ext_left, ext_right,
                                        angle_half_width=params.dangle))
        except ValueError:
            continue
    return sectors


# --- scene directories -------------------------------------------------------

MANIFEST_NAME = "scenes.csv"
MANIFEST_HEADER = "scene,dir,t_overpass"


@dataclass(frozen=True)
class SceneRef:
    index: int
    path: Path
    t_overpass: float


def read_manifest(manifest_path: str | Path) -> list[SceneRef]:
    manifest_path = Path(manifest_path)
    lines = [ln for ln in manifest_path.read_text().splitlines() if ln.strip()]
    if not lines or lines[0] != MANIFEST_HEADER:
        raise ValueError("bad scenes manifest header")
    refs = []
    for ln in lines[1:]:
        idx, name, t0 = ln.split(",")
        refs.append(SceneRef(index=int(idx), path=manifest_path.parent / name,
                             t_overpass=float(t0)))
    return refs


def read_scene_dir(path: str | Path):
    """Parse one scene directory: raster, AIS, wind, registry, optional labels."""
    path = Path(path)
    image = parse_grid_csv((path / "grid.csv").read_text())
    records = parse_ais_csv((path / "ais.csv").read_text())
    wind = parse_wind_csv((path / "wind.csv").read_text())
    registry = parse_registry_csv((path / "ships.csv").read_text())
    labels = None
    labels_path = path / "labels.csv"
    if labels_path.exists():
        labels = parse_labels_csv(labels_path.read_text())
    return image, records, wind, registry, labels


def build_dataset_from_scenes(manifest_path: str | Path, params: PipelineParams,
                              with_labels: bool = True,
                              ) -> tuple[LabeledDataset, dict[str, int]]:
    """Assemble the feature dataset for every scene listed in a manifest."""
    refs = read_manifest(manifest_path)
    all_images: list[ShipImage] = []
    all_labels: dict[tuple[str, int, int], int] = {}
    have_labels = False
    counts: dict[str, int] = {}
    for ref in refs:
        image, records, wind, registry, labels = read_scene_dir(ref.path)
        images, skipped = build_ship_images(image, records, wind, registry,
                                            ref.t_overpass, params)
        all_images.extend(images)
        for reason, n in skipped.items():
            counts[reason] = counts.get(reason, 0) + n
        if with_labels and labels is not None:
            have_labels = True
            all_labels.update(labels)
    label_table = all_labels if (with_labels and have_labels) else None
    ds = assemble(all_images, label_table,
                  n_levels=params.n_levels, n_subsectors=params.n_subsectors)
    counts["ships"] = len(all_images)
    return ds, counts

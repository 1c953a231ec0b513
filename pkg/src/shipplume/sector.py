"""Per-ship regions of interest (sectors), pixel membership, and the
normalized sector frame with its radial/angular sub-regions.

The sector polygon is the convex hull of the ship track and its two extreme
wind-shifted tracks, anchored at the ship's overpass position: every plume
position between zero drift and worst-case drift lies inside it. All angles
are degrees, measured counterclockwise from east in a local tangent plane
anchored at the sector origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grid import GridImage, M_PER_DEG_LAT
from .tracks import Track, WindShiftedTrack


@dataclass(frozen=True)
class ShipSector:
    mmsi: int
    origin: tuple[float, float]                    # (lat, lon) at overpass
    polygon: tuple[tuple[float, float], ...]       # (lat, lon) vertices, implicitly closed
    reference_angle: float                         # deg, mean drift direction at the origin
    angle_half_width: float = 40.0                 # deg, angular half-span of the wedge


@dataclass(frozen=True)
class NormalizedPixel:
    row: int
    col: int
    x_norm: float
    y_norm: float
    radius_norm: float
    angle_in_sector: float
    level: int
    sub_sector: int


def local_xy(origin: tuple[float, float], lats: np.ndarray, lons: np.ndarray,
             ) -> tuple[np.ndarray, np.ndarray]:
    """Project lat/lon onto a tangent plane at the origin, in meters."""
    lat0, lon0 = origin
    x = (np.asarray(lons) - lon0) * M_PER_DEG_LAT * math.cos(math.radians(lat0))
    y = (np.asarray(lats) - lat0) * M_PER_DEG_LAT
    return x, y


def _polygon_area_m2(origin: tuple[float, float],
                     vertices: list[tuple[float, float]]) -> float:
    lats = np.array([p[0] for p in vertices])
    lons = np.array([p[1] for p in vertices])
    x, y = local_xy(origin, lats, lons)
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _convex_hull(points: list[tuple[float, float]]) -> list[int]:
    """Andrew's monotone chain; returns indices of hull vertices in
    counterclockwise order. Collinear boundary points are dropped."""
    order = sorted(range(len(points)), key=lambda i: points[i])

    def cross(o: int, a: int, b: int) -> float:
        ox, oy = points[o]
        return ((points[a][0] - ox) * (points[b][1] - oy)
                - (points[a][1] - oy) * (points[b][0] - ox))

    lower: list[int] = []
    for i in order:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], i) <= 0:
            lower.pop()
        lower.append(i)
    upper: list[int] = []
    for i in reversed(order):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], i) <= 0:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def build_sector(ship_track: Track, ext_left: WindShiftedTrack,
                 ext_right: WindShiftedTrack,
                 angle_half_width: float = 40.0) -> ShipSector:
    """Close the plume search region into a simple polygon anchored at the
    ship's overpass position.

    The region must bound every plausible plume position: its near boundary is
    the ship track itself (zero drift) and its far boundary the two extreme
    wind-shifted tracks, so the polygon is the convex hull of all three
    tracks. The reference angle is the polar angle of the centroid of the
    pointwise midpoint of the two extreme tracks (the wedge bisector).
    """
    if len(ext_left.points) != len(ship_track.points) or \
            len(ext_right.points) != len(ship_track.points):
        raise ValueError("tracks must share timestamps")
    for a, b, c in zip(ship_track.points, ext_left.points, ext_right.points):
        if not (a.timestamp == b.timestamp == c.timestamp):
            raise ValueError("tracks must share timestamps")

    last = ship_track.points[-1]
    origin = (last.lat, last.lon)

    mid_lat = np.array([(l.lat + r.lat) / 2.0
                        for l, r in zip(ext_left.points, ext_right.points)])
    mid_lon = np.array([(l.lon + r.lon) / 2.0
                        for l, r in zip(ext_left.points, ext_right.points)])
    cx, cy = local_xy(origin, mid_lat.mean(), mid_lon.mean())
    reference_angle = math.degrees(math.atan2(float(cy), float(cx)))

    candidates: list[tuple[float, float]] = [origin]
    for track in (ship_track, ext_left, ext_right):
        candidates.extend((p.lat, p.lon) for p in track.points)
    # hull in the local meter plane (an axis scaling of lat/lon, so the same
    # vertex set as in degrees, but with a scale-free collinearity test)
    lats = np.array([p[0] for p in candidates])
    lons = np.array([p[1] for p in candidates])
    x, y = local_xy(origin, lats, lons)
    xy = list(zip(x.tolist(), y.tolist()))
    hull = _convex_hull(xy)
    if len(hull) < 3:
        raise ValueError("degenerate sector")
    vertices = [candidates[i] for i in hull]
    if origin in vertices:
        k = vertices.index(origin)
        vertices = vertices[k:] + vertices[:k]

    span = max(float(np.max(np.abs(x))), float(np.max(np.abs(y))))
    if span == 0.0 or _polygon_area_m2(origin, vertices) <= 1e-9 * span * span:
        raise ValueError("degenerate sector")

    return ShipSector(mmsi=ship_track.mmsi, origin=origin,
                      polygon=tuple(vertices), reference_angle=reference_angle,
                      angle_half_width=angle_half_width)


def _points_in_polygon(plat: np.ndarray, plon: np.ndarray,
                       polygon: tuple[tuple[float, float], ...]) -> np.ndarray:
    """Even-odd membership, inclusive of points on the boundary."""
    x = np.asarray(plon, dtype=float)
    y = np.asarray(plat, dtype=float)
    vy = np.array([p[0] for p in polygon])
    vx = np.array([p[1] for p in polygon])
    scale = max(float(np.ptp(vx)), float(np.ptp(vy)), 1e-300)
    eps = 1e-12 * scale
    inside = np.zeros(x.shape, dtype=bool)
    on_edge = np.zeros(x.shape, dtype=bool)
    n = len(polygon)
    for i in range(n):
        x1, y1 = vx[i], vy[i]
        x2, y2 = vx[(i + 1) % n], vy[(i + 1) % n]
        # ray casting (horizontal ray toward +x)
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = (x2 - x1) * (y - y1) / (y2 - y1) + x1
        inside ^= cond & (x < xin)
        # boundary inclusion
        cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
        within = ((x >= min(x1, x2) - eps) & (x <= max(x1, x2) + eps)
                  & (y >= min(y1, y2) - eps) & (y <= max(y1, y2) + eps))
        on_edge |= (np.abs(cross) <= eps * scale) & within
    return inside | on_edge


def pixels_in_sector(sector: ShipSector, image: GridImage) -> list[tuple[int, int]]:
    """Valid cells whose centers lie inside or on the sector polygon,
    in row-major order."""
    spec = image.spec
    lat_c = spec.lat_centers()
    lon_c = spec.lon_centers()
    glat, glon = np.meshgrid(lat_c, lon_c, indexing="ij")
    member = _points_in_polygon(glat.ravel(), glon.ravel(), sector.polygon)
    member = member.reshape(spec.n_rows, spec.n_cols) & image.valid
    rows, cols = np.nonzero(member)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _wrap_deg(a: np.ndarray) -> np.ndarray:
    """Wrap angles to (-180, 180]."""
    return -((-np.asarray(a) + 180.0) % 360.0 - 180.0)


def normalize_points(sector: ShipSector, lats: np.ndarray, lons: np.ndarray,
                     target_angle: float = 320.0, n_levels: int = 5,
                     n_subsectors: int = 5) -> dict[str, np.ndarray]:
    """Normalized-sector coordinates for arbitrary points.

    Points are projected to meters about the origin, rotated so the sector's
    reference direction lands on target_angle, then min-max rescaled per axis.
    radius_norm is the polar radius over the maximum radius in the set;
    angle_in_sector maps the wedge's angular span onto [0, 1].
    """
    lats = np.atleast_1d(np.asarray(lats, dtype=float))
    lons = np.atleast_1d(np.asarray(lons, dtype=float))
    if lats.size == 0:
        raise ValueError("no points to normalize")
    x, y = local_xy(sector.origin, lats, lons)

    r = np.hypot(x, y)
    rmax = float(r.max())
    single = lats.size == 1
    if single or rmax == 0.0:
        radius_norm = np.zeros_like(r)
    else:
        radius_norm = r / rmax

    ang = np.degrees(np.arctan2(y, x))
    delta = _wrap_deg(ang - sector.reference_angle)
    half = sector.angle_half_width
    angle_in_sector = np.clip((delta + half) / (2.0 * half), 0.0, 1.0)

    rot = math.radians(target_angle - sector.reference_angle)
    xr = x * math.cos(rot) - y * math.sin(rot)
    yr = x * math.sin(rot) + y * math.cos(rot)

    def _minmax(a: np.ndarray) -> np.ndarray:
        lo, hi = float(a.min()), float(a.max())
        if single or hi == lo:
            return np.full_like(a, 0.5)
        return (a - lo) / (hi - lo)

    level = np.minimum(n_levels, 1 + np.floor(radius_norm * n_levels).astype(int))
    sub = np.minimum(n_subsectors,
                     1 + np.floor(angle_in_sector * n_subsectors).astype(int))
    return {
        "x_norm": _minmax(xr),
        "y_norm": _minmax(yr),
        "radius_norm": radius_norm,
        "angle_in_sector": angle_in_sector,
        "level": level,
        "sub_sector": sub,
        "x_m": x,
        "y_m": y,
        "x_rot_m": xr,
        "y_rot_m": yr,
    }


def normalize(sector: ShipSector, pixels: list[tuple[int, int]], image: GridImage,
              target_angle: float = 320.0, n_levels: int = 5,
              n_subsectors: int = 5) -> list[NormalizedPixel]:
    """Normalized-sector coordinates and level/sub-sector bins for grid pixels."""
    if not pixels:
        raise ValueError("no pixels to normalize")
    centers = [image.spec.cell_center(r, c) for r, c in pixels]
    lats = np.array([p[0] for p in centers])
    lons = np.array([p[1] for p in centers])
    nd = normalize_points(sector, lats, lons, target_angle, n_levels, n_subsectors)
    return [NormalizedPixel(row=r, col=c,
                            x_norm=float(nd["x_norm"][i]),
                            y_norm=float(nd["y_norm"][i]),
                            radius_norm=float(nd["radius_norm"][i]),
                            angle_in_sector=float(nd["angle_in_sector"][i]),
                            level=int(nd["level"][i]),
                            sub_sector=int(nd["sub_sector"][i]))
            for i, (r, c) in enumerate(pixels)]


def sectors_to_geojson(sectors: list[ShipSector]) -> str:
    """One GeoJSON Polygon feature per ship (coordinates are [lon, lat])."""
    features = []
    for s in sectors:
        ring = [[p[1], p[0]] for p in s.polygon]
        ring.append(ring[0])
        features.append({
            "type": "Feature",
            "geometry": {"type": "Polygon", "coordinates": [ring]},
            "properties": {"mmsi": s.mmsi, "reference_angle": s.reference_angle},
        })
    return json.dumps({"type": "FeatureCollection", "features": features},
                      sort_keys=True, indent=2) + "\n"

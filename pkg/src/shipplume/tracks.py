"""Ship tracks from AIS records, wind-advected tracks, and the extreme
(uncertainty-margin) tracks that bound the plume search region.

Geometry is equirectangular with a per-point cos(lat) longitude scale, which
is accurate at the sub-100 km displacements involved here. Headings follow the
compass convention (0 = north, 90 = east); wind vectors are (u east, v north)
in m/s.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

from .grid import M_PER_DEG_LAT, fmt_float

KNOT_MS = 1852.0 / 3600.0  # one knot in m/s


@dataclass(frozen=True)
class AISRecord:
    mmsi: int
    timestamp: float  # UTC seconds
    lat: float
    lon: float
    speed: float      # knots
    heading: float    # degrees in [0, 360)


@dataclass(frozen=True)
class ShipInfo:
    mmsi: int
    length_m: float
    speed_ms: float  # speed over ground at overpass, m/s

    def __post_init__(self) -> None:
        if self.length_m <= 0:
            raise ValueError("length_m must be > 0")
        if self.speed_ms < 0:
            raise ValueError("speed_ms must be >= 0")


@dataclass(frozen=True)
class TrackPoint:
    timestamp: float
    lat: float
    lon: float


def _check_increasing(points: tuple[TrackPoint, ...]) -> None:
    for a, b in zip(points, points[1:]):
        if b.timestamp <= a.timestamp:
            raise ValueError("track timestamps must be strictly increasing")


@dataclass(frozen=True)
class Track:
    mmsi: int
    points: tuple[TrackPoint, ...]

    def __post_init__(self) -> None:
        _check_increasing(self.points)


@dataclass(frozen=True)
class WindVector:
    u: float  # m/s eastward
    v: float  # m/s northward

    @property
    def speed(self) -> float:
        return math.hypot(self.u, self.v)

    @property
    def direction_deg(self) -> float:
        """Direction the wind blows toward, degrees counterclockwise from east."""
        return math.degrees(math.atan2(self.v, self.u))


@dataclass(frozen=True)
class WindShiftedTrack:
    mmsi: int
    points: tuple[TrackPoint, ...]

    def __post_init__(self) -> None:
        _check_increasing(self.points)


def clean_records(records: list[AISRecord]) -> list[AISRecord]:
    """Sort by timestamp and drop records that do not advance the clock."""
    out: list[AISRecord] = []
    for rec in sorted(records, key=lambda r: r.timestamp):
        if not out or rec.timestamp > out[-1].timestamp:
            out.append(rec)
    return out


def _dead_reckon(rec: AISRecord, t: float) -> tuple[float, float]:
    """Constant speed/heading position at time t (t may precede the record)."""
    dt = t - rec.timestamp
    sp = rec.speed * KNOT_MS
    north = sp * math.cos(math.radians(rec.heading))
    east = sp * math.sin(math.radians(rec.heading))
    lat = rec.lat + north * dt / M_PER_DEG_LAT
    lon = rec.lon + east * dt / (M_PER_DEG_LAT * math.cos(math.radians(rec.lat)))
    return lat, lon


def interpolate_track(records: list[AISRecord], t_overpass: float,
                      window_s: float = 7200.0, step_s: float = 300.0) -> Track:
    """Resample a ship's AIS records onto the uniform time grid
    {t_overpass - k*step_s} covering the pre-overpass window.

    Positions are piecewise-linear in lat/lon between records. Times up to one
    step beyond record coverage are dead-reckoned from the nearest record;
    anything further is dropped (the track is truncated).
    """
    recs = clean_records(records)
    if len(recs) < 2:
        raise ValueError("insufficient AIS coverage")
    mmsi = recs[0].mmsi
    ts = [r.timestamp for r in recs]
    n_steps = int(math.floor(window_s / step_s + 1e-9))
    pts: list[TrackPoint] = []
    for k in range(n_steps, -1, -1):
        t = t_overpass - k * step_s
        if ts[0] <= t <= ts[-1]:
            i = bisect.bisect_right(ts, t) - 1
            if ts[i] == t:
                lat, lon = recs[i].lat, recs[i].lon
            else:
                a, b = recs[i], recs[i + 1]
                w = (t - a.timestamp) / (b.timestamp - a.timestamp)
                lat = a.lat + w * (b.lat - a.lat)
                lon = a.lon + w * (b.lon - a.lon)
        elif t < ts[0] and ts[0] - t <= step_s:
            lat, lon = _dead_reckon(recs[0], t)
        elif t > ts[-1] and t - ts[-1] <= step_s:
            lat, lon = _dead_reckon(recs[-1], t)
        else:
            continue
        pts.append(TrackPoint(t, lat, lon))
    if len(pts) < 2:
        raise ValueError("insufficient AIS coverage")
    return Track(mmsi, tuple(pts))


def wind_shift(track: Track, wind: WindVector, t_overpass: float) -> WindShiftedTrack:
    """Advect every track point downwind by its age at overpass time.

    A point at time t moves by wind * (t_overpass - t); the point at overpass
    time itself is unchanged.
    """
    for p in track.points:
        if p.timestamp > t_overpass:
            raise ValueError("track extends past the overpass time")
    pts = []
    for p in track.points:
        dt = t_overpass - p.timestamp
        lat = p.lat + wind.v * dt / M_PER_DEG_LAT
        lon = p.lon + wind.u * dt / (M_PER_DEG_LAT * math.cos(math.radians(p.lat)))
        pts.append(TrackPoint(p.timestamp, lat, lon))
    return WindShiftedTrack(track.mmsi, tuple(pts))


def extreme_tracks(track: Track, wind: WindVector, t_overpass: float,
                   dspeed: float = 5.0, dangle: float = 40.0,
                   ) -> tuple[WindShiftedTrack, WindShiftedTrack]:
    """Wind-shifted tracks under worst-case wind uncertainty: the wind speed is
    increased by dspeed and the direction rotated by +dangle and -dangle
    (positive = counterclockwise). The two results bound the plume position.
    """
    mag = wind.speed + dspeed
    theta = math.atan2(wind.v, wind.u)
    a = math.radians(dangle)
    w_plus = WindVector(mag * math.cos(theta + a), mag * math.sin(theta + a))
    w_minus = WindVector(mag * math.cos(theta - a), mag * math.sin(theta - a))
    return (wind_shift(track, w_plus, t_overpass),
            wind_shift(track, w_minus, t_overpass))


# --- file formats ---------------------------------------------------------

AIS_HEADER = "mmsi,timestamp,lat,lon,speed_kt,heading_deg"


def ais_to_csv(records: list[AISRecord]) -> str:
    lines = [AIS_HEADER]
    for r in records:
        lines.append(f"{r.mmsi},{fmt_float(r.timestamp)},{fmt_float(r.lat)},"
                     f"{fmt_float(r.lon)},{fmt_float(r.speed)},{fmt_float(r.heading)}")
    return "\n".join(lines) + "\n"


def parse_ais_csv(text: str) -> list[AISRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != AIS_HEADER:
        raise ValueError("bad AIS CSV header")
    out = []
    for ln in lines[1:]:
        mmsi, ts, lat, lon, sp, hd = ln.split(",")
        out.append(AISRecord(int(mmsi), float(ts), float(lat), float(lon),
                             float(sp), float(hd)))
    return out


@dataclass(frozen=True)
class WindSample:
    timestamp: float
    lat: float
    lon: float
    u: float
    v: float


WIND_HEADER = "timestamp,lat,lon,u,v"


def wind_to_csv(samples: list[WindSample]) -> str:
    lines = [WIND_HEADER]
    for s in samples:
        lines.append(",".join(fmt_float(x) for x in
                              (s.timestamp, s.lat, s.lon, s.u, s.v)))
    return "\n".join(lines) + "\n"


def parse_wind_csv(text: str) -> list[WindSample]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != WIND_HEADER:
        raise ValueError("bad wind CSV header")
    out = []
    for ln in lines[1:]:
        ts, lat, lon, u, v = (float(tok) for tok in ln.split(","))
        out.append(WindSample(ts, lat, lon, u, v))
    return out


REGISTRY_HEADER = "mmsi,length_m"


def registry_to_csv(entries: list[tuple[int, float]]) -> str:
    lines = [REGISTRY_HEADER]
    for mmsi, length in entries:
        lines.append(f"{mmsi},{fmt_float(length)}")
    return "\n".join(lines) + "\n"


def parse_registry_csv(text: str) -> dict[int, float]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != REGISTRY_HEADER:
        raise ValueError("bad ship registry CSV header")
    out: dict[int, float] = {}
    for ln in lines[1:]:
        mmsi, length = ln.split(",")
        out[int(mmsi)] = float(length)
    return out


def lookup_wind(samples: list[WindSample], t: float, lat: float, lon: float) -> WindVector:
    """Nearest wind sample in time, then in space (ties resolved by file order)."""
    if not samples:
        raise ValueError("no wind samples")
    best = min(enumerate(samples),
               key=lambda kv: (abs(kv[1].timestamp - t),
                               (kv[1].lat - lat) ** 2 + (kv[1].lon - lon) ** 2,
                               kv[0]))
    return WindVector(best[1].u, best[1].v)


def overpass_speed_ms(records: list[AISRecord], t_overpass: float) -> float:
    """Speed over ground at the overpass, from the record nearest in time."""
    recs = clean_records(records)
    if not recs:
        raise ValueError("no AIS records")
    nearest = min(recs, key=lambda r: (abs(r.timestamp - t_overpass), r.timestamp))
    return nearest.speed * KNOT_MS

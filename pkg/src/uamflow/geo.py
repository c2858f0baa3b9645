"""Coordinate handling: geodetic distance, local ENU projection, bearings.

All simulation kinematics run in a local east/north/up frame anchored at a
scenario origin; great-circle distance is used wherever a geodetic separation
is required. The projection is equirectangular (east scaled by cos of the
origin latitude), which keeps round-trip error far below 1e-9 degrees for the
few-degree extents this package deals with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCoordinateError, UndefinedBearingError, UnsupportedRegionError

# Unit constants
FOOT_M = 0.3048                 # metres per foot
NAUTICAL_MILE_M = 1852.0        # metres per nautical mile
G0 = 9.80665                    # standard gravity, m/s^2
EARTH_RADIUS_M = 6_371_000.0    # spherical earth radius used for haversine

# Degrees of latitude to metres on the sphere above
_DEG_TO_M = EARTH_RADIUS_M * math.pi / 180.0

# Origins closer to a pole than this are rejected for ENU projection.
_MAX_ORIGIN_LAT = 89.0


@dataclass(frozen=True)
class GeoPoint:
    """Geodetic position: longitude/latitude in degrees, altitude in metres."""

    lon: float
    lat: float
    alt: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat) and math.isfinite(self.alt)):
            raise InvalidCoordinateError(f"non-finite coordinate: {self.lon}, {self.lat}, {self.alt}")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidCoordinateError(f"longitude out of range: {self.lon}")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidCoordinateError(f"latitude out of range: {self.lat}")


@dataclass(frozen=True)
class EnuPoint:
    """Position in metres relative to a declared geodetic origin."""

    east: float
    north: float
    up: float

    def __post_init__(self):
        if not (math.isfinite(self.east) and math.isfinite(self.north) and math.isfinite(self.up)):
            raise InvalidCoordinateError(f"non-finite ENU component: {self.east}, {self.north}, {self.up}")

    def as_array(self) -> np.ndarray:
        return np.array([self.east, self.north, self.up], dtype=np.float64)


def haversine_m(lon1, lat1, lon2, lat2):
    """Great-circle distance in metres between degree coordinates.

    Accepts scalars or numpy arrays (broadcast like numpy ufuncs); altitude
    plays no part. Symmetric and non-negative.
    """
    lon1 = np.radians(lon1)
    lat1 = np.radians(lat1)
    lon2 = np.radians(lon2)
    lat2 = np.radians(lat2)
    sdlat = np.sin((lat2 - lat1) / 2.0)
    sdlon = np.sin((lon2 - lon1) / 2.0)
    a = sdlat * sdlat + np.cos(lat1) * np.cos(lat2) * sdlon * sdlon
    return EARTH_RADIUS_M * 2.0 * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def geodesic_distance(a: GeoPoint, b: GeoPoint) -> float:
    """Horizontal great-circle distance in metres between two GeoPoints."""
    return float(haversine_m(a.lon, a.lat, b.lon, b.lat))


def _check_origin(origin: GeoPoint):
    if abs(origin.lat) > _MAX_ORIGIN_LAT:
        raise UnsupportedRegionError(f"ENU origin too close to a pole: lat={origin.lat}")


def lonlat_to_enu(lon, lat, alt, origin: GeoPoint):
    """Vectorized geodetic -> ENU conversion. Returns (east, north, up) arrays."""
    _check_origin(origin)
    scale = math.cos(math.radians(origin.lat))
    east = (np.asarray(lon, dtype=np.float64) - origin.lon) * _DEG_TO_M * scale
    north = (np.asarray(lat, dtype=np.float64) - origin.lat) * _DEG_TO_M
    up = np.asarray(alt, dtype=np.float64) - origin.alt
    return east, north, up


def enu_to_lonlat(east, north, up, origin: GeoPoint):
    """Vectorized ENU -> geodetic conversion. Returns (lon, lat, alt) arrays."""
    _check_origin(origin)
    scale = math.cos(math.radians(origin.lat))
    lon = np.asarray(east, dtype=np.float64) / (_DEG_TO_M * scale) + origin.lon
    lat = np.asarray(north, dtype=np.float64) / _DEG_TO_M + origin.lat
    alt = np.asarray(up, dtype=np.float64) + origin.alt
    return lon, lat, alt


def to_enu(p: GeoPoint, origin: GeoPoint) -> EnuPoint:
    """Project a GeoPoint onto the local tangent plane at ``origin``.

    Valid for points within a couple of degrees of the origin; the caller is
    responsible for keeping usage inside that envelope.
    """
    east, north, up = lonlat_to_enu(p.lon, p.lat, p.alt, origin)
    return EnuPoint(float(east), float(north), float(up))


def from_enu(e: EnuPoint, origin: GeoPoint) -> GeoPoint:
    """Inverse of :func:`to_enu` for the same origin."""
    lon, lat, alt = enu_to_lonlat(e.east, e.north, e.up, origin)
    return GeoPoint(float(lon), float(lat), float(alt))


def bearing_deg(d_east: float, d_north: float) -> float:
    """Compass azimuth of a horizontal displacement, degrees in [0, 360)."""
    return math.degrees(math.atan2(d_east, d_north)) % 360.0


def relative_bearing(own_pos: EnuPoint, own_course_deg: float, other_pos: EnuPoint) -> float:
    """Bearing of ``other_pos`` relative to own course, clockwise degrees.

    0 means dead ahead, 90 means right of ownship. Raises
    UndefinedBearingError when the two positions coincide horizontally.
    """
    d_east = other_pos.east - own_pos.east
    d_north = other_pos.north - own_pos.north
    if d_east == 0.0 and d_north == 0.0:
        raise UndefinedBearingError("horizontally coincident positions have no bearing")
    return (bearing_deg(d_east, d_north) - own_course_deg) % 360.0

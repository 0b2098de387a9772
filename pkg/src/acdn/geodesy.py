"""Great-circle geometry and latency-disk primitives.

Distances are computed on a sphere of radius 6371 km. RTTs are converted to
reachable distances assuming propagation at two thirds of the speed of light
(typical for optical fiber).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_KM = 6371.0
SPEED_OF_LIGHT_KM_PER_MS = 299_792.458 / 1000.0
FIBER_SPEED_KM_PER_MS = SPEED_OF_LIGHT_KM_PER_MS * 2.0 / 3.0
# Farthest any point can be from another on the sphere.
MAX_DISTANCE_KM = math.pi * EARTH_RADIUS_KM


def _normalize_lon(lon: float) -> float:
    lon = math.fmod(lon, 360.0)
    if lon > 180.0:
        lon -= 360.0
    elif lon <= -180.0:
        lon += 360.0
    return lon


@dataclass(frozen=True, slots=True)
class GeoPoint:
    """A latitude/longitude pair in degrees; longitude is kept in (-180, 180]."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        lat = float(self.lat)
        lon = float(self.lon)
        if not (math.isfinite(lat) and math.isfinite(lon)):
            raise ValueError(f"non-finite coordinate ({lat}, {lon})")
        if not -90.0 <= lat <= 90.0:
            raise ValueError(f"latitude {lat} outside [-90, 90]")
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", _normalize_lon(lon))

    def antipode(self) -> GeoPoint:
        return GeoPoint(-self.lat, self.lon + 180.0)


@dataclass(frozen=True, slots=True)
class LatencyDisk:
    """Region reachable from ``center`` within ``radius_km``.

    Radii beyond half the Earth circumference are clamped and ``clamped`` is
    set: such a disk covers the whole sphere and carries no location
    information.
    """

    center: GeoPoint
    radius_km: float
    clamped: bool = field(default=False)

    def __post_init__(self) -> None:
        r = float(self.radius_km)
        if not r >= 0.0:
            raise ValueError(f"negative or NaN radius {self.radius_km}")
        if r > MAX_DISTANCE_KM:
            r = MAX_DISTANCE_KM
            object.__setattr__(self, "clamped", True)
        object.__setattr__(self, "radius_km", r)

    @property
    def covers_sphere(self) -> bool:
        return self.radius_km >= MAX_DISTANCE_KM

    @classmethod
    def from_rtt(
        cls, center: GeoPoint, rtt_ms: float, speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS
    ) -> LatencyDisk:
        return cls(center, rtt_to_radius_km(rtt_ms, speed_km_per_ms))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance between two points in km."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    h = min(1.0, max(0.0, h))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(h))


def haversine_matrix_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Pairwise great-circle distances, shape ``(len(lat1), len(lat2))``.

    Inputs are degree arrays. Uses the same formula as :func:`haversine_km`.
    """
    phi1 = np.radians(np.asarray(lat1, dtype=float))[:, None]
    phi2 = np.radians(np.asarray(lat2, dtype=float))[None, :]
    lmb1 = np.radians(np.asarray(lon1, dtype=float))[:, None]
    lmb2 = np.radians(np.asarray(lon2, dtype=float))[None, :]
    h = np.sin((phi2 - phi1) / 2.0) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin((lmb2 - lmb1) / 2.0) ** 2
    np.clip(h, 0.0, 1.0, out=h)
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(h))


def rtt_to_radius_km(rtt_ms: float, speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS) -> float:
    """One-way distance light in fiber covers in half of ``rtt_ms``."""
    if not rtt_ms >= 0.0:
        raise ValueError(f"RTT must be nonnegative, got {rtt_ms}")
    if speed_km_per_ms <= 0.0:
        raise ValueError("propagation speed must be positive")
    return rtt_ms / 2.0 * speed_km_per_ms


def radius_to_rtt_ms(distance_km: float, speed_km_per_ms: float = FIBER_SPEED_KM_PER_MS) -> float:
    """Smallest RTT physically compatible with a one-way distance."""
    if not distance_km >= 0.0:
        raise ValueError(f"distance must be nonnegative, got {distance_km}")
    return 2.0 * distance_km / speed_km_per_ms


def disks_disjoint(a: LatencyDisk, b: LatencyDisk) -> bool:
    # strict: touching disks overlap
    return haversine_km(a.center, b.center) > a.radius_km + b.radius_km


def point_in_disk(p: GeoPoint, d: LatencyDisk) -> bool:
    return haversine_km(p, d.center) <= d.radius_km

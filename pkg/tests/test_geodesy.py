import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acdn.geodesy import (
    EARTH_RADIUS_KM,
    FIBER_SPEED_KM_PER_MS,
    MAX_DISTANCE_KM,
    GeoPoint,
    LatencyDisk,
    disks_disjoint,
    haversine_km,
    haversine_matrix_km,
    point_in_disk,
    radius_to_rtt_ms,
    rtt_to_radius_km,
)

# Frozen from a 30-digit mpmath evaluation of the spherical law of cosines
# (a different formula from the haversine used by the library).
ROME_NYC_KM = 6890.694016965629
QUARTER_KM = 10007.543398010286
FIBER_KM_PER_MS = 199.86163866666666

ROME = GeoPoint(41.9, 12.5)
NYC = GeoPoint(40.7, -74.0)

lats = st.floats(-90, 90, allow_nan=False)
lons = st.floats(-180, 180, allow_nan=False, exclude_min=True)
points = st.builds(GeoPoint, lats, lons)
radii = st.floats(0, 25_000, allow_nan=False)


def test_constants():
    assert FIBER_SPEED_KM_PER_MS == pytest.approx(FIBER_KM_PER_MS, rel=1e-12)
    assert MAX_DISTANCE_KM == pytest.approx(math.pi * 6371.0)


def test_geopoint_normalizes_longitude():
    assert GeoPoint(0, 180).lon == 180
    assert GeoPoint(0, -180).lon == 180
    assert GeoPoint(0, 190).lon == pytest.approx(-170)
    assert GeoPoint(0, 540).lon == 180
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0)


def test_haversine_examples():
    assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 0)) == 0.0
    assert haversine_km(GeoPoint(0, 0), GeoPoint(0, 90)) == pytest.approx(QUARTER_KM, abs=0.1)
    assert haversine_km(ROME, NYC) == pytest.approx(ROME_NYC_KM, abs=1e-6)
    assert haversine_km(ROME, NYC) == pytest.approx(6900, rel=0.01)


def test_rtt_to_radius_examples():
    assert rtt_to_radius_km(0) == 0.0
    assert rtt_to_radius_km(10) == pytest.approx(999.3, abs=0.1)
    assert rtt_to_radius_km(100) == pytest.approx(9993, abs=1)
    with pytest.raises(ValueError):
        rtt_to_radius_km(-1)
    assert radius_to_rtt_ms(rtt_to_radius_km(37.5)) == pytest.approx(37.5)


def test_disks_disjoint_examples():
    d = LatencyDisk(ROME, 999.3)
    assert not disks_disjoint(d, d)
    assert disks_disjoint(LatencyDisk(ROME, 999.3), LatencyDisk(NYC, 999.3))
    a = GeoPoint(0, 0)
    b = GeoPoint(math.degrees(1500 / EARTH_RADIUS_KM), 0)
    assert haversine_km(a, b) == pytest.approx(1500)
    assert not disks_disjoint(LatencyDisk(a, 1000), LatencyDisk(b, 1000))


def test_point_in_disk_examples():
    c = GeoPoint(45, 7)
    assert point_in_disk(c, LatencyDisk(c, 0))
    p = GeoPoint(45 + math.degrees(1001 / EARTH_RADIUS_KM), 7)
    assert not point_in_disk(p, LatencyDisk(c, 1000))
    disk = LatencyDisk(c, 20_037)
    assert disk.clamped and disk.radius_km == MAX_DISTANCE_KM
    assert point_in_disk(c.antipode(), disk)


def test_disk_validation():
    with pytest.raises(ValueError):
        LatencyDisk(ROME, -1)
    assert not LatencyDisk(ROME, 100).clamped
    assert LatencyDisk(ROME, MAX_DISTANCE_KM).covers_sphere
    assert LatencyDisk.from_rtt(ROME, 10).radius_km == pytest.approx(999.308, abs=1e-3)


@given(points, points)
def test_haversine_symmetric_and_bounded(a, b):
    d = haversine_km(a, b)
    assert d == haversine_km(b, a)
    assert 0.0 <= d <= MAX_DISTANCE_KM + 1e-9


@given(points, points, points)
def test_triangle_inequality(a, b, c):
    ab, bc, ac = haversine_km(a, b), haversine_km(b, c), haversine_km(a, c)
    assert ac <= (ab + bc) * (1 + 1e-6) + 1e-6


@given(points, radii, points, radii)
def test_disjoint_symmetric(p, r, q, s):
    a, b = LatencyDisk(p, r), LatencyDisk(q, s)
    assert disks_disjoint(a, b) == disks_disjoint(b, a)


@given(points, radii, points, radii, st.floats(0, 5000), st.floats(0, 5000))
def test_disjoint_monotone_in_radius(p, r, q, s, dr, ds):
    before = disks_disjoint(LatencyDisk(p, r), LatencyDisk(q, s))
    after = disks_disjoint(LatencyDisk(p, r + dr), LatencyDisk(q, s + ds))
    assert not (after and not before)


@settings(max_examples=50)
@given(st.lists(points, min_size=1, max_size=6), st.lists(points, min_size=1, max_size=6))
def test_matrix_matches_scalar(xs, ys):
    m = haversine_matrix_km([p.lat for p in xs], [p.lon for p in xs], [p.lat for p in ys], [p.lon for p in ys])
    expect = np.array([[haversine_km(x, y) for y in ys] for x in xs])
    np.testing.assert_allclose(m, expect, rtol=1e-12, atol=1e-9)

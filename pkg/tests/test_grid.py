import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from efm.errors import InvalidGrid, RangeTooLarge
from efm.grid import (EARTH_RADIUS_KM, SliceLocationSet, SpatialGrid, cell_area_weights, chordal_distance,
                      neighbors_within, normalize_lon)

R = EARTH_RADIUS_KM

lat_st = st.floats(-90, 90)
lon_st = st.floats(-180, 180, exclude_max=True)


def brute_neighbors(grid, center, r):
    out = []
    for i, la in enumerate(grid.lats):
        for j, lo in enumerate(grid.lons):
            # independent route: haversine central angle, then chord = 2R sin(angle/2)
            p1, p2 = math.radians(center[0]), math.radians(la)
            dphi = p2 - p1
            dlam = math.radians(lo - center[1])
            h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlam / 2) ** 2
            sig = 2 * math.asin(min(1.0, math.sqrt(h)))
            d = 2 * R * math.sin(sig / 2)
            if d <= r:
                out.append((i, j))
    return out


def test_chordal_examples():
    assert chordal_distance((0, 0), (0, 0)) == 0.0
    assert chordal_distance((0, 0), (0, 180)) == pytest.approx(12742.0176, abs=1e-9)
    assert chordal_distance((0, 0), (0, 90)) == pytest.approx(R * math.sqrt(2), abs=1e-9)
    assert chordal_distance((0, 0), (0, 90)) == pytest.approx(9010.0, abs=0.5)


@settings(max_examples=200, deadline=None)
@given(lat_st, lon_st, lat_st, lon_st, lat_st, lon_st)
def test_chordal_metric_axioms(a1, o1, a2, o2, a3, o3):
    a, b, c = (a1, o1), (a2, o2), (a3, o3)
    dab = chordal_distance(a, b)
    assert dab == chordal_distance(b, a)
    assert 0 <= dab <= 2 * R * (1 + 1e-12)
    assert chordal_distance(a, a) == 0.0
    assert dab <= chordal_distance(a, c) + chordal_distance(c, b) + 1e-9 * R


def test_neighbors_wraparound_matches_brute_force():
    grid = SpatialGrid.regular(180, 360)
    got = neighbors_within(grid, (0.0, 179.5), 200.0)
    idx = [k for k, _ in got]
    assert idx == brute_neighbors(grid, (0.0, 179.5), 200.0)
    assert any(grid.lons[j] < 0 for _, j in idx)


def test_neighbors_degenerate_and_maximal():
    grid = SpatialGrid.regular(18, 36)
    c = (float(grid.lats[4]), float(grid.lons[7]))
    near = neighbors_within(grid, c, 1.0)
    assert [k for k, _ in near] == [(4, 7)]
    assert neighbors_within(grid, (1.234, 5.678), 1e-3) == []
    assert len(neighbors_within(grid, c, 2 * R)) == grid.size
    with pytest.raises(RangeTooLarge):
        neighbors_within(grid, c, 2 * R + 1)


@settings(max_examples=30, deadline=None)
@given(lat_st, lon_st, st.floats(10, 5000), st.floats(10, 5000))
def test_neighbors_nested_and_brute(lat, lon, r1, r2):
    grid = SpatialGrid.regular(12, 24)
    r1, r2 = sorted((r1, r2))
    n1 = {k for k, _ in neighbors_within(grid, (lat, lon), r1)}
    n2 = [k for k, _ in neighbors_within(grid, (lat, lon), r2)]
    assert n1 <= set(n2)
    assert n2 == sorted(n2)
    brute = set(brute_neighbors(grid, (lat, lon), r2))
    # the two routes may disagree only for points sitting on the boundary
    for k in brute.symmetric_difference(n2):
        d = chordal_distance((lat, lon), (grid.lats[k[0]], grid.lons[k[1]]))
        assert abs(d - r2) < 1e-6


def test_cell_area_weights():
    grid = SpatialGrid.regular(180, 360)
    w = cell_area_weights(grid)
    assert np.all(np.isfinite(w)) and np.all(w >= 0)
    eq = np.argmin(np.abs(grid.lats))
    assert w[eq].max() == w.max()
    top = np.argmin(np.abs(grid.lats - 89.5))
    assert w[top, 0] / w[eq, 0] == pytest.approx(math.cos(math.radians(89.5)) / math.cos(math.radians(grid.lats[eq])),
                                                  rel=1e-12)
    assert w[top, 0] / w[eq, 0] == pytest.approx(0.008727, abs=1e-5)
    assert w.sum() == pytest.approx(4 * math.pi, rel=1e-3)


def test_cell_area_weights_rotation_invariant():
    grid = SpatialGrid.regular(30, 60)
    rolled = SpatialGrid(grid.lats, np.sort(((grid.lons + 37.0 + 180) % 360) - 180))
    assert np.allclose(cell_area_weights(grid), cell_area_weights(rolled), rtol=1e-12)


def test_grid_validation():
    with pytest.raises(InvalidGrid):
        SpatialGrid([0.0], [0.0, 1.0])
    with pytest.raises(InvalidGrid):
        SpatialGrid([0.0, 95.0], [0.0, 1.0])
    with pytest.raises(InvalidGrid):
        SpatialGrid([1.0, 0.0], [0.0, 1.0])
    g = SpatialGrid([-10.0, 10.0], [170.0, 179.0])
    assert g.lons.tolist() == [170.0, 179.0]
    assert normalize_lon(190.0) == -170.0
    assert normalize_lon(180.0) == -180.0


def test_slice_location_weights():
    s = SliceLocationSet([-90.0, 0.0, 60.0, 90.0], [0.0, 0.0, 0.0, 0.0])
    assert s.weights[0] == 0.0 and s.weights[-1] == 0.0
    assert s.weights[1] == 1.0
    assert s.weights[2] == pytest.approx(0.5)
    with pytest.raises(InvalidGrid):
        SliceLocationSet([90.0], [0.0])

"""Spherical grid geometry: chordal distances, cell weights, neighbour queries."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidGrid, RangeTooLarge

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class GeoConstants:
    earth_radius: float = EARTH_RADIUS_KM

    @property
    def max_kernel_range(self) -> float:
        return 2.0 * self.earth_radius


DEFAULT_GEO = GeoConstants()


def normalize_lon(lon):
    """Map longitudes (degrees) onto [-180, 180)."""
    lon = np.asarray(lon, dtype=float)
    out = np.mod(lon + 180.0, 360.0) - 180.0
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Rectangular latitude-longitude grid of cell centres (degrees).

    Longitudes are normalised to [-180, 180) on construction and must then be
    strictly increasing; the axis is treated as periodic.
    """

    lats: np.ndarray
    lons: np.ndarray

    def __post_init__(self):
        lats = np.asarray(self.lats, dtype=float).copy()
        lons = normalize_lon(np.asarray(self.lons, dtype=float)).copy()
        lons = np.atleast_1d(lons)
        if lats.ndim != 1 or lons.ndim != 1:
            raise InvalidGrid("coordinates must be one-dimensional")
        if lats.size < 2 or lons.size < 2:
            raise InvalidGrid("need at least 2 points per axis")
        if not (np.all(np.isfinite(lats)) and np.all(np.isfinite(lons))):
            raise InvalidGrid("non-finite coordinate")
        if lats.min() < -90.0 or lats.max() > 90.0:
            raise InvalidGrid("latitude outside [-90, 90]")
        if np.any(np.diff(lats) <= 0):
            raise InvalidGrid("latitudes must be strictly increasing")
        if np.any(np.diff(lons) <= 0):
            raise InvalidGrid(
                "longitudes must be strictly increasing after normalisation to [-180, 180)")
        lats.setflags(write=False)
        lons.setflags(write=False)
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)

    @classmethod
    def regular(cls, nlat: int, nlon: int, lat_range=(-90.0, 90.0), lon_range=(-180.0, 180.0)):
        """Cell-centred regular grid, e.g. ``regular(180, 360)`` for 1 degree."""
        lat_edges = np.linspace(lat_range[0], lat_range[1], nlat + 1)
        lon_edges = np.linspace(lon_range[0], lon_range[1], nlon + 1)
        return cls(0.5 * (lat_edges[1:] + lat_edges[:-1]), 0.5 * (lon_edges[1:] + lon_edges[:-1]))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.lats.size, self.lons.size)

    @property
    def size(self) -> int:
        return self.lats.size * self.lons.size

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened (lat, lon) of every cell in row-major [lat][lon] order."""
        la, lo = np.meshgrid(self.lats, self.lons, indexing="ij")
        return la.ravel(), lo.ravel()

    def xyz(self) -> np.ndarray:
        return to_unit_xyz(*self.mesh())

    def same_as(self, other: "SpatialGrid") -> bool:
        return (self.lats.shape == other.lats.shape and self.lons.shape == other.lons.shape
                and np.array_equal(self.lats, other.lats) and np.array_equal(self.lons, other.lons))

    def subset(self, lat_bounds, lon_bounds) -> "SpatialGrid":
        """Sub-grid inside a closed lat/lon box (longitude box may not wrap)."""
        lo, hi = lat_bounds
        wlo, whi = lon_bounds
        la = self.lats[(self.lats >= lo) & (self.lats <= hi)]
        lon = self.lons[(self.lons >= wlo) & (self.lons <= whi)]
        return SpatialGrid(la, lon)

    def cell_bounds(self):
        """Cell widths in degrees along each axis, from midpoints between centres."""
        return _lat_widths(self.lats), _lon_widths(self.lons)


def _lat_widths(lats):
    mids = 0.5 * (lats[1:] + lats[:-1])
    lower = np.concatenate([[max(-90.0, lats[0] - (mids[0] - lats[0]))], mids])
    upper = np.concatenate([mids, [min(90.0, lats[-1] + (lats[-1] - mids[-1]))]])
    return upper - lower


def _lon_widths(lons):
    d = np.diff(lons)
    gap = 360.0 - (lons[-1] - lons[0])
    # a wrap gap comparable to the local spacing means the axis is global
    first = gap if gap <= 1.5 * d[0] else d[0]
    last = gap if gap <= 1.5 * d[-1] else d[-1]
    left = np.concatenate([[first], d])
    right = np.concatenate([d, [last]])
    return 0.5 * (left + right)


@dataclass(frozen=True, eq=False)
class SliceLocationSet:
    """Slice centres with cosine-latitude aggregation weights."""

    lats: np.ndarray
    lons: np.ndarray
    weights: np.ndarray = field(default=None)
    shape: tuple | None = None

    def __post_init__(self):
        lats = np.atleast_1d(np.asarray(self.lats, dtype=float))
        lons = np.atleast_1d(normalize_lon(np.asarray(self.lons, dtype=float)))
        if lats.shape != lons.shape:
            raise InvalidGrid("lat/lon arrays must have equal length")
        if np.any(np.abs(lats) > 90.0):
            raise InvalidGrid("latitude outside [-90, 90]")
        w = np.maximum(np.cos(np.deg2rad(lats)), 0.0)
        # cos(90 deg) evaluates to ~6e-17, only exact poles carry zero weight
        w[np.abs(lats) == 90.0] = 0.0
        if w.sum() <= 0:
            raise InvalidGrid("slice weights sum to zero")
        object.__setattr__(self, "lats", lats)
        object.__setattr__(self, "lons", lons)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_grid(cls, grid: SpatialGrid) -> "SliceLocationSet":
        la, lo = grid.mesh()
        return cls(la, lo, shape=grid.shape)

    @classmethod
    def default(cls) -> "SliceLocationSet":
        return cls.from_grid(SpatialGrid.regular(180, 360))

    def __len__(self):
        return self.lats.size

    def region(self, lat_bounds, lon_bounds) -> "SliceLocationSet":
        m = ((self.lats >= lat_bounds[0]) & (self.lats <= lat_bounds[1])
             & (self.lons >= lon_bounds[0]) & (self.lons <= lon_bounds[1]))
        la = np.unique(self.lats[m])
        lo = np.unique(self.lons[m])
        shape = (la.size, lo.size) if la.size * lo.size == int(m.sum()) else None
        return SliceLocationSet(self.lats[m], self.lons[m], shape=shape)


def to_unit_xyz(lat, lon) -> np.ndarray:
    """Embed lat/lon (degrees) on the unit sphere; returns (..., 3)."""
    phi = np.deg2rad(np.asarray(lat, dtype=float))
    lam = np.deg2rad(np.asarray(lon, dtype=float))
    c = np.cos(phi)
    return np.stack([c * np.cos(lam), c * np.sin(lam), np.sin(phi)], axis=-1)


def chordal_distance(a, b, R: float = EARTH_RADIUS_KM):
    """Straight-line distance in km between lat/lon points ``a`` and ``b``.

    Both arguments are ``(lat, lon)`` pairs or arrays broadcastable to
    ``(..., 2)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    diff = to_unit_xyz(a[..., 0], a[..., 1]) - to_unit_xyz(b[..., 0], b[..., 1])
    d = R * np.sqrt(np.sum(diff * diff, axis=-1))
    return d if d.ndim else float(d)


def chord_to_arc(d, R: float = EARTH_RADIUS_KM):
    """Great-circle distance for a chord of length ``d``."""
    return 2.0 * R * np.arcsin(np.clip(np.asarray(d) / (2.0 * R), 0.0, 1.0))


class NeighborIndex:
    """KD-tree over the unit-sphere embedding of a grid for radius queries.

    Candidate sets are taken from the tree with a small safety margin and then
    filtered with :func:`chordal_distance`, so the result matches brute force.
    """

    def __init__(self, grid: SpatialGrid, geo: GeoConstants = DEFAULT_GEO):
        self.grid = grid
        self.geo = geo
        self._xyz = grid.xyz()
        self._tree = cKDTree(self._xyz)

    def query(self, center, r: float):
        if not r > 0:
            raise ValueError("radius must be positive")
        if r > self.geo.max_kernel_range:
            raise RangeTooLarge(f"range {r} km exceeds Earth diameter {self.geo.max_kernel_range} km")
        cxyz = to_unit_xyz(center[0], center[1])
        idx = np.asarray(self._tree.query_ball_point(cxyz, r / self.geo.earth_radius * (1 + 1e-9) + 1e-12),
                         dtype=np.intp)
        idx.sort()
        diff = self._xyz[idx] - cxyz
        d = self.geo.earth_radius * np.sqrt(np.sum(diff * diff, axis=-1))
        keep = d <= r
        return idx[keep], d[keep]


def neighbors_within(grid: SpatialGrid, center, r: float, geo: GeoConstants = DEFAULT_GEO):
    """Grid points within chordal distance ``r`` km of ``center``.

    Returns a list of ``((lat_index, lon_index), distance_km)`` sorted by
    (lat index, lon index).
    """
    idx, d = NeighborIndex(grid, geo).query(center, r)
    nlon = grid.lons.size
    return [((int(k // nlon), int(k % nlon)), float(dk)) for k, dk in zip(idx, d)]


def cell_area_weights(grid: SpatialGrid) -> np.ndarray:
    """Quadrature weights cos(lat) * dlat * dlon in steradians, shape (nlat, nlon)."""
    dlat, dlon = grid.cell_bounds()
    c = np.maximum(np.cos(np.deg2rad(grid.lats)), 0.0)
    c[np.abs(grid.lats) == 90.0] = 0.0
    return np.outer(c * np.deg2rad(dlat), np.deg2rad(dlon))

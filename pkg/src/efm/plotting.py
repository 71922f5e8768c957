"""Reproducible PNG heatmaps of per-location maps.

Colormaps are embedded as a handful of anchor colours with linear
interpolation, so images do not depend on any plotting library's defaults.
Locations are rasterised by nearest neighbour on the sphere; NaN is drawn
grey.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy.spatial import cKDTree

from .grid import to_unit_xyz

# dark blue -> teal -> green -> yellow
SEQUENTIAL = np.array([
    [68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37],
], dtype=np.float64)
# blue -> white -> red
DIVERGING = np.array([
    [33, 102, 172], [103, 169, 207], [247, 247, 247], [239, 138, 98], [178, 24, 43],
], dtype=np.float64)
NAN_RGB = (128, 128, 128)
MAX_WIDTH = 720
MAX_HEIGHT = 360


def apply_colormap(x, anchors) -> np.ndarray:
    """Map ``x`` in [0, 1] to uint8 RGB; NaN maps to grey."""
    x = np.asarray(x, dtype=np.float64)
    nan = np.isnan(x)
    pos = np.clip(np.where(nan, 0.0, x), 0.0, 1.0) * (len(anchors) - 1)
    lo = np.minimum(np.floor(pos).astype(int), len(anchors) - 2)
    frac = (pos - lo)[..., None]
    rgb = anchors[lo] * (1 - frac) + anchors[lo + 1] * frac
    rgb = np.rint(rgb).astype(np.uint8)
    rgb[nan] = NAN_RGB
    return rgb


def rasterize(lats, lons, values, width=None, height=None) -> np.ndarray:
    """Nearest-location raster over the bounding box of the locations (north up)."""
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if width is None:
        width = min(MAX_WIDTH, 4 * max(np.unique(lons).size, 1))
    if height is None:
        height = min(MAX_HEIGHT, 4 * max(np.unique(lats).size, 1))
    la0, la1 = lats.min(), lats.max()
    lo0, lo1 = lons.min(), lons.max()
    py = la1 - (np.arange(height) + 0.5) / height * (la1 - la0) if la1 > la0 else np.full(height, la0)
    px = lo0 + (np.arange(width) + 0.5) / width * (lo1 - lo0) if lo1 > lo0 else np.full(width, lo0)
    gy, gx = np.meshgrid(py, px, indexing="ij")
    tree = cKDTree(to_unit_xyz(lats, lons))
    _, idx = tree.query(to_unit_xyz(gy.ravel(), gx.ravel()))
    return values[idx].reshape(height, width)


def save_map_png(path, lats, lons, values, kind: str = "sequential", vmin=None, vmax=None) -> None:
    """Write a heatmap; ``kind`` is ``sequential`` (distances) or ``diverging`` (biases).

    Diverging maps are centred on zero with limits at the largest absolute
    finite value unless ``vmin``/``vmax`` are given.
    """
    values = np.asarray(values, dtype=np.float64)
    finite = values[np.isfinite(values)]
    if kind == "diverging":
        anchors = DIVERGING
        m = float(np.max(np.abs(finite))) if finite.size else 1.0
        vmin = -m if vmin is None else vmin
        vmax = m if vmax is None else vmax
    elif kind == "sequential":
        anchors = SEQUENTIAL
        vmin = (float(finite.min()) if finite.size else 0.0) if vmin is None else vmin
        vmax = (float(finite.max()) if finite.size else 1.0) if vmax is None else vmax
    else:
        raise ValueError(f"unknown colormap kind {kind!r}")
    span = vmax - vmin
    grid = rasterize(lats, lons, values)
    x = (grid - vmin) / span if span > 0 else np.where(np.isnan(grid), np.nan, 0.5)
    Image.fromarray(apply_colormap(x, anchors), mode="RGB").save(path, format="PNG", optimize=False)

"""Convolutional slicing on the sphere and the sliced elastic distance.

A slice is the kernel-weighted spatial average (or integral) of a field
around a centre, giving one time series per centre. Slices of the two fields
are aligned pairwise and the per-slice distances are aggregated with
cosine-latitude weights into a root-mean-square triple.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid

from .align import DpConfig, align_arrays, is_degenerate
from .errors import EmptyKernelSupport, GridMismatch, RangeTooLarge, ValidationError
from .fieldio import DAYS_PER_YEAR, Field
from .grid import DEFAULT_GEO, GeoConstants, NeighborIndex, SliceLocationSet, cell_area_weights
from .srvf import resample, uniform_grid

DEFAULT_RANGE_KM = 750.0


def wendland(d, r: float, geo: GeoConstants = DEFAULT_GEO):
    """Wendland kernel ``(1-d/r)^6 (35 d^2/r^2 + 18 d/r + 3) / 3`` on ``d <= r``, else 0."""
    if not r > 0:
        raise ValidationError("kernel range must be positive")
    if r > geo.max_kernel_range:
        raise RangeTooLarge(f"range {r} km exceeds Earth diameter {geo.max_kernel_range:.4f} km")
    d = np.asarray(d, dtype=np.float64)
    x = d / r
    out = np.where(x <= 1.0, (1.0 - np.minimum(x, 1.0)) ** 6 * (35.0 * x * x + 18.0 * x + 3.0) / 3.0, 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelConfig:
    range_r: float = DEFAULT_RANGE_KM
    normalize: bool = True
    geo: GeoConstants = DEFAULT_GEO

    def __post_init__(self):
        if not (0 < self.range_r <= self.geo.max_kernel_range):
            raise RangeTooLarge(
                f"kernel range {self.range_r} km must lie in (0, {self.geo.max_kernel_range:.4f}] km")


def slicing_matrix(grid, centers: SliceLocationSet, kcfg: KernelConfig = KernelConfig()):
    """Sparse (ncenter, ncell) operator mapping cell series to slice series."""
    index = NeighborIndex(grid, kcfg.geo)
    area = cell_area_weights(grid).ravel()
    rows, cols, vals = [], [], []
    for c in range(len(centers)):
        center = (centers.lats[c], centers.lons[c])
        idx, d = index.query(center, kcfg.range_r)
        w = wendland(d, kcfg.range_r, kcfg.geo) * area[idx]
        keep = w > 0
        idx, w = idx[keep], w[keep]
        total = math.fsum(w)
        if total <= 0:
            raise EmptyKernelSupport(
                f"no grid cell inside the {kcfg.range_r} km kernel centred at {center}", center=center)
        if kcfg.normalize:
            w = w / total
        rows.append(np.full(idx.size, c, dtype=np.intp))
        cols.append(idx)
        vals.append(w)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(len(centers), grid.size))


@dataclass(frozen=True, eq=False)
class SliceSet:
    locations: SliceLocationSet
    curves: np.ndarray  # (nloc, ntime)

    def __len__(self):
        return self.curves.shape[0]

    def resampled(self, n: int) -> "SliceSet":
        if self.curves.shape[1] == n:
            return self
        return SliceSet(self.locations, np.stack([resample(c, n) for c in self.curves]))


def slice_field(f: Field, centers: SliceLocationSet | None = None, kcfg: KernelConfig = KernelConfig(),
                matrix=None) -> SliceSet:
    """Kernel-convolve ``f`` at every centre, on ``f``'s native grid."""
    if centers is None:
        centers = SliceLocationSet.from_grid(f.grid)
    if matrix is None:
        matrix = slicing_matrix(f.grid, centers, kcfg)
    curves = np.asarray(matrix @ f.cell_series())
    return SliceSet(centers, curves)


@dataclass(frozen=True)
class SlicedElasticDistance:
    d_sa: float
    d_sp: float
    d_st: float

    def as_tuple(self):
        return (self.d_sa, self.d_sp, self.d_st)


@dataclass(frozen=True, eq=False)
class LocalDistanceMap:
    locations: SliceLocationSet
    d_amplitude: np.ndarray
    d_phase: np.ndarray
    d_translation: np.ndarray
    degenerate: np.ndarray
    gammas: np.ndarray = field(repr=False)

    def component(self, name: str) -> np.ndarray:
        return {"amplitude": self.d_amplitude, "phase": self.d_phase, "translation": self.d_translation}[name]

    def to_csv(self, path, component: str = "amplitude"):
        write_map_csv(path, self.locations, self.component(component), self.degenerate.astype(int))


@dataclass(frozen=True, eq=False)
class TimingBiasMap:
    locations: SliceLocationSet
    bias_days: np.ndarray
    event_times: np.ndarray
    flags: np.ndarray
    days_per_unit: float = float(DAYS_PER_YEAR)
    event: str = ""

    def to_csv(self, path):
        write_map_csv(path, self.locations, self.bias_days, self.flags)


def write_map_csv(path, locations: SliceLocationSet, values, flags):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "value", "flag"])
        for la, lo, v, fl in zip(locations.lats, locations.lons, values, flags):
            w.writerow(["%.17g" % la, "%.17g" % lo, "%.17g" % v, int(fl)])


def weighted_rms(values, weights) -> float:
    """``sqrt(sum w v^2 / sum w)`` with compensated sums in fixed order."""
    v = np.asarray(values, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    return math.sqrt(math.fsum(w * v * v) / math.fsum(w))


def common_length(nf: int, ng: int, n_common: int | None = None) -> int:
    if n_common is not None:
        return int(n_common)
    return nf if nf == ng else DAYS_PER_YEAR


def _pair_slices(f: Field, g: Field, centers, kcfg, n_common):
    if centers is None:
        centers = SliceLocationSet.from_grid(f.grid)
    mf = slicing_matrix(f.grid, centers, kcfg)
    mg = mf if g.grid.same_as(f.grid) else slicing_matrix(g.grid, centers, kcfg)
    n = common_length(f.ntime, g.ntime, n_common)
    fs = slice_field(f, centers, kcfg, matrix=mf).resampled(n)
    gs = slice_field(g, centers, kcfg, matrix=mg).resampled(n)
    return centers, fs, gs


def align_slices(fs: np.ndarray, gs: np.ndarray, dpcfg: DpConfig = DpConfig(), threads: int = 1):
    """Align every slice pair; returns (distances (nloc, 3), degenerate flags, warps).

    Work is split into contiguous chunks and reassembled in location order,
    so the output does not depend on ``threads``.
    """
    nloc, n = fs.shape
    dist = np.zeros((nloc, 3))
    flags = np.zeros(nloc, dtype=bool)
    gammas = np.zeros((nloc, n))

    def work(lo, hi):
        for c in range(lo, hi):
            try:
                r = align_arrays(fs[c], gs[c], dpcfg)
            except ValidationError as exc:
                raise type(exc)(f"slice {c}: {exc}") from exc
            dist[c] = r.distances
            flags[c] = r.degenerate
            gammas[c] = r.gamma

    threads = max(1, int(threads))
    if threads == 1 or nloc < 2:
        work(0, nloc)
    else:
        bounds = np.linspace(0, nloc, min(nloc, threads * 4) + 1).astype(int)
        with ThreadPoolExecutor(threads) as ex:
            for fut in [ex.submit(work, lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]:
                fut.result()
    return dist, flags, gammas


def sliced_elastic_distance(f: Field, g: Field, centers: SliceLocationSet | None = None,
                            kcfg: KernelConfig = KernelConfig(), dpcfg: DpConfig = DpConfig(),
                            threads: int = 1, n_common: int | None = None):
    """Sliced amplitude, phase and translation distances between two fields.

    Parameters
    ----------
    f, g : Field
        Reference and comparison fields; each is sliced on its own grid.
    centers : SliceLocationSet, optional
        Slice centres; defaults to the cells of ``f``'s grid.
    kcfg, dpcfg : KernelConfig, DpConfig
        Kernel and alignment settings.
    threads : int
        Worker threads for the per-slice alignments.
    n_common : int, optional
        Common time length for the slices; by default the shared ``ntime``
        or 365 when the two fields differ.

    Returns
    -------
    (SlicedElasticDistance, LocalDistanceMap)
    """
    centers, fs, gs = _pair_slices(f, g, centers, kcfg, n_common)
    dist, flags, gammas = align_slices(fs.curves, gs.curves, dpcfg, threads)
    w = centers.weights
    sed = SlicedElasticDistance(weighted_rms(dist[:, 0], w), weighted_rms(dist[:, 1], w),
                                weighted_rms(dist[:, 2], w))
    local = LocalDistanceMap(centers, dist[:, 0].copy(), dist[:, 1].copy(), dist[:, 2].copy(), flags, gammas)
    return sed, local


def bias_from_warps(gammas: np.ndarray, event_times, days_per_unit: float = float(DAYS_PER_YEAR)):
    """Per-location ``(gamma_s(t_s) - t_s) * days_per_unit``."""
    event_times = np.broadcast_to(np.asarray(event_times, dtype=np.float64), (gammas.shape[0],))
    if np.any((event_times < 0) | (event_times > 1)):
        raise ValidationError("event times must lie in [0, 1]")
    t = uniform_grid(gammas.shape[1])
    out = np.array([np.interp(te, t, gm) - te for te, gm in zip(event_times, gammas)])
    return out * days_per_unit


def timing_bias_map(f: Field, g: Field, centers: SliceLocationSet | None = None,
                    kcfg: KernelConfig = KernelConfig(), dpcfg: DpConfig = DpConfig(),
                    event_times=0.5, days_per_unit: float = float(DAYS_PER_YEAR), threads: int = 1,
                    local: LocalDistanceMap | None = None, event: str = "") -> TimingBiasMap:
    """Timing bias of ``g`` relative to ``f`` at each slice centre, in days.

    ``event_times`` is a scalar or one normalised time per centre. A
    previously computed ``local`` map is reused instead of re-aligning.
    """
    if local is None:
        _, local = sliced_elastic_distance(f, g, centers, kcfg, dpcfg, threads)
    centers = local.locations
    et = np.broadcast_to(np.asarray(event_times, dtype=np.float64), (len(centers),)).copy()
    bias = bias_from_warps(local.gammas, et, days_per_unit)
    return TimingBiasMap(centers, bias, et, local.degenerate.astype(int), days_per_unit, event)


def _check_same(f: Field, g: Field):
    if not f.grid.same_as(g.grid) or f.ntime != g.ntime:
        raise GridMismatch("RMSE/MAE need identical grids and time axes; regrid externally")


def _cos_weights(f: Field) -> np.ndarray:
    w = np.maximum(np.cos(np.deg2rad(f.grid.lats)), 0.0)
    w[np.abs(f.grid.lats) == 90.0] = 0.0
    return np.broadcast_to(w[None, :, None], f.values.shape)


def rmse(f: Field, g: Field) -> float:
    """Cosine-latitude weighted root-mean-square difference over space and time."""
    _check_same(f, g)
    w = _cos_weights(f)
    d = f.values - g.values
    return math.sqrt(math.fsum((w * d * d).ravel()) / math.fsum(w.ravel()))


def mae(f: Field, g: Field) -> float:
    _check_same(f, g)
    w = _cos_weights(f)
    return math.fsum((w * np.abs(f.values - g.values)).ravel()) / math.fsum(w.ravel())


def annual_mean_bias(f: Field, g: Field, centers=None, kcfg: KernelConfig = KernelConfig()) -> float:
    """Weighted RMS over slices of the difference in slice time-means.

    Substitute for the translation component when ``f(0) - g(0)`` is of
    little interest.
    """
    centers, fs, gs = _pair_slices(f, g, centers, kcfg, None)
    t = uniform_grid(fs.curves.shape[1])
    diff = trapezoid(gs.curves, t, axis=1) - trapezoid(fs.curves, t, axis=1)
    return weighted_rms(diff, centers.weights)


def degenerate_mask(curves: np.ndarray) -> np.ndarray:
    return np.array([is_degenerate(c) for c in curves])

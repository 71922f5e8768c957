"""Elastic alignment of two univariate functions by dynamic programming.

The SRVFs are taken as exact for the piecewise-linear interpolants of the
samples (one constant value per sample interval), so the cost of any lattice
path is an exact integral and the DP optimum is exact over the lattice. The
reference ``f`` is never warped; ``gamma`` warps ``g`` onto ``f``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import gcd, log

import numpy as np
from numba import njit

from .errors import DegenerateInputWarning, ValidationError
from .srvf import interval_srvf, resample, uniform_grid

DEGENERATE_RTOL = 1e-8


@dataclass(frozen=True)
class DpConfig:
    """Lattice parameters.

    ``grid_n`` of None runs the DP on the full sample grid; a smaller value
    runs it on a resampled lattice and lifts the warp back to full resolution.
    ``max_slope`` bounds the step set to coprime (a, b) with a, b <= max_slope.
    """

    grid_n: int | None = None
    max_slope: int = 7
    penalty: float = 0.0

    def __post_init__(self):
        if self.grid_n is not None and self.grid_n < 8:
            raise ValidationError("DP lattice needs grid_n >= 8")
        if self.max_slope < 1:
            raise ValidationError("max_slope must be >= 1")
        if not self.penalty >= 0:
            raise ValidationError("penalty must be nonnegative")


@dataclass(frozen=True, eq=False)
class AlignmentResult:
    gamma: np.ndarray
    aligned_g: np.ndarray
    d_amplitude: float
    d_phase: float
    d_translation: float
    dp_cost: float
    degenerate: bool = False
    path: np.ndarray = field(default=None, repr=False)

    @property
    def distances(self) -> tuple[float, float, float]:
        return (self.d_amplitude, self.d_phase, self.d_translation)


@lru_cache(maxsize=None)
def step_table(max_slope: int):
    """Allowed steps and their breakpoint tables.

    Steps are ordered for tie-breaking: slope closest to 1 first, then
    shorter steps, then lexicographically. For a step (a, b) the unit
    parameter interval is split at every multiple of 1/a and 1/b; each piece
    records its length and the f- and g-interval offsets it falls in.
    """
    steps = [(a, b) for a in range(1, max_slope + 1) for b in range(1, max_slope + 1) if gcd(a, b) == 1]
    steps.sort(key=lambda s: (abs(log(s[1] / s[0])), s[0] + s[1], s))
    sa = np.array([s[0] for s in steps], dtype=np.int64)
    sb = np.array([s[1] for s in steps], dtype=np.int64)
    offs = [0]
    lens, dis, djs = [], [], []
    for a, b in steps:
        cuts = sorted({Fraction(i, a) for i in range(a + 1)} | {Fraction(j, b) for j in range(b + 1)})
        for x0, x1 in zip(cuts[:-1], cuts[1:]):
            mid = (x0 + x1) / 2
            lens.append(float(x1 - x0))
            dis.append(int(mid * a))
            djs.append(int(mid * b))
        offs.append(len(lens))
    return (sa, sb, np.array(offs, dtype=np.int64), np.array(lens), np.array(dis, dtype=np.int64),
            np.array(djs, dtype=np.int64))


@njit(cache=True, nogil=True)
def edge_weight(Q1, Q2, k, l, s, sa, sb, offs, lens, dis, djs, h, penalty):
    """Exact squared-L2 cost of step ``s`` from lattice node (k, l)."""
    a = sa[s]
    b = sb[s]
    m = b / a
    rs = np.sqrt(m)
    acc = 0.0
    for p in range(offs[s], offs[s + 1]):
        d = Q1[k + dis[p]] - rs * Q2[l + djs[p]]
        acc += lens[p] * d * d
    w = a * h * acc
    if penalty > 0.0:
        w += penalty * a * h * (1.0 - rs) ** 2
    return w


@njit(cache=True, nogil=True)
def dp_lattice(Q1, Q2, sa, sb, offs, lens, dis, djs, penalty):
    """Minimum-cost monotone path from (0, 0) to (N, N); returns (cost table, step table).

    Row ``i`` depends only on earlier rows, so each row is filled step by
    step with a contiguous inner loop over ``j``. Per-edge arithmetic matches
    :func:`edge_weight` operation for operation.
    """
    N = Q1.size
    h = 1.0 / N
    E = np.full((N + 1, N + 1), np.inf)
    P = np.full((N + 1, N + 1), -1, dtype=np.int64)
    E[0, 0] = 0.0
    acc = np.empty(N + 1)
    ns = sa.size
    for i in range(1, N + 1):
        row = E[i]
        prow = P[i]
        for s in range(ns):
            a = sa[s]
            b = sb[s]
            k = i - a
            if k < 0 or b > N:
                continue
            m = b / a
            rs = np.sqrt(m)
            prev = E[k]
            # columns jj whose predecessor (k, jj) is reachable
            lo = 0
            while lo <= N - b and prev[lo] == np.inf:
                lo += 1
            hi = N - b
            while hi >= lo and prev[hi] == np.inf:
                hi -= 1
            if lo > hi:
                continue
            for jj in range(lo, hi + 1):
                acc[jj] = 0.0
            for p in range(offs[s], offs[s + 1]):
                L = lens[p]
                c1 = Q1[k + dis[p]]
                base = djs[p]
                for jj in range(lo, hi + 1):
                    d = c1 - rs * Q2[jj + base]
                    acc[jj] += L * d * d
            pen = penalty * a * h * (1.0 - rs) ** 2 if penalty > 0.0 else 0.0
            for jj in range(lo, hi + 1):
                w = a * h * acc[jj]
                if penalty > 0.0:
                    w += pen
                c = prev[jj] + w
                if c < row[jj + b]:
                    row[jj + b] = c
                    prow[jj + b] = s
    return E, P


def _backtrack(P, sa, sb):
    i = j = P.shape[0] - 1
    pts = [(i, j)]
    while i > 0 or j > 0:
        s = P[i, j]
        i -= sa[s]
        j -= sb[s]
        pts.append((i, j))
    return np.array(pts[::-1], dtype=np.int64)


@njit(cache=True, nogil=True)
def warp_cost(Q1, Q2, gamma, t):
    """Exact ``||q_f - (q_g, gamma)||^2`` for piecewise-linear ``gamma`` on grid ``t``.

    ``Q1`` and ``Q2`` are interval SRVFs on the same grid.
    """
    N = Q1.size
    acc = 0.0
    j = 0
    for k in range(N):
        t0 = t[k]
        t1 = t[k + 1]
        g0 = gamma[k]
        g1 = gamma[k + 1]
        dt = t1 - t0
        if g1 <= g0:
            acc += dt * Q1[k] * Q1[k]
            continue
        m = (g1 - g0) / dt
        rs = np.sqrt(m)
        while j < N - 1 and t[j + 1] <= g0:
            j += 1
        cur_g = g0
        cur_t = t0
        while True:
            end_g = g1 if g1 <= t[j + 1] or j == N - 1 else t[j + 1]
            if end_g >= g1:
                seg = t1 - cur_t
            else:
                seg = (end_g - cur_g) / m
            d = Q1[k] - rs * Q2[j]
            acc += seg * d * d
            if end_g >= g1:
                break
            cur_t += seg
            cur_g = end_g
            j += 1
    return acc


def phase_distance(gamma) -> float:
    """``arccos`` of the integral of ``sqrt(gamma')`` for a piecewise-linear warp."""
    g = np.asarray(gamma, dtype=np.float64)
    dt = np.diff(uniform_grid(g.size))
    dg = np.maximum(np.diff(g), 0.0)
    ip = float(np.sum(np.sqrt(dg * dt)) / np.sum(dt))
    return float(np.arccos(np.clip(ip, -1.0, 1.0)))


def is_degenerate(y, rtol: float = DEGENERATE_RTOL) -> bool:
    """True when a curve is numerically constant (range <= rtol * max |y|)."""
    y = np.asarray(y)
    return bool(np.ptp(y) <= rtol * np.max(np.abs(y)))


def optimal_warp(f, g, cfg: DpConfig = DpConfig()):
    """DP warp aligning ``g`` to ``f``; returns (gamma, dp_cost, lattice path)."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    n = f.size
    m = n if cfg.grid_n is None else min(cfg.grid_n, n)
    fl, gl = (f, g) if m == n else (resample(f, m), resample(g, m))
    tab = step_table(cfg.max_slope)
    E, P = dp_lattice(interval_srvf(fl), interval_srvf(gl), *tab, float(cfg.penalty))
    path = _backtrack(P, tab[0], tab[1])
    tl = uniform_grid(m)
    gam_l = tl[path[:, 1]]
    gamma = np.interp(uniform_grid(n), tl[path[:, 0]], gam_l)
    gamma[0], gamma[-1] = 0.0, 1.0
    return gamma, float(E[-1, -1]), path


def align_arrays(f, g, cfg: DpConfig = DpConfig()) -> AlignmentResult:
    """Alignment without warnings; degenerate inputs come back flagged."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if f.shape != g.shape or f.ndim != 1:
        raise ValidationError("f and g must be 1-D arrays on the same grid")
    if f.size < 8:
        raise ValidationError("alignment needs at least 8 samples")
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
        raise ValidationError("non-finite input to align")
    n = f.size
    t = uniform_grid(n)
    d_t = abs(float(f[0]) - float(g[0]))
    degenerate = cfg.penalty == 0 and (is_degenerate(f) or is_degenerate(g))
    Qf, Qg = interval_srvf(f), interval_srvf(g)
    if degenerate:
        gamma = t.copy()
        path = None
        cost = float(warp_cost(Qf, Qg, gamma, t))
        dp = cost
    else:
        gamma, dp, path = optimal_warp(f, g, cfg)
        cost = float(warp_cost(Qf, Qg, gamma, t))
    aligned = np.interp(gamma, t, g)
    return AlignmentResult(
        gamma=gamma,
        aligned_g=aligned,
        d_amplitude=float(np.sqrt(max(cost, 0.0))),
        d_phase=0.0 if degenerate else phase_distance(gamma),
        d_translation=d_t,
        dp_cost=dp,
        degenerate=degenerate,
        path=path,
    )


def align(f, g, cfg: DpConfig = DpConfig()) -> AlignmentResult:
    """Align ``g`` to ``f`` and return amplitude, phase and translation distances.

    Parameters
    ----------
    f, g : array_like
        Samples of the two functions on the same uniform grid over [0, 1].
        ``f`` is the reference and keeps the identity warp.
    cfg : DpConfig
        Lattice configuration.

    Returns
    -------
    AlignmentResult
        ``gamma`` satisfies ``g(gamma(t)) ~ f(t)``. A constant input makes the
        problem ill-posed; the identity warp is returned with
        ``degenerate=True`` and a :class:`DegenerateInputWarning`.
    """
    res = align_arrays(f, g, cfg)
    if res.degenerate:
        warnings.warn("constant input: alignment is ill-posed, identity warp returned",
                      DegenerateInputWarning, stacklevel=2)
    return res


def timing_bias(result, t) -> float | np.ndarray:
    """``gamma(t) - t``: positive when the event in ``g`` comes late relative to ``f``."""
    gamma = result.gamma if isinstance(result, AlignmentResult) else np.asarray(result)
    t = np.asarray(t, dtype=np.float64)
    if np.any((t < 0) | (t > 1)):
        raise ValidationError("event time must lie in [0, 1]")
    b = np.interp(t, uniform_grid(gamma.size), gamma) - t
    return b if b.ndim else float(b)


def bias_to_days(b, days_per_unit: float = 365.0):
    return np.asarray(b) * days_per_unit if np.ndim(b) else float(b) * days_per_unit

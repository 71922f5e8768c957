"""Square-root velocity functions and the warping group on [0, 1].

Functions are plain arrays sampled on a uniform grid ``t_k = k / (n - 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import InvalidWarp, NonInvertible, ValidationError

WARP_TOL = 1e-10


def uniform_grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def _as_curve(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 4:
        raise ValidationError("functions need at least 4 samples on a 1-D grid")
    if not np.all(np.isfinite(y)):
        raise ValidationError("non-finite function values")
    return y


def resample(y, n: int) -> np.ndarray:
    """Linear resampling of a uniformly sampled function onto ``n`` points."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == n:
        return y.copy()
    return np.interp(uniform_grid(n), uniform_grid(y.size), y)


@dataclass(frozen=True, eq=False)
class Func1D:
    y: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _as_curve(self.y))

    @property
    def t(self):
        return uniform_grid(self.y.size)

    @property
    def origin_value(self) -> float:
        return float(self.y[0])


@dataclass(frozen=True, eq=False)
class WarpingFunction:
    """Boundary-preserving, weakly increasing map of [0, 1] onto itself.

    Construction clamps to [0, 1], pins the endpoints and re-monotonises;
    an input needing an adjustment larger than ``tol`` raises
    :class:`InvalidWarp`. ``adjustment`` records the largest change made.
    """

    gamma: np.ndarray
    adjustment: float = 0.0
    tol: float = WARP_TOL

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 1 or g.size < 2:
            raise InvalidWarp("warp must be a 1-D array with at least 2 samples")
        if not np.all(np.isfinite(g)):
            raise InvalidWarp("non-finite warp values")
        fixed = np.clip(g, 0.0, 1.0)
        fixed[0], fixed[-1] = 0.0, 1.0
        fixed = np.maximum.accumulate(fixed)
        adj = float(np.max(np.abs(fixed - g)))
        if adj > self.tol:
            raise InvalidWarp(f"warp violates boundary/monotonicity constraints by {adj:.3g}")
        fixed.setflags(write=False)
        object.__setattr__(self, "gamma", fixed)
        object.__setattr__(self, "adjustment", adj)

    @classmethod
    def identity(cls, n: int) -> "WarpingFunction":
        return cls(uniform_grid(n))

    @property
    def t(self):
        return uniform_grid(self.gamma.size)

    def __call__(self, x):
        return np.interp(x, self.t, self.gamma)


def _warp_array(gamma) -> np.ndarray:
    if isinstance(gamma, WarpingFunction):
        return gamma.gamma
    return WarpingFunction(gamma).gamma


def to_srvf(f) -> np.ndarray:
    """SRVF ``sign(f') * sqrt(|f'|)`` at the samples of ``f``.

    Derivatives are centred differences inside the domain and second-order
    one-sided stencils at the two endpoints.
    """
    f = _as_curve(f)
    h = 1.0 / (f.size - 1)
    df = np.gradient(f, h, edge_order=2)
    return np.sign(df) * np.sqrt(np.abs(df))


def interval_srvf(f) -> np.ndarray:
    """SRVF of the piecewise-linear interpolant of ``f``: one value per interval."""
    f = np.asarray(f, dtype=np.float64)
    df = np.diff(f) * (f.size - 1)
    return np.sign(df) * np.sqrt(np.abs(df))


def from_srvf(q, f0: float = 0.0) -> np.ndarray:
    """Invert :func:`to_srvf` up to the supplied starting value ``f0``."""
    q = np.asarray(q, dtype=np.float64)
    t = uniform_grid(q.size)
    return f0 + cumulative_trapezoid(q * np.abs(q), t, initial=0.0)


def warp_function(f, gamma) -> np.ndarray:
    """Composition ``f(gamma(t))`` by linear interpolation."""
    f = np.asarray(f, dtype=np.float64)
    g = _warp_array(gamma)
    if g.size != f.size:
        g = np.interp(uniform_grid(f.size), uniform_grid(g.size), g)
    return np.interp(g, uniform_grid(f.size), f)


def warp_srvf(q, gamma) -> np.ndarray:
    """Group action ``(q o gamma) * sqrt(gamma')`` on an SRVF."""
    q = np.asarray(q, dtype=np.float64)
    g = _warp_array(gamma)
    if g.size != q.size:
        g = np.interp(uniform_grid(q.size), uniform_grid(g.size), g)
    h = 1.0 / (q.size - 1)
    dg = np.maximum(np.gradient(g, h, edge_order=2), 0.0)
    return np.interp(g, uniform_grid(q.size), q) * np.sqrt(dg)


def invert_warp(gamma) -> np.ndarray:
    """Inverse warp sampled on the same grid.

    Flat stretches up to two grid steps are tolerated by collapsing each run
    of equal values to its mid-time; longer plateaus raise NonInvertible.
    """
    g = _warp_array(gamma)
    n = g.size
    t = uniform_grid(n)
    steps = np.diff(g) > 0
    run = longest = 0
    for s in steps:
        run = 0 if s else run + 1
        longest = max(longest, run)
    if longest > 2:
        raise NonInvertible(f"warp has a flat segment of {longest} grid steps")
    vals, start, counts = np.unique(g, return_index=True, return_counts=True)
    tt = t[start] + 0.5 * (counts - 1) / (n - 1)
    tt[0], tt[-1] = 0.0, 1.0
    inv = np.interp(t, vals, tt)
    return WarpingFunction(inv).gamma


def compose_warps(gamma1, gamma2) -> np.ndarray:
    """``gamma1(gamma2(t))``."""
    return WarpingFunction(warp_function(_warp_array(gamma1), gamma2)).gamma


def l2_norm(q) -> float:
    q = np.asarray(q, dtype=np.float64)
    return float(np.sqrt(trapezoid(q * q, uniform_grid(q.size))))

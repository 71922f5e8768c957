"""Threshold-based event dates on slice curves and their timing biases.

The onset is the first sample strictly above ``threshold_fraction`` times the
curve maximum, the retreat the last one. Event dates are taken from the
reference field's slices; the comparison field's warp is then evaluated at
those dates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .align import DpConfig, is_degenerate
from .errors import ValidationError
from .fieldio import DAYS_PER_YEAR, Field
from .grid import SliceLocationSet
from .sliced import KernelConfig, TimingBiasMap, bias_from_warps, sliced_elastic_distance, slice_field

MCR_REGION = ((15.0, 30.0), (68.0, 88.0))

FLAG_DEGENERATE = 1
FLAG_UNDEFINED = 2
FLAG_BOUNDARY = 4


@dataclass(frozen=True)
class EventConfig:
    threshold_fraction: float = 0.5
    region: tuple = MCR_REGION
    events: tuple = ("onset", "retreat")

    def __post_init__(self):
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ValidationError("threshold_fraction must lie in (0, 1)")
        (la0, la1), (lo0, lo1) = self.region
        if la0 > la1 or lo0 > lo1:
            raise ValidationError("region bounds must be ordered (south, north), (west, east)")
        for e in self.events:
            if e not in ("onset", "retreat"):
                raise ValidationError(f"unknown event kind {e!r}")


@dataclass(frozen=True, eq=False)
class EventDateMap:
    """Per-location event sample indices; -1 marks an undefined event."""

    locations: SliceLocationSet
    onset_index: np.ndarray
    retreat_index: np.ndarray
    ntime: int

    @property
    def defined(self) -> np.ndarray:
        return self.onset_index >= 0

    def times(self, event: str) -> np.ndarray:
        idx = self.onset_index if event == "onset" else self.retreat_index
        return np.where(idx >= 0, idx / (self.ntime - 1), np.nan)

    def days(self, event: str) -> np.ndarray:
        """Day of year (1-based, 365-day calendar); -1 where undefined."""
        idx = self.onset_index if event == "onset" else self.retreat_index
        if self.ntime == DAYS_PER_YEAR:
            d = idx + 1
        else:
            d = np.rint(idx / (self.ntime - 1) * (DAYS_PER_YEAR - 1)).astype(int) + 1
        return np.where(idx >= 0, d, -1)


def event_indices(y, threshold_fraction: float = 0.5) -> tuple[int, int]:
    """(onset, retreat) sample indices of one curve, (-1, -1) if undefined."""
    y = np.asarray(y, dtype=np.float64)
    top = y.max()
    if top <= 0 or is_degenerate(y):
        return -1, -1
    above = np.flatnonzero(y > threshold_fraction * top)
    if above.size == 0:
        return -1, -1
    return int(above[0]), int(above[-1])


def detect_events(slices, cfg: EventConfig = EventConfig()) -> EventDateMap:
    curves = slices.curves
    on = np.empty(curves.shape[0], dtype=int)
    off = np.empty(curves.shape[0], dtype=int)
    for c, y in enumerate(curves):
        on[c], off[c] = event_indices(y, cfg.threshold_fraction)
    return EventDateMap(slices.locations, on, off, curves.shape[1])


def region_centers(f: Field, region=MCR_REGION) -> SliceLocationSet:
    return SliceLocationSet.from_grid(f.grid).region(*region)


@dataclass
class EventTimingResult:
    dates: EventDateMap
    onset: TimingBiasMap
    retreat: TimingBiasMap

    def to_csv(self, path):
        loc = self.dates.locations
        on_d, off_d = self.dates.days("onset"), self.dates.days("retreat")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lat", "lon", "onset_day", "retreat_day", "onset_bias_days", "retreat_bias_days",
                        "onset_flags", "retreat_flags"])
            for k in range(len(loc)):
                w.writerow(["%.17g" % loc.lats[k], "%.17g" % loc.lons[k], int(on_d[k]), int(off_d[k]),
                            "%.17g" % self.onset.bias_days[k], "%.17g" % self.retreat.bias_days[k],
                            int(self.onset.flags[k]), int(self.retreat.flags[k])])


def event_timing_bias(f: Field, g: Field, cfg: EventConfig = EventConfig(), kcfg: KernelConfig = KernelConfig(),
                      dpcfg: DpConfig = DpConfig(), centers: SliceLocationSet | None = None,
                      threads: int = 1) -> EventTimingResult:
    """Onset and retreat timing biases of ``g`` relative to ``f`` over a region.

    Event dates come from ``f``'s slices. Flags per location: 1 degenerate
    slice, 2 undefined event (bias is NaN), 4 event on the first or last
    day, where the warp is pinned and the bias is 0 by construction.
    """
    if centers is None:
        centers = region_centers(f, cfg.region)
    if len(centers) == 0:
        raise ValidationError(f"no slice centres inside region {cfg.region}")
    fs = slice_field(f, centers, kcfg)
    dates = detect_events(fs, cfg)
    _, local = sliced_elastic_distance(f, g, centers, kcfg, dpcfg, threads)
    dpu = float(f.metadata.get("days_per_unit", DAYS_PER_YEAR))
    maps = {}
    for event in ("onset", "retreat"):
        idx = dates.onset_index if event == "onset" else dates.retreat_index
        defined = idx >= 0
        et = np.where(defined, idx / max(dates.ntime - 1, 1), 0.0)
        bias = bias_from_warps(local.gammas, et, dpu)
        flags = np.where(local.degenerate, FLAG_DEGENERATE, 0)
        flags = flags | np.where(~defined, FLAG_UNDEFINED, 0)
        flags = flags | np.where(defined & ((idx == 0) | (idx == dates.ntime - 1)), FLAG_BOUNDARY, 0)
        bias = np.where(defined, bias, np.nan)
        maps[event] = TimingBiasMap(centers, bias, np.where(defined, et, np.nan), flags.astype(int), dpu, event)
    return EventTimingResult(dates, maps["onset"], maps["retreat"])

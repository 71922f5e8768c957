"""Gridded space-time fields: FGRID1 binary files, CSV interchange, climatologies.

FGRID1 layout::

    b"FGRID1"                      6 bytes
    header length                  uint64, little-endian
    header                         UTF-8 JSON (dims, lats, lons, name, units, ...)
    payload                        ntime*nlat*nlon float64, little-endian, [time][lat][lon]
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimMismatch, MagicMismatch, MissingDay, NonFiniteValue, ParseError, ValidationError
from .grid import SpatialGrid

MAGIC = b"FGRID1"
DAYS_PER_YEAR = 365
MIN_NTIME = 4


def _check_finite(values: np.ndarray, what="field"):
    bad = ~np.isfinite(values)
    if bad.any():
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise NonFiniteValue(f"non-finite value in {what} at index {idx}", index=idx)


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on a lat-lon grid over the normalised time axis [0, 1].

    ``values`` is indexed ``[time][lat][lon]``; sample ``k`` sits at
    ``t_k = k / (ntime - 1)``.
    """

    grid: SpatialGrid
    values: np.ndarray
    name: str = ""
    units: str = "mm/day"
    variable: str = "pr"
    calendar: str = "noleap"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64, order="C")
        if v.ndim != 3:
            raise DimMismatch(f"values must be 3-D [time][lat][lon], got shape {v.shape}")
        if v.shape[1:] != self.grid.shape:
            raise DimMismatch(f"values shape {v.shape[1:]} does not match grid {self.grid.shape}")
        if v.shape[0] < MIN_NTIME:
            raise ValidationError(f"need at least {MIN_NTIME} time samples, got {v.shape[0]}")
        _check_finite(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def ntime(self) -> int:
        return self.values.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.ntime)

    def cell_series(self) -> np.ndarray:
        """Values reshaped to (ncell, ntime), cells in row-major [lat][lon] order."""
        return self.values.reshape(self.ntime, -1).T

    def with_values(self, values, **changes) -> "Field":
        kw = dict(name=self.name, units=self.units, variable=self.variable,
                  calendar=self.calendar, metadata=dict(self.metadata))
        kw.update(changes)
        return Field(self.grid, values, **kw)


def write_field(f: Field, path) -> None:
    header = {
        "dims": [f.ntime, f.grid.lats.size, f.grid.lons.size],
        "lats": f.grid.lats.tolist(),
        "lons": f.grid.lons.tolist(),
        "name": f.name,
        "units": f.units,
        "variable": f.variable,
        "calendar": f.calendar,
        "metadata": f.metadata,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hb)))
        fh.write(hb)
        fh.write(f.values.astype("<f8", copy=False).tobytes(order="C"))


def read_field(path) -> Field:
    raw = Path(path).read_bytes()
    if raw[:6] != MAGIC:
        raise MagicMismatch(f"{path}: bad magic {raw[:6]!r}, expected {MAGIC!r}")
    if len(raw) < 14:
        raise DimMismatch(f"{path}: truncated header")
    (hlen,) = struct.unpack("<Q", raw[6:14])
    try:
        header = json.loads(raw[14:14 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DimMismatch(f"{path}: unreadable header: {exc}") from exc
    nt, nlat, nlon = header["dims"]
    payload = raw[14 + hlen:]
    expected = nt * nlat * nlon * 8
    if len(payload) != expected:
        raise DimMismatch(
            f"{path}: header dims {nt}x{nlat}x{nlon} need {expected // 8} doubles, payload has {len(payload) / 8:g}")
    if len(header["lats"]) != nlat or len(header["lons"]) != nlon:
        raise DimMismatch(f"{path}: coordinate arrays disagree with dims")
    values = np.frombuffer(payload, dtype="<f8").reshape(nt, nlat, nlon).astype(np.float64)
    _check_finite(values, what=str(path))
    grid = SpatialGrid(np.array(header["lats"]), np.array(header["lons"]))
    return Field(grid, values, name=header.get("name", ""), units=header.get("units", ""),
                 variable=header.get("variable", ""), calendar=header.get("calendar", "noleap"),
                 metadata=header.get("metadata", {}))


def regrid_to_csv(f: Field, path) -> None:
    """Write ``time,lat,lon,value`` rows; time is the normalised coordinate."""
    t = f.times
    with open(path, "w", newline="") as fh:
        fh.write("time,lat,lon,value\n")
        for k in range(f.ntime):
            for i, la in enumerate(f.grid.lats):
                for j, lo in enumerate(f.grid.lons):
                    fh.write("%.17g,%.17g,%.17g,%.17g\n" % (t[k], la, lo, f.values[k, i, j]))


def csv_to_field(path, name="", units="mm/day") -> Field:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time", "lat", "lon", "value"]:
            raise ParseError(f"{path}:1: expected header time,lat,lon,value", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ParseError(f"{path}:{lineno}: expected 4 columns, got {len(row)}", line=lineno)
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}", line=lineno) from exc
            if not all(np.isfinite(vals)):
                raise NonFiniteValue(f"{path}:{lineno}: non-finite value", index=lineno)
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no data rows", line=2)
    arr = np.array(rows)
    times, ti = np.unique(arr[:, 0], return_inverse=True)
    lats, li = np.unique(arr[:, 1], return_inverse=True)
    lons, oi = np.unique(arr[:, 2], return_inverse=True)
    shape = (times.size, lats.size, lons.size)
    if arr.shape[0] != np.prod(shape):
        raise DimMismatch(f"{path}: {arr.shape[0]} rows cannot fill a {shape} grid")
    values = np.full(shape, np.nan)
    values[ti, li, oi] = arr[:, 3]
    if np.isnan(values).any():
        raise DimMismatch(f"{path}: duplicate or missing (time, lat, lon) combinations")
    return Field(SpatialGrid(lats, lons), values, name=name, units=units)


def noleap_day_of_year(dates) -> tuple[np.ndarray, np.ndarray]:
    """Day-of-year on a 365-day calendar plus a Feb-29 mask for ``datetime64[D]`` dates."""
    dates = np.asarray(dates, dtype="datetime64[D]")
    years = dates.astype("datetime64[Y]")
    months = (dates.astype("datetime64[M]") - years.astype("datetime64[M]")).astype(int) + 1
    days = (dates - dates.astype("datetime64[M]")).astype(int) + 1
    leap = (months == 2) & (days == 29)
    cum = np.array([0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334])
    doy = cum[months - 1] + days
    return doy.astype(int), leap


def year_dates(year: int, ndays: int) -> np.ndarray:
    start = np.datetime64(_dt.date(year, 1, 1), "D")
    return start + np.arange(ndays)


def daily_climatology(stack, grid: SpatialGrid, *, day_of_year=None, dates=None, leap_mask=None,
                      name="climatology", units="mm/day") -> Field:
    """Per-calendar-day mean over years on the 365-day no-leap calendar.

    ``stack`` has shape (ndays, nlat, nlon). Give either ``dates``
    (Feb 29 is dropped automatically) or ``day_of_year`` labels in 1..365,
    optionally with ``leap_mask`` marking leap days to discard.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1:] != grid.shape:
        raise DimMismatch(f"stack shape {stack.shape} incompatible with grid {grid.shape}")
    _check_finite(stack, what="daily stack")
    if dates is not None:
        doy, leap = noleap_day_of_year(dates)
    elif day_of_year is not None:
        doy = np.asarray(day_of_year, dtype=int)
        leap = np.zeros(doy.shape, bool) if leap_mask is None else np.asarray(leap_mask, bool)
    else:
        raise ValidationError("need dates or day_of_year labels")
    if doy.shape[0] != stack.shape[0]:
        raise DimMismatch("one label per day required")
    keep = ~leap
    doy, stack = doy[keep], stack[keep]
    if np.any((doy < 1) | (doy > DAYS_PER_YEAR)):
        raise ValidationError("day-of-year labels must lie in 1..365 once leap days are removed")
    counts = np.bincount(doy - 1, minlength=DAYS_PER_YEAR)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise MissingDay(f"no observations for day-of-year {missing[0] + 1}", day=int(missing[0] + 1))
    sums = np.zeros((DAYS_PER_YEAR,) + grid.shape)
    np.add.at(sums, doy - 1, stack)
    clim = sums / counts[:, None, None]
    return Field(grid, clim, name=name, units=units, metadata={"days_per_unit": DAYS_PER_YEAR})


def days_per_unit(f: Field) -> float:
    return float(f.metadata.get("days_per_unit", DAYS_PER_YEAR))

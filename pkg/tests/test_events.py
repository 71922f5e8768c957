import numpy as np
import pytest

from efm.errors import ValidationError
from efm.events import (FLAG_BOUNDARY, FLAG_UNDEFINED, EventConfig, detect_events, event_indices,
                        event_timing_bias)
from efm.fieldio import Field
from efm.grid import SliceLocationSet, SpatialGrid
from efm.sliced import KernelConfig, SliceSet
from efm.srvf import invert_warp, uniform_grid


def triangle(n=365):
    t = uniform_grid(n)
    return 1.0 - np.abs(t - 0.5) * 2


def unimodal(rng, n=365):
    t = uniform_grid(n)
    c = rng.uniform(0.2, 0.8)
    w = rng.uniform(0.03, 0.3)
    return 0.1 + np.exp(-0.5 * ((t - c) / w) ** 2) * rng.uniform(0.5, 20)


def test_triangle_quarter_points():
    on, off = event_indices(triangle(), 0.5)
    # day d (1-based) sits at t = (d - 1) / 364
    assert abs((on + 1) - (0.25 * 364 + 1)) <= 1
    assert abs((off + 1) - (0.75 * 364 + 1)) <= 1


def test_constant_and_nonpositive_curves_undefined():
    assert event_indices(np.full(365, 2.0)) == (-1, -1)
    assert event_indices(np.zeros(365)) == (-1, -1)
    assert event_indices(-1.0 - triangle()) == (-1, -1)


def test_single_day_event():
    y = np.ones(365)
    y[179] = 3.0  # day 180
    assert event_indices(y, 0.5) == (179, 179)


def test_strict_exceedance():
    y = np.array([0.0, 1.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0])
    assert event_indices(y, 0.5) == (2, 2)


def test_scale_invariance_exact():
    rng = np.random.default_rng(1)
    for _ in range(50):
        y = unimodal(rng)
        for c in (1e-3, 0.5, 2.0, 1e4):
            assert event_indices(c * y, 0.5) == event_indices(y, 0.5)


def test_threshold_monotonicity():
    rng = np.random.default_rng(2)
    for _ in range(100):
        y = unimodal(rng)
        prev_on, prev_off = event_indices(y, 0.3)
        for frac in (0.5, 0.6, 0.8):
            on, off = event_indices(y, frac)
            assert on >= prev_on and off <= prev_off and on <= off
            prev_on, prev_off = on, off


def test_detect_events_days():
    locs = SliceLocationSet([20.0, 25.0], [70.0, 75.0])
    curves = np.stack([triangle(), np.full(365, 1.0)])
    dates = detect_events(SliceSet(locs, curves))
    assert dates.days("onset")[0] == dates.onset_index[0] + 1
    assert dates.days("onset")[1] == -1 and np.isnan(dates.times("retreat")[1])


def test_config_validation():
    with pytest.raises(ValidationError):
        EventConfig(threshold_fraction=1.0)
    with pytest.raises(ValidationError):
        EventConfig(region=((30.0, 15.0), (68.0, 88.0)))
    with pytest.raises(ValidationError):
        EventConfig(events=("peak",))


def region_field(ntime=365):
    grid = SpatialGrid(np.arange(15.5, 30.0, 2.0), np.arange(69.0, 88.0, 2.0))
    t = uniform_grid(ntime)[:, None, None]
    la, lo = (a.reshape(grid.shape) for a in grid.mesh())
    centre = 0.5 + 0.002 * (la - 22) + 0.001 * (lo - 78)
    vals = 1.0 + 8.0 * np.exp(-0.5 * ((t - centre[None]) / 0.08) ** 2) + 0.5 * np.cos(2 * np.pi * t)
    return Field(grid, vals, metadata={"days_per_unit": 365})


def test_identical_fields_zero_bias():
    f = region_field()
    res = event_timing_bias(f, f, kcfg=KernelConfig(500.0))
    assert np.all(res.onset.bias_days == 0.0) and np.all(res.retreat.bias_days == 0.0)
    assert np.all(res.onset.flags == 0)


def test_constructed_35_day_onset_delay(tmp_path):
    f = region_field()
    t = uniform_grid(365)
    target = (3, 4)
    onset = event_indices(f.values[:, target[0], target[1]])[0] / 364
    amp = (35 / 365) / np.sin(np.pi * onset) ** 2
    gamma = t + amp * np.sin(np.pi * t) ** 2
    assert np.all(np.diff(gamma) > 0)
    back = invert_warp(gamma)
    vals = f.values.copy()
    vals[:, target[0], target[1]] = np.interp(back, t, f.values[:, target[0], target[1]])
    g = f.with_values(vals)
    # range below the 2 degree spacing: every slice is a single cell
    res = event_timing_bias(f, g, kcfg=KernelConfig(150.0))
    k = target[0] * f.grid.lons.size + target[1]
    assert res.onset.bias_days[k] == pytest.approx(35.0, abs=4.0)
    others = np.delete(res.onset.bias_days, k)
    assert np.all(others == 0.0)
    p = tmp_path / "ev.csv"
    res.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "lat,lon,onset_day,retreat_day,onset_bias_days,retreat_bias_days,onset_flags,retreat_flags"
    assert len(lines) == 1 + f.grid.size


def test_undefined_and_boundary_flags():
    f = region_field()
    vals = f.values.copy()
    vals[:, 0, 0] = 4.0  # constant: undefined
    t = uniform_grid(365)
    vals[:, 0, 1] = 1.0 + 5.0 * t ** 8  # peak on the last day: retreat at the boundary
    f2 = f.with_values(vals)
    res = event_timing_bias(f2, f2, kcfg=KernelConfig(150.0))
    assert res.onset.flags[0] & FLAG_UNDEFINED and np.isnan(res.onset.bias_days[0])
    assert res.retreat.flags[1] & FLAG_BOUNDARY and res.retreat.bias_days[1] == 0.0


def test_empty_region():
    f = region_field()
    with pytest.raises(ValidationError):
        event_timing_bias(f, f, EventConfig(region=((-50.0, -40.0), (0.0, 10.0))))

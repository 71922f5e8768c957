import csv
import json

import numpy as np
import pytest

from efm import cli
from efm.errors import NoConvergence
from efm.fieldio import Field, read_field, write_field
from efm.grid import SliceLocationSet, SpatialGrid
from efm.sim import synthetic_base_field
from efm.sliced import KernelConfig, mae, rmse, sliced_elastic_distance
from efm.srvf import uniform_grid


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def manifest(d):
    return json.loads((d / "manifest.json").read_text())


def toy_field(shift=0.0, scale=1.0, ntime=32):
    grid = SpatialGrid.regular(6, 12)
    la = np.deg2rad(grid.lats)[None, :, None]
    lo = np.deg2rad(grid.lons)[None, None, :]
    t = uniform_grid(ntime)[:, None, None]
    v = 3 + np.cos(la) * (1 + 0.4 * np.sin(2 * np.pi * (t + shift) + lo)) + 0.3 * np.cos(4 * np.pi * t)
    return Field(grid, scale * v, name="toy")


def test_climatology_one_leap_year(tmp_path):
    grid = SpatialGrid.regular(2, 3)
    vals = np.random.default_rng(0).random((366, 2, 3))
    src = tmp_path / "y2004.fgrid"
    write_field(Field(grid, vals, metadata={"year": 2004}), src)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert cli.main(["-O", str(out1), "climatology", str(src), "--no-smooth"]) == 0
    assert cli.main(["-O", str(out2), "climatology", str(src), "--lambda", "0"]) == 0
    clim = read_field(out1 / "climatology.fgrid")
    assert np.array_equal(clim.values, np.delete(vals, 59, axis=0))
    assert (out1 / "climatology.fgrid").read_bytes() == (out2 / "climatology.fgrid").read_bytes()
    assert manifest(out1)["parameters"]["lambda"] == 0.0


def test_climatology_default_lambda(tmp_path):
    grid = SpatialGrid.regular(2, 2)
    t = uniform_grid(365)[:, None, None]
    vals = np.broadcast_to(2 + np.sin(2 * np.pi * t), (365, 2, 2)) + 0.1 * np.random.default_rng(1).random(
        (365, 2, 2))
    src = tmp_path / "clim.fgrid"
    write_field(Field(grid, vals), src)
    assert cli.main(["-O", str(tmp_path / "o"), "climatology", str(src)]) == 0
    m = manifest(tmp_path / "o")
    assert m["parameters"]["lambda"] == 1250.0 and m["subcommand"] == "climatology"
    assert m["inputs"]["clim.fgrid"] == cli.sha256(src)
    assert read_field(tmp_path / "o" / "climatology.fgrid").metadata["smoothing_lambda"] == 1250.0


def test_distance_ranking_and_library_match(tmp_path):
    ref = toy_field()
    models = {"warped": toy_field(shift=0.06), "offset": ref.with_values(ref.values + 0.7),
              "scaled": toy_field(scale=1.3)}
    paths = []
    for name, f in [("ref", ref)] + list(models.items()):
        p = tmp_path / f"{name}.fgrid"
        write_field(f, p)
        paths.append(str(p))
    out = tmp_path / "out"
    rc = cli.main(["-O", str(out), "distance", paths[0], *paths, "--centers", "grid", "--range-km", "3000",
                   "--no-png"])
    assert rc == 0
    rows = read_rows(out / "distances.csv")
    assert [r["model"] for r in rows][0] == "ref"
    by = {r["model"]: r for r in rows}
    assert float(by["ref"]["d_sa"]) == 0.0 and float(by["ref"]["d_sp"]) == 0.0 and float(by["ref"]["rmse"]) == 0.0
    # only translation differs for the offset model
    others = [r for r in rows if r["model"] != "ref"]
    assert others[0]["model"] == "offset"
    assert float(by["offset"]["d_sp"]) <= min(float(by[k]["d_sp"]) for k in ("warped", "scaled"))
    centers = SliceLocationSet.from_grid(ref.grid)
    for name, g in models.items():
        sed, _ = sliced_elastic_distance(ref, g, centers, KernelConfig(3000.0))
        assert float(by[name]["d_sa"]) == sed.d_sa
        assert float(by[name]["d_sp"]) == sed.d_sp
        assert float(by[name]["d_st"]) == sed.d_st
        assert float(by[name]["rmse"]) == rmse(ref, g) and float(by[name]["mae"]) == mae(ref, g)
    assert (out / "maps" / "warped_phase.csv").exists()
    m = manifest(out)
    assert set(m["outputs"]) >= {"distances.csv", "maps/warped_amplitude.csv"}


def test_distance_rank_by_and_annual_mean(tmp_path):
    ref = toy_field()
    pa, pb, pc = tmp_path / "ref.fgrid", tmp_path / "a.fgrid", tmp_path / "b.fgrid"
    write_field(ref, pa)
    write_field(ref.with_values(ref.values + 2.0), pb)
    write_field(toy_field(shift=0.1), pc)
    out = tmp_path / "o"
    assert cli.main(["-O", str(out), "distance", str(pa), str(pb), str(pc), "--centers", "grid",
                     "--range-km", "3000", "--rank-by", "d_st", "--bias-mode", "annual-mean"]) == 0
    rows = read_rows(out / "distances.csv")
    assert rows[0]["model"] == "b"
    assert float(rows[1]["d_st"]) == pytest.approx(2.0, rel=1e-12)
    assert (out / "maps" / "a_amplitude.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def region_field(delay=0.0):
    grid = SpatialGrid(np.arange(16.0, 30.0, 3.0), np.arange(69.0, 88.0, 3.0))
    t = uniform_grid(365)[:, None, None]
    v = 1 + 9 * np.exp(-0.5 * ((t - 0.5 - delay) / 0.1) ** 2) + np.zeros((1,) + grid.shape)
    return Field(grid, v, metadata={"days_per_unit": 365})


def test_timing_bias_cli(tmp_path):
    pr = tmp_path / "ref.fgrid"
    write_field(region_field(), pr)
    out5, out7 = tmp_path / "t5", tmp_path / "t7"
    assert cli.main(["-O", str(out5), "timing-bias", str(pr), str(pr), "--range-km", "300", "--dp-grid", "91"]) == 0
    rows = read_rows(out5 / "ref_events.csv")
    assert all(float(r["onset_bias_days"]) == 0.0 and float(r["retreat_bias_days"]) == 0.0 for r in rows)
    assert (out5 / "ref_onset_bias.png").exists()
    m = manifest(out5)
    assert m["parameters"]["region"] == [[15.0, 30.0], [68.0, 88.0]]
    assert cli.main(["-O", str(out7), "timing-bias", str(pr), str(pr), "--range-km", "300", "--threshold", "0.7",
                     "--dp-grid", "91", "--no-png"]) == 0
    d5 = read_rows(out5 / "reference_event_dates.csv")
    d7 = read_rows(out7 / "reference_event_dates.csv")
    assert all(int(b["onset_day"]) > int(a["onset_day"]) for a, b in zip(d5, d7))


def test_simulate_deterministic_across_threads(tmp_path):
    outs = []
    for k, threads in enumerate((1, 2, 1)):
        d = tmp_path / f"s{k}"
        rc = cli.main(["--threads", str(threads), "-O", str(d), "simulate", "--seed", "7", "--nlat", "6",
                       "--nlon", "12", "--ntime", "48", "--ranges", "3000,9000", "--dp-grid", "24"])
        assert rc == 0
        outs.append(d)
    m0 = (outs[0] / "manifest.json").read_bytes()
    assert all((d / "manifest.json").read_bytes() == m0 for d in outs[1:])
    rows = read_rows(outs[0] / "experiment.csv")
    assert len(rows) == 2 * 10
    for r in (3000.0, 9000.0):
        assert sum(1 for row in rows if float(row["r"]) == r and row["i"] != "0") == 9
    control = [row for row in rows if row["i"] == "0"]
    assert len(control) == 2
    assert all(float(row[c]) == 0.0 for row in control for c in ("d_sa", "d_sp", "d_st", "rmse"))
    assert (outs[0] / "bias_maps" / "a3_p3_estimated.png").exists()
    assert len(read_rows(outs[0] / "bias_recovery.csv")) == 10


def test_convert_round_trip(tmp_path):
    f = toy_field(ntime=8)
    src = tmp_path / "a.fgrid"
    write_field(f, src)
    assert cli.main(["-O", str(tmp_path), "convert", str(src), "a.csv"]) == 0
    assert cli.main(["-O", str(tmp_path / "back"), "convert", str(tmp_path / "a.csv"), "a.fgrid"]) == 0
    g = read_field(tmp_path / "back" / "a.fgrid")
    assert np.max(np.abs(g.values - f.values)) <= 1e-12
    assert cli.main(["-O", str(tmp_path), "convert", str(src), "a.txt"]) == 2


def test_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["-O", str(tmp_path), "distance", str(tmp_path / "missing.fgrid"), "x.fgrid"]) == 2
    p = tmp_path / "f.fgrid"
    write_field(toy_field(), p)
    capsys.readouterr()
    assert cli.main(["-O", str(tmp_path), "distance", str(p), str(p), "--range-km", "20000"]) == 2
    assert "kernel range 20000" in capsys.readouterr().err
    monkeypatch.setenv("EFM_THREADS", "many")
    assert cli.main(["-O", str(tmp_path), "convert", str(p), "f.csv"]) == 2
    monkeypatch.delenv("EFM_THREADS")

    def boom(*a, **k):
        raise NoConvergence("forced", cell=(0, 0))

    monkeypatch.setattr(cli, "smooth_field", boom)
    assert cli.main(["-O", str(tmp_path / "c"), "climatology", str(p)]) == 2  # 32 days, no dates
    write_field(synthetic_base_field(2, 3, 365), tmp_path / "y.fgrid")
    assert cli.main(["-O", str(tmp_path / "c"), "climatology", str(tmp_path / "y.fgrid")]) == 3


def test_threads_env_fallback(monkeypatch):
    monkeypatch.setenv("EFM_THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.delenv("EFM_THREADS")
    assert cli.resolve_threads(None) == 1

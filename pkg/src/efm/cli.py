"""Command-line front end: ``efm <subcommand> ...``.

Every subcommand writes into ``--output-dir`` together with a
``manifest.json`` listing the resolved parameters and the SHA-256 digests of
inputs and outputs. Thread counts are deliberately left out of the manifest
because they never change the outputs.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .align import DpConfig
from .errors import NumericalError, ValidationError
from .events import MCR_REGION, EventConfig, event_timing_bias
from .fieldio import (DAYS_PER_YEAR, Field, csv_to_field, daily_climatology, noleap_day_of_year, read_field,
                      regrid_to_csv, write_field)
from .grid import SliceLocationSet
from .plotting import save_map_png
from .sim import (DEFAULT_RANGES_KM, ExperimentGrid, ModificationField, run_bias_recovery_experiment,
                  run_disentanglement_experiment, synthetic_base_field)
from .sliced import KernelConfig, annual_mean_bias, mae, rmse, sliced_elastic_distance
from .smoothing import SmootherConfig, smooth_field

log = logging.getLogger("efm")

RANK_COLUMNS = ("d_sa", "d_sp", "d_st", "rmse", "mae")
SIM_DP_GRID = 183


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def fmt(x) -> str:
    return "%.17g" % x


def write_manifest(outdir: Path, subcommand: str, params: dict, inputs=(), outputs=()) -> Path:
    manifest = {
        "subcommand": subcommand,
        "version": __version__,
        "parameters": params,
        "inputs": {Path(p).name: sha256(p) for p in inputs},
        "outputs": {str(Path(p).relative_to(outdir)): sha256(p) for p in sorted(outputs)},
    }
    path = outdir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def parse_floats(text: str, n=None, what="values") -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"could not parse {what} from {text!r}") from None
    if n is not None and len(vals) != n:
        raise ValidationError(f"expected {n} comma-separated {what}, got {text!r}")
    return vals


def parse_region(text: str):
    la0, la1, lo0, lo1 = parse_floats(text, 4, "region bounds (lat0,lat1,lon0,lon1)")
    return ((la0, la1), (lo0, lo1))


def resolve_centers(choice: str, f: Field) -> SliceLocationSet:
    """``1deg`` (global 1-degree set), ``grid`` (cells of the reference) or ``region:lat0,lat1,lon0,lon1``."""
    if choice == "1deg":
        return SliceLocationSet.default()
    if choice == "grid":
        return SliceLocationSet.from_grid(f.grid)
    if choice.startswith("region:"):
        (la0, la1), (lo0, lo1) = parse_region(choice.split(":", 1)[1])
        centers = SliceLocationSet.from_grid(f.grid).region((la0, la1), (lo0, lo1))
        if len(centers) == 0:
            raise ValidationError(f"no reference grid cells inside region {choice!r}")
        return centers
    raise ValidationError(f"unknown --centers value {choice!r}")


def model_names(paths) -> list:
    names, seen = [], {}
    for p in paths:
        stem = Path(p).stem
        k = seen.get(stem, 0)
        seen[stem] = k + 1
        names.append(stem if k == 0 else f"{stem}_{k + 1}")
    return names


def dp_config(n) -> DpConfig:
    return DpConfig(grid_n=n if n else None)


def load_fgrid(path) -> Field:
    if str(path).endswith(".csv"):
        return csv_to_field(path, name=Path(path).stem)
    return read_field(path)


# ---- subcommands ---------------------------------------------------------------------------------------------

def input_dates(f: Field, path):
    """Calendar dates for a daily input file from ``start_date`` or ``year`` metadata."""
    meta = f.metadata
    if "start_date" in meta:
        start = np.datetime64(str(meta["start_date"]), "D")
        return start + np.arange(f.ntime)
    if "year" in meta:
        return np.datetime64(_dt.date(int(meta["year"]), 1, 1), "D") + np.arange(f.ntime)
    if f.ntime == DAYS_PER_YEAR:
        return None
    raise ValidationError(f"{path}: {f.ntime} days but no 'start_date' or 'year' metadata to place them")


def cmd_climatology(args, outdir: Path, threads: int):
    fields = [read_field(p) for p in args.inputs]
    grid = fields[0].grid
    stacks, doys, leaps = [], [], []
    for f, p in zip(fields, args.inputs):
        if not f.grid.same_as(grid):
            raise ValidationError(f"{p}: grid differs from {args.inputs[0]}")
        dates = input_dates(f, p)
        stacks.append(f.values)
        if dates is None:
            doys.append(np.arange(1, DAYS_PER_YEAR + 1))
            leaps.append(np.zeros(DAYS_PER_YEAR, bool))
        else:
            d, lp = noleap_day_of_year(dates)
            doys.append(d)
            leaps.append(lp)
    clim = daily_climatology(np.concatenate(stacks), grid, day_of_year=np.concatenate(doys),
                             leap_mask=np.concatenate(leaps), name=fields[0].name or "climatology",
                             units=fields[0].units)
    lam = 0.0 if args.no_smooth else args.lam
    if lam > 0:
        clim = smooth_field(clim, SmootherConfig(lam=lam))
    out = outdir / args.output
    write_field(clim, out)
    params = {"lambda": lam, "smooth": lam > 0, "n_inputs": len(args.inputs), "output": args.output}
    write_manifest(outdir, "climatology", params, args.inputs, [out])
    log.info("wrote %s", out)


def cmd_distance(args, outdir: Path, threads: int):
    ref = load_fgrid(args.reference)
    models = [load_fgrid(p) for p in args.models]
    names = model_names(args.models)
    centers = resolve_centers(args.centers, ref)
    kcfg = KernelConfig(range_r=args.range_km, normalize=not args.unnormalized_kernel)
    dpcfg = dp_config(args.dp_grid)
    maps_dir = outdir / "maps"
    maps_dir.mkdir(exist_ok=True)
    outputs, rows = [], []
    for name, g in zip(names, models):
        log.info("distance %s", name)
        try:
            sed, local = sliced_elastic_distance(ref, g, centers, kcfg, dpcfg, threads)
            d_st = annual_mean_bias(ref, g, centers, kcfg) if args.bias_mode == "annual-mean" else sed.d_st
        except ValidationError as exc:
            raise type(exc)(f"model {name}: {exc}") from exc
        same = ref.grid.same_as(g.grid) and ref.ntime == g.ntime
        rows.append({"model": name, "d_sa": sed.d_sa, "d_sp": sed.d_sp, "d_st": d_st,
                     "rmse": rmse(ref, g) if same else math.nan, "mae": mae(ref, g) if same else math.nan})
        for comp in ("amplitude", "phase", "translation"):
            p = maps_dir / f"{name}_{comp}.csv"
            local.to_csv(p, comp)
            outputs.append(p)
            if not args.no_png:
                png = p.with_suffix(".png")
                save_map_png(png, centers.lats, centers.lons, local.component(comp), "sequential")
                outputs.append(png)
    order = sorted(range(len(rows)), key=lambda k: (np.nan_to_num(rows[k][args.rank_by], nan=np.inf), k))
    table = outdir / "distances.csv"
    with open(table, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "model"] + list(RANK_COLUMNS))
        for rank, k in enumerate(order, 1):
            w.writerow([rank, rows[k]["model"]] + [fmt(rows[k][c]) for c in RANK_COLUMNS])
    outputs.append(table)
    params = {"range_km": args.range_km, "centers": args.centers, "normalize": not args.unnormalized_kernel,
              "rank_by": args.rank_by, "bias_mode": args.bias_mode, "dp_grid": args.dp_grid,
              "n_centers": len(centers), "models": names}
    write_manifest(outdir, "distance", params, [args.reference] + list(args.models), outputs)
    for k in order:
        print(f"{rows[k]['model']}\t" + "\t".join(f"{c}={rows[k][c]:.6g}" for c in RANK_COLUMNS))


def cmd_timing_bias(args, outdir: Path, threads: int):
    ref = load_fgrid(args.reference)
    region = parse_region(args.region) if args.region else MCR_REGION
    events = tuple(e.strip() for e in args.events.split(",") if e.strip())
    cfg = EventConfig(threshold_fraction=args.threshold, region=region, events=events)
    kcfg = KernelConfig(range_r=args.range_km, normalize=not args.unnormalized_kernel)
    dpcfg = dp_config(args.dp_grid)
    outputs = []
    dates = None
    for name, path in zip(model_names(args.models), args.models):
        g = load_fgrid(path)
        log.info("timing bias %s", name)
        try:
            res = event_timing_bias(ref, g, cfg, kcfg, dpcfg, threads=threads)
        except ValidationError as exc:
            raise type(exc)(f"model {name}: {exc}") from exc
        dates = res.dates
        p = outdir / f"{name}_events.csv"
        res.to_csv(p)
        outputs.append(p)
        for ev in events:
            m = res.onset if ev == "onset" else res.retreat
            mp = outdir / f"{name}_{ev}_bias.csv"
            m.to_csv(mp)
            outputs.append(mp)
            if not args.no_png:
                png = mp.with_suffix(".png")
                save_map_png(png, m.locations.lats, m.locations.lons, m.bias_days, "diverging")
                outputs.append(png)
    ref_p = outdir / "reference_event_dates.csv"
    with open(ref_p, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "onset_day", "retreat_day"])
        on, off = dates.days("onset"), dates.days("retreat")
        for k in range(len(dates.locations)):
            w.writerow([fmt(dates.locations.lats[k]), fmt(dates.locations.lons[k]), int(on[k]), int(off[k])])
    outputs.append(ref_p)
    params = {"region": [list(region[0]), list(region[1])], "threshold": args.threshold, "events": list(events),
              "range_km": args.range_km, "normalize": not args.unnormalized_kernel, "dp_grid": args.dp_grid}
    write_manifest(outdir, "timing-bias", params, [args.reference] + list(args.models), outputs)


def cmd_simulate(args, outdir: Path, threads: int):
    inputs = []
    if args.base == "synthetic":
        f = synthetic_base_field(args.nlat, args.nlon, args.ntime, seed=args.seed)
    else:
        f = load_fgrid(args.base)
        inputs.append(args.base)
    ranges = tuple(parse_floats(args.ranges, what="ranges"))
    grid = ExperimentGrid(ranges=ranges)
    dpcfg = dp_config(args.dp_grid)
    small = min(ranges)
    centers = SliceLocationSet.from_grid(f.grid)

    def progress(row):
        log.info("i=%d j=%d r=%g d_sa=%.5g d_sp=%.5g", row.i, row.j, row.r, row.d_sa, row.d_sp)

    res = run_disentanglement_experiment(f, grid, centers, dpcfg, threads, include_control=True,
                                         keep_locals_for=(small,), progress=progress)
    outputs = []
    table = outdir / "experiment.csv"
    res.to_csv(table)
    outputs.append(table)

    mods = list(grid.mods) + [ModificationField.identity()]
    rec = run_bias_recovery_experiment(f, mods, args.t_event, small, centers, dpcfg, threads,
                                       args.tolerance_days, locals_cache=res.locals)
    maps_dir = outdir / "bias_maps"
    maps_dir.mkdir(exist_ok=True)
    summary = outdir / "bias_recovery.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "r", "t_event", "fraction_within", "correlation", "tolerance_days", "n_valid"])
        for b in rec:
            w.writerow([b.mod.amp_index, b.mod.phase_index, fmt(small), fmt(args.t_event), fmt(b.fraction_within),
                        fmt(b.correlation), fmt(b.tolerance_days), int(b.valid.sum())])
            stem = f"a{b.mod.amp_index}_p{b.mod.phase_index}"
            for label, m in (("true", b.true_map), ("estimated", b.estimated_map)):
                p = maps_dir / f"{stem}_{label}.csv"
                m.to_csv(p)
                outputs.append(p)
                if not args.no_png:
                    lim = float(np.max(np.abs(b.true_map.bias_days))) or 1.0
                    png = p.with_suffix(".png")
                    save_map_png(png, centers.lats, centers.lons, m.bias_days, "diverging", -lim, lim)
                    outputs.append(png)
    outputs.append(summary)
    params = {"base": args.base if args.base == "synthetic" else Path(args.base).name, "seed": args.seed,
              "shape": [f.ntime, f.grid.lats.size, f.grid.lons.size], "ranges_km": list(ranges),
              "dp_grid": args.dp_grid, "t_event": args.t_event, "tolerance_days": args.tolerance_days}
    write_manifest(outdir, "simulate", params, inputs, outputs)
    for r in ranges:
        log.info("r=%g d_sa table:\n%s", r, np.array2string(res.table(r, "d_sa"), precision=4))


def cmd_convert(args, outdir: Path, threads: int):
    src = Path(args.input)
    dst = outdir / args.output
    if src.suffix == ".csv" and dst.suffix == ".fgrid":
        write_field(csv_to_field(src, name=src.stem), dst)
    elif src.suffix == ".fgrid" and dst.suffix == ".csv":
        regrid_to_csv(read_field(src), dst)
    else:
        raise ValidationError("convert needs .csv -> .fgrid or .fgrid -> .csv")
    write_manifest(outdir, "convert", {"output": args.output}, [src], [dst])


# ---- argument parsing ----------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efm", description="Sliced elastic distances between gridded fields.")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $EFM_THREADS or 1)")
    p.add_argument("--output-dir", "-O", default=".", help="directory for outputs and manifest.json")
    p.add_argument("--verbose", "-v", action="count", default=0)
    p.add_argument("--version", action="version", version=f"efm {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("climatology", help="daily climatology from yearly FGRID1 files")
    c.add_argument("inputs", nargs="+")
    c.add_argument("--lambda", dest="lam", type=float, default=1250.0)
    c.add_argument("--no-smooth", action="store_true")
    c.add_argument("-o", "--output", default="climatology.fgrid")
    c.set_defaults(func=cmd_climatology)

    def kernel_args(sp):
        sp.add_argument("--range-km", type=float, default=750.0)
        sp.add_argument("--unnormalized-kernel", action="store_true")
        sp.add_argument("--dp-grid", type=int, default=None, help="DP lattice size (default: full grid)")
        sp.add_argument("--no-png", action="store_true")

    d = sub.add_parser("distance", help="sliced elastic distance of models against a reference")
    d.add_argument("reference")
    d.add_argument("models", nargs="+")
    kernel_args(d)
    d.add_argument("--centers", default="1deg", help="1deg | grid | region:lat0,lat1,lon0,lon1")
    d.add_argument("--rank-by", choices=RANK_COLUMNS, default="d_sa")
    d.add_argument("--bias-mode", choices=("translation", "annual-mean"), default="translation")
    d.set_defaults(func=cmd_distance)

    t = sub.add_parser("timing-bias", help="onset/retreat timing bias over a region")
    t.add_argument("reference")
    t.add_argument("models", nargs="+")
    kernel_args(t)
    t.add_argument("--region", default=None, help="lat0,lat1,lon0,lon1 (default 15,30,68,88)")
    t.add_argument("--threshold", type=float, default=0.5)
    t.add_argument("--events", default="onset,retreat")
    t.set_defaults(func=cmd_timing_bias)

    s = sub.add_parser("simulate", help="synthetic amplitude/phase modification experiments")
    s.add_argument("--base", default="synthetic", help="'synthetic' or a climatology file")
    s.add_argument("--ranges", default=",".join("%g" % r for r in DEFAULT_RANGES_KM))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--nlat", type=int, default=36)
    s.add_argument("--nlon", type=int, default=72)
    s.add_argument("--ntime", type=int, default=DAYS_PER_YEAR)
    s.add_argument("--dp-grid", type=int, default=SIM_DP_GRID)
    s.add_argument("--t-event", type=float, default=0.5)
    s.add_argument("--tolerance-days", type=float, default=3.0)
    s.add_argument("--no-png", action="store_true")
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("convert", help="convert between CSV and FGRID1")
    v.add_argument("input")
    v.add_argument("output")
    v.set_defaults(func=cmd_convert)
    return p


def resolve_threads(value) -> int:
    if value is None:
        env = os.environ.get("EFM_THREADS", "").strip()
        if not env:
            return 1
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"EFM_THREADS must be an integer, got {env!r}") from None
    if value < 1:
        raise ValidationError("--threads must be >= 1")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        threads = resolve_threads(args.threads)
        outdir = Path(args.output_dir)
        outdir.mkdir(parents=True, exist_ok=True)
        args.func(args, outdir, threads)
    except ValidationError as exc:
        print(f"efm: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"efm: error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"efm: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""``sage-ndvi`` command line.

Subcommands: ``evaluate``, ``compare``, ``synth``, ``inspect-series`` and
``ingest``. Science parameters live in the YAML run config; the log level is
read from ``SAGE_NDVI_LOG`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
import tempfile
from datetime import datetime, time
from importlib import resources
from pathlib import Path

from . import __version__, fileio
from .alignment import write_alignment_csv
from .config import load_config
from .errors import SageError
from .ingestion import write_manifest
from .metric import evaluate, ground_extrema, prepare_inputs, satellite_composites
from .raster import SSIM_WINDOW, psnr, ssim
from .synth import load_scenario, write_dataset
from .timeseries import ExtremaSeries, write_series_csv

logger = logging.getLogger("sage_ndvi")


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def _atomic_via(path: Path, writer, obj) -> None:
    """Run a ``writer(path, obj)`` helper into a temp file, then rename."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    os.close(fd)
    try:
        writer(tmp, obj)
        os.replace(tmp, path)
    except BaseException:
        os.unlink(tmp)
        raise


def series_table(inputs, extrema: ExtremaSeries, report=None) -> str:
    """u, u_phi and v side by side, one row per date that appears in any of them."""
    u_by = dict(zip(inputs.u_raw.dates, inputs.u_raw.values.tolist()))
    up_by = dict(zip(inputs.u_phi_raw.dates, inputs.u_phi_raw.values.tolist()))
    v_by = {d: (val, kind) for d, val, kind in extrema.entries}
    un_by = upn_by = vn_by = {}
    if report is not None:
        un_by = {t.date: t.u for t in report.per_timestamp}
        upn_by = {t.date: t.u_phi for t in report.per_timestamp}
        vn_by = {e["date"]: e["normalized"] for e in report.extrema}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "u", "u_phi", "v", "v_kind", "u_raw", "u_phi_raw", "v_raw"])

    def cell(x):
        return "" if x is None else repr(x)

    for d in sorted(set(u_by) | set(v_by)):
        key = d.isoformat()
        v_raw, kind = v_by.get(d, (None, ""))
        w.writerow([key, cell(un_by.get(key)), cell(upn_by.get(key)), cell(vn_by.get(key)), kind,
                    cell(u_by.get(d)), cell(up_by.get(d)), cell(v_raw)])
    return buf.getvalue()


def cmd_evaluate(args) -> int:
    config = load_config(args.config).with_overrides(threshold_h=args.h, output_dir=args.output_dir)
    inputs = prepare_inputs(config)
    report = evaluate(config, inputs)
    extrema = ExtremaSeries([datetime.fromisoformat(e["date"]).date() for e in report.extrema],
                            [e["value"] for e in report.extrema],
                            [e["kind"] for e in report.extrema])
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    atomic_write(out / "report.json", report.to_json())
    atomic_write(out / "per_timestamp.csv", report.per_timestamp_csv())
    atomic_write(out / "series.csv", series_table(inputs, extrema, report))
    _atomic_via(out / "ground_daily.csv", write_series_csv, inputs.ground)
    _atomic_via(out / "extrema.csv", write_series_csv, extrema)
    A, A_phi = report.alignments
    _atomic_via(out / "alignment.csv", write_alignment_csv, A)
    _atomic_via(out / "alignment_phi.csv", write_alignment_csv, A_phi)
    print(report.summary_line())
    return 0


def cmd_inspect(args) -> int:
    config = load_config(args.config)
    inputs = prepare_inputs(config)
    extrema = ground_extrema(inputs.ground, config.smooth_half_width, config.min_prominence,
                             config.min_separation_days)
    sys.stdout.write(series_table(inputs, extrema))
    return 0


def cmd_ingest(args) -> int:
    """Write cloud-masked 8-day composites so an external dehazer can be run on them."""
    config = load_config(args.config)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for d, raster in satellite_composites(config):
        name = f"composite_{d:%Y%m%d}.tif"
        fileio.write_geotiff(out / name, raster, config.satellite_bands)
        rows.append((datetime.combine(d, time(0, 0)), name, None, "satellite"))
    write_manifest(out / "manifest.csv", rows)
    print(f"wrote {len(rows)} composites to {out}")
    return 0


def cmd_compare(args) -> int:
    bands = tuple(args.bands.split(","))

    def load(p):
        return fileio.read_raster(p, tuple(args.file_bands.split(",")), args.scale)

    reference = load(args.reference)
    names = args.names.split(",") if args.names else [Path(p).stem for p in args.dehazed]
    if len(names) != len(args.dehazed):
        raise SageError("--names must list one name per dehazed image")
    rows = [("hazy", load(args.hazy))] + [(n, load(p)) for n, p in zip(names, args.dehazed)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "psnr", "ssim"])
    for name, img in rows:
        p = psnr(img, reference, 255.0, bands)
        s = ssim(img, reference, args.window, peak=255.0, bands=bands)
        w.writerow([name, "inf" if p == float("inf") else f"{p:.4f}", f"{s:.6f}"])
    if args.out:
        atomic_write(Path(args.out), buf.getvalue())
    sys.stdout.write(buf.getvalue())
    return 0


def cmd_synth(args) -> int:
    if args.example:
        spec_path = resources.files("sage_ndvi") / "scenarios" / "alfalfa.yaml"
    elif args.spec:
        spec_path = args.spec
    else:
        raise SageError("give a scenario file or --example")
    spec = load_scenario(spec_path)
    result = write_dataset(spec, args.output_dir)
    for name, path in result["configs"].items():
        print(f"{name}: {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sage-ndvi", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("evaluate", help="run the metric and write report files")
    e.add_argument("config", type=Path)
    e.add_argument("--h", type=float, help="override threshold_h")
    e.add_argument("--output-dir", type=Path, help="override output_dir")
    e.set_defaults(func=cmd_evaluate)

    c = sub.add_parser("compare", help="PSNR/SSIM of dehazed images against a reference")
    c.add_argument("--hazy", required=True, type=Path)
    c.add_argument("--reference", required=True, type=Path)
    c.add_argument("--dehazed", required=True, nargs="+", type=Path)
    c.add_argument("--names", help="comma-separated row names for the dehazed images")
    c.add_argument("--bands", default="red,green,blue", help="bands to compare")
    c.add_argument("--file-bands", default=",".join(fileio.DEFAULT_SATELLITE_BANDS),
                   help="band order inside GeoTIFF inputs")
    c.add_argument("--scale", type=float, default=1.0, help="full-scale value of GeoTIFF inputs")
    c.add_argument("--window", type=int, default=SSIM_WINDOW)
    c.add_argument("--out", help="also write the table to this CSV file")
    c.set_defaults(func=cmd_compare)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("spec", nargs="?", type=Path)
    s.add_argument("output_dir", type=Path)
    s.add_argument("--example", action="store_true", help="use the bundled alfalfa scenario")
    s.set_defaults(func=cmd_synth)

    i = sub.add_parser("inspect-series", help="print u, u_phi and the ground extrema v")
    i.add_argument("config", type=Path)
    i.set_defaults(func=cmd_inspect)

    g = sub.add_parser("ingest", help="write cloud-masked 8-day composites for a dehazer")
    g.add_argument("config", type=Path)
    g.add_argument("output_dir", type=Path)
    g.set_defaults(func=cmd_ingest)
    return p


def main(argv=None) -> int:
    level = os.environ.get("SAGE_NDVI_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SageError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())

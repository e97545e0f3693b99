import csv
from datetime import date
from importlib import resources

import pytest
import yaml

from sage_ndvi import fileio
from sage_ndvi.synth import PhenologyScenario, load_scenario, render_rasters, write_dataset

CUTS = tuple(date.fromisoformat(d) for d in (
    "2020-04-15", "2020-05-25", "2020-07-01", "2020-08-05", "2020-09-10", "2020-10-20"))
# first satellite dates after a cut: low-NDVI, trough-matched timestamps
POST_CUT = (date(2020, 4, 22), date(2020, 7, 3), date(2020, 9, 13))


def scenario(seed=7, magnitude=0.3, haze_dates=POST_CUT, noise=0.01, **kw):
    kw.setdefault("sensor_gain", 0.9)
    kw.setdefault("sensor_bias", 0.05)
    return PhenologyScenario(
        seed=seed, season_start=date(2020, 1, 1), season_end=date(2020, 12, 31), cut_dates=CUTS,
        ground_noise_sd=noise, haze_events=tuple((d, magnitude) for d in haze_dates), **kw)


def example_spec():
    return load_scenario(resources.files("sage_ndvi") / "scenarios" / "alfalfa.yaml")


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """The bundled scenario rendered to disk once per session."""
    out = tmp_path_factory.mktemp("synth") / "alfalfa"
    write_dataset(example_spec(), out)
    return out


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion at the end of the run
# ---------------------------------------------------------------------------

ACCEPTANCE_RESULTS: dict[str, bool] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok in ACCEPTANCE_RESULTS.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


# ---------------------------------------------------------------------------
# run configs over the session dataset, including broken variants
# ---------------------------------------------------------------------------

def write_config(tmp_path, synth_dir, name="run", **changes):
    """A config in ``tmp_path`` pointing at ``synth_dir`` files by absolute path."""
    cfg = yaml.safe_load((synth_dir / "evaluate_restore.yaml").read_text())
    cfg["satellite"]["manifest"] = str(synth_dir / "satellite_manifest.csv")
    cfg["ground"]["manifest"] = str(synth_dir / "ground_manifest.csv")
    cfg["ground"]["mask"] = str(synth_dir / "ground_mask.png")
    cfg["dehazer"]["manifest"] = str(synth_dir / "dehazed_restore" / "manifest.csv")
    cfg["output_dir"] = str(tmp_path / f"out_{name}")
    for key, value in changes.items():
        section, _, field = key.partition("__")
        if field:
            cfg[section][field] = value
        else:
            cfg[section] = value
    path = tmp_path / f"{name}.yaml"
    path.write_text(yaml.safe_dump(cfg, sort_keys=True))
    return path


def _rewrite_manifest(src, dst, file_for_row):
    rows = list(csv.DictReader(open(src, newline="")))
    with open(dst, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow(file_for_row(row))
    return dst


def broken_configs(tmp_path, synth_dir):
    """One config per terminal error class, keyed by expected exception name."""
    out = {"NoSignificantTimestampsError": write_config(tmp_path, synth_dir, "k0", dehazer={"mode": "identity"})}

    dehazed = synth_dir / "dehazed_restore"
    first = next(dehazed.glob("*.tif"))
    const = _rewrite_manifest(dehazed / "manifest.csv", tmp_path / "const.csv",
                              lambda r: {**r, "file-path": str(first)})
    out["DegenerateRangeError"] = write_config(tmp_path, synth_dir, "const", dehazer__manifest=str(const))

    g = next(r for r in csv.DictReader(open(synth_dir / "ground_manifest.csv")))
    flat = _rewrite_manifest(synth_dir / "ground_manifest.csv", tmp_path / "flat.csv",
                             lambda r: {**r, "file-path": str(synth_dir / g["file-path"]),
                                        "nir-file-path": str(synth_dir / g["nir-file-path"])})
    out["FlatSeriesError"] = write_config(tmp_path, synth_dir, "flat", ground__manifest=str(flat))

    small = tmp_path / "small.tif"
    fileio.write_geotiff(small, render_rasters(0.5, 4))
    mism = _rewrite_manifest(dehazed / "manifest.csv", tmp_path / "mism.csv",
                             lambda r: {**r, "file-path": str(small)})
    out["DimensionMismatchError"] = write_config(tmp_path, synth_dir, "mism", dehazer__manifest=str(mism))
    return out

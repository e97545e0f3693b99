import filecmp
from dataclasses import replace
from datetime import date

import numpy as np
import pytest

from conftest import POST_CUT, scenario
from sage_ndvi.errors import ConfigError
from sage_ndvi.raster import mean_ndvi
from sage_ndvi.synth import (gen_scenario, parse_scenario, partial_restore, render_rasters,
                             sawtooth, write_dataset)


class TestRender:
    def test_zero(self):
        r = render_rasters(0.0)
        assert np.all(r.band("nir") == 0.5) and np.all(r.band("red") == 0.5)

    def test_point_six(self):
        r = render_rasters(0.6)
        assert np.allclose(r.band("nir"), 0.8) and np.allclose(r.band("red"), 0.2)
        assert mean_ndvi(r) == pytest.approx(0.6, abs=1e-12)

    def test_one(self):
        r = render_rasters(1.0)
        assert np.all(r.band("red") == 0.0) and mean_ndvi(r) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            render_rasters(1.5)

    def test_roundtrip(self):
        for v in np.random.default_rng(0).uniform(-1, 1, 100):
            assert abs(mean_ndvi(render_rasters(float(v))) - v) <= 1e-12


class TestScenario:
    def test_clean_samples_signal(self):
        spec = scenario(noise=0.0, haze_dates=(), sensor_gain=1.0, sensor_bias=0.0)
        data = gen_scenario(spec)
        for d, v in data.clean.entries:
            assert v == sawtooth(spec, d)
            assert (d - spec.season_start).days % 8 == 0
        ground = dict(data.ground_daily.entries)
        assert all(ground[d] == v for d, v in data.clean.entries)
        assert np.array_equal(data.clean.values, data.hazy.values)

    def test_single_haze_event(self):
        data = gen_scenario(scenario(haze_dates=POST_CUT[:1]))
        diff = data.clean.values - data.hazy.values
        assert np.count_nonzero(diff) == 1
        assert diff[data.hazed_indices[0]] == pytest.approx(0.3, abs=1e-15)

    def test_sawtooth_shape(self):
        spec = scenario()
        assert sawtooth(spec, date(2020, 4, 15)) == spec.base_ndvi
        assert sawtooth(spec, date(2020, 4, 14)) < spec.peak_ndvi
        assert sawtooth(spec, date(2020, 4, 14)) > sawtooth(spec, date(2020, 4, 1))

    def test_deterministic(self):
        a, b = gen_scenario(scenario(seed=3)), gen_scenario(scenario(seed=3))
        assert a.ground_records == b.ground_records
        assert np.array_equal(a.ground_daily.values, b.ground_daily.values)
        assert a.truth() == b.truth()
        assert gen_scenario(scenario(seed=4)).ground_records != a.ground_records

    def test_partial_restore(self):
        data = gen_scenario(scenario())
        half = partial_restore(data.hazy, data.clean, 0.5)
        assert np.allclose(half.values - data.hazy.values, 0.5 * (data.clean.values - data.hazy.values))

    @pytest.mark.parametrize("kw, field", [
        (dict(cut_dates=(date(2021, 2, 1),)), "cut_dates"),
        (dict(base_ndvi=0.9), "base_ndvi"),
        (dict(ground_noise_sd=-1.0), "ground_noise_sd"),
        (dict(dehazers={"x": 1.5}), "dehazers.x"),
    ])
    def test_validation(self, kw, field):
        spec = replace(scenario(), **kw)
        with pytest.raises(ConfigError) as err:
            spec.validate()
        assert any(p.startswith(field) for p in err.value.problems)

    def test_two_events_one_window(self):
        spec = scenario(haze_dates=(date(2020, 4, 22), date(2020, 4, 23)))
        with pytest.raises(ConfigError, match="invalid scenario"):
            spec.validate()

    def test_parse(self):
        raw = {"schema_version": 1, "seed": 1, "season": {"start": "2020-01-01", "end": "2020-06-30"},
               "cut_dates": ["2020-03-01"], "haze_events": [{"date": "2020-03-02", "magnitude": 0.2}]}
        spec = parse_scenario(raw)
        assert spec.haze_events == ((date(2020, 3, 2), 0.2),)
        with pytest.raises(ConfigError):
            parse_scenario({**raw, "schema_version": 2})
        with pytest.raises(ConfigError):
            parse_scenario({**raw, "cut_dates": ["2020-08-01"]})


def test_dataset_byte_identical(tmp_path):
    spec = replace(scenario(haze_dates=POST_CUT[:1]), season_end=date(2020, 5, 31),
                   cut_dates=(date(2020, 4, 15),), raster_size=4)
    write_dataset(spec, tmp_path / "a")
    write_dataset(spec, tmp_path / "b")
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")

    def same(c):
        _, mismatch, errors = filecmp.cmpfiles(c.left, c.right, c.common_files, shallow=False)
        return not (mismatch or errors or c.left_only or c.right_only) and all(
            same(sub) for sub in c.subdirs.values())
    assert same(cmp)
    assert (tmp_path / "a" / "truth.json").exists()
    assert len(list((tmp_path / "a" / "satellite").glob("*.tif"))) == (spec.season_end - spec.season_start).days // 8 + 1

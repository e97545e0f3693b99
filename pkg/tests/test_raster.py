import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sage_ndvi.errors import ConfigError, DimensionMismatchError, EmptyRegionError
from sage_ndvi.raster import (Raster, dark_channel, haze_score, is_hazy, mean_ndvi, ndvi_grid,
                              ndvi_pixel, psnr, ssim)

finite = st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False)


def rgb(values, scale=255.0, valid=None):
    values = np.asarray(values, dtype=float)
    return Raster({"red": values, "green": values, "blue": values}, valid, scale)


def nir_red(nir, red, valid=None):
    nir = np.asarray(nir, dtype=float)
    return Raster({"nir": nir, "red": np.asarray(red, dtype=float)}, valid)


def gray(values):
    return Raster({"gray": np.asarray(values, dtype=float)}, None, 255.0)


def ssim_direct(x, y, window, k1=0.01, k2=0.03, peak=255.0):
    """Scratch evaluation of the SSIM formula, one window at a time."""
    c1, c2 = (k1 * peak) ** 2, (k2 * peak) ** 2
    h, w = len(x), len(x[0])
    vals = []
    for r in range(h - window + 1):
        for c in range(w - window + 1):
            xs = [x[r + i][c + j] for i in range(window) for j in range(window)]
            ys = [y[r + i][c + j] for i in range(window) for j in range(window)]
            n = len(xs)
            mx, my = sum(xs) / n, sum(ys) / n
            vx = sum((a - mx) ** 2 for a in xs) / n
            vy = sum((b - my) ** 2 for b in ys) / n
            cov = sum((a - mx) * (b - my) for a, b in zip(xs, ys)) / n
            vals.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


class TestNdvi:
    def test_examples(self):
        assert ndvi_pixel(0.5, 0.5) == 0.0
        assert ndvi_pixel(1.0, 0.0) == 1.0
        assert ndvi_pixel(0.0, 0.0) is None
        assert ndvi_pixel(0.8, 0.2) == pytest.approx(0.6, abs=1e-15)

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            ndvi_pixel(-0.1, 0.2)

    @given(finite, finite)
    def test_range(self, nir, red):
        v = ndvi_pixel(nir, red)
        assert v is None or -1.0 <= v <= 1.0

    def test_grid_marks_undefined(self):
        g = ndvi_grid(nir_red([[0.0, 0.6]], [[0.0, 0.2]]))
        assert math.isnan(g[0, 0]) and g[0, 1] == pytest.approx(0.5)


class TestMeanNdvi:
    def test_uniform(self):
        r = nir_red(np.full((3, 3), 0.6), np.full((3, 3), 0.2))
        assert mean_ndvi(r, np.ones((3, 3), bool)) == pytest.approx(0.5, abs=1e-15)

    def test_two_pixel_mean(self):
        # NDVI 0.2 and 0.4
        r = nir_red([[0.6, 0.7]], [[0.4, 0.3]])
        assert mean_ndvi(r) == pytest.approx(0.3, abs=1e-15)

    def test_empty_mask(self):
        r = nir_red(np.full((2, 2), 0.6), np.full((2, 2), 0.2))
        with pytest.raises(EmptyRegionError) as err:
            mean_ndvi(r, np.zeros((2, 2), bool))
        assert err.value.counts["total"] == 4 and err.value.counts["in_mask"] == 0

    def test_undefined_and_invalid_pixels_skipped(self):
        r = nir_red([[0.0, 0.6, 0.9]], [[0.0, 0.2, 0.0]], valid=[[True, True, False]])
        assert mean_ndvi(r) == pytest.approx(0.5)

    def test_mask_shape_checked(self):
        r = nir_red(np.ones((2, 2)), np.ones((2, 2)))
        with pytest.raises(DimensionMismatchError):
            mean_ndvi(r, np.ones((3, 2), bool))

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1))
    def test_permutation_and_masked_values(self, seed):
        rng = np.random.default_rng(seed)
        nir, red = rng.uniform(0.01, 1, (2, 5, 5))
        mask = rng.random((5, 5)) < 0.6
        mask[0, 0] = True
        base = mean_ndvi(nir_red(nir, red), mask)

        perm = rng.permutation(25)
        shuffled = nir_red(nir.ravel()[perm].reshape(5, 5), red.ravel()[perm].reshape(5, 5))
        assert mean_ndvi(shuffled, mask.ravel()[perm].reshape(5, 5)) == pytest.approx(base, abs=1e-12)

        nir2, red2 = nir.copy(), red.copy()
        nir2[~mask] = rng.uniform(0, 1, (~mask).sum())
        red2[~mask] = rng.uniform(0, 1, (~mask).sum())
        assert mean_ndvi(nir_red(nir2, red2), mask) == base


class TestDarkChannel:
    def test_constant(self):
        assert np.all(dark_channel(rgb(np.full((5, 5), 42.0)), 2) == 42.0)

    def test_radius_zero_is_band_min(self):
        r = Raster({"red": [[10.0, 50.0]], "green": [[20.0, 5.0]], "blue": [[30.0, 40.0]]}, None, 255.0)
        assert dark_channel(r, 0).tolist() == [[10.0, 5.0]]

    def test_single_dark_center(self):
        v = np.full((3, 3), 200.0)
        v[1, 1] = 0.0
        assert np.all(dark_channel(rgb(v), 1) == 0.0)

    def test_invalid_pixels_excluded(self):
        v = np.array([[0.0, 100.0, 100.0]])
        out = dark_channel(rgb(v, valid=[[False, True, True]]), 1)
        assert out.tolist() == [[100.0, 100.0, 100.0]]
        out = dark_channel(rgb(v, valid=[[False, False, True]]), 0)
        assert np.isnan(out[0, 0]) and np.isnan(out[0, 1]) and out[0, 2] == 100.0

    def test_reflectance_rescaled(self):
        assert dark_channel(rgb(np.full((2, 2), 0.5), scale=1.0), 0)[0, 0] == 127.5

    def test_missing_band(self):
        with pytest.raises(ConfigError):
            dark_channel(nir_red(np.ones((2, 2)), np.ones((2, 2))))

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.integers(0, 3))
    def test_monotone_and_bounded(self, seed, radius):
        rng = np.random.default_rng(seed)
        bands = {b: rng.uniform(0, 255, (6, 7)) for b in ("red", "green", "blue")}
        before = dark_channel(Raster(bands, None, 255.0), radius)
        assert np.all(before <= np.minimum.reduce(list(bands.values())))
        brighter = {b: v.copy() for b, v in bands.items()}
        i, j = rng.integers(0, 6), rng.integers(0, 7)
        brighter[str(rng.choice(["red", "green", "blue"]))][i, j] += rng.uniform(0, 50)
        after = dark_channel(Raster(brighter, None, 255.0), radius)
        assert np.all(after >= before)


class TestHazeScore:
    def test_black_not_hazy(self):
        score = haze_score(rgb(np.zeros((4, 4))))
        assert score == 0.0 and not is_hazy(score)

    def test_gray_hazy(self):
        score = haze_score(rgb(np.full((4, 4), 128.0)))
        assert score == 128.0 and is_hazy(score)

    def test_threshold_strict(self):
        assert not is_hazy(20.0) and is_hazy(20.000001)

    def test_no_valid_pixels(self):
        with pytest.raises(EmptyRegionError):
            haze_score(rgb(np.zeros((2, 2)), valid=np.zeros((2, 2), bool)))


class TestPsnr:
    def test_identical(self):
        a = gray([[1.0, 2.0]])
        assert psnr(a, a) == math.inf

    def test_full_range_error(self):
        assert psnr(gray([[0.0]]), gray([[255.0]]), 255.0) == 0.0

    def test_unit_difference(self):
        a = gray(np.full((4, 4), 100.0))
        b = gray(np.full((4, 4), 101.0))
        assert psnr(a, b) == pytest.approx(10 * math.log10(255.0 ** 2), abs=1e-12)
        assert psnr(a, b) == pytest.approx(48.13, abs=0.005)

    def test_only_jointly_valid(self):
        a = Raster({"g": [[0.0, 10.0]]}, [[True, False]], 255.0)
        b = Raster({"g": [[1.0, 200.0]]}, None, 255.0)
        assert psnr(a, b) == pytest.approx(10 * math.log10(255.0 ** 2))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            psnr(gray(np.zeros((2, 2))), gray(np.zeros((2, 3))))
        with pytest.raises(DimensionMismatchError):
            psnr(gray(np.zeros((2, 2))), Raster({"x": np.zeros((2, 2))}))

    @settings(max_examples=30)
    @given(st.integers(0, 2**32 - 1))
    def test_symmetric_and_monotone(self, seed):
        rng = np.random.default_rng(seed)
        img = rng.uniform(50, 200, (6, 6))
        noise = rng.uniform(-1, 1, (6, 6))
        a, b = gray(img), gray(img + 3 * noise)
        assert psnr(a, b) == psnr(b, a)
        values = [psnr(a, gray(img + amp * noise)) for amp in (1, 2, 4, 8)]
        assert all(x > y for x, y in zip(values, values[1:]))


class TestSsim:
    def fixture_pair(self):
        rng = np.random.default_rng(11)
        x = rng.integers(0, 256, (8, 8)).astype(float)
        y = np.clip(x + rng.normal(0, 20, (8, 8)), 0, 255)
        return x, y

    def test_identity(self):
        x, _ = self.fixture_pair()
        assert ssim(gray(x), gray(x), window=3) == 1.0

    def test_inverted_lower(self):
        x, _ = self.fixture_pair()
        assert ssim(gray(x), gray(255.0 - x), window=3) < 1.0

    @pytest.mark.parametrize("window", [3, 5, 7])
    def test_matches_direct_formula(self, window):
        x, y = self.fixture_pair()
        expected = ssim_direct(x.tolist(), y.tolist(), window)
        assert ssim(gray(x), gray(y), window=window) == pytest.approx(expected, abs=1e-9)

    def test_matches_skimage_uniform_population(self):
        structural_similarity = pytest.importorskip("skimage.metrics").structural_similarity
        rng = np.random.default_rng(3)
        x = rng.uniform(0, 255, (20, 20))
        y = np.clip(x + rng.normal(0, 15, x.shape), 0, 255)
        ref = structural_similarity(x, y, win_size=7, data_range=255, gaussian_weights=False,
                                    use_sample_covariance=False)
        assert ssim(gray(x), gray(y), window=7) == pytest.approx(ref, abs=1e-9)

    def test_symmetric(self):
        x, y = self.fixture_pair()
        assert ssim(gray(x), gray(y), window=5) == ssim(gray(y), gray(x), window=5)

    def test_too_small(self):
        with pytest.raises(DimensionMismatchError):
            ssim(gray(np.zeros((8, 8))), gray(np.zeros((8, 8))))

    @pytest.mark.parametrize("window", [1, 4])
    def test_bad_window(self, window):
        with pytest.raises(ValueError):
            ssim(gray(np.zeros((8, 8))), gray(np.zeros((8, 8))), window=window)

    def test_skips_windows_with_holes(self):
        x, y = self.fixture_pair()
        valid = np.ones((8, 8), bool)
        valid[0, 0] = False
        got = ssim(Raster({"gray": x}, valid, 255.0), gray(y), window=7)
        # only the three 7x7 windows avoiding (0, 0) remain
        full = [ssim(gray(x[r:r + 7, c:c + 7]), gray(y[r:r + 7, c:c + 7]), window=7)
                for r, c in ((0, 1), (1, 0), (1, 1))]
        assert got == pytest.approx(sum(full) / 3, abs=1e-12)

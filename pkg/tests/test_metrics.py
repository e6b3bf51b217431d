import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from dualcyclewgan.imaging import RegionSpec
from dualcyclewgan.metrics import (
    MetricsReport,
    SsimParams,
    UndefinedMetricError,
    enl,
    mse,
    psnr,
    report,
    snr,
    ssim,
)

images16 = arrays(np.float64, (16, 16), elements=st.floats(0, 1))


class TestMse:
    def test_identity(self, rng):
        x = rng.random((5, 5))
        assert mse(x, x) == 0.0

    def test_constant(self):
        assert mse(np.zeros((3, 4)), np.full((3, 4), 0.5)) == 0.25

    def test_against_loop(self, rng):
        x, y = rng.random((4, 4)), rng.random((4, 4))
        assert mse(x, y) == pytest.approx(oracles.mse_loop(x.tolist(), y.tolist()), abs=1e-12)

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 2)), np.zeros((2, 3)))


class TestPsnr:
    def test_identical_is_inf(self, rng):
        x = rng.random((6, 6))
        assert psnr(x, x) == math.inf

    def test_8bit_unit_mse(self):
        x = np.zeros((2, 2))
        assert psnr(x, x + 1.0, max_val=255) == pytest.approx(48.1308036086791034, abs=1e-12)

    def test_constant_shift(self, rng):
        x = 0.5 * rng.random((8, 8))
        assert psnr(x, x + 0.1, max_val=1.0) == pytest.approx(20.0, abs=1e-9)

    def test_bad_max(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.ones((2, 2)), max_val=0)

    def test_monotone_in_noise(self, rng):
        x = rng.random((16, 16))
        noise = rng.standard_normal((16, 16))
        values = [psnr(x, x + a * noise) for a in np.linspace(0.01, 0.5, 12)]
        assert all(a > b for a, b in zip(values, values[1:]))

    @settings(max_examples=30, deadline=None)
    @given(x=images16, y=images16)
    def test_symmetric(self, x, y):
        assert psnr(x, y) == psnr(y, x)


class TestSsim:
    def test_self_similarity(self, rng):
        for _ in range(100):
            x = rng.random((12, 12))
            assert ssim(x, x) == pytest.approx(1.0, abs=1e-9)

    def test_black_vs_white(self):
        val = ssim(np.zeros((9, 9)), np.ones((9, 9)))
        assert val == pytest.approx(0.0001 / 1.0001, rel=1e-12)

    def test_against_window_loop(self, rng):
        x, y = rng.random((16, 16)), rng.random((16, 16))
        expected = oracles.ssim_loop(x.tolist(), y.tolist(), win=7)
        assert ssim(x, y, SsimParams(window_size=7)) == pytest.approx(expected, rel=1e-9)

    def test_too_small(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((5, 5)), np.zeros((5, 5)))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 9)))

    @pytest.mark.parametrize("kwargs", [dict(window_size=4), dict(window_size=1), dict(k1=0),
                                        dict(alpha=0)])
    def test_param_validation(self, kwargs):
        with pytest.raises(ValueError):
            SsimParams(**kwargs)

    def test_exponents_change_value(self, rng):
        x, y = rng.random((10, 10)), rng.random((10, 10))
        assert ssim(x, y, SsimParams(alpha=2.0)) != ssim(x, y)

    @settings(max_examples=30, deadline=None)
    @given(x=images16, y=images16)
    def test_symmetric_and_bounded(self, x, y):
        a, b = ssim(x, y), ssim(y, x)
        assert a == pytest.approx(b, abs=1e-12)
        assert -1 - 1e-12 <= a <= 1 + 1e-12


class TestSnrEnl:
    def test_snr_twenty_db(self):
        img = np.zeros((4, 4))
        img[:2, :] = [[0.4, 0.6, 0.4, 0.6], [0.4, 0.6, 0.4, 0.6]]
        bg = RegionSpec(0, 2, 0, 4)
        sd = img[:2].std(ddof=1)
        img[3, 3] = 10 * sd  # peak = 10 sigma
        assert snr(img, bg) == pytest.approx(20.0, abs=1e-9)

    def test_snr_zero_db(self):
        # background +-1/sqrt(2) has sample std exactly 1; peak is 1
        a = 1 / math.sqrt(2)
        img = np.array([[-a, a], [0.0, 1.0]])
        assert snr(img, RegionSpec(0, 1, 0, 2)) == pytest.approx(0.0, abs=1e-12)

    def test_snr_monte_carlo(self, rng):
        img = np.full((200, 100), 0.5)
        img[:100] = rng.normal(0.1, 0.02, size=(100, 100))
        img[150, 50] = 1.0
        expected = 10 * math.log10(1.0 / 0.02 ** 2)
        assert snr(img, RegionSpec(0, 100, 0, 100)) == pytest.approx(expected, abs=0.1)

    def test_enl_direct(self):
        # mean 0.5, sample std 0.1
        vals = np.array([0.5 - 0.1 * math.sqrt(0.5), 0.5 + 0.1 * math.sqrt(0.5)])
        img = vals[None, :]
        assert enl(img, RegionSpec(0, 1, 0, 2)) == pytest.approx(25.0, rel=1e-12)

    def test_enl_unit(self):
        # mean 1, sample std 1
        vals = np.array([[1 - math.sqrt(0.5), 1 + math.sqrt(0.5)]])
        assert enl(vals, RegionSpec(0, 1, 0, 2)) == pytest.approx(1.0, rel=1e-12)

    def test_enl_gamma_speckle(self, rng):
        looks = 4
        region = 0.5 * rng.gamma(looks, 1 / looks, size=(400, 250))
        assert enl(region, RegionSpec(0, 400, 0, 250)) == pytest.approx(looks, rel=0.05)

    def test_zero_variance(self):
        with pytest.raises(UndefinedMetricError):
            enl(np.full((4, 4), 0.5), RegionSpec(0, 2, 0, 2))
        with pytest.raises(UndefinedMetricError):
            snr(np.full((4, 4), 0.5), RegionSpec(0, 2, 0, 2))

    def test_region_out_of_bounds(self, rng):
        with pytest.raises(ValueError):
            enl(rng.random((4, 4)), RegionSpec(0, 8, 0, 2))

    @settings(max_examples=30, deadline=None)
    @given(k=st.floats(0.01, 1.0), seed=st.integers(0, 1000))
    def test_enl_scale_invariant(self, k, seed):
        region = 0.2 + np.random.default_rng(seed).random((6, 6)) * 0.6
        bg = RegionSpec(0, 6, 0, 6)
        assert enl(k * region, bg) == pytest.approx(enl(region, bg), rel=1e-9)


def test_report_degenerate_region_gives_nan():
    img = np.zeros((16, 16))
    img[8:] = 0.7
    r = report(img, img, RegionSpec(0, 4, 0, 16))
    assert isinstance(r, MetricsReport)
    assert r.ssim == pytest.approx(1.0) and r.psnr == math.inf
    assert math.isnan(r.snr) and math.isnan(r.enl)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from llvip_eval.errors import DimensionMismatch, EmptyDataset, ImageTooSmall
from llvip_eval.image import Image
from llvip_eval.quality import SSIMParams, aggregate_quality, combine_quality, QualityResult, mse, psnr, ssim


def noisy(base, eps, rng):
    return Image(np.clip(base + rng.uniform(-eps, eps, base.shape), 0, 1))


class TestMSE:
    def test_identity(self, rng):
        a = Image(rng.random((5, 5)))
        assert mse(a, a) == 0

    def test_zero_one(self):
        assert mse(Image.filled(4, 4, 0.0), Image.filled(4, 4, 1.0)) == 1

    def test_half(self):
        assert mse(Image.filled(4, 4, 0.0), Image.filled(4, 4, 0.5)) == 0.25

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mse(Image.filled(4, 4, 0.0), Image.filled(4, 5, 0.0))
        with pytest.raises(DimensionMismatch):
            mse(Image.filled(4, 4, 0.0), Image.filled(4, 4, 0.0, channels=3))


class TestPSNR:
    def test_identity(self, rng):
        a = Image(rng.random((5, 5)))
        assert psnr(a, a) == math.inf

    def test_twenty_db(self):
        # uniform offset of 0.1 gives mse 0.01
        assert psnr(Image.filled(4, 4, 0.2), Image.filled(4, 4, 0.3)) == pytest.approx(20.0, abs=1e-9)

    def test_zero_db(self):
        assert psnr(Image.filled(4, 4, 0.0), Image.filled(4, 4, 1.0)) == 0.0

    def test_monotone_in_noise(self, rng):
        base = rng.random((32, 32))
        noise = rng.uniform(-1, 1, base.shape)
        values = []
        for eps in (0.01, 0.03, 0.1, 0.3):
            b = Image(np.clip(base + eps * noise, 0, 1))
            values.append((mse(Image(base), b), psnr(Image(base), b)))
        mses = [m for m, _ in values]
        psnrs = [p for _, p in values]
        assert mses == sorted(mses)
        assert all(p1 > p2 for p1, p2 in zip(psnrs, psnrs[1:]))
        for m, p in values:
            assert p == pytest.approx(-10 * math.log10(m), abs=1e-12)


class TestSSIM:
    def test_identity(self, rng):
        a = Image(rng.random((20, 20)))
        assert abs(ssim(a, a) - 1.0) <= 1e-9

    def test_black_white(self):
        c1 = 0.01 ** 2
        got = ssim(Image.filled(16, 16, 0.0), Image.filled(16, 16, 1.0))
        assert got == pytest.approx(c1 / (1 + c1), rel=1e-9)
        assert got == pytest.approx(9.999e-5, abs=1e-8)

    def test_flat_equal(self):
        assert ssim(Image.filled(12, 12, 0.5), Image.filled(12, 12, 0.5)) == 1.0

    def test_too_small(self):
        with pytest.raises(ImageTooSmall):
            ssim(Image.filled(10, 20, 0.0), Image.filled(10, 20, 0.0))

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            ssim(Image.filled(12, 12, 0.0), Image.filled(12, 13, 0.0))

    def test_color_converted(self, rng):
        a = Image(rng.random((12, 12, 3)))
        assert abs(ssim(a, a) - 1) <= 1e-9

    @pytest.mark.parametrize("params", [SSIMParams(), SSIMParams(window=7, sigma=1.0, k1=0.02, k2=0.05)])
    def test_matches_direct_formula(self, rng, params):
        a, b = rng.random((16, 18)), rng.random((16, 18))
        want = oracles.ssim(a, b, params.window, params.sigma, params.k1, params.k2)
        assert ssim(Image(a), Image(b), params) == pytest.approx(want, abs=1e-9)

    def test_continuity(self, rng):
        base = rng.random((32, 32))
        values = [ssim(Image(base), noisy(base, eps, rng)) for eps in (0.2, 0.05, 0.01)]
        assert values == sorted(values)
        assert values[-1] > 0.99

    @pytest.mark.parametrize("bad", [dict(window=4), dict(window=1), dict(k1=0), dict(sigma=-1)])
    def test_bad_params(self, bad):
        with pytest.raises(ValueError):
            SSIMParams(**bad)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_symmetry_and_ranges(seed):
    r = np.random.default_rng(seed)
    a, b = Image(r.random((14, 14))), Image(r.random((14, 14)))
    assert mse(a, b) == mse(b, a)
    assert ssim(a, b) == ssim(b, a)
    assert 0 <= mse(a, b) <= 1
    assert -1 <= ssim(a, b) <= 1


class TestAggregate:
    def test_identical(self, rng):
        a = Image(rng.random((12, 12)))
        q = aggregate_quality([(a, a), (a, a)])
        assert (q.mse, q.ssim, q.psnr, q.psnr_excluded) == (0.0, 1.0, math.inf, 2)

    def test_mean_mse(self):
        q = combine_quality([QualityResult(0.1, 10.0, 0.5), QualityResult(0.3, 5.0, 0.7)])
        assert q.mse == pytest.approx(0.2, abs=1e-15)
        assert q.psnr == 7.5 and q.ssim == pytest.approx(0.6)

    def test_infinite_psnr_excluded(self):
        q = combine_quality([QualityResult(0.0, math.inf, 1.0), QualityResult(0.01, 20.0, 0.9)])
        assert q.psnr == 20.0 and q.psnr_excluded == 1 and q.n_pairs == 2

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            aggregate_quality([])

"""Full-reference quality metrics: MSE, PSNR and SSIM.

All metrics assume intensities in [0, 1], so the peak signal is 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyDataset, ImageTooSmall
from .image import Image, to_grayscale
from .pyramid import make_kernel

PSNR_INFINITY = math.inf


@dataclass(frozen=True)
class SSIMParams:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"SSIM window must be an odd integer >= 3, got {self.window}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("SSIM constants k1, k2 must be positive")
        make_kernel(self.sigma)

    def window_weights(self) -> np.ndarray:
        return make_kernel(self.sigma, radius=self.window // 2).weights


@dataclass
class QualityResult:
    mse: float
    psnr: float
    ssim: float
    n_pairs: int = 1
    psnr_excluded: int = 0

    @property
    def psnr_is_infinite(self) -> bool:
        return math.isinf(self.psnr)


def _check(a: Image, b: Image):
    if a.pixels.shape != b.pixels.shape:
        raise DimensionMismatch(
            f"images differ: {a.width}x{a.height}x{a.channels} vs {b.width}x{b.height}x{b.channels}")


def mse(a: Image, b: Image) -> float:
    _check(a, b)
    d = a.pixels - b.pixels
    return float(np.mean(d * d))


def psnr_from_mse(value: float) -> float:
    if value == 0:
        return PSNR_INFINITY
    return -10.0 * math.log10(value)


def psnr(a: Image, b: Image) -> float:
    """PSNR in dB with peak 1; ``math.inf`` for identical images."""
    return psnr_from_mse(mse(a, b))


def _valid_filter(arr: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Separable weighted window sums over positions fully inside ``arr``."""
    k = len(weights)
    h, w = arr.shape
    rows = np.zeros((h, w - k + 1))
    for i, wt in enumerate(weights):
        rows += wt * arr[:, i:i + w - k + 1]
    out = np.zeros((h - k + 1, w - k + 1))
    for i, wt in enumerate(weights):
        out += wt * rows[i:i + h - k + 1]
    return out


def ssim_map(a: Image, b: Image, params: SSIMParams = SSIMParams()) -> np.ndarray:
    a, b = to_grayscale(a), to_grayscale(b)
    if a.size != b.size:
        raise DimensionMismatch(f"images differ: {a.width}x{a.height} vs {b.width}x{b.height}")
    if min(a.width, a.height) < params.window:
        raise ImageTooSmall(f"{a.width}x{a.height} image is smaller than the {params.window}px SSIM window")
    x, y = a.pixels, b.pixels
    wts = params.window_weights()
    c1 = params.k1 ** 2
    c2 = params.k2 ** 2
    mu_x = _valid_filter(x, wts)
    mu_y = _valid_filter(y, wts)
    var_x = _valid_filter(x * x, wts) - mu_x * mu_x
    var_y = _valid_filter(y * y, wts) - mu_y * mu_y
    cov = _valid_filter(x * y, wts) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim(a: Image, b: Image, params: SSIMParams = SSIMParams()) -> float:
    """Mean SSIM over all Gaussian-window positions inside the image."""
    return float(np.mean(ssim_map(a, b, params)))


def compare(truth: Image, candidate: Image, params: SSIMParams = SSIMParams()) -> QualityResult:
    m = mse(truth, candidate)
    return QualityResult(m, psnr_from_mse(m), ssim(truth, candidate, params))


def combine_quality(results: Sequence[QualityResult]) -> QualityResult:
    """Dataset means in input order; infinite PSNRs are left out of the PSNR mean."""
    if not results:
        raise EmptyDataset("no image pairs to aggregate")
    n = len(results)
    mse_sum = ssim_sum = psnr_sum = 0.0
    finite = 0
    for r in results:
        mse_sum += r.mse
        ssim_sum += r.ssim
        if not math.isinf(r.psnr):
            psnr_sum += r.psnr
            finite += 1
    mean_psnr = psnr_sum / finite if finite else PSNR_INFINITY
    return QualityResult(mse_sum / n, mean_psnr, ssim_sum / n, n_pairs=n, psnr_excluded=n - finite)


def aggregate_quality(pairs: Sequence[tuple[Image, Image]], params: SSIMParams = SSIMParams()) -> QualityResult:
    if not pairs:
        raise EmptyDataset("no image pairs to aggregate")
    return combine_quality([compare(t, c, params) for t, c in pairs])

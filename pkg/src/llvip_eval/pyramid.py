"""Gaussian octave pyramid and the per-scale L1 loss between two images.

Each octave holds ``layers`` same-resolution images, layer k+1 being a
Gaussian blur of layer k.  The first layer of octave o+1 is the last layer
of octave o sampled with stride 2.  The scale loss at octave i compares the
*first* layer of octave i of the two pyramids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ChannelMismatch, DimensionMismatch, EmptyDataset, InvalidSigma, TooSmall
from .image import Image


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    sigma: float
    radius: int
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1


def make_kernel(sigma: float, radius: int | None = None) -> GaussianKernel:
    """Normalised 1-D Gaussian; ``radius`` defaults to ceil(3 sigma)."""
    if sigma is None or not math.isfinite(sigma) or sigma <= 0:
        raise InvalidSigma(f"sigma must be a positive finite number, got {sigma!r}")
    if radius is None:
        radius = max(1, math.ceil(3 * sigma))
    if radius < 1:
        raise InvalidSigma(f"kernel radius must be >= 1, got {radius}")
    t = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return GaussianKernel(float(sigma), int(radius), w / w.sum())


def reflect_indices(n: int, radius: int) -> np.ndarray:
    """Source index for every position of a length-n axis padded by ``radius``.

    Mirrors about the edge pixel without repeating it (``dcb|abcd|cba``),
    folding repeatedly when the pad is longer than the axis.
    """
    pos = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(pos)
    period = 2 * (n - 1)
    pos = np.mod(pos, period)
    return np.where(pos < n, pos, period - pos)


def _convolve_axis(arr: np.ndarray, kernel: GaussianKernel, axis: int) -> np.ndarray:
    n = arr.shape[axis]
    r = kernel.radius
    padded = np.take(arr, reflect_indices(n, r), axis=axis)
    out = np.zeros_like(arr)
    for k, w in enumerate(kernel.weights):
        sl = [slice(None)] * arr.ndim
        sl[axis] = slice(k, k + n)
        out += w * padded[tuple(sl)]
    return out


def blur_array(arr: np.ndarray, kernel: GaussianKernel) -> np.ndarray:
    """Separable blur of a 2-D array: horizontal pass, then vertical."""
    return _convolve_axis(_convolve_axis(arr, kernel, axis=1), kernel, axis=0)


def gaussian_blur(img: Image, kernel: GaussianKernel) -> Image:
    if img.channels != 1:
        raise ChannelMismatch(f"gaussian_blur expects a grayscale image, got {img.channels} channels")
    return Image(np.clip(blur_array(img.pixels, kernel), 0.0, 1.0))


def downsample(img: Image) -> Image:
    """Keep every second pixel, starting from (0, 0)."""
    if img.width < 2 or img.height < 2:
        raise TooSmall(f"cannot downsample a {img.width}x{img.height} image")
    h, w = img.height // 2, img.width // 2
    return Image(img.pixels[0:2 * h:2, 0:2 * w:2])


@dataclass(frozen=True)
class PyramidParams:
    octaves: int = 3
    layers: int = 5
    sigma: float = 1.0

    def __post_init__(self):
        if self.octaves < 1:
            raise ValueError(f"octaves must be >= 1, got {self.octaves}")
        if self.layers < 2:
            raise ValueError(f"layers must be >= 2, got {self.layers}")
        make_kernel(self.sigma)


@dataclass
class GaussianPyramid:
    octaves: list[list[Image]]

    def first_layers(self) -> list[Image]:
        return [octave[0] for octave in self.octaves]

    def base_sizes(self) -> list[tuple[int, int]]:
        return [octave[0].size for octave in self.octaves]


def build_pyramid(img: Image, octaves: int = 3, layers: int = 5, sigma: float = 1.0) -> GaussianPyramid:
    if octaves < 1:
        raise ValueError(f"octaves must be >= 1, got {octaves}")
    if layers < 2:
        raise ValueError(f"layers must be >= 2, got {layers}")
    if img.channels != 1:
        raise ChannelMismatch("build_pyramid expects a grayscale image")
    min_dim = min(img.width, img.height)
    if min_dim // 2 ** (octaves - 1) < 2:
        raise TooSmall(f"{img.width}x{img.height} image cannot support {octaves} octaves")
    kernel = make_kernel(sigma)
    result = []
    base = img
    for o in range(octaves):
        if o > 0:
            base = downsample(result[-1][-1])
        octave = [base]
        for _ in range(layers - 1):
            octave.append(gaussian_blur(octave[-1], kernel))
        result.append(octave)
    return GaussianPyramid(result)


def _check_pair(truth: Image, candidate: Image):
    if truth.channels != 1 or candidate.channels != 1:
        raise ChannelMismatch("scale loss expects grayscale images")
    if truth.size != candidate.size:
        raise DimensionMismatch(
            f"truth is {truth.width}x{truth.height}, candidate is {candidate.width}x{candidate.height}")


def scale_losses(truth: Image, candidate: Image, params: PyramidParams = PyramidParams()) -> list[float]:
    """Mean absolute difference of the first layer of every octave."""
    _check_pair(truth, candidate)
    a = build_pyramid(truth, params.octaves, params.layers, params.sigma).first_layers()
    b = build_pyramid(candidate, params.octaves, params.layers, params.sigma).first_layers()
    return [float(np.mean(np.abs(x.pixels - y.pixels))) for x, y in zip(a, b)]


def scale_loss(truth: Image, candidate: Image, octave_index: int,
               params: PyramidParams = PyramidParams()) -> float:
    if not 0 <= octave_index < params.octaves:
        raise IndexError(f"octave index {octave_index} outside 0..{params.octaves - 1}")
    return scale_losses(truth, candidate, params)[octave_index]


@dataclass
class PyramidLoss:
    per_scale: list[tuple[int, float]]
    total: float
    weights: list[float] = field(default_factory=list)

    def values(self) -> list[float]:
        return [s for _, s in self.per_scale]


def combine_scale_losses(per_pair: Sequence[Sequence[float]], weights: Sequence[float]) -> PyramidLoss:
    """Reduce per-pair scale losses in input order into a :class:`PyramidLoss`."""
    if not per_pair:
        raise EmptyDataset("no image pairs to aggregate")
    n_scales = len(per_pair[0])
    weights = [float(w) for w in weights]
    if len(weights) != n_scales:
        raise ValueError(f"expected {n_scales} weights, got {len(weights)}")
    if any(w < 0 or not math.isfinite(w) for w in weights):
        raise ValueError("pyramid weights must be finite and non-negative")
    means = []
    for i in range(n_scales):
        acc = 0.0
        for losses in per_pair:
            acc += losses[i]
        means.append(acc / len(per_pair))
    total = 0.0
    for w, s in zip(weights, means):
        total += w * s
    return PyramidLoss(list(enumerate(means)), total, weights)


def aggregate_pyramid_loss(pairs: Sequence[tuple[Image, Image]], weights: Sequence[float] | None = None,
                           params: PyramidParams = PyramidParams()) -> PyramidLoss:
    if not pairs:
        raise EmptyDataset("no image pairs to aggregate")
    if weights is None:
        weights = [1.0] * params.octaves
    if len(weights) != params.octaves:
        raise ValueError(f"expected {params.octaves} weights, got {len(weights)}")
    return combine_scale_losses([scale_losses(t, c, params) for t, c in pairs], weights)

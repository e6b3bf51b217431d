"""SSIM, PSNR, SNR and ENL image-quality measures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imaging import RegionSpec


class UndefinedMetricError(ValueError):
    """The metric is undefined for this input (e.g. zero-variance background)."""


@dataclass(frozen=True)
class SsimParams:
    window_size: int = 7
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if self.window_size < 3 or self.window_size % 2 == 0:
            raise ValueError("window_size must be odd and >= 3")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("k1 and k2 must be positive")
        if min(self.alpha, self.beta, self.gamma) <= 0:
            raise ValueError("exponents must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    @property
    def c3(self) -> float:
        return self.c2 / 2


@dataclass(frozen=True)
class MetricsReport:
    ssim: float
    psnr: float
    snr: float
    enl: float

    def as_row(self) -> list[float]:
        return [self.ssim, self.psnr, self.snr, self.enl]


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def mse(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.mean((x - y) ** 2))


def psnr(x, y, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical."""
    if max_val <= 0:
        raise ValueError("max_val must be positive")
    err = mse(x, y)
    if err == 0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / err)


def ssim_map(x, y, p: SsimParams = SsimParams()) -> np.ndarray:
    x, y = _pair(x, y)
    k = p.window_size
    if x.shape[0] < k or x.shape[1] < k:
        raise ValueError(f"image {x.shape} smaller than SSIM window {k}")
    wx = sliding_window_view(x, (k, k))
    wy = sliding_window_view(y, (k, k))
    mx = wx.mean(axis=(-2, -1))
    my = wy.mean(axis=(-2, -1))
    dx = wx - mx[..., None, None]
    dy = wy - my[..., None, None]
    vx = (dx * dx).mean(axis=(-2, -1))
    vy = (dy * dy).mean(axis=(-2, -1))
    cov = (dx * dy).mean(axis=(-2, -1))

    lum = (2 * mx * my + p.c1) / (mx ** 2 + my ** 2 + p.c1)
    con = (2 * np.sqrt(vx * vy) + p.c2) / (vx + vy + p.c2)
    struct = (cov + p.c3) / (np.sqrt(vx * vy) + p.c3)
    if p.alpha == p.beta == p.gamma == 1.0:
        return lum * con * struct
    # fractional powers of a negative structure term are not real; keep its sign
    return lum ** p.alpha * con ** p.beta * np.sign(struct) * np.abs(struct) ** p.gamma


def ssim(x, y, p: SsimParams = SsimParams()) -> float:
    """Mean SSIM over all fully-contained uniform windows."""
    return float(ssim_map(x, y, p).mean())


def _background_stats(img, background: RegionSpec) -> tuple[float, float]:
    img = np.asarray(img, dtype=np.float64)
    region = background.extract(img)
    if region.size < 2:
        raise UndefinedMetricError("background region needs at least two pixels")
    var = float(region.var(ddof=1))
    if var == 0:
        raise UndefinedMetricError(f"background region {background} has zero variance")
    return float(region.mean()), var


def snr(img, background: RegionSpec) -> float:
    """10*log10(max(img)^2 / sigma_b^2), sigma_b the background sample std."""
    _, var = _background_stats(img, background)
    peak = float(np.max(img))
    if peak <= 0:
        raise UndefinedMetricError("image maximum must be positive")
    return 10.0 * math.log10(peak ** 2 / var)


def enl(img, background: RegionSpec) -> float:
    """Equivalent number of looks: mean^2 / variance over the region."""
    mean, var = _background_stats(img, background)
    return mean ** 2 / var


def report(denoised, reference, background: RegionSpec, p: SsimParams = SsimParams(),
           max_val: float = 1.0) -> MetricsReport:
    """All four measures; SNR/ENL are NaN where the region is degenerate."""
    try:
        s, e = snr(denoised, background), enl(denoised, background)
    except UndefinedMetricError:
        s = e = math.nan
    return MetricsReport(
        ssim=ssim(denoised, reference, p),
        psnr=psnr(denoised, reference, max_val),
        snr=s,
        enl=e,
    )

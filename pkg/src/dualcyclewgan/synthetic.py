"""Layered phantoms and multiplicative gamma speckle.

These stand in for real retinal scans: horizontally stratified tissue with
gently undulating boundaries, plus unit-mean gamma speckle whose
equivalent number of looks is known analytically.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class PhantomSpec:
    height: int = 64
    width: int = 64
    num_layers: int = 5
    intensity_range: tuple[float, float] = (0.1, 0.9)
    curvature: float = 3.0
    edge_width: float = 1.5
    seed: int = 0
    # explicit per-layer intensities (top to bottom); drawn from intensity_range if None
    intensities: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.height < 8 or self.width < 1:
            raise ValueError("phantom needs height >= 8 and width >= 1")
        if self.num_layers < 2:
            raise ValueError("num_layers must be >= 2")
        lo, hi = self.intensity_range
        if not 0 <= lo <= hi <= 1:
            raise ValueError("intensity_range must be an ordered pair inside [0, 1]")
        if self.intensities is not None:
            if len(self.intensities) != self.num_layers:
                raise ValueError("need one intensity per layer")
            if not all(0 <= v <= 1 for v in self.intensities):
                raise ValueError("intensities must lie in [0, 1]")
        if self.curvature < 0 or self.edge_width < 0:
            raise ValueError("curvature and edge_width must be non-negative")


@dataclass(frozen=True)
class SpeckleSpec:
    looks: float = 4.0
    seed: int = 0
    clip: bool = True

    def __post_init__(self):
        if not self.looks > 0:
            raise ValueError("looks must be > 0")


def background_rows(height: int) -> int:
    """Number of top rows guaranteed homogeneous in a phantom of this height."""
    return height // 8


def _smoothstep(t: np.ndarray) -> np.ndarray:
    # exactly 0 for t <= -1 and exactly 1 for t >= 1
    t = np.clip((t + 1) / 2, 0.0, 1.0)
    return t * t * (3 - 2 * t)


def make_phantom(spec: PhantomSpec) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    h, w = spec.height, spec.width
    n = spec.num_layers
    if spec.intensities is not None:
        levels = np.asarray(spec.intensities, dtype=np.float64)
    else:
        levels = rng.uniform(*spec.intensity_range, size=n)
        # the top band plays the dark vitreous
        levels[0] = spec.intensity_range[0]

    # boundaries must leave the background band untouched, including the ramp
    top = background_rows(h) + spec.curvature + spec.edge_width + 1
    bottom = h - 1 - spec.curvature
    if bottom <= top:
        raise ValueError("phantom too short for its curvature and edge width")
    nominal = np.sort(rng.uniform(top, bottom, size=n - 1))

    cols = np.arange(w, dtype=np.float64)
    rows = np.arange(h, dtype=np.float64)[:, None]
    img = np.full((h, w), levels[0])
    for k, base in enumerate(nominal, start=1):
        period = rng.uniform(0.5, 2.0) * w
        phase = rng.uniform(0, 2 * np.pi)
        boundary = base + spec.curvature * np.sin(2 * np.pi * cols / period + phase)
        if spec.edge_width > 0:
            step = _smoothstep((rows - boundary[None, :]) / spec.edge_width)
        else:
            step = (rows >= boundary[None, :]).astype(np.float64)
        img += (levels[k] - levels[k - 1]) * step
    return np.clip(img, 0.0, 1.0)


def speckle_field(shape: tuple[int, ...], spec: SpeckleSpec) -> np.ndarray:
    """Unit-mean gamma multipliers with variance 1/looks."""
    rng = np.random.default_rng(spec.seed)
    return rng.gamma(shape=spec.looks, scale=1.0 / spec.looks, size=shape)


def add_speckle(clean: np.ndarray, spec: SpeckleSpec) -> np.ndarray:
    clean = np.asarray(clean, dtype=np.float64)
    if clean.size and (clean.min() < 0 or clean.max() > 1):
        raise ValueError("clean image must lie in [0, 1]")
    noisy = clean * speckle_field(clean.shape, spec)
    if spec.clip:
        noisy = np.clip(noisy, 0.0, 1.0)
    return noisy


def make_pairs(count: int, phantom: PhantomSpec, looks: float, seed: int) -> tuple[list, list]:
    """``count`` (clean, noisy) phantom pairs with per-image derived seeds."""
    seeds = np.random.SeedSequence(seed).generate_state(2 * count)
    clean, noisy = [], []
    for i in range(count):
        p = replace(phantom, seed=int(seeds[2 * i]))
        img = make_phantom(p)
        clean.append(img)
        noisy.append(add_speckle(img, SpeckleSpec(looks=looks, seed=int(seeds[2 * i + 1]))))
    return clean, noisy

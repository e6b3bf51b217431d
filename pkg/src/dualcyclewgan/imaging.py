"""Image I/O, upscale-and-crop data expansion, splitting and tiled inference.

Images are plain 2-D ``float64`` numpy arrays with values in ``[0, 1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage


class ImageFormatError(ValueError):
    """Raised for rasters that are not 8-bit single channel."""


@dataclass(frozen=True)
class RegionSpec:
    """Half-open pixel rectangle ``[row_start, row_end) x [col_start, col_end)``."""

    row_start: int
    row_end: int
    col_start: int
    col_end: int

    def __post_init__(self):
        if self.row_start < 0 or self.col_start < 0:
            raise ValueError(f"region indices must be non-negative: {self}")
        if self.row_end <= self.row_start or self.col_end <= self.col_start:
            raise ValueError(f"region is empty: {self}")

    @classmethod
    def parse(cls, text: str) -> "RegionSpec":
        """Parse ``rows_start:rows_end:cols_start:cols_end``."""
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError(f"region must have four ':'-separated fields, got {text!r}")
        try:
            r0, r1, c0, c1 = (int(p) for p in parts)
        except ValueError as exc:
            raise ValueError(f"region fields must be integers, got {text!r}") from exc
        return cls(r0, r1, c0, c1)

    def __str__(self) -> str:
        return f"{self.row_start}:{self.row_end}:{self.col_start}:{self.col_end}"

    def check_bounds(self, shape: tuple[int, int]) -> None:
        h, w = shape
        if self.row_end > h or self.col_end > w:
            raise ValueError(f"region {self} exceeds image of shape {h}x{w}")

    def extract(self, img: np.ndarray) -> np.ndarray:
        self.check_bounds(img.shape)
        return img[self.row_start:self.row_end, self.col_start:self.col_end]


@dataclass(frozen=True)
class CropPlan:
    scale_factor: float = 1.5
    crop_size: int = 256
    crops_per_image: int = 100
    seed: int = 0

    def __post_init__(self):
        if not self.scale_factor > 1:
            raise ValueError("scale_factor must be > 1")
        if self.crop_size < 1:
            raise ValueError("crop_size must be >= 1")
        if self.crops_per_image < 1:
            raise ValueError("crops_per_image must be >= 1")


def check_image(img: np.ndarray) -> np.ndarray:
    """Validate an image array and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return arr


def load_image(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            mode = im.mode
            raw = np.array(im)
    except Exception as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    # no silent RGB -> gray conversion
    if mode != "L" or raw.ndim != 2:
        raise ImageFormatError(f"{path}: expected 8-bit single-channel image, got mode {mode}")
    return raw.astype(np.float64) / 255.0


def save_image(img: np.ndarray, path: str | Path) -> None:
    arr = check_image(img)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.rint(arr * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path)


def read_manifest(path: str | Path) -> list[Path]:
    """Read a plain-text manifest: one image path per line, ``#`` comments.

    Relative entries resolve against the manifest's directory.
    """
    path = Path(path)
    entries = []
    for line in path.read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        p = Path(line)
        entries.append(p if p.is_absolute() else path.parent / p)
    return entries


def write_manifest(paths: Sequence[str | Path], path: str | Path, header: str | None = None) -> None:
    path = Path(path)
    lines = [f"# {header}"] if header else []
    for p in paths:
        p = Path(p)
        try:
            p = p.relative_to(path.parent)
        except ValueError:
            pass
        lines.append(str(p))
    path.write_text("\n".join(lines) + "\n")


def list_images(source: str | Path) -> list[Path]:
    """Resolve a directory of PNGs or a manifest file to sorted image paths."""
    source = Path(source)
    if source.is_dir():
        return sorted(source.glob("*.png"))
    return read_manifest(source)


def upscale(img: np.ndarray, scale_factor: float) -> np.ndarray:
    """Bilinear enlargement; output stays within the source value range."""
    out = ndimage.zoom(img, scale_factor, order=1, mode="nearest", grid_mode=True)
    return np.clip(out, img.min(), img.max())


def expand_dataset(images: Sequence[np.ndarray], plan: CropPlan) -> list[np.ndarray]:
    """Enlarge each image, then cut ``crops_per_image`` random square crops.

    Crop positions come from one generator seeded with ``plan.seed`` and are
    drawn in input order, so two image lists of identical shapes (for
    example clean/noisy pairs) receive identical crop positions.
    """
    rng = np.random.default_rng(plan.seed)
    size = plan.crop_size
    crops = []
    for img in images:
        img = check_image(img)
        big = upscale(img, plan.scale_factor)
        h, w = big.shape
        if size > h or size > w:
            raise ValueError(
                f"crop size {size} exceeds upscaled image {h}x{w} "
                f"(source {img.shape[0]}x{img.shape[1]}, scale {plan.scale_factor})"
            )
        rows = rng.integers(0, h - size + 1, size=plan.crops_per_image)
        cols = rng.integers(0, w - size + 1, size=plan.crops_per_image)
        for r, c in zip(rows, cols):
            crops.append(big[r:r + size, c:c + size].copy())
    return crops


def split_dataset(items: Sequence, train_fraction: float, seed: int = 0) -> tuple[list, list]:
    if len(items) == 0:
        raise ValueError("cannot split an empty dataset")
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n = len(items)
    # round half up; Python's round() would send 0.5 to the even neighbour
    n_train = min(n, int(math.floor(train_fraction * n + 0.5)))
    order = np.random.default_rng(seed).permutation(n)
    train = [items[i] for i in order[:n_train]]
    test = [items[i] for i in order[n_train:]]
    return train, test


def _tile_starts(length: int, tile: int, overlap: int) -> list[int]:
    if length <= tile:
        return [0]
    stride = tile - overlap
    starts = list(range(0, length - tile + 1, stride))
    if starts[-1] != length - tile:
        starts.append(length - tile)
    return starts


def _ramp(tile: int, overlap: int, at_start: bool, at_end: bool) -> np.ndarray:
    w = np.ones(tile)
    if overlap > 0:
        rise = np.arange(1, overlap + 1) / (overlap + 1)
        if not at_start:
            w[:overlap] = np.minimum(w[:overlap], rise)
        if not at_end:
            w[-overlap:] = np.minimum(w[-overlap:], rise[::-1])
    return w


def tile_and_stitch(
    img: np.ndarray,
    tile: int,
    overlap: int,
    f: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    """Apply ``f`` on overlapping ``tile x tile`` windows and feather them back.

    Images smaller than one tile are reflect-padded first and cropped back
    afterwards. Overlap bands are blended with linear ramps normalised so
    that the weights sum to one at every pixel.
    """
    if not tile > overlap >= 0:
        raise ValueError("need tile > overlap >= 0")
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    pad_h, pad_w = max(0, tile - h), max(0, tile - w)
    if pad_h or pad_w:
        if pad_h >= h or pad_w >= w:
            raise ValueError(f"tile {tile} too large to reflect-pad a {h}x{w} image")
        work = np.pad(img, ((0, pad_h), (0, pad_w)), mode="reflect")
    else:
        work = img
    H, W = work.shape
    rows = _tile_starts(H, tile, overlap)
    cols = _tile_starts(W, tile, overlap)

    acc = np.zeros_like(work)
    weight = np.zeros_like(work)
    for i, r in enumerate(rows):
        wr = _ramp(tile, overlap, i == 0, i == len(rows) - 1)
        for j, c in enumerate(cols):
            wc = _ramp(tile, overlap, j == 0, j == len(cols) - 1)
            patch = np.asarray(f(work[r:r + tile, c:c + tile]), dtype=np.float64)
            if patch.shape != (tile, tile):
                raise ValueError(f"tile map changed shape to {patch.shape}")
            wgt = np.outer(wr, wc)
            acc[r:r + tile, c:c + tile] += wgt * patch
            weight[r:r + tile, c:c + tile] += wgt
    return (acc / weight)[:h, :w]

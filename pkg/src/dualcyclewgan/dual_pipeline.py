"""Two chained Cycle-GAN stages joined by an image merge.

Stage 1 maps the noisy domain X to the clean domain Y. Its output is
blended back with the input (``noise1``) and stage 2 maps that merged
domain M to Y again. Inference returns stage 2's output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .imaging import tile_and_stitch
from .networks import (
    CriticConfig,
    MultiUNetConfig,
    build_critic,
    build_generator,
)


class CycleStage(nn.Module):
    """``G: X -> Y``, ``F: Y -> X`` and the critics ``D_X``, ``D_Y``."""

    def __init__(self, G: nn.Module, F: nn.Module, D_X: nn.Module, D_Y: nn.Module):
        super().__init__()
        self.G, self.F, self.D_X, self.D_Y = G, F, D_X, D_Y

    @classmethod
    def build(cls, gen_cfg: MultiUNetConfig, critic_cfg: CriticConfig, seed: int) -> "CycleStage":
        seeds = np.random.SeedSequence(seed).generate_state(4)
        return cls(
            build_generator(gen_cfg, int(seeds[0])),
            build_generator(gen_cfg, int(seeds[1])),
            build_critic(critic_cfg, int(seeds[2])),
            build_critic(critic_cfg, int(seeds[3])),
        )

    def generators(self):
        return list(self.G.parameters()) + list(self.F.parameters())

    def critics(self):
        return list(self.D_X.parameters()) + list(self.D_Y.parameters())


class DualMergedModel(nn.Module):
    """Stage 1, merge, optional stage 2.

    With ``stage2=None`` the model is a single Cycle-GAN and ``clean2``
    equals ``clean1``.
    """

    def __init__(self, stage1: CycleStage, stage2: CycleStage | None = None, merge_alpha: float = 0.5):
        super().__init__()
        if not 0.0 <= merge_alpha <= 1.0:
            raise ValueError("merge_alpha must lie in [0, 1]")
        self.stage1 = stage1
        self.stage2 = stage2
        self.merge_alpha = float(merge_alpha)

    @property
    def stages(self) -> list[CycleStage]:
        return [self.stage1] + ([self.stage2] if self.stage2 is not None else [])

    @property
    def max_depth(self) -> int:
        depths = [0]
        for st in self.stages:
            for g in (st.G, st.F):
                cfg = getattr(g, "cfg", None)
                if cfg is not None:
                    depths.append(cfg.max_depth)
        return max(depths)


@dataclass
class StageOutputs:
    clean1: np.ndarray
    noise1: np.ndarray
    clean2: np.ndarray


def merge(noise, clean1, alpha: float = 0.5):
    """Pixelwise convex blend ``alpha * clean1 + (1 - alpha) * noise``.

    Works on numpy arrays and torch tensors alike.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    if tuple(noise.shape) != tuple(clean1.shape):
        raise ValueError(f"dimension mismatch: {tuple(noise.shape)} vs {tuple(clean1.shape)}")
    if alpha == 0.0:
        return noise
    if alpha == 1.0:
        return clean1
    return alpha * clean1 + (1.0 - alpha) * noise


def _to_batch(img: np.ndarray, dtype) -> torch.Tensor:
    return torch.as_tensor(np.asarray(img), dtype=dtype)[None, None]


def _from_batch(t: torch.Tensor) -> np.ndarray:
    return t[0, 0].detach().to(torch.float64).numpy()


def _param_dtype(model: nn.Module):
    p = next(model.parameters(), None)
    return p.dtype if p is not None else torch.float32


@torch.no_grad()
def denoise_batch(model: DualMergedModel, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Batched inference: returns ``(clean1, noise1, clean2)`` tensors."""
    clean1 = model.stage1.G(x)
    noise1 = merge(x, clean1, model.merge_alpha)
    clean2 = model.stage2.G(noise1) if model.stage2 is not None else clean1
    return clean1, noise1, clean2


def denoise(model: DualMergedModel, img: np.ndarray) -> StageOutputs:
    was_training = model.training
    model.eval()
    try:
        x = _to_batch(img, _param_dtype(model))
        clean1, noise1, clean2 = denoise_batch(model, x)
    finally:
        model.train(was_training)
    return StageOutputs(_from_batch(clean1), _from_batch(noise1), _from_batch(clean2))


def denoise_fullframe(model: DualMergedModel, img: np.ndarray, tile: int = 256,
                      overlap: int = 32) -> np.ndarray:
    """Denoise an arbitrarily sized frame through overlapping tiles."""
    k = 2 ** model.max_depth
    if tile % k:
        raise ValueError(f"tile {tile} must be divisible by {k}")
    h, w = np.shape(img)
    fit = (min(h, w) // k) * k
    if fit < tile:
        # small frames: largest admissible tile that fits without padding
        if fit == 0:
            raise ValueError(f"image {h}x{w} smaller than the minimum tile {k}")
        tile = fit
        overlap = min(overlap, tile // 2)
    return tile_and_stitch(img, tile, overlap, lambda t: denoise(model, t).clean2)

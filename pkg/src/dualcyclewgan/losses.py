"""Adversarial (log and Wasserstein), cycle-consistency and clipping.

Loss functions accept torch tensors (differentiable) or anything
``torch.as_tensor`` understands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .networks import MultiUNetGenerator

EPS = 1e-7


@dataclass
class LossBundle:
    """Generator-side objective terms of one update.

    ``total`` is always ``adv_forward + adv_backward + lam * cycle``.
    Critic losses are carried along for logging only.
    """

    adv_forward: float | torch.Tensor
    adv_backward: float | torch.Tensor
    cycle: float | torch.Tensor
    total: float | torch.Tensor
    lam: float
    critic_x: float = 0.0
    critic_y: float = 0.0

    def detached(self) -> "LossBundle":
        f = lambda v: float(v.detach()) if torch.is_tensor(v) else float(v)  # noqa: E731
        return LossBundle(f(self.adv_forward), f(self.adv_backward), f(self.cycle),
                          f(self.total), self.lam, f(self.critic_x), f(self.critic_y))

    def check_finite(self) -> None:
        vals = self.detached()
        for name in ("adv_forward", "adv_backward", "cycle", "total", "critic_x", "critic_y"):
            if not math.isfinite(getattr(vals, name)):
                raise FloatingPointError(f"non-finite {name} loss: {vals}")


def _t(v):
    return v if torch.is_tensor(v) else torch.as_tensor(v, dtype=torch.float64)


def gan_adversarial_loss(real_probs, fake_probs):
    """Log-form GAN losses on probabilities in (0, 1).

    Returns ``(critic_loss, generator_loss)``; the generator term is the
    non-saturating ``-log D(G(x))``.
    """
    real = _t(real_probs).clamp(EPS, 1 - EPS)
    fake = _t(fake_probs).clamp(EPS, 1 - EPS)
    critic = -(torch.log(real).mean() + torch.log1p(-fake).mean())
    generator = -torch.log(fake).mean()
    return critic, generator


def wgan_adversarial_loss(real_scores, fake_scores):
    """Wasserstein losses on raw critic scores: ``(critic_loss, generator_loss)``."""
    real = _t(real_scores)
    fake = _t(fake_scores)
    for name, v in (("real", real), ("fake", fake)):
        if not torch.all(torch.isfinite(v)):
            raise FloatingPointError(f"non-finite {name} critic scores")
    critic = -(real.mean() - fake.mean())
    generator = -fake.mean()
    return critic, generator


def _mae_per_sample_mean(a, b):
    a, b = _t(a), _t(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if a.dim() <= 1:
        return (a - b).abs().mean()
    # pixels first, then batch
    return (a - b).abs().flatten(1).mean(dim=1).mean()


def cycle_consistency_loss(x, x_rec, y, y_rec):
    """L1 reconstruction error in both directions, summed."""
    return _mae_per_sample_mean(x_rec, x) + _mae_per_sample_mean(y_rec, y)


def full_objective(adv_fwd, adv_bwd, cycle, lam: float) -> LossBundle:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    total = adv_fwd + adv_bwd + lam * cycle
    return LossBundle(adv_fwd, adv_bwd, cycle, total, lam)


def clip_weights(model: nn.Module, c: float) -> None:
    """Clamp every parameter of a critic into ``[-c, c]`` in place."""
    if not c > 0:
        raise ValueError("clip constant must be positive")
    if isinstance(model, MultiUNetGenerator):
        raise TypeError("generators are never weight-clipped")
    with torch.no_grad():
        for p in model.parameters():
            p.clamp_(-c, c)

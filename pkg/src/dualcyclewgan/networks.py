"""Multi-depth U-Net generators and sigmoid-free patch critics."""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 4
    base_channels: int = 8
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("U-Net depth must be >= 1")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")


@dataclass(frozen=True)
class MultiUNetConfig:
    branch_depths: tuple[int, ...] = (3, 4)
    base_channels: int = 8

    def __post_init__(self):
        object.__setattr__(self, "branch_depths", tuple(int(d) for d in self.branch_depths))
        if not self.branch_depths:
            raise ValueError("need at least one U-Net branch")
        if len(set(self.branch_depths)) != len(self.branch_depths):
            raise ValueError(f"branch depths must be distinct: {self.branch_depths}")
        for d in self.branch_depths:
            UNetConfig(depth=d, base_channels=self.base_channels)

    @property
    def max_depth(self) -> int:
        return max(self.branch_depths)


@dataclass(frozen=True)
class CriticConfig:
    num_layers: int = 3
    base_channels: int = 16

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("critic needs at least one strided layer")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")


def _conv_block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.InstanceNorm2d(cout),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    """Plain U-Net returning an unbounded single-channel map."""

    def __init__(self, cfg: UNetConfig):
        super().__init__()
        self.cfg = cfg
        chans = [cfg.base_channels * 2 ** i for i in range(cfg.depth + 1)]
        self.down = nn.ModuleList([_conv_block(cfg.in_channels, chans[0])])
        for i in range(1, cfg.depth + 1):
            self.down.append(_conv_block(chans[i - 1], chans[i]))
        self.up = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i in reversed(range(cfg.depth)):
            self.up.append(nn.ConvTranspose2d(chans[i + 1], chans[i], 2, stride=2))
            self.dec.append(_conv_block(2 * chans[i], chans[i]))
        self.head = nn.Conv2d(chans[0], cfg.out_channels, 1)

    def forward(self, x):
        skips = []
        for i, block in enumerate(self.down):
            if i > 0:
                x = F.max_pool2d(x, 2)
            x = block(x)
            skips.append(x)
        x = skips.pop()
        for up, dec in zip(self.up, self.dec):
            x = dec(torch.cat([skips.pop(), up(x)], dim=1))
        return self.head(x)


class MultiUNetGenerator(nn.Module):
    """Parallel U-Nets of different depths fused by a learned 1x1 conv.

    The fusion also sees the input image itself: the branches are
    instance-normalised throughout and cannot reproduce absolute intensity
    on their own. The fused map is squashed with tanh and remapped to (0, 1).
    """

    def __init__(self, cfg: MultiUNetConfig):
        super().__init__()
        self.cfg = cfg
        self.branches = nn.ModuleList(
            [UNet(UNetConfig(depth=d, base_channels=cfg.base_channels)) for d in cfg.branch_depths]
        )
        self.fuse = nn.Conv2d(len(self.branches) + 1, 1, 1)

    def forward(self, x):
        check_divisible(x, self.cfg.max_depth)
        fused = self.fuse(torch.cat([b(x) for b in self.branches] + [x], dim=1))
        return 0.5 * (torch.tanh(fused) + 1.0)


class PatchCritic(nn.Module):
    """Strided conv stack whose patch score map is averaged to one score.

    No sigmoid, no normalisation: scores are unbounded Wasserstein estimates.
    """

    def __init__(self, cfg: CriticConfig):
        super().__init__()
        self.cfg = cfg
        layers = []
        cin = 1
        for i in range(cfg.num_layers):
            cout = cfg.base_channels * 2 ** i
            layers += [nn.Conv2d(cin, cout, 4, stride=2, padding=1), nn.LeakyReLU(0.2)]
            cin = cout
        layers.append(nn.Conv2d(cin, 1, 3, padding=1))
        self.net = nn.Sequential(*layers)

    def forward(self, x):
        """Return one score per batch element, shape ``(N,)``."""
        return self.net(x).mean(dim=(1, 2, 3))


def check_divisible(x: torch.Tensor, depth: int) -> None:
    h, w = x.shape[-2:]
    k = 2 ** depth
    if h % k or w % k:
        raise ValueError(f"spatial dims {h}x{w} must be divisible by {k} (depth {depth})")
    if (h // k) * (w // k) < 2:
        # instance norm needs more than one element at the bottleneck
        raise ValueError(f"spatial dims {h}x{w} too small for depth {depth}")


def init_weights(model: nn.Module, seed: int, std: float = 0.02) -> nn.Module:
    """Zero-mean Gaussian weights and zero biases from a private generator."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, p in model.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=gen, dtype=p.dtype) * std)
    return model


def build_generator(cfg: MultiUNetConfig, seed: int = 0) -> MultiUNetGenerator:
    return init_weights(MultiUNetGenerator(cfg), seed)


def build_critic(cfg: CriticConfig, seed: int = 0) -> PatchCritic:
    return init_weights(PatchCritic(cfg), seed)


def forward_generator(model: MultiUNetGenerator, x: torch.Tensor) -> torch.Tensor:
    """Apply a generator to an ``(N, 1, H, W)`` batch (or a single ``(H, W)`` image)."""
    squeeze = x.dim() == 2
    if squeeze:
        x = x[None, None]
    out = model(x)
    return out[0, 0] if squeeze else out


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())

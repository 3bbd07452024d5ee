"""Time-conditional 3D UNet operating on latent grids.

Conditioning is channel concatenation only: the caller stacks the noisy
latent with the condition grid. Timestep information enters each
residual block through a scale/shift modulation computed from a
sinusoidal embedding.
"""

from __future__ import annotations

import torch
from torch import nn

from .blocks import (
    Downsample3d,
    ShapeError,
    Upsample3d,
    group_norm,
    sinusoidal_time_embedding,
)


class TimeResBlock3d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, time_dim: int):
        super().__init__()
        self.norm1 = group_norm(in_channels)
        self.conv1 = nn.Conv3d(in_channels, out_channels, 3, padding=1)
        self.time_proj = nn.Linear(time_dim, 2 * out_channels)
        self.norm2 = group_norm(out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, 3, padding=1)
        if in_channels != out_channels:
            self.skip = nn.Conv3d(in_channels, out_channels, 1)
        else:
            self.skip = nn.Identity()
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor, t_emb: torch.Tensor) -> torch.Tensor:
        h = self.conv1(self.act(self.norm1(x)))
        scale, shift = self.time_proj(self.act(t_emb))[:, :, None, None, None].chunk(
            2, dim=1
        )
        h = self.norm2(h) * (1.0 + scale) + shift
        h = self.conv2(self.act(h))
        return h + self.skip(x)


class TimeConditionalUnet3d(nn.Module):
    """Noise predictor over (latent + condition) channel stacks."""

    def __init__(
        self,
        latent_channels: int = 4,
        cond_channels: int = 16,
        base: int = 64,
        levels: int = 3,
        time_dim: int | None = None,
    ):
        super().__init__()
        if levels < 1:
            raise ValueError(f"levels must be >= 1, got {levels}")
        self.latent_channels = latent_channels
        self.cond_channels = cond_channels
        self.levels = levels
        time_dim = time_dim or base * 4
        self.time_dim = time_dim
        self.time_freq_dim = base
        self.time_mlp = nn.Sequential(
            nn.Linear(base, time_dim), nn.SiLU(), nn.Linear(time_dim, time_dim)
        )

        widths = [base * 2**i for i in range(levels)]
        in_channels = latent_channels + cond_channels
        self.stem = nn.Conv3d(in_channels, widths[0], 3, padding=1)

        self.down_blocks = nn.ModuleList()
        self.downsamplers = nn.ModuleList()
        prev = widths[0]
        for i, w in enumerate(widths):
            self.down_blocks.append(TimeResBlock3d(prev, w, time_dim))
            prev = w
            if i < levels - 1:
                self.downsamplers.append(Downsample3d(w))

        self.mid = TimeResBlock3d(prev, prev, time_dim)

        self.up_blocks = nn.ModuleList()
        self.upsamplers = nn.ModuleList()
        for i in reversed(range(levels)):
            w = widths[i]
            # Skip concatenation doubles the input width of each up block.
            self.up_blocks.append(TimeResBlock3d(prev + w, w, time_dim))
            prev = w
            if i > 0:
                self.upsamplers.append(Upsample3d(w))

        self.head_norm = group_norm(prev)
        self.head = nn.Conv3d(prev, latent_channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(
        self, z_t: torch.Tensor, t: torch.Tensor | int, cond: torch.Tensor
    ) -> torch.Tensor:
        if z_t.ndim != 5 or cond.ndim != 5:
            raise ShapeError("z_t and cond must be (B, C, d, h, w) tensors")
        if z_t.shape[0] != cond.shape[0] or z_t.shape[2:] != cond.shape[2:]:
            raise ShapeError(
                f"latent {tuple(z_t.shape)} and condition {tuple(cond.shape)} "
                "disagree in batch or spatial shape"
            )
        if z_t.shape[1] != self.latent_channels or cond.shape[1] != self.cond_channels:
            raise ShapeError(
                f"expected channels ({self.latent_channels}, {self.cond_channels}), "
                f"got ({z_t.shape[1]}, {cond.shape[1]})"
            )
        min_edge = min(z_t.shape[2:])
        if min_edge < 2 ** (self.levels - 1):
            raise ShapeError(
                f"latent edge {min_edge} too small for {self.levels} levels"
            )
        if isinstance(t, int):
            t = torch.full((z_t.shape[0],), t, dtype=torch.long, device=z_t.device)
        if t.ndim == 0:
            t = t.expand(z_t.shape[0])
        t_emb = self.time_mlp(
            sinusoidal_time_embedding(t, self.time_freq_dim).to(z_t.dtype)
        )

        h = self.stem(torch.cat([z_t, cond], dim=1))
        skips = []
        for i, block in enumerate(self.down_blocks):
            h = block(h, t_emb)
            skips.append(h)
            if i < self.levels - 1:
                h = self.downsamplers[i](h)

        h = self.mid(h, t_emb)

        for i, block in enumerate(self.up_blocks):
            h = block(torch.cat([h, skips[-(i + 1)]], dim=1), t_emb)
            if i < len(self.upsamplers):
                h = self.upsamplers[i](h)

        return self.head(self.act(self.head_norm(h)))

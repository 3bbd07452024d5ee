"""Stage Two: X-ray views to a latent-shaped condition grid.

A shared depth-expansion stack lifts each 2D view into a coarse volume
along its beam axis; the coarse volumes are rotated into the frontal
(coronal) frame, averaged voxel-wise, and compressed by a deterministic
encoder into the condition grid. A mirrored decoder reconstructs a
CT-shaped volume for the reconstruction constraint, and two projection
heads map CT latents / condition grids into a common embedding space
for the contrastive alignment.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .blocks import ShapeError
from .vae import VolumeDecoder, VolumeEncoder


class DepthExpansion(nn.Module):
    """Grow a view's depth axis 1 -> depth with transposed convolutions.

    Each layer doubles depth only (kernel 4x3x3, stride 2x1x1), so the
    stack has log2(depth) layers and preserves the view's height/width.
    """

    def __init__(self, depth: int, width: int = 16):
        super().__init__()
        if depth < 2 or depth & (depth - 1):
            raise ValueError(f"depth must be a power of two >= 2, got {depth}")
        self.depth = depth
        n_layers = int(math.log2(depth))
        layers = []
        prev = 1
        for i in range(n_layers):
            out = 1 if i == n_layers - 1 else width
            layers.append(
                nn.ConvTranspose3d(
                    prev, out, kernel_size=(4, 3, 3), stride=(2, 1, 1), padding=(1, 1, 1)
                )
            )
            prev = out
        self.layers = nn.ModuleList(layers)
        self.act = nn.SiLU()

    def forward(self, view: torch.Tensor) -> torch.Tensor:
        if view.ndim != 4:
            raise ShapeError(
                f"expected a (B, 1, H, W) view, got shape {tuple(view.shape)}"
            )
        if view.shape[1] != 1:
            raise ShapeError(f"views are single-channel, got {view.shape[1]}")
        h = view.unsqueeze(2)  # (B, 1, 1, H, W)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if i < len(self.layers) - 1:
                h = self.act(h)
        return h


def view_frame_to_world(coarse: torch.Tensor, angle_deg: float) -> torch.Tensor:
    """Map a (B, 1, depth, rows, cols) coarse volume into (B, 1, z, y, x).

    Detector rows run top-down (-z); at 0 deg the beam runs along +y and
    columns along +x, at 90 deg the beam runs along -x and columns along
    +y (matching the projector's assembly rotation).
    """
    if coarse.ndim != 5:
        raise ShapeError(f"expected (B, 1, D, H, W), got shape {tuple(coarse.shape)}")
    d, h, w = coarse.shape[-3:]
    if not (d == h == w):
        raise ShapeError(f"coarse volume must be cubic, got {(d, h, w)}")
    angle = float(angle_deg) % 360.0
    if angle == 0.0:
        # out[z, y, x] = coarse[d=y, r=Z-1-z, c=x]
        return coarse.permute(0, 1, 3, 2, 4).flip(2)
    if angle == 90.0:
        # out[z, y, x] = coarse[d=X-1-x, r=Z-1-z, c=y]
        return coarse.permute(0, 1, 3, 4, 2).flip(2, 4)
    raise ValueError(f"unsupported fusion angle {angle_deg} (expected 0 or 90)")


def fuse_views(coarse_list, angles) -> torch.Tensor:
    """Voxel-wise mean of the coarse volumes in the frontal frame."""
    coarse_list = list(coarse_list)
    angles = [float(a) for a in angles]
    if not coarse_list:
        raise ValueError("fuse_views needs at least one coarse volume")
    if len(coarse_list) != len(angles):
        raise ValueError(
            f"{len(coarse_list)} volumes but {len(angles)} angles"
        )
    shapes = {tuple(c.shape) for c in coarse_list}
    if len(shapes) != 1:
        raise ShapeError(f"coarse volumes differ in shape: {sorted(shapes)}")
    mapped = [view_frame_to_world(c, a) for c, a in zip(coarse_list, angles)]
    return torch.stack(mapped).mean(dim=0)


class ConditionAutoencoder(nn.Module):
    """Deterministic compression of the fused coarse volume, with a
    mirrored decoder for the reconstruction constraint (no skips)."""

    def __init__(self, cond_channels: int = 16, base: int = 32):
        super().__init__()
        self.cond_channels = cond_channels
        self.encoder = VolumeEncoder(in_channels=1, base=base, out_channels=cond_channels)
        self.decoder = VolumeDecoder(
            out_channels=1, base=base, latent_channels=cond_channels
        )

    def encode(self, fused: torch.Tensor) -> torch.Tensor:
        return self.encoder(fused)

    def decode(self, cond: torch.Tensor) -> torch.Tensor:
        if cond.shape[1] != self.cond_channels:
            raise ShapeError(
                f"condition has {cond.shape[1]} channels, expected {self.cond_channels}"
            )
        return self.decoder(cond)


class ProjectionHead(nn.Module):
    """Global average pool followed by a two-layer perceptron."""

    def __init__(self, in_channels: int, embed_dim: int = 256, hidden: int | None = None):
        super().__init__()
        hidden = hidden or max(embed_dim // 2, in_channels)
        self.net = nn.Sequential(
            nn.Linear(in_channels, hidden), nn.SiLU(), nn.Linear(hidden, embed_dim)
        )

    def forward(self, grid: torch.Tensor) -> torch.Tensor:
        if grid.ndim != 5:
            raise ShapeError(f"expected (B, C, d, h, w), got shape {tuple(grid.shape)}")
        pooled = grid.mean(dim=(2, 3, 4))
        return self.net(pooled)


class ConditionModel(nn.Module):
    """Depth expansion + fusion + condition autoencoder + both heads."""

    def __init__(
        self,
        ct_edge: int,
        cond_channels: int = 16,
        latent_channels: int = 4,
        base: int = 32,
        pam_width: int = 16,
        embed_dim: int = 256,
    ):
        super().__init__()
        self.ct_edge = ct_edge
        self.pam = DepthExpansion(depth=ct_edge, width=pam_width)
        self.autoencoder = ConditionAutoencoder(cond_channels=cond_channels, base=base)
        self.head_ct = ProjectionHead(latent_channels, embed_dim=embed_dim)
        self.head_x = ProjectionHead(cond_channels, embed_dim=embed_dim)

    def coarse_fusion(self, views: torch.Tensor, angles) -> torch.Tensor:
        """(B, K, H, W) stacked views -> fused (B, 1, E, E, E) volume."""
        if views.ndim != 4:
            raise ShapeError(
                f"expected stacked views (B, K, H, W), got shape {tuple(views.shape)}"
            )
        if views.shape[1] != len(tuple(angles)):
            raise ShapeError(
                f"{views.shape[1]} views but {len(tuple(angles))} angles"
            )
        if views.shape[-2:] != (self.ct_edge, self.ct_edge):
            raise ShapeError(
                f"views must be {self.ct_edge}x{self.ct_edge} to align with the "
                f"CT cube, got {tuple(views.shape[-2:])}"
            )
        coarse = [self.pam(views[:, k : k + 1]) for k in range(views.shape[1])]
        return fuse_views(coarse, angles)

    def encode_views(self, views: torch.Tensor, angles) -> torch.Tensor:
        return self.autoencoder.encode(self.coarse_fusion(views, angles))

    def decode_condition(self, cond: torch.Tensor) -> torch.Tensor:
        return self.autoencoder.decode(cond)

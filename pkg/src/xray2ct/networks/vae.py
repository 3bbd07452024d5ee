"""Stage One: volumetric Gaussian autoencoder (8x spatial compression).

The encoder maps a (B, 1, E, E, E) volume to a mean and log-variance
grid of shape (B, c, E/8, E/8, E/8); the decoder mirrors it back with a
final tanh bound. Inference uses the mean directly, so reconstruction
is deterministic; sampling happens only through the explicit
reparameterization during training.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .blocks import Downsample3d, ResBlock3d, ShapeError, Upsample3d, group_norm

COMPRESSION_FACTOR = 8  # three stride-2 stages


@dataclass(frozen=True)
class LatentGaussian:
    """Mean and log-variance grids of the latent posterior."""

    mu: torch.Tensor
    log_var: torch.Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ShapeError(
                f"mu shape {tuple(self.mu.shape)} != log_var shape "
                f"{tuple(self.log_var.shape)}"
            )
        if not torch.isfinite(self.mu).all() or not torch.isfinite(self.log_var).all():
            raise ValueError("latent Gaussian parameters must be finite")

    @property
    def shape(self):
        return self.mu.shape


def reparameterize(g: LatentGaussian, eps: torch.Tensor) -> torch.Tensor:
    """z = mu + exp(0.5 log_var) * eps.

    The log-variance grid parameterizes the Gaussian's variance, so its
    half-exponential is the standard deviation used to scale the noise.
    """
    if eps.shape != g.mu.shape:
        raise ShapeError(
            f"eps shape {tuple(eps.shape)} != mu shape {tuple(g.mu.shape)}"
        )
    return g.mu + torch.exp(0.5 * g.log_var) * eps


class VolumeEncoder(nn.Module):
    """Three stride-2 stages of residual blocks, then a head conv."""

    def __init__(self, in_channels: int = 1, base: int = 32, out_channels: int = 8):
        super().__init__()
        widths = (base, base * 2, base * 4)
        self.stem = nn.Conv3d(in_channels, widths[0], 3, padding=1)
        stages = []
        prev = widths[0]
        for w in widths:
            stages.append(ResBlock3d(prev, w))
            stages.append(Downsample3d(w))
            prev = w
        self.stages = nn.Sequential(*stages)
        self.mid = ResBlock3d(prev, prev)
        self.head_norm = group_norm(prev)
        self.head = nn.Conv3d(prev, out_channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 5:
            raise ShapeError(f"expected (B, C, D, H, W), got shape {tuple(x.shape)}")
        edge = x.shape[-1]
        if x.shape[-3:] != (edge, edge, edge):
            raise ShapeError(f"volume must be cubic, got {tuple(x.shape[-3:])}")
        if edge % COMPRESSION_FACTOR != 0:
            raise ShapeError(
                f"edge {edge} is not divisible by {COMPRESSION_FACTOR}"
            )
        h = self.stem(x)
        h = self.stages(h)
        h = self.mid(h)
        return self.head(self.act(self.head_norm(h)))


class VolumeDecoder(nn.Module):
    """Mirror of the encoder; final tanh bounds output to [-1, 1]."""

    def __init__(self, out_channels: int = 1, base: int = 32, latent_channels: int = 4):
        super().__init__()
        widths = (base * 4, base * 2, base)
        self.stem = nn.Conv3d(latent_channels, widths[0], 3, padding=1)
        self.mid = ResBlock3d(widths[0], widths[0])
        stages = []
        prev = widths[0]
        for w in widths:
            stages.append(ResBlock3d(prev, w))
            stages.append(Upsample3d(w))
            prev = w
        self.stages = nn.Sequential(*stages)
        self.head_norm = group_norm(prev)
        self.final_conv = nn.Conv3d(prev, out_channels, 3, padding=1)
        self.act = nn.SiLU()

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        if z.ndim != 5:
            raise ShapeError(f"expected (B, C, d, h, w), got shape {tuple(z.shape)}")
        h = self.stem(z)
        h = self.mid(h)
        h = self.stages(h)
        return torch.tanh(self.final_conv(self.act(self.head_norm(h))))


class PerceptualVae(nn.Module):
    """Encoder/decoder pair with a Gaussian latent head."""

    def __init__(self, latent_channels: int = 4, base: int = 32):
        super().__init__()
        self.latent_channels = latent_channels
        self.encoder = VolumeEncoder(
            in_channels=1, base=base, out_channels=2 * latent_channels
        )
        self.decoder = VolumeDecoder(
            out_channels=1, base=base, latent_channels=latent_channels
        )

    def encode(self, x: torch.Tensor) -> LatentGaussian:
        out = self.encoder(x)
        mu, log_var = torch.chunk(out, 2, dim=1)
        return LatentGaussian(mu=mu, log_var=log_var)

    def decode(self, z: torch.Tensor) -> torch.Tensor:
        if z.shape[1] != self.latent_channels:
            raise ShapeError(
                f"latent has {z.shape[1]} channels, expected {self.latent_channels}"
            )
        return self.decoder(z)

    def forward(self, x: torch.Tensor, eps: torch.Tensor | None = None):
        g = self.encode(x)
        z = g.mu if eps is None else reparameterize(g, eps)
        return self.decode(z), g

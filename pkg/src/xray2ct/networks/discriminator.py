"""3D patch discriminator for the stage-one adversarial objective."""

from __future__ import annotations

import torch
from torch import nn


class PatchDiscriminator3d(nn.Module):
    """Stack of stride-2 convolutions producing a patch score map.

    Intermediate activations are exposed for feature matching.
    """

    def __init__(self, in_channels: int = 1, base: int = 16, n_layers: int = 4):
        super().__init__()
        layers = []
        prev = in_channels
        width = base
        for _ in range(n_layers):
            layers.append(nn.Conv3d(prev, width, 4, stride=2, padding=1))
            prev, width = width, min(width * 2, base * 8)
        self.features = nn.ModuleList(layers)
        self.head = nn.Conv3d(prev, 1, 3, padding=1)
        self.act = nn.LeakyReLU(0.2)

    def forward(self, x: torch.Tensor, return_features: bool = False):
        feats = []
        h = x
        for layer in self.features:
            h = self.act(layer(h))
            feats.append(h)
        score = self.head(h)
        if return_features:
            return score, feats
        return score

"""Training objectives shared by the three stages.

Stage One trains the volume autoencoder adversarially: a Gaussian
reconstruction term with learnable uncertainty, a KL pull toward the
standard normal, and a discriminator-based perceptual term. Stage Two
combines the same reconstruction form with a temperature-scaled InfoNCE
alignment loss over in-batch positives/negatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass(frozen=True)
class VaeLossWeights:
    """Weights for the stage-one generator objective."""

    lambda_nll: float = 1.0
    lambda_kl: float = 1e-6
    lambda_p: float = 0.5

    def __post_init__(self):
        for name in ("lambda_nll", "lambda_kl", "lambda_p"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


@dataclass(frozen=True)
class CondLossWeights:
    """Weights for the stage-two conditional encoder objective."""

    lambda_recon: float = 1.0
    lambda_contrast: float = 1.0

    def __post_init__(self):
        for name in ("lambda_recon", "lambda_contrast"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")


def nll_loss(x: torch.Tensor, x_hat: torch.Tensor, sigma) -> torch.Tensor:
    """Gaussian negative log-likelihood with learnable uncertainty:
    mean((x - x_hat)^2) / (2 sigma^2) + log(sigma). The additive
    constant is dropped."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    sigma = torch.as_tensor(sigma, dtype=x.dtype, device=x.device)
    if (sigma <= 0).any():
        raise ValueError("sigma must be > 0")
    return ((x - x_hat) ** 2).mean() / (2.0 * sigma**2) + torch.log(sigma)


def kl_loss(mu: torch.Tensor, log_var: torch.Tensor) -> torch.Tensor:
    """KL(N(mu, exp(log_var)) || N(0, 1)), averaged over all elements."""
    if mu.shape != log_var.shape:
        raise ValueError(f"shape mismatch: {tuple(mu.shape)} vs {tuple(log_var.shape)}")
    return ((mu**2 + torch.exp(log_var) - 1.0 - log_var) / 2.0).mean()


def hinge_disc_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Margin loss for the discriminator: real scores pushed above +1,
    fake scores below -1."""
    return 0.5 * F.relu(1.0 - d_real).mean() + 0.5 * F.relu(1.0 + d_fake).mean()


def adversarial_generator_term(d_fake: torch.Tensor) -> torch.Tensor:
    return -d_fake.mean()


def feature_matching_loss(real_features, fake_features) -> torch.Tensor:
    """Mean L1 distance between matched discriminator activations."""
    if len(real_features) != len(fake_features):
        raise ValueError("feature lists differ in length")
    terms = [F.l1_loss(fake, real.detach()) for real, fake in zip(real_features, fake_features)]
    return torch.stack(terms).mean()


def perceptual_loss(discriminator, x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Discriminator-based perceptual term: adversarial generator score
    plus L1 feature matching over intermediate activations."""
    fake_score, fake_feats = discriminator(x_hat, return_features=True)
    with torch.no_grad():
        _, real_feats = discriminator(x, return_features=True)
    return adversarial_generator_term(fake_score) + feature_matching_loss(
        real_feats, fake_feats
    )


def generator_loss(
    x: torch.Tensor,
    x_hat: torch.Tensor,
    mu: torch.Tensor,
    log_var: torch.Tensor,
    sigma,
    weights: VaeLossWeights,
    discriminator=None,
    adversarial: bool = True,
) -> dict[str, torch.Tensor]:
    """Weighted stage-one generator objective; returns all components.

    The perceptual term is only evaluated when its weight is nonzero,
    the discriminator is provided and ``adversarial`` is on (warmup
    disables it early in training).
    """
    nll = nll_loss(x, x_hat, sigma)
    kl = kl_loss(mu, log_var)
    total = weights.lambda_nll * nll + weights.lambda_kl * kl
    zero = torch.zeros((), dtype=x.dtype, device=x.device)
    perceptual = zero
    if weights.lambda_p > 0 and adversarial and discriminator is not None:
        perceptual = perceptual_loss(discriminator, x, x_hat)
        total = total + weights.lambda_p * perceptual
    return {"nll": nll, "kl": kl, "perceptual": perceptual, "total": total}


def info_nce_loss(
    ct_embeds: torch.Tensor, x_embeds: torch.Tensor, temperature: float = 0.07
) -> torch.Tensor:
    """Temperature-scaled InfoNCE over a mini-batch of paired embeddings.

    Row i of both batches describes the same entity (the positive
    pair); every other row of ``x_embeds`` is a negative. Similarity is
    cosine.
    """
    if ct_embeds.shape != x_embeds.shape:
        raise ValueError(
            f"shape mismatch: {tuple(ct_embeds.shape)} vs {tuple(x_embeds.shape)}"
        )
    if ct_embeds.ndim != 2 or ct_embeds.shape[0] < 1:
        raise ValueError("expected (batch, dim) embeddings")
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    eps_free_norms = (
        ct_embeds.norm(dim=1).min(),
        x_embeds.norm(dim=1).min(),
    )
    if any(float(n) == 0.0 for n in eps_free_norms):
        raise ValueError("zero-norm embedding passed to info_nce_loss")
    ct_n = F.normalize(ct_embeds, dim=1)
    x_n = F.normalize(x_embeds, dim=1)
    logits = (ct_n @ x_n.T) / temperature
    targets = torch.arange(logits.shape[0], device=logits.device)
    return F.cross_entropy(logits, targets)


def cond_loss(
    x: torch.Tensor,
    y_hat: torch.Tensor,
    sigma_prime,
    clip_loss: torch.Tensor,
    weights: CondLossWeights,
) -> dict[str, torch.Tensor]:
    """Stage-two objective: reconstruction against the CT volume plus
    the contrastive alignment term."""
    recon = nll_loss(x, y_hat, sigma_prime)
    clip_loss = torch.as_tensor(clip_loss, dtype=x.dtype, device=x.device)
    total = weights.lambda_recon * recon + weights.lambda_contrast * clip_loss
    return {"recon": recon, "clip": clip_loss, "total": total}

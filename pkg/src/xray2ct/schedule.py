"""Linear noise schedule and the forward (noising) process."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-timestep beta/alpha arrays for a T-step chain.

    Arrays are indexed 0..T-1 for timesteps t = 1..T. Timestep 0 is the
    clean-data extension with cumulative alpha exactly 1.
    """

    T: int
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape != (self.T,):
            raise ValueError(f"beta must have shape ({self.T},), got {beta.shape}")
        if not (np.all(beta > 0) and np.all(beta < 1)):
            raise ValueError("beta values must lie strictly in (0, 1)")
        if not np.all(np.diff(beta) > 0):
            raise ValueError("beta must be strictly increasing")
        object.__setattr__(self, "beta", beta)
        alpha = 1.0 - beta
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "alpha_bar", np.cumprod(alpha))

    def alpha_bar_at(self, t) -> np.ndarray:
        """Cumulative alpha with the t=0 extension (alpha_bar_0 = 1)."""
        t = np.asarray(t)
        if np.any(t < 0) or np.any(t > self.T):
            raise ValueError(f"timestep out of range [0, {self.T}]")
        padded = np.concatenate([[1.0], self.alpha_bar])
        return padded[t]

    def signal_scale(self, t):
        """sqrt(alpha_bar_t), the clean-signal coefficient."""
        return np.sqrt(self.alpha_bar_at(t))

    def noise_scale(self, t):
        """sqrt(1 - alpha_bar_t), the noise coefficient."""
        return np.sqrt(1.0 - self.alpha_bar_at(t))


def build_schedule(
    T: int = 1000, beta_start: float = 1e-4, beta_end: float = 2e-2
) -> NoiseSchedule:
    """Linear schedule beta_t = beta_start + (t-1)/(T-1) * (beta_end - beta_start)."""
    if T < 2:
        raise ValueError(f"T must be >= 2, got {T}")
    if not 0.0 < beta_start < beta_end < 1.0:
        raise ValueError(
            f"need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})"
        )
    return NoiseSchedule(T=T, beta=np.linspace(beta_start, beta_end, T))


def q_sample(
    z0: torch.Tensor, t, eps: torch.Tensor, schedule: NoiseSchedule
) -> torch.Tensor:
    """Forward-process sample sqrt(ab_t) z0 + sqrt(1 - ab_t) eps.

    ``t`` is an int or a per-item tensor of timestep indices in [0, T];
    per-item values broadcast over an initial batch dimension.
    """
    if eps.shape != z0.shape:
        raise ValueError(f"eps shape {tuple(eps.shape)} != z0 shape {tuple(z0.shape)}")
    t_arr = np.asarray(t.cpu() if isinstance(t, torch.Tensor) else t)
    signal = np.asarray(schedule.signal_scale(t_arr), dtype=np.float64)
    noise = np.asarray(schedule.noise_scale(t_arr), dtype=np.float64)
    if signal.ndim == 0:
        s = torch.as_tensor(signal, dtype=z0.dtype, device=z0.device)
        n = torch.as_tensor(noise, dtype=z0.dtype, device=z0.device)
    else:
        if signal.shape[0] != z0.shape[0]:
            raise ValueError(
                f"per-item t has length {signal.shape[0]} but batch is {z0.shape[0]}"
            )
        shape = (z0.shape[0],) + (1,) * (z0.ndim - 1)
        s = torch.as_tensor(signal, dtype=z0.dtype, device=z0.device).reshape(shape)
        n = torch.as_tensor(noise, dtype=z0.dtype, device=z0.device).reshape(shape)
    return s * z0 + n * eps

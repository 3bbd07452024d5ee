"""Stage Three: noise-prediction training objective and fast ODE sampling.

The sampler integrates the probability-flow ODE for an epsilon
predictor in exponential-integrator form. With a_t = sqrt(alpha_bar_t),
s_t = sqrt(1 - alpha_bar_t) and lambda_t = log(a_t / s_t), one step from
time s to t < s is

    x_t = (a_t / a_s) x_s - C * eps_hat,   C = a_t s_s / a_s - s_t,

where C equals s_t (e^h - 1) with h = lambda_t - lambda_s but stays
finite at the clean endpoint alpha_bar = 1, so the final step to t = 0
is exact for a point-mass-consistent predictor. The second-order
multistep variant adds a midpoint correction C * 0.5 * (h/h_prev) *
(eps_now - eps_prev); the first and final steps fall back to first
order.
"""

from __future__ import annotations

import numpy as np
import torch

from .schedule import NoiseSchedule, q_sample


def ldm_loss(
    predictor,
    z0: torch.Tensor,
    cond: torch.Tensor,
    schedule: NoiseSchedule,
    *,
    t: torch.Tensor | None = None,
    eps: torch.Tensor | None = None,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Mean squared error between drawn and predicted noise.

    Timesteps are drawn uniformly over [1, T] per item and the noise is
    standard normal unless both are supplied explicitly.
    """
    if t is None:
        t = torch.randint(
            1, schedule.T + 1, (z0.shape[0],), generator=generator, device=z0.device
        )
    if eps is None:
        eps = torch.randn(z0.shape, generator=generator, device=z0.device, dtype=z0.dtype)
    z_t = q_sample(z0, t, eps, schedule)
    eps_hat = predictor(z_t, t, cond)
    if eps_hat.shape != eps.shape:
        raise ValueError(
            f"predictor output shape {tuple(eps_hat.shape)} != noise shape "
            f"{tuple(eps.shape)}"
        )
    return ((eps - eps_hat) ** 2).mean()


def sample_timestep_grid(T: int, steps: int) -> list[int]:
    """Strictly decreasing integer grid from T to 0 with ~steps segments."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    grid = np.unique(np.round(np.linspace(T, 0, steps + 1)).astype(int))[::-1]
    return [int(v) for v in grid]


class DpmSolver:
    """Deterministic fast sampler for an epsilon predictor."""

    def __init__(self, schedule: NoiseSchedule, predictor, order: int = 2):
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        self.schedule = schedule
        self.predictor = predictor
        self.order = order

    def _scales(self, t: int) -> tuple[float, float]:
        return float(self.schedule.signal_scale(t)), float(self.schedule.noise_scale(t))

    @staticmethod
    def _lam(a: float, s: float) -> float:
        return float(np.log(a) - np.log(s))

    @torch.no_grad()
    def sample(
        self,
        cond: torch.Tensor,
        latent_shape: tuple[int, ...],
        steps: int = 50,
        *,
        order: int | None = None,
        initial_noise: torch.Tensor | None = None,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        """Integrate from pure noise at t=T down to the clean estimate."""
        order = self.order if order is None else order
        if order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {order}")
        if initial_noise is not None:
            if tuple(initial_noise.shape) != tuple(latent_shape):
                raise ValueError(
                    f"initial noise shape {tuple(initial_noise.shape)} != "
                    f"latent shape {tuple(latent_shape)}"
                )
            x = initial_noise.clone()
        else:
            x = torch.randn(latent_shape, generator=generator, dtype=cond.dtype)
        x = x.to(cond.device)

        grid = sample_timestep_grid(self.schedule.T, steps)
        prev_eps: torch.Tensor | None = None
        prev_h: float | None = None
        for i in range(len(grid) - 1):
            s, t = grid[i], grid[i + 1]
            a_s, s_s = self._scales(s)
            a_t, s_t = self._scales(t)
            eps_now = self.predictor(x, s, cond)
            ratio = a_t / a_s
            coeff = a_t * s_s / a_s - s_t
            use_second = (
                order == 2 and prev_eps is not None and t > 0 and s_t > 0.0
            )
            if use_second:
                h = self._lam(a_t, s_t) - self._lam(a_s, s_s)
                correction = 0.5 * (h / prev_h) * (eps_now - prev_eps)
                x = ratio * x - coeff * (eps_now + correction)
                prev_h = h
            else:
                x = ratio * x - coeff * eps_now
                if t > 0 and s_t > 0.0:
                    prev_h = self._lam(a_t, s_t) - self._lam(a_s, s_s)
            prev_eps = eps_now
        return x


def point_mass_predictor(target: torch.Tensor, schedule: NoiseSchedule):
    """Analytic optimal predictor when the data is a single point.

    eps_hat = (z_t - sqrt(ab_t) * target) / sqrt(1 - ab_t); a first-order
    solver step to the clean endpoint recovers ``target`` exactly.
    """

    def predictor(z_t: torch.Tensor, t, cond=None) -> torch.Tensor:
        t_int = int(t) if not isinstance(t, torch.Tensor) else int(t.reshape(-1)[0])
        a = float(schedule.signal_scale(t_int))
        s = float(schedule.noise_scale(t_int))
        if s == 0.0:
            raise ValueError("point-mass predictor undefined at t = 0")
        return (z_t - a * target) / s

    return predictor

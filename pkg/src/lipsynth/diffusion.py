"""Forward-process and sampler math for a Markovian Gaussian diffusion.

Everything here is a pure function of a :class:`NoiseSchedule` and caller-
supplied noise; no randomness is drawn internally, so all operations are
deterministic and safe to call concurrently.  Array arguments may be numpy
arrays, torch tensors, or plain floats: the per-step coefficients are Python
scalars, so whatever supports elementwise ``*`` and ``+`` works.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise variances and their cumulative products.

    ``alpha_bar[t]`` is indexed with ``t`` in ``[0, T]`` where index 0 is the
    clean-data convention (``alpha_bar[0] == 1``) and index T is the most
    noised step.
    """

    T: int
    beta: np.ndarray
    alpha_bar: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.beta.shape != (self.T,):
            raise ValueError(f"beta must have shape ({self.T},), got {self.beta.shape}")
        if self.alpha_bar.shape != (self.T + 1,):
            raise ValueError(
                f"alpha_bar must have shape ({self.T + 1},), got {self.alpha_bar.shape}"
            )

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product at step ``t``; ``t=0`` returns 1.0 exactly."""
        if not 0 <= t <= self.T:
            raise ValueError(f"step index {t} outside [0, {self.T}]")
        return float(self.alpha_bar[t])


def make_schedule(T: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    """Build a linear-beta schedule of ``T`` steps.

    Betas are interpolated linearly from ``beta_start`` to ``beta_end`` and
    the cumulative products are computed in float64.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    if T == 1:
        beta = np.array([beta_start], dtype=np.float64)
    else:
        beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - beta)
    return NoiseSchedule(T=T, beta=beta, alpha_bar=alpha_bar)


def forward_sample(x0, t: int, eps, sched: NoiseSchedule):
    """Noise ``x0`` to step ``t``: ``sqrt(a_bar)*x0 + sqrt(1-a_bar)*eps``."""
    _check_shapes(x0, eps)
    a_bar = sched.alpha_bar_at(t)
    return math.sqrt(a_bar) * x0 + math.sqrt(1.0 - a_bar) * eps


def predict_x0(x_t, eps_hat, t: int, sched: NoiseSchedule):
    """Invert :func:`forward_sample` for a predicted noise ``eps_hat``."""
    _check_shapes(x_t, eps_hat)
    a_bar = sched.alpha_bar_at(t)
    if a_bar <= 0.0:
        raise ZeroDivisionError(f"alpha_bar at t={t} is numerically zero")
    return (x_t - math.sqrt(1.0 - a_bar) * eps_hat) / math.sqrt(a_bar)


def ddim_step(x_t, eps_hat, t: int, t_prev: int, sched: NoiseSchedule):
    """Deterministic reverse step from ``t`` to ``t_prev`` (sigma = 0).

    Computed in the x_t-referenced form; algebraically equal to
    ``sqrt(a_prev)*predict_x0 + sqrt(1-a_prev)*eps_hat``.  ``t_prev == t`` is
    the identity.
    """
    _check_shapes(x_t, eps_hat)
    if t_prev > t:
        raise ValueError(f"t_prev ({t_prev}) must not exceed t ({t})")
    a_t = sched.alpha_bar_at(t)
    a_prev = sched.alpha_bar_at(t_prev)
    coef_x = math.sqrt(a_prev / a_t)
    coef_eps = math.sqrt(1.0 - a_prev) - math.sqrt(a_prev * (1.0 - a_t) / a_t)
    return coef_x * x_t + coef_eps * eps_hat


def ddim_general_step(x_t, eps_hat, t: int, t_prev: int, sigma: float, xi, sched: NoiseSchedule):
    """Variance-controlled reverse step; ``sigma=0`` reduces to :func:`ddim_step`.

    ``xi`` is a standard-normal draw supplied by the caller.
    """
    _check_shapes(x_t, eps_hat)
    if t_prev > t:
        raise ValueError(f"t_prev ({t_prev}) must not exceed t ({t})")
    if sigma < 0.0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    a_prev = sched.alpha_bar_at(t_prev)
    if sigma * sigma > 1.0 - a_prev + 1e-12:
        raise ValueError(
            f"sigma^2 ({sigma * sigma}) exceeds 1 - alpha_bar[t_prev] ({1.0 - a_prev})"
        )
    x0_hat = predict_x0(x_t, eps_hat, t, sched)
    residual = max(1.0 - a_prev - sigma * sigma, 0.0)
    return math.sqrt(a_prev) * x0_hat + math.sqrt(residual) * eps_hat + sigma * xi


def ddpm_sigma(t: int, t_prev: int, sched: NoiseSchedule) -> float:
    """Posterior standard deviation that makes the general step match DDPM."""
    if t_prev >= t:
        raise ValueError(f"t_prev ({t_prev}) must be < t ({t})")
    a_t = sched.alpha_bar_at(t)
    a_prev = sched.alpha_bar_at(t_prev)
    return math.sqrt((1.0 - a_prev) / (1.0 - a_t)) * math.sqrt(1.0 - a_t / a_prev)


def strided_timesteps(T: int, n: int) -> list[int]:
    """``n`` evenly strided step indices, descending, starting at ``T``.

    Stride is ``T // n``, so ``n == T`` gives the full schedule and the last
    (smallest) entry is always >= 1.
    """
    if not 1 <= n <= T:
        raise ValueError(f"need 1 <= n <= T, got n={n}, T={T}")
    stride = T // n
    return [T - k * stride for k in range(n)]


def _check_shapes(a, b):
    shape_a = getattr(a, "shape", None)
    shape_b = getattr(b, "shape", None)
    if shape_a != shape_b:
        raise ValueError(f"shape mismatch: {shape_a} vs {shape_b}")

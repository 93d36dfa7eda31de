"""Closed-form 1-D Gaussian reference problem.

For data N(mu, sigma^2) under the linear path x_t = (1-t) x0 + t eps, the
marginal at time t is N((1-t) mu, (1-t)^2 sigma^2 + t^2), the PF-ODE flow
preserves the standardized coordinate, and scores/velocities are linear in x.
Used as the independent oracle for the distillation equivalence and DMD
gradient checks.
"""

from __future__ import annotations

import math

import torch


def marginal_stats(mu: float, sigma: float, t: float) -> tuple[float, float]:
    mean = (1.0 - t) * mu
    var = (1.0 - t) ** 2 * sigma ** 2 + t ** 2
    return mean, var


def velocity(x, mu: float, sigma: float, t: float):
    """Marginal velocity field E[eps - x0 | x_t = x]."""
    mean, var = marginal_stats(mu, sigma, t)
    # d/dt of the flow x(t) = mean_t + std_t * z
    dmean = -mu
    dvar = -2.0 * (1.0 - t) * sigma ** 2 + 2.0 * t
    dstd = dvar / (2.0 * math.sqrt(var))
    return dmean + dstd * (x - mean) / math.sqrt(var)


def score(x, mu: float, sigma: float, t: float):
    """Marginal score d/dx log p_t(x) = -(x - (1-t) mu) / var_t."""
    mean, var = marginal_stats(mu, sigma, t)
    return -(x - mean) / var


def flow_map(x, mu: float, sigma: float, t: float, t_target: float = 0.0):
    """Exact PF-ODE transport from time t to t_target (standardized coordinate fixed)."""
    mean_s, var_s = marginal_stats(mu, sigma, t)
    mean_d, var_d = marginal_stats(mu, sigma, t_target)
    return mean_d + math.sqrt(var_d / var_s) * (x - mean_s)


def posterior_mean_x0(x, mu: float, sigma: float, t: float):
    """E[x0 | x_t = x], the ideal x0-predictor."""
    mean, var = marginal_stats(mu, sigma, t)
    return mu + (1.0 - t) * sigma ** 2 / var * (x - mean)


def sample_data(n: int, mu: float, sigma: float, generator=None) -> torch.Tensor:
    return mu + sigma * torch.randn(n, generator=generator)


def kl_grad_wrt_mean_shift(theta: float, mu: float, sigma: float,
                           sigma_gen: float, t: float) -> float:
    """Analytic d/dtheta KL(p_{theta,t} || p_{data,t}) for x~N(theta, sigma_gen^2)."""
    _, var_d = marginal_stats(mu, sigma, t)
    m_g, _ = marginal_stats(theta, sigma_gen, t)
    m_d, _ = marginal_stats(mu, sigma, t)
    return (1.0 - t) * (m_g - m_d) / var_d

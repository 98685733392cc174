"""Hamiltonian Monte Carlo with randomized step size and path length.

A single proposal draws eps ~ U(0, eps_max) and L ~ U{1, ..., l_max},
integrates L leapfrog steps with an identity mass matrix, and applies the
usual Metropolis correction.  Momenta are refreshed at every step, so the
sampler targets the marginal of q directly.  Non-finite Hamiltonians
(overflowing gradients, divergent trajectories) simply reject.

This module is the plain, callable-based implementation used for generic
targets and for testing; the Gibbs blocks in `factor_copula` and
`sv_margin` run the same algorithm through compiled kernels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class HmcSettings:
    """Tuning for one HMC block.

    eps_max : upper end of the uniform step-size distribution.
    l_max   : upper end of the uniform leapfrog path-length distribution.
    """

    eps_max: float
    l_max: int

    def __post_init__(self) -> None:
        if not (self.eps_max > 0.0 and np.isfinite(self.eps_max)):
            raise ValueError(f"eps_max must be positive and finite, got {self.eps_max}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be at least 1, got {self.l_max}")


@dataclass(frozen=True)
class TargetDensity:
    """Differentiable unnormalized log density.

    log_density : maps a position vector to a float.
    gradient    : maps a position vector to the gradient array.
    """

    log_density: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]


def leapfrog(q, p, step_size: float, n_steps: int, gradient) -> tuple[np.ndarray, np.ndarray]:
    """Integrate Hamilton's equations with the leapfrog scheme.

    Uses the standard half-kick / drift / half-kick splitting with unit
    masses.  Non-finite gradients propagate into the returned state and are
    caught by the Metropolis guard in :func:`hmc_step`.
    """
    q = np.array(q, dtype=float, copy=True)
    p = np.array(p, dtype=float, copy=True)
    with np.errstate(over="ignore", invalid="ignore"):
        g = np.asarray(gradient(q))
        for _ in range(n_steps):
            p_half = p + 0.5 * step_size * g
            q = q + step_size * p_half
            g = np.asarray(gradient(q))
            p = p_half + 0.5 * step_size * g
    return q, p


def hmc_step(q, target: TargetDensity, settings: HmcSettings,
             rng: np.random.Generator) -> tuple[np.ndarray, bool]:
    """One HMC transition from position q; returns (next position, accepted).

    The random stream is consumed in a fixed order (step size, path length,
    momentum, acceptance uniform) so that runs are reproducible for a given
    generator state regardless of the accept/reject outcome.
    """
    q = np.asarray(q, dtype=float)
    eps = rng.uniform(0.0, settings.eps_max)
    n_steps = int(rng.integers(1, settings.l_max + 1))
    p = rng.standard_normal(q.shape)
    accept_u = rng.uniform()

    with np.errstate(over="ignore", invalid="ignore"):
        h0 = -float(target.log_density(q)) + 0.5 * float(p @ p)
        q_new, p_new = leapfrog(q, p, eps, n_steps, target.gradient)
        h1 = -float(target.log_density(q_new)) + 0.5 * float(p_new @ p_new)

    if np.isfinite(h1) and np.all(np.isfinite(q_new)) and np.log(accept_u) < h0 - h1:
        return q_new, True
    return q.copy(), False

"""Single factor copula model: likelihood, gradients, HMC-within-Gibbs fit.

Observations are uniform vectors u_t in (0,1)^d that are conditionally
independent given a latent uniform factor v_t; each margin j is tied to the
factor through a bivariate linking copula c_j:

    p(u_t | v_t) = prod_j c_j(u_tj, v_t; theta_j(delta_j)).

Both the Kendall-tau parameters (through delta = logit tau) and the latent
factor path (through w = logit v) carry standard-logistic priors, which is
exactly a uniform prior on the original scale.  The whole block
(delta_1..delta_d, w_1..w_T) is updated jointly by HMC with randomized step
size and path length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import _kernels, bicop
from .bicop import CopulaFamily, PairCopula
from .hmc import HmcSettings

#: Block tuning used throughout: the dependence block mixes well with a
#: relatively long randomized trajectory.
DEFAULT_SETTINGS = HmcSettings(eps_max=0.2, l_max=40)


@dataclass
class CopulaData:
    """Copula-scale observations, shape (T, d), clamped away from 0 and 1."""

    u: np.ndarray

    def __post_init__(self) -> None:
        u = np.asarray(self.u, dtype=float)
        if u.ndim != 2:
            raise ValueError(f"copula data must be a (T, d) matrix, got ndim={u.ndim}")
        if u.shape[0] < 1 or u.shape[1] < 1:
            raise ValueError(f"copula data must be non-empty, got shape {u.shape}")
        if not np.all(np.isfinite(u)):
            raise ValueError("copula data contains non-finite values")
        if np.any(u < 0.0) or np.any(u > 1.0):
            raise ValueError("copula data must lie in the closed unit interval")
        self.u = bicop.clamp_unit(u)

    @property
    def n_obs(self) -> int:
        return self.u.shape[0]

    @property
    def n_margins(self) -> int:
        return self.u.shape[1]


@dataclass
class DependenceState:
    """Position of the dependence block: delta (d,) and w (T,)."""

    delta: np.ndarray
    w: np.ndarray

    def __post_init__(self) -> None:
        self.delta = np.atleast_1d(np.asarray(self.delta, dtype=float))
        self.w = np.atleast_1d(np.asarray(self.w, dtype=float))

    @property
    def tau(self) -> np.ndarray:
        return special.expit(self.delta)

    @property
    def v(self) -> np.ndarray:
        return special.expit(self.w)


@dataclass
class DependenceChain:
    """Post-burn-in draws from :func:`fit`."""

    delta: np.ndarray           # (R, d)
    w: np.ndarray               # (R, T)
    families: tuple[CopulaFamily, ...]
    accept_rate: float = 0.0

    def __len__(self) -> int:
        return self.delta.shape[0]

    @property
    def tau(self) -> np.ndarray:
        return special.expit(self.delta)

    @property
    def v(self) -> np.ndarray:
        return special.expit(self.w)


def log_prior_u(x):
    """Standard logistic log density: the uniform prior after a logit map."""
    x = np.asarray(x, dtype=float)
    out = -x - 2.0 * np.logaddexp(0.0, -x)
    return float(out) if out.ndim == 0 else out


def dlog_prior_u(x):
    """Derivative of :func:`log_prior_u`: 2 / (1 + e^x) - 1."""
    x = np.asarray(x, dtype=float)
    out = 2.0 * special.expit(-x) - 1.0
    return float(out) if out.ndim == 0 else out


def prepare_scores(u: np.ndarray, families: Sequence[CopulaFamily]) -> np.ndarray:
    """Per-column data transform feeding the compiled kernels.

    Gaussian columns carry normal scores, t4 columns t(4) scores and the
    Archimedean columns ln u (ln(1-u) for survival rotations).
    """
    u = bicop.clamp_unit(np.asarray(u, dtype=float))
    xu = np.empty_like(u)
    for j, fam in enumerate(families):
        base = fam.base
        col = 1.0 - u[:, j] if fam.is_survival else u[:, j]
        if base is CopulaFamily.GAUSSIAN:
            xu[:, j] = special.ndtri(col)
        elif base is CopulaFamily.STUDENT_T4:
            xu[:, j] = bicop.t4_ppf(col)
        else:
            xu[:, j] = np.log(col)
    return xu


def _family_codes(families: Sequence[CopulaFamily]) -> np.ndarray:
    return np.array([f.code for f in families], dtype=np.int64)


def log_posterior(data: CopulaData, state: DependenceState,
                  families: Sequence[CopulaFamily]) -> float:
    """Joint log density of data, latent factor path and tau parameters."""
    _check_shapes(data, state, families)
    xu = prepare_scores(data.u, families)
    return float(_kernels.dep_logpost(state.delta, state.w,
                                      _family_codes(families), xu))


def grad_log_posterior(data: CopulaData, state: DependenceState,
                       families: Sequence[CopulaFamily]) -> np.ndarray:
    """Gradient of :func:`log_posterior` in (delta_1..delta_d, w_1..w_T)."""
    _check_shapes(data, state, families)
    xu = prepare_scores(data.u, families)
    gd, gw = _kernels.dep_grad(state.delta, state.w, _family_codes(families), xu)
    return np.concatenate([gd, gw])


def _check_shapes(data: CopulaData, state: DependenceState,
                  families: Sequence[CopulaFamily]) -> None:
    if state.delta.shape[0] != data.n_margins or len(families) != data.n_margins:
        raise ValueError("margin count mismatch between data, state and families")
    if state.w.shape[0] != data.n_obs:
        raise ValueError("latent path length does not match the data")


def update_dependence(state: DependenceState, codes: np.ndarray, xu: np.ndarray,
                      settings: HmcSettings, rng: np.random.Generator,
                      update_delta: bool = True,
                      lp_current: float | None = None):
    """One HMC transition of the dependence block.

    Returns (state, accepted, log posterior of the returned state).  The
    caller may pass the cached current log posterior to save one kernel
    evaluation per sweep.
    """
    eps = rng.uniform(0.0, settings.eps_max)
    n_steps = int(rng.integers(1, settings.l_max + 1))
    pd = rng.standard_normal(state.delta.shape[0])
    pw = rng.standard_normal(state.w.shape[0])
    accept_u = rng.uniform()
    if not update_delta:
        pd[:] = 0.0
    if lp_current is None:
        lp_current = float(_kernels.dep_logpost(state.delta, state.w, codes, xu))
    h0 = -lp_current + 0.5 * float(pd @ pd + pw @ pw)
    # Divergent trajectories can reach parameter values where the kernels
    # raise (compiled with the python error model) instead of going
    # non-finite; both cases mean rejection.
    try:
        delta1, w1, pd1, pw1, ok = _kernels.dep_trajectory(
            state.delta, state.w, pd, pw, eps, n_steps, codes, xu, update_delta)
        if not ok:
            return state, False, lp_current
        lp1 = float(_kernels.dep_logpost(delta1, w1, codes, xu))
    except (ZeroDivisionError, ValueError, OverflowError):
        return state, False, lp_current
    # divergent momenta may square to inf, which simply means rejection
    with np.errstate(over="ignore"):
        h1 = -lp1 + 0.5 * float(pd1 @ pd1 + pw1 @ pw1)
    if np.isfinite(h1) and np.log(accept_u) < h0 - h1:
        return DependenceState(delta1, w1), True, lp1
    return state, False, lp_current


def fit(data: CopulaData, families: Sequence[CopulaFamily],
        n_iter: int = 11000, n_burn: int = 1000,
        settings: HmcSettings = DEFAULT_SETTINGS,
        rng: np.random.Generator | None = None) -> DependenceChain:
    """Posterior sampling for fixed linking families.

    Runs n_iter HMC sweeps of the joint (delta, w) block from the neutral
    initialization delta = 0, w = 0 (tau = v = 1/2) and returns the
    post-burn-in draws.
    """
    if rng is None:
        rng = np.random.default_rng()
    if not 0 <= n_burn < n_iter:
        raise ValueError("need 0 <= n_burn < n_iter")
    families = tuple(families)
    _ = [bicop.parse_family(f.value) for f in families]  # validates membership
    codes = _family_codes(families)
    xu = prepare_scores(data.u, families)
    state = DependenceState(np.zeros(data.n_margins), np.zeros(data.n_obs))
    keep = n_iter - n_burn
    delta_draws = np.empty((keep, data.n_margins))
    w_draws = np.empty((keep, data.n_obs))
    accepted = 0
    lp = None
    for it in range(n_iter):
        state, ok, lp = update_dependence(state, codes, xu, settings, rng,
                                          update_delta=True, lp_current=lp)
        accepted += ok
        if it >= n_burn:
            delta_draws[it - n_burn] = state.delta
            w_draws[it - n_burn] = state.w
    return DependenceChain(delta=delta_draws, w=w_draws, families=families,
                           accept_rate=accepted / n_iter)


def simulate(families: Sequence[CopulaFamily], taus: Sequence[float], n_obs: int,
             rng: np.random.Generator):
    """Draw (U, v) from the factor copula model by conditional inversion.

    The factor path v is drawn first, then each margin column is filled via
    the inverse h-function of its linking copula.
    """
    families = tuple(families)
    taus = np.asarray(taus, dtype=float)
    if len(families) != taus.shape[0]:
        raise ValueError("families and taus must have equal length")
    v = rng.uniform(size=n_obs)
    p = rng.uniform(size=(n_obs, len(families)))
    u = np.empty_like(p)
    for j, fam in enumerate(families):
        pc = PairCopula(fam, bicop.tau_to_theta(fam, taus[j]))
        u[:, j] = bicop.hinv(pc, p[:, j], v)
    return u, v

"""Stochastic volatility margins with a copula tilt toward a latent factor.

Each margin observes returns z_t = exp(s_t / 2) eps_t with a stationary
AR(1) log-variance path

    s_t = mu + phi (s_{t-1} - mu) + sigma eta_t,    s_0 ~ N(mu, sigma^2 / (1 - phi^2)).

The margin block is sampled in an unconstrained, ancillary parameterization:
xi = artanh(phi), psi = ln sigma, and the path is driven by a priori iid
standard normal innovations s~ = (s~_0, ..., s~_T).  Conditionally on the
factor path v, the likelihood carries one linking-copula factor per
observation, evaluated at the probability integral transform
u_t = Phi(z_t exp(-s_t / 2)).

Priors: mu ~ N(0, 100), (phi + 1)/2 ~ Beta(5, 1.5), sigma^2 ~ chi^2(1),
all expressed on the transformed scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels, bicop
from .bicop import PairCopula
from .hmc import HmcSettings

#: Margin-block tuning: shorter trajectories than the dependence block.
DEFAULT_SETTINGS = HmcSettings(eps_max=0.1, l_max=30)

_PHI_A = 5.0
_PHI_B = 1.5
_XI_LNCONST = -(math.lgamma(_PHI_A) + math.lgamma(_PHI_B)
                - math.lgamma(_PHI_A + _PHI_B)) - math.log(2.0)


@dataclass
class MarginSeries:
    """One margin's return series."""

    z: np.ndarray

    def __post_init__(self) -> None:
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.ndim != 1 or z.size < 1:
            raise ValueError("margin series must be a non-empty vector")
        if not np.all(np.isfinite(z)):
            raise ValueError("margin series contains non-finite values")
        self.z = z

    @property
    def n_obs(self) -> int:
        return self.z.size


@dataclass
class MarginState:
    """Unconstrained position of one margin block."""

    mu: float
    xi: float
    psi: float
    s_tilde: np.ndarray

    def __post_init__(self) -> None:
        self.s_tilde = np.atleast_1d(np.asarray(self.s_tilde, dtype=float))

    @property
    def phi(self) -> float:
        return math.tanh(self.xi)

    @property
    def sigma(self) -> float:
        return math.exp(self.psi)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.mu, self.xi, self.psi], self.s_tilde])

    @classmethod
    def from_vector(cls, q: np.ndarray) -> "MarginState":
        q = np.asarray(q, dtype=float)
        return cls(mu=float(q[0]), xi=float(q[1]), psi=float(q[2]), s_tilde=q[3:].copy())


def initial_state(series) -> MarginState:
    """Neutral starting point: mu from the log squared returns, phi = 0.9,
    sigma = 0.2 and a flat innovation path."""
    z = np.maximum(np.abs(_series_z(series)), 1e-8)
    return MarginState(mu=float(np.mean(np.log(z * z))),
                       xi=math.atanh(0.9),
                       psi=math.log(0.2),
                       s_tilde=np.zeros(z.size + 1))


# ---------------------------------------------------------------------------
# path transforms
# ---------------------------------------------------------------------------

def ancillary_to_natural(state: MarginState) -> np.ndarray:
    """Map the iid innovations s~ to the log-variance path s (length T+1)."""
    return _kernels.margin_path(state.mu, state.phi, state.sigma, state.s_tilde)


def natural_to_ancillary(s: np.ndarray, mu: float, phi: float, sigma: float) -> np.ndarray:
    """Inverse of :func:`ancillary_to_natural` for given static parameters."""
    s = np.asarray(s, dtype=float)
    st = np.empty_like(s)
    st[0] = (s[0] - mu) * math.sqrt((1.0 - phi) * (1.0 + phi)) / sigma
    st[1:] = (s[1:] - mu - phi * (s[:-1] - mu)) / sigma
    return st


# ---------------------------------------------------------------------------
# priors on the transformed statics
# ---------------------------------------------------------------------------

def log_prior_mu(x):
    x = np.asarray(x, dtype=float)
    out = -0.5 * x * x / 100.0 - 0.5 * math.log(200.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def log_prior_xi(x):
    """Beta(5, 1.5) prior on (phi+1)/2 after the artanh transform."""
    x = np.asarray(x, dtype=float)
    # ln((1+phi)/2) = -softplus(-2x), ln((1-phi)/2) = -2x - softplus(-2x)
    sp = np.logaddexp(0.0, -2.0 * x)
    out = (_XI_LNCONST - (_PHI_A - 1.0) * sp
           + (_PHI_B - 1.0) * (-2.0 * x - sp)
           + 2.0 * math.log(2.0) - 2.0 * x - 2.0 * sp)
    return float(out) if out.ndim == 0 else out


def log_prior_psi(x):
    """chi-squared(1) prior on sigma^2 after the log transform."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * math.log(2.0 / math.pi) + x - 0.5 * np.exp(2.0 * x)
    return float(out) if out.ndim == 0 else out


def dlog_prior_psi(x):
    """d/dpsi of :func:`log_prior_psi`: 1 - e^{2 psi}."""
    x = np.asarray(x, dtype=float)
    out = 1.0 - np.exp(2.0 * x)
    return float(out) if out.ndim == 0 else out


def log_prior_margin(state: MarginState) -> float:
    """All margin priors: statics plus the iid innovation path."""
    st = state.s_tilde
    return (float(log_prior_mu(state.mu)) + float(log_prior_xi(state.xi))
            + float(log_prior_psi(state.psi))
            - 0.5 * float(st @ st) - st.size * _kernels.LN_SQRT_2PI)


# ---------------------------------------------------------------------------
# conditional posterior of one margin given the factor path
# ---------------------------------------------------------------------------

def factor_scores(v: np.ndarray):
    """Precomputed per-sweep transforms of the factor path used by the kernels:
    normal scores, t(4) scores, ln v and ln(1 - v)."""
    v = bicop.clamp_unit(np.asarray(v, dtype=float))
    return (special.ndtri(v), bicop.t4_ppf(v), np.log(v), np.log1p(-v))


def _series_z(series) -> np.ndarray:
    if isinstance(series, MarginSeries):
        return series.z
    return MarginSeries(np.asarray(series)).z


def _scores_tuple(v):
    if isinstance(v, tuple):
        return v
    return factor_scores(v)


def log_conditional(state: MarginState, series, v, link: PairCopula) -> float:
    """Log posterior kernel of one margin block given the factor path v."""
    z = _series_z(series)
    vy, vty, lnv, ln1mv = _scores_tuple(v)
    if z.size != lnv.size or state.s_tilde.size != z.size + 1:
        raise ValueError("series, factor path and state sizes are inconsistent")
    return float(_kernels.margin_logpost(state.as_vector(), z, vy, vty, lnv, ln1mv,
                                         link.family.code, link.theta))


def grad_log_conditional(state: MarginState, series, v, link: PairCopula) -> np.ndarray:
    """Gradient of :func:`log_conditional` in (mu, xi, psi, s~_0..s~_T)."""
    z = _series_z(series)
    vy, vty, lnv, ln1mv = _scores_tuple(v)
    if z.size != lnv.size or state.s_tilde.size != z.size + 1:
        raise ValueError("series, factor path and state sizes are inconsistent")
    return _kernels.margin_grad(state.as_vector(), z, vy, vty, lnv, ln1mv,
                                link.family.code, link.theta)


def update_margin(state: MarginState, series, v, link: PairCopula,
                  settings: HmcSettings = DEFAULT_SETTINGS,
                  rng: np.random.Generator | None = None,
                  update_statics: bool = True,
                  lp_current: float | None = None):
    """One HMC transition of the margin block.

    When ``update_statics`` is false the static parameters (mu, xi, psi)
    receive neither momentum nor position updates; only the innovation path
    moves.  Returns (state, accepted, log posterior of returned state).
    """
    if rng is None:
        rng = np.random.default_rng()
    z = _series_z(series)
    scores = _scores_tuple(v)
    q0 = state.as_vector()
    eps = rng.uniform(0.0, settings.eps_max)
    n_steps = int(rng.integers(1, settings.l_max + 1))
    p = rng.standard_normal(q0.size)
    accept_u = rng.uniform()
    if not update_statics:
        p[:3] = 0.0
    code, theta = link.family.code, link.theta
    if lp_current is None:
        lp_current = float(_kernels.margin_logpost(q0, z, *scores, code, theta))
    h0 = -lp_current + 0.5 * float(p @ p)
    # Divergent trajectories can push the statics far enough that the kernels
    # raise (the compiled code uses the python error model) instead of
    # returning non-finite values; either way the proposal is rejected.
    try:
        q1, p1, ok = _kernels.margin_trajectory(q0, p, eps, n_steps, z,
                                                *scores, code, theta,
                                                update_statics)
        if not ok:
            return state, False, lp_current
        lp1 = float(_kernels.margin_logpost(q1, z, *scores, code, theta))
    except (ZeroDivisionError, ValueError, OverflowError):
        return state, False, lp_current
    # divergent momenta may square to inf, which simply means rejection
    with np.errstate(over="ignore"):
        h1 = -lp1 + 0.5 * float(p1 @ p1)
    if np.isfinite(h1) and np.log(accept_u) < h0 - h1:
        return MarginState.from_vector(q1), True, lp1
    return state, False, lp_current

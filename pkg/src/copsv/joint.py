"""Block Gibbs sampler for the joint factor copula stochastic volatility model.

One sweep updates, in order: each margin's SV block by HMC given the factor
path, the dependence block (Kendall-tau parameters and factor path) by HMC
given the margins, and finally each margin's linking-copula family indicator
by an exact draw from its discrete full conditional.  The tau-scale parameter
delta_j is shared across candidate families, so switching families never
needs a dimension change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from . import _kernels, bicop
from . import factor_copula as fc
from . import sv_margin as svm
from .bicop import CopulaFamily, PairCopula
from .factor_copula import DependenceState
from .hmc import HmcSettings
from .sv_margin import MarginState

#: PIT clamp bound Phi^{-1}(1 - 1e-12), identical to the compiled kernels.
_XLIM = 7.034484239266003

DEFAULT_FAMILIES = (CopulaFamily.GAUSSIAN, CopulaFamily.STUDENT_T4,
                    CopulaFamily.CLAYTON, CopulaFamily.GUMBEL)


@dataclass(frozen=True)
class FamilySet:
    """Ordered candidate set of linking-copula families."""

    members: tuple[CopulaFamily, ...] = DEFAULT_FAMILIES

    def __post_init__(self) -> None:
        members = tuple(bicop.parse_family(m) if isinstance(m, str) else m
                        for m in self.members)
        if len(members) == 0:
            raise ValueError("family set must be non-empty")
        if len(set(members)) != len(members):
            raise ValueError("family set contains duplicates")
        object.__setattr__(self, "members", members)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, family) -> bool:
        return family in self.members


@dataclass(frozen=True)
class FitConfig:
    """Sweep counts, candidate families and block tunings for one fit."""

    n_iter: int = 2500
    n_burn: int = 500
    family_set: FamilySet = field(default_factory=FamilySet)
    dependence_settings: HmcSettings = fc.DEFAULT_SETTINGS
    margin_settings: HmcSettings = svm.DEFAULT_SETTINGS
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.n_burn < self.n_iter:
            raise ValueError("need 0 <= n_burn < n_iter")


@dataclass(frozen=True)
class JointState:
    """Full sampler position: d margin blocks, dependence block, families."""

    margins: tuple[MarginState, ...]
    dependence: DependenceState
    families: tuple[CopulaFamily, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "margins", tuple(self.margins))
        object.__setattr__(self, "families", tuple(self.families))
        d = len(self.margins)
        if len(self.families) != d or self.dependence.delta.shape[0] != d:
            raise ValueError("margin, family and delta counts must agree")
        T = self.dependence.w.shape[0]
        for m in self.margins:
            if m.s_tilde.shape[0] != T + 1:
                raise ValueError("margin path length does not match the factor path")

    @property
    def n_margins(self) -> int:
        return len(self.margins)

    @property
    def n_obs(self) -> int:
        return self.dependence.w.shape[0]


@dataclass(frozen=True)
class JointDraw:
    """One recorded posterior draw."""

    mu: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    delta: np.ndarray
    families: tuple[CopulaFamily, ...]
    w: np.ndarray
    s_last: np.ndarray

    @property
    def tau(self) -> np.ndarray:
        return special.expit(self.delta)

    @property
    def v(self) -> np.ndarray:
        return special.expit(self.w)


@dataclass
class JointChain:
    """Post-burn-in draws from :func:`fit_joint`, columnar layout."""

    mu: np.ndarray                      # (R, d)
    phi: np.ndarray                     # (R, d)
    sigma: np.ndarray                   # (R, d)
    delta: np.ndarray                   # (R, d)
    families: np.ndarray                # (R, d) int family codes
    w: np.ndarray                       # (R, T)
    s_last: np.ndarray                  # (R, d) final log variance per margin
    family_set: FamilySet
    accept_margin: np.ndarray           # (d,) acceptance rates
    accept_dependence: float
    final_state: JointState

    def __len__(self) -> int:
        return self.mu.shape[0]

    def __getitem__(self, r: int) -> JointDraw:
        return JointDraw(mu=self.mu[r], phi=self.phi[r], sigma=self.sigma[r],
                         delta=self.delta[r],
                         families=tuple(_FAMILY_BY_CODE[c] for c in self.families[r]),
                         w=self.w[r], s_last=self.s_last[r])

    @property
    def tau(self) -> np.ndarray:
        return special.expit(self.delta)

    @property
    def v(self) -> np.ndarray:
        return special.expit(self.w)

    def family_mode(self, j: int) -> CopulaFamily:
        """Most frequently sampled family for margin j."""
        codes, counts = np.unique(self.families[:, j], return_counts=True)
        return _FAMILY_BY_CODE[int(codes[np.argmax(counts)])]


_FAMILY_BY_CODE = {f.code: f for f in CopulaFamily}


# ---------------------------------------------------------------------------
# per-margin score transforms of the PIT series
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _UScores:
    """Family-specific transforms of u_t = Phi(z_t e^{-s_t/2})."""

    x: np.ndarray       # clamped normal score
    tx: np.ndarray      # t(4) score
    lnu: np.ndarray     # ln u
    ln1mu: np.ndarray   # ln(1 - u)

    def column(self, code: int) -> np.ndarray:
        if code == bicop.CopulaFamily.GAUSSIAN.code:
            return self.x
        if code == bicop.CopulaFamily.STUDENT_T4.code:
            return self.tx
        if code in (bicop.CopulaFamily.CLAYTON.code, bicop.CopulaFamily.GUMBEL.code):
            return self.lnu
        return self.ln1mu


def _margin_u_scores(z: np.ndarray, s: np.ndarray) -> _UScores:
    """All score transforms for one margin, tails computed on the accurate
    side exactly as in the compiled likelihood kernels."""
    x = np.clip(z * np.exp(-0.5 * s[1:]), -_XLIM, _XLIM)
    pp = np.maximum(special.ndtr(x), _kernels.UNIT_EPS)
    pn = np.maximum(special.ndtr(-x), _kernels.UNIT_EPS)
    lnu = np.where(pp <= 0.5, np.log(pp), np.log1p(-pn))
    ln1mu = np.where(pn <= 0.5, np.log(pn), np.log1p(-pp))
    q = bicop.t4_ppf(np.minimum(pp, pn))
    tx = np.where(pp <= pn, q, -q)
    return _UScores(x=x, tx=tx, lnu=lnu, ln1mu=ln1mu)


# ---------------------------------------------------------------------------
# family indicators
# ---------------------------------------------------------------------------

def family_posterior(j: int, state: JointState, data: np.ndarray,
                     family_set: FamilySet) -> np.ndarray:
    """Full-conditional probabilities of margin j's family indicator.

    Each candidate shares the margin's current delta_j on the tau scale and
    is weighted by its product of pair densities along the factor path.
    """
    z = np.asarray(data, dtype=float)
    s = svm.ancillary_to_natural(state.margins[j])
    sc = _margin_u_scores(z[:, j], s)
    delta_j = float(state.dependence.delta[j])
    w = state.dependence.w
    lls = np.array([
        _kernels.family_loglik(f.code, bicop.theta_from_delta(f, delta_j),
                               sc.column(f.code), w)
        for f in family_set.members])
    probs = np.exp(lls - lls.max())
    return probs / probs.sum()


def sample_family(j: int, state: JointState, data: np.ndarray,
                  family_set: FamilySet, rng: np.random.Generator) -> CopulaFamily:
    """Exact draw of margin j's family indicator from its full conditional."""
    probs = family_posterior(j, state, data, family_set)
    k = int(np.searchsorted(np.cumsum(probs), rng.uniform(), side="right"))
    return family_set.members[min(k, len(family_set) - 1)]


# ---------------------------------------------------------------------------
# sweeps and the full fit
# ---------------------------------------------------------------------------

def _sweep(state: JointState, z: np.ndarray, config: FitConfig,
           rng: np.random.Generator):
    """One Gibbs sweep; returns (state, margin accept flags, dependence flag)."""
    d = state.n_margins
    v = state.dependence.v
    scores = svm.factor_scores(v)
    margins = []
    acc_m = np.zeros(d, dtype=bool)
    for j in range(d):
        fam = state.families[j]
        link = PairCopula(fam, bicop.theta_from_delta(fam, float(state.dependence.delta[j])))
        mj, acc, _ = svm.update_margin(state.margins[j], z[:, j], scores, link,
                                       config.margin_settings, rng)
        margins.append(mj)
        acc_m[j] = acc

    u_scores = [_margin_u_scores(z[:, j], svm.ancillary_to_natural(margins[j]))
                for j in range(d)]
    codes = np.array([f.code for f in state.families], dtype=np.int64)
    xu = np.column_stack([u_scores[j].column(codes[j]) for j in range(d)])
    dep, acc_d, _ = fc.update_dependence(state.dependence, codes, xu,
                                         config.dependence_settings, rng)

    families = []
    for j in range(d):
        delta_j = float(dep.delta[j])
        lls = np.array([
            _kernels.family_loglik(f.code, bicop.theta_from_delta(f, delta_j),
                                   u_scores[j].column(f.code), dep.w)
            for f in config.family_set.members])
        probs = np.exp(lls - lls.max())
        probs /= probs.sum()
        k = int(np.searchsorted(np.cumsum(probs), rng.uniform(), side="right"))
        families.append(config.family_set.members[min(k, len(config.family_set) - 1)])
    return JointState(tuple(margins), dep, tuple(families)), acc_m, acc_d


def gibbs_sweep(state: JointState, data, config: FitConfig,
                rng: np.random.Generator) -> JointState:
    """One full sweep: d margin updates, one dependence update, d family draws."""
    z = _validate_data(data)
    new_state, _, _ = _sweep(state, z, config, rng)
    return new_state


def initial_joint_state(data, family_set: FamilySet) -> JointState:
    """Crude but in-domain starting point for :func:`fit_joint`."""
    z = _validate_data(data)
    T, d = z.shape
    margins = tuple(svm.initial_state(z[:, j]) for j in range(d))
    dep = DependenceState(np.zeros(d), np.zeros(T))
    return JointState(margins, dep, (family_set.members[0],) * d)


def _validate_data(data) -> np.ndarray:
    z = np.asarray(data, dtype=float)
    if z.ndim != 2 or z.shape[0] < 2 or z.shape[1] < 2:
        raise ValueError(f"need a (T, d) return matrix with T, d >= 2, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ValueError("return matrix contains non-finite values")
    return z


def fit_joint(data, config: FitConfig = FitConfig()) -> JointChain:
    """Run the block Gibbs sampler and return post-burn-in draws.

    Deterministic for a fixed (data, config): all randomness flows from a
    generator seeded with config.seed.
    """
    z = _validate_data(data)
    T, d = z.shape
    rng = np.random.default_rng(config.seed)
    state = initial_joint_state(z, config.family_set)
    keep = config.n_iter - config.n_burn
    out = JointChain(
        mu=np.empty((keep, d)), phi=np.empty((keep, d)), sigma=np.empty((keep, d)),
        delta=np.empty((keep, d)), families=np.empty((keep, d), dtype=np.int8),
        w=np.empty((keep, T)), s_last=np.empty((keep, d)),
        family_set=config.family_set,
        accept_margin=np.zeros(d), accept_dependence=0.0, final_state=state)
    acc_m = np.zeros(d)
    acc_d = 0
    for it in range(config.n_iter):
        state, am, ad = _sweep(state, z, config, rng)
        acc_m += am
        acc_d += ad
        r = it - config.n_burn
        if r >= 0:
            for j, m in enumerate(state.margins):
                out.mu[r, j] = m.mu
                out.phi[r, j] = m.phi
                out.sigma[r, j] = m.sigma
                out.s_last[r, j] = svm.ancillary_to_natural(m)[-1]
            out.delta[r] = state.dependence.delta
            out.w[r] = state.dependence.w
            out.families[r] = [f.code for f in state.families]
    out.accept_margin = acc_m / config.n_iter
    out.accept_dependence = acc_d / config.n_iter
    out.final_state = state
    return out


def joint_log_posterior(state: JointState, data) -> float:
    """Log posterior kernel of the full model at one state.

    The margin blocks already carry every pair-copula factor once, so the
    dependence block only contributes its logistic priors here.
    """
    z = _validate_data(data)
    scores = svm.factor_scores(state.dependence.v)
    total = 0.0
    for j, (m, fam) in enumerate(zip(state.margins, state.families)):
        theta = bicop.theta_from_delta(fam, float(state.dependence.delta[j]))
        total += float(_kernels.margin_logpost(m.as_vector(), z[:, j], *scores,
                                               fam.code, theta))
    total += float(np.sum(fc.log_prior_u(state.dependence.delta)))
    total += float(np.sum(fc.log_prior_u(state.dependence.w)))
    return total


# ---------------------------------------------------------------------------
# forward simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """True data-generating parameters for forward simulation."""

    mu: np.ndarray
    phi: np.ndarray
    sigma: np.ndarray
    tau: np.ndarray
    families: tuple[CopulaFamily, ...]

    def __post_init__(self) -> None:
        for name in ("mu", "phi", "sigma", "tau"):
            object.__setattr__(self, name,
                               np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        object.__setattr__(self, "families", tuple(
            bicop.parse_family(f) if isinstance(f, str) else f for f in self.families))
        d = self.mu.shape[0]
        if not all(a.shape == (d,) for a in (self.phi, self.sigma, self.tau)):
            raise ValueError("parameter vectors must have equal length")
        if len(self.families) != d:
            raise ValueError("families must match the parameter length")
        if np.any(np.abs(self.phi) >= 1.0):
            raise ValueError("persistence must satisfy |phi| < 1")
        if np.any(self.sigma < 0.0):
            raise ValueError("volatility-of-volatility must be nonnegative")
        if np.any((self.tau <= 0.0) | (self.tau >= 1.0)):
            raise ValueError("tau must lie in (0, 1)")

    @property
    def n_margins(self) -> int:
        return self.mu.shape[0]


@dataclass(frozen=True)
class JointLatents:
    """True latent quantities returned alongside simulated data."""

    v: np.ndarray       # (T,) factor path
    s: np.ndarray       # (T+1, d) log-variance paths including the initial state
    u: np.ndarray       # (T, d) copula-scale observations


def simulate_joint(params: ModelParams, n_obs: int,
                   rng: np.random.Generator):
    """Forward-simulate returns: factor, conditional uniforms, SV paths.

    Per time step the factor v_t is uniform; each margin draws its uniform from
    the linking copula's conditional via the inverse h-function, maps it to a
    normal innovation, and scales by the AR(1) log-variance path started from
    its stationary law.  Returns (Z, latents).
    """
    if n_obs < 1:
        raise ValueError("need at least one observation")
    d = params.n_margins
    v = rng.uniform(size=n_obs)
    p = rng.uniform(size=(n_obs, d))
    eta0 = rng.standard_normal(d)
    eta = rng.standard_normal((n_obs, d))
    u = np.empty((n_obs, d))
    s = np.empty((n_obs + 1, d))
    for j in range(d):
        fam = params.families[j]
        pc = PairCopula(fam, bicop.tau_to_theta(fam, float(params.tau[j])))
        u[:, j] = bicop.hinv(pc, p[:, j], v)
        mu, phi, sig = float(params.mu[j]), float(params.phi[j]), float(params.sigma[j])
        s[0, j] = mu + sig * eta0[j] / math.sqrt((1.0 - phi) * (1.0 + phi))
        for t in range(n_obs):
            s[t + 1, j] = mu + phi * (s[t, j] - mu) + sig * eta[t, j]
    eps = special.ndtri(bicop.clamp_unit(u))
    z = np.exp(0.5 * s[1:]) * eps
    return z, JointLatents(v=v, s=s, u=u)

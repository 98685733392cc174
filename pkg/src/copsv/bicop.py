"""Bivariate linking copulas: densities, gradients, h-functions and inverses.

Four base families are supported -- Gaussian, Student-t with four degrees of
freedom, Clayton and Gumbel -- together with the survival (180-degree rotated)
versions of the two Archimedean families.  Every family is parameterized
through Kendall's tau, which keeps dependence restricted to positive values
and gives all families a common scale for prior specification and for
model-selection moves that switch family while keeping tau fixed.

The implementations here are vectorized numpy/scipy code meant to be read
and tested; the samplers use compiled scalar kernels (`copsv._kernels`)
that are checked against this module in the test suite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels

#: Hard floor/ceiling applied to all unit-interval arguments before any
#: density or h-function evaluation.
UNIT_EPS = 1e-12

#: Normal quantile of 1 - UNIT_EPS; scores are capped at this magnitude.
_XLIM = -special.ndtri(UNIT_EPS)

_HALF_PI = 0.5 * math.pi

# Student-t(4) copula constant ln G(3) + ln G(2) - 2 ln G(2.5)
_T4_LNK = math.lgamma(3.0) + math.lgamma(2.0) - 2.0 * math.lgamma(2.5)


class CopulaFamily(enum.Enum):
    """Enumeration of the supported linking-copula families."""

    GAUSSIAN = "gaussian"
    STUDENT_T4 = "t4"
    CLAYTON = "clayton"
    GUMBEL = "gumbel"
    SURVIVAL_CLAYTON = "clayton_survival"
    SURVIVAL_GUMBEL = "gumbel_survival"

    @property
    def code(self) -> int:
        """Integer code used by the compiled kernels."""
        return _CODES[self]

    @property
    def is_survival(self) -> bool:
        return self in (CopulaFamily.SURVIVAL_CLAYTON, CopulaFamily.SURVIVAL_GUMBEL)

    @property
    def base(self) -> "CopulaFamily":
        """Underlying family with the survival rotation stripped."""
        if self is CopulaFamily.SURVIVAL_CLAYTON:
            return CopulaFamily.CLAYTON
        if self is CopulaFamily.SURVIVAL_GUMBEL:
            return CopulaFamily.GUMBEL
        return self

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return self.value


_CODES = {
    CopulaFamily.GAUSSIAN: _kernels.GAUSSIAN,
    CopulaFamily.STUDENT_T4: _kernels.STUDENT_T4,
    CopulaFamily.CLAYTON: _kernels.CLAYTON,
    CopulaFamily.GUMBEL: _kernels.GUMBEL,
    CopulaFamily.SURVIVAL_CLAYTON: _kernels.SURV_CLAYTON,
    CopulaFamily.SURVIVAL_GUMBEL: _kernels.SURV_GUMBEL,
}

_ELLIPTICAL = (CopulaFamily.GAUSSIAN, CopulaFamily.STUDENT_T4)


def parse_family(name: str) -> CopulaFamily:
    """Map a configuration string to a :class:`CopulaFamily` member.

    Accepts the enum values ("gaussian", "t4", ...) plus a few common
    aliases such as "normal", "sclayton" and "sgumbel".
    """
    key = name.strip().lower().replace("-", "_")
    aliases = {
        "normal": "gaussian",
        "gauss": "gaussian",
        "student_t4": "t4",
        "studentt4": "t4",
        "t": "t4",
        "sclayton": "clayton_survival",
        "survival_clayton": "clayton_survival",
        "sgumbel": "gumbel_survival",
        "survival_gumbel": "gumbel_survival",
    }
    key = aliases.get(key, key)
    for fam in CopulaFamily:
        if fam.value == key:
            return fam
    raise ValueError(f"unknown copula family: {name!r}")


@dataclass(frozen=True)
class PairCopula:
    """A linking copula family together with its dependence parameter."""

    family: CopulaFamily
    theta: float

    def __post_init__(self) -> None:
        validate_theta(self.family, self.theta)

    @property
    def tau(self) -> float:
        return theta_to_tau(self.family, self.theta)


def clamp_unit(u):
    """Clip unit-interval arguments into [UNIT_EPS, 1 - UNIT_EPS]."""
    return np.clip(u, UNIT_EPS, 1.0 - UNIT_EPS)


# ---------------------------------------------------------------------------
# parameter maps
# ---------------------------------------------------------------------------

def theta_bounds(family: CopulaFamily) -> tuple[float, float]:
    """Admissible open parameter range (lower bound inclusive for Gumbel).

    Gumbel theta = 1 is the independence copula and is accepted by the
    evaluation routines even though the tau parameterization never
    produces it exactly.
    """
    base = family.base
    if base in _ELLIPTICAL:
        return (0.0, 1.0)
    if base is CopulaFamily.CLAYTON:
        return (0.0, math.inf)
    return (1.0, math.inf)


def validate_theta(family: CopulaFamily, theta: float) -> None:
    """Raise ValueError when theta lies outside the family's domain."""
    if not np.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta}")
    lo, hi = theta_bounds(family)
    if family.base is CopulaFamily.GUMBEL:
        ok = lo <= theta < hi
    else:
        ok = lo < theta < hi
    if not ok:
        raise ValueError(f"theta={theta} outside the domain of {family.value}")


def tau_to_theta(family: CopulaFamily, tau: float) -> float:
    """Map Kendall's tau in (0, 1) to the family's natural parameter."""
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly inside (0, 1), got {tau}")
    base = family.base
    if base in _ELLIPTICAL:
        return math.sin(_HALF_PI * tau)
    if base is CopulaFamily.CLAYTON:
        return 2.0 * tau / (1.0 - tau)
    return 1.0 / (1.0 - tau)


def theta_to_tau(family: CopulaFamily, theta: float) -> float:
    """Inverse of :func:`tau_to_theta`."""
    theta = float(theta)
    validate_theta(family, theta)
    base = family.base
    if base in _ELLIPTICAL:
        return math.asin(theta) / _HALF_PI
    if base is CopulaFamily.CLAYTON:
        return theta / (theta + 2.0)
    return 1.0 - 1.0 / theta


def theta_from_delta(family: CopulaFamily, delta: float) -> float:
    """Natural parameter as a function of the unconstrained delta = logit(tau)."""
    return _kernels._theta_from_delta(family.code, float(delta))


def dtheta_ddelta(family: CopulaFamily, delta: float) -> float:
    """Derivative of :func:`theta_from_delta`, used by chain-rule gradients."""
    return _kernels._dtheta_ddelta(family.code, float(delta))


# ---------------------------------------------------------------------------
# quantile helpers (vectorized; the t(4) pair uses exact closed forms)
# ---------------------------------------------------------------------------

def t4_cdf(x):
    """Student-t(4) distribution function, F(x) = 1/2 + w (3 - w^2) / 4."""
    x = np.asarray(x, dtype=float)
    w = x / np.sqrt(4.0 + x * x)
    return 0.5 + 0.25 * w * (3.0 - w * w)


def t4_ppf(p):
    """Student-t(4) quantile via the closed-form cubic root.

    Exact to float precision away from the median; a single Newton step
    repairs the mild cancellation for |x| < 0.1.
    """
    p = np.asarray(p, dtype=float)
    alpha = 4.0 * p * (1.0 - p)
    sq = np.sqrt(alpha)
    c = np.cos(np.arccos(sq) / 3.0) / sq
    x = 2.0 * np.sqrt(np.maximum(c - 1.0, 0.0))
    x = np.where(p < 0.5, -x, x)
    near = np.abs(x) < 0.1
    if np.any(near):
        f = t4_cdf(x) - p
        dens = 0.375 * (1.0 + 0.25 * x * x) ** (-2.5)
        x = np.where(near, x - f / dens, x)
    return x


def _scores(family: CopulaFamily, u):
    """Family-native transform of (already clamped) unit data."""
    base = family.base
    if base is CopulaFamily.GAUSSIAN:
        return special.ndtri(u)
    if base is CopulaFamily.STUDENT_T4:
        return t4_ppf(u)
    # Archimedean branches work on ln u; survival rotation flips first.
    if family.is_survival:
        return np.log1p(-u)
    return np.log(u)


# ---------------------------------------------------------------------------
# log density and gradient
# ---------------------------------------------------------------------------

def _lc_gauss_vec(x, y, rho):
    o = (1.0 - rho) * (1.0 + rho)
    return -0.5 * math.log(o) - (rho * rho * (x * x + y * y) - 2.0 * rho * x * y) / (2.0 * o)

def _lc_t4_vec(x, y, rho):
    o = (1.0 - rho) * (1.0 + rho)
    a = 1.0 + (x * x - 2.0 * rho * x * y + y * y) / (4.0 * o)
    return (_T4_LNK - 0.5 * math.log(o) - 3.0 * np.log(a)
            + 2.5 * (np.log1p(0.25 * x * x) + np.log1p(0.25 * y * y)))

def _lc_clayton_vec(lnu, lnv, theta):
    a = -theta * lnu
    b = -theta * lnv
    m = np.maximum(a, b)
    lnw = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))
    return math.log1p(theta) - (theta + 1.0) * (lnu + lnv) - (2.0 + 1.0 / theta) * lnw

def _lc_gumbel_vec(lnu, lnv, theta):
    x = -lnu
    y = -lnv
    lx = np.log(x)
    ly = np.log(y)
    lna = np.logaddexp(theta * lx, theta * ly)
    lb = lna / theta
    bb = np.exp(lb)
    if theta > 1.0:
        lsum = np.logaddexp(lb, math.log(theta - 1.0))
    else:
        lsum = lb
    return -bb + x + y + (theta - 1.0) * (lx + ly) + (1.0 / theta - 2.0) * lna + lsum


def log_density(pc: PairCopula, u, v):
    """Log copula density ln c(u, v; theta), elementwise over u and v.

    Parameters
    ----------
    pc : PairCopula
        Family and dependence parameter.
    u, v : array_like
        Unit-interval arguments; values are clipped to
        [UNIT_EPS, 1 - UNIT_EPS] before evaluation.
    """
    scalar = np.isscalar(u) and np.isscalar(v)
    u = clamp_unit(np.asarray(u, dtype=float))
    v = clamp_unit(np.asarray(v, dtype=float))
    base = pc.family.base
    if pc.family.is_survival:
        u, v = 1.0 - u, 1.0 - v
    if base is CopulaFamily.GAUSSIAN:
        out = _lc_gauss_vec(special.ndtri(u), special.ndtri(v), pc.theta)
    elif base is CopulaFamily.STUDENT_T4:
        out = _lc_t4_vec(t4_ppf(u), t4_ppf(v), pc.theta)
    elif base is CopulaFamily.CLAYTON:
        out = _lc_clayton_vec(np.log(u), np.log(v), pc.theta)
    else:
        out = _lc_gumbel_vec(np.log(u), np.log(v), pc.theta)
    return float(out) if scalar else out


def grad_log_density(pc: PairCopula, u, v):
    """Partial derivatives of ln c with respect to (theta, u, v).

    Returns a tuple of three arrays (or floats for scalar input).  The
    derivatives are evaluated at the clamped arguments, matching
    :func:`log_density`.
    """
    scalar = np.isscalar(u) and np.isscalar(v)
    u = np.atleast_1d(clamp_unit(np.asarray(u, dtype=float)))
    v = np.atleast_1d(clamp_unit(np.asarray(v, dtype=float)))
    u, v = np.broadcast_arrays(u, v)
    code = pc.family.code
    uu = 1.0 - u if pc.family.is_survival else u
    vv = 1.0 - v if pc.family.is_survival else v
    base = pc.family.base
    gt = np.empty(u.shape)
    gu = np.empty(u.shape)
    gv = np.empty(u.shape)
    flat_gt, flat_gu, flat_gv = gt.ravel(), gu.ravel(), gv.ravel()
    if base is CopulaFamily.GAUSSIAN:
        xs, ys = special.ndtri(uu).ravel(), special.ndtri(vv).ravel()
        fn = _kernels._grad_gauss
    elif base is CopulaFamily.STUDENT_T4:
        xs, ys = t4_ppf(uu).ravel(), t4_ppf(vv).ravel()
        fn = _kernels._grad_t4
    elif base is CopulaFamily.CLAYTON:
        xs, ys = np.log(uu).ravel(), np.log(vv).ravel()
        fn = _kernels._grad_clayton
    else:
        xs, ys = np.log(uu).ravel(), np.log(vv).ravel()
        fn = _kernels._grad_gumbel
    for i in range(xs.size):
        a, b, c = fn(xs[i], ys[i], pc.theta)
        flat_gt[i], flat_gu[i], flat_gv[i] = a, b, c
    if pc.family.is_survival:
        gu = -gu
        gv = -gv
    if scalar:
        return float(gt[0]), float(gu[0]), float(gv[0])
    return gt, gu, gv


# ---------------------------------------------------------------------------
# h-functions (conditional CDFs) and their inverses
# ---------------------------------------------------------------------------

def _hfunc_base(family: CopulaFamily, theta, u, v):
    """h(u | v) for a base (non-survival) family on clamped arguments."""
    if family is CopulaFamily.GAUSSIAN:
        x = special.ndtri(u)
        y = special.ndtri(v)
        return special.ndtr((x - theta * y) / math.sqrt((1.0 - theta) * (1.0 + theta)))
    if family is CopulaFamily.STUDENT_T4:
        x = t4_ppf(u)
        y = t4_ppf(v)
        scale = np.sqrt((4.0 + y * y) * (1.0 - theta) * (1.0 + theta) / 5.0)
        return special.stdtr(5.0, (x - theta * y) / scale)
    if family is CopulaFamily.CLAYTON:
        lnu = np.log(u)
        lnv = np.log(v)
        a = -theta * lnu
        b = -theta * lnv
        m = np.maximum(a, b)
        lnw = m + np.log(np.exp(a - m) + np.exp(b - m) - np.exp(-m))
        return np.exp(-(theta + 1.0) * lnv - (1.0 + 1.0 / theta) * lnw)
    # Gumbel
    x = -np.log(u)
    y = -np.log(v)
    lx = np.log(x)
    ly = np.log(y)
    lna = np.logaddexp(theta * lx, theta * ly)
    bb = np.exp(lna / theta)
    return np.exp(-bb + (1.0 / theta - 1.0) * lna + (theta - 1.0) * ly - np.log(v))


def hfunc(pc: PairCopula, u, v):
    """Conditional distribution h(u | v) = d C(u, v) / d v."""
    scalar = np.isscalar(u) and np.isscalar(v)
    u = clamp_unit(np.asarray(u, dtype=float))
    v = clamp_unit(np.asarray(v, dtype=float))
    if pc.family.is_survival:
        out = 1.0 - _hfunc_base(pc.family.base, pc.theta, 1.0 - u, 1.0 - v)
    else:
        out = _hfunc_base(pc.family.base, pc.theta, u, v)
    return float(out) if scalar else np.asarray(out)


def _hinv_base(family: CopulaFamily, theta, p, v):
    if family is CopulaFamily.GAUSSIAN:
        y = special.ndtri(v)
        x = special.ndtri(p) * math.sqrt((1.0 - theta) * (1.0 + theta)) + theta * y
        return special.ndtr(x)
    if family is CopulaFamily.STUDENT_T4:
        y = t4_ppf(v)
        scale = np.sqrt((4.0 + y * y) * (1.0 - theta) * (1.0 + theta) / 5.0)
        x = special.stdtrit(5.0, p) * scale + theta * y
        return t4_cdf(x)
    if family is CopulaFamily.CLAYTON:
        # closed-form inverse: u^{-theta} = (p^{-theta/(theta+1)} - 1) v^{-theta} + 1
        lnv = np.log(v)
        g = np.expm1(-theta / (theta + 1.0) * np.log(p))  # p^{-t/(t+1)} - 1, positive
        ln_uto = np.logaddexp(np.log(g) - theta * lnv, 0.0)
        return np.exp(-ln_uto / theta)
    # Gumbel: monotone bracketed bisection with Newton polish
    p = np.atleast_1d(p)
    v = np.atleast_1d(v)
    p, v = np.broadcast_arrays(p, v)
    lo = np.full(p.shape, UNIT_EPS)
    hi = np.full(p.shape, 1.0 - UNIT_EPS)
    mid = 0.5 * (lo + hi)
    for _ in range(80):
        fmid = _hfunc_base(family, theta, mid, v) - p
        lo = np.where(fmid < 0.0, mid, lo)
        hi = np.where(fmid < 0.0, hi, mid)
        mid = 0.5 * (lo + hi)
    # Newton refinements; dh/du equals the copula density
    pc = PairCopula(CopulaFamily.GUMBEL, theta)
    for _ in range(3):
        f = _hfunc_base(family, theta, mid, v) - p
        dens = np.exp(log_density(pc, mid, v))
        step = np.where(dens > 0.0, f / np.maximum(dens, 1e-300), 0.0)
        mid = np.clip(mid - step, lo, hi)
    return mid


def hinv(pc: PairCopula, p, v):
    """Inverse of :func:`hfunc` in its first argument: u with h(u | v) = p."""
    scalar = np.isscalar(p) and np.isscalar(v)
    p = clamp_unit(np.asarray(p, dtype=float))
    v = clamp_unit(np.asarray(v, dtype=float))
    if pc.family.is_survival:
        out = 1.0 - _hinv_base(pc.family.base, pc.theta, 1.0 - p, 1.0 - v)
    else:
        out = _hinv_base(pc.family.base, pc.theta, p, v)
    out = clamp_unit(out)
    return float(np.asarray(out).ravel()[0]) if scalar else np.asarray(out)


def sample(pc: PairCopula, n: int, rng: np.random.Generator):
    """Draw n pairs from the copula by conditional inversion."""
    v = rng.uniform(size=n)
    p = rng.uniform(size=n)
    u = hinv(pc, p, v)
    return u, v

"""Certification of every analytic gradient against central finite differences.

Three suites mirror the three places the samplers consume gradients:

* bivariate copula log-density gradients in (u, v), per family;
* the dependence-block log-posterior gradient in (delta, w);
* the margin-block log-conditional gradient in (mu, xi, psi, s~), once per
  linking family.

Each suite draws random interior points, compares the analytic gradient with
a central finite difference of the corresponding scalar function, and records
the worst relative error ``|analytic - numeric| / max(1, |numeric|)``.  The
command-line ``checkgrad`` front end and the acceptance test both run
:func:`certify_gradients` and require every suite to stay below tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import bicop, factor_copula, sv_margin
from .bicop import CopulaFamily, PairCopula

__all__ = [
    "GradientCheck",
    "GradientReport",
    "certify_gradients",
]

_ALL_FAMILIES = tuple(CopulaFamily)


@dataclass(frozen=True)
class GradientCheck:
    """Worst-case finite-difference comparison for one gradient suite."""

    name: str
    n_points: int
    max_rel_err: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err)) and self.max_rel_err <= self.tol


@dataclass(frozen=True)
class GradientReport:
    """Results of all gradient suites."""

    checks: tuple[GradientCheck, ...]

    @property
    def max_rel_err(self) -> float:
        return max(c.max_rel_err for c in self.checks)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        """Human-readable one-line-per-suite report."""
        width = max(len(c.name) for c in self.checks)
        out = []
        for c in self.checks:
            flag = "ok" if c.passed else "FAIL"
            out.append(f"{c.name:<{width}}  points={c.n_points:<4d} "
                       f"max_rel_err={c.max_rel_err:.3e}  [{flag}]")
        out.append(f"overall max relative error: {self.max_rel_err:.3e} "
                   f"({'pass' if self.passed else 'FAIL'})")
        return out


def _rel_err(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(1.0, abs(numeric))


def _random_link(rng: np.random.Generator) -> PairCopula:
    family = _ALL_FAMILIES[int(rng.integers(len(_ALL_FAMILIES)))]
    tau = float(rng.uniform(0.15, 0.85))
    return PairCopula(family, bicop.tau_to_theta(family.base, tau))


def _pair_density_checks(n_points: int, rng: np.random.Generator,
                         h: float, tol: float) -> list[GradientCheck]:
    checks = []
    for family in _ALL_FAMILIES:
        worst = 0.0
        for _ in range(n_points):
            tau = float(rng.uniform(0.15, 0.85))
            theta = bicop.tau_to_theta(family.base, tau)
            pc = PairCopula(family, theta)
            u = float(rng.uniform(0.05, 0.95))
            v = float(rng.uniform(0.05, 0.95))
            dt, du, dv = bicop.grad_log_density(pc, u, v)
            fd_t = (bicop.log_density(PairCopula(family, theta + h), u, v)
                    - bicop.log_density(PairCopula(family, theta - h), u, v)) / (2.0 * h)
            fd_u = (bicop.log_density(pc, u + h, v)
                    - bicop.log_density(pc, u - h, v)) / (2.0 * h)
            fd_v = (bicop.log_density(pc, u, v + h)
                    - bicop.log_density(pc, u, v - h)) / (2.0 * h)
            worst = max(worst, _rel_err(float(dt), float(fd_t)),
                        _rel_err(float(du), float(fd_u)),
                        _rel_err(float(dv), float(fd_v)))
        checks.append(GradientCheck(name=f"pair-density d(theta,u,v) [{family.value}]",
                                    n_points=n_points, max_rel_err=worst, tol=tol))
    return checks


def _dependence_check(n_points: int, rng: np.random.Generator,
                      h: float, tol: float) -> GradientCheck:
    d, t = 3, 8
    worst = 0.0
    for _ in range(n_points):
        families = tuple(_ALL_FAMILIES[int(k)]
                         for k in rng.integers(len(_ALL_FAMILIES), size=d))
        data = factor_copula.CopulaData(rng.uniform(0.05, 0.95, size=(t, d)))
        state = factor_copula.DependenceState(
            delta=rng.uniform(-1.5, 1.5, size=d),
            w=rng.uniform(-1.5, 1.5, size=t),
        )
        grad = factor_copula.grad_log_posterior(data, state, families)
        q = np.concatenate([state.delta, state.w])
        for i in range(q.size):
            qp, qm = q.copy(), q.copy()
            qp[i] += h
            qm[i] -= h
            sp = factor_copula.DependenceState(delta=qp[:d], w=qp[d:])
            sm = factor_copula.DependenceState(delta=qm[:d], w=qm[d:])
            fd = (factor_copula.log_posterior(data, sp, families)
                  - factor_copula.log_posterior(data, sm, families)) / (2.0 * h)
            worst = max(worst, _rel_err(float(grad[i]), float(fd)))
    return GradientCheck(name="dependence-block d(delta,w)",
                         n_points=n_points, max_rel_err=worst, tol=tol)


def _margin_checks(n_points: int, rng: np.random.Generator,
                   h: float, tol: float) -> list[GradientCheck]:
    t = 6
    checks = []
    for family in _ALL_FAMILIES:
        worst = 0.0
        for _ in range(n_points):
            tau = float(rng.uniform(0.15, 0.85))
            link = PairCopula(family, bicop.tau_to_theta(family.base, tau))
            series = sv_margin.MarginSeries(rng.normal(0.0, 0.05, size=t))
            state = sv_margin.MarginState(
                mu=float(rng.uniform(-8.0, -5.0)),
                xi=float(np.arctanh(rng.uniform(0.4, 0.95))),
                psi=float(np.log(rng.uniform(0.15, 0.5))),
                s_tilde=rng.normal(0.0, 1.0, size=t + 1),
            )
            v = sv_margin.factor_scores(rng.uniform(0.05, 0.95, size=t))
            grad = sv_margin.grad_log_conditional(state, series, v, link)
            q = state.as_vector()
            for i in range(q.size):
                qp, qm = q.copy(), q.copy()
                qp[i] += h
                qm[i] -= h
                fd = (sv_margin.log_conditional(
                          sv_margin.MarginState.from_vector(qp), series, v, link)
                      - sv_margin.log_conditional(
                          sv_margin.MarginState.from_vector(qm), series, v, link)
                      ) / (2.0 * h)
                worst = max(worst, _rel_err(float(grad[i]), float(fd)))
        checks.append(GradientCheck(name=f"margin-block d(mu,xi,psi,s~) [{family.value}]",
                                    n_points=n_points, max_rel_err=worst, tol=tol))
    return checks


def certify_gradients(n_points: int = 100, seed: int = 0, h: float = 1e-5,
                      tol: float = 1e-4) -> GradientReport:
    """Run every analytic-vs-finite-difference suite.

    Parameters
    ----------
    n_points : int
        Random interior points per suite (the block suites additionally
        sweep every coordinate of each point).
    seed : int
        Seed for the point generator.
    h : float
        Central-difference step.
    tol : float
        Maximum admissible relative error per suite.
    """
    if n_points < 1:
        raise ValueError("n_points must be positive")
    rng = np.random.default_rng(seed)
    checks = _pair_density_checks(n_points, rng, h, tol)
    checks.append(_dependence_check(n_points, rng, h, tol))
    checks.extend(_margin_checks(n_points, rng, h, tol))
    return GradientReport(checks=tuple(checks))

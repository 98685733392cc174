"""Independent oracles shared by unit and acceptance tests.

Everything here avoids the package's compiled kernels and gradients on
purpose: densities come from textbook formulas via numpy/scipy, and the
reference sampler for the joint model uses gradient-free updates (random-walk
margins, dense-grid inverse-CDF draws for the dependence block).  Agreement
with the package is therefore evidence of correctness rather than tautology.
"""

import math

import numpy as np
from scipy import special

from copsv import bicop
from copsv.bicop import PairCopula


def dependence_grid_tau_means(u, families, n_tau=160, n_v=240):
    """Exact posterior means of (tau_1, tau_2) for the d=2 factor copula.

    The latent factor is integrated out by Gauss-Legendre quadrature at each
    time point and the two taus live on a tensor grid; the tau priors are
    uniform so the posterior is proportional to the integrated likelihood.
    """
    u = np.asarray(u, dtype=float)
    T = u.shape[0]
    tn, tw = np.polynomial.legendre.leggauss(n_tau)
    tn = 0.5 * (tn + 1.0)
    tw = 0.5 * tw
    vn, vw = np.polynomial.legendre.leggauss(n_v)
    vn = 0.5 * (vn + 1.0)
    vw = 0.5 * vw
    dens = np.empty((2, n_tau, T, n_v))
    for j in range(2):
        for i, tau in enumerate(tn):
            pc = PairCopula(families[j], bicop.tau_to_theta(families[j], tau))
            for t in range(T):
                dens[j, i, t] = np.exp(bicop.log_density(pc, u[t, j], vn))
    k = np.einsum("itk,jtk,k->ijt", dens[0], dens[1], vw)
    like = np.prod(k, axis=2)
    post = like * tw[:, None] * tw[None, :]
    post /= post.sum()
    return (float(np.sum(post.sum(axis=1) * tn)),
            float(np.sum(post.sum(axis=0) * tn)))


# ---------------------------------------------------------------------------
# naive building blocks for the joint-model reference sampler (Gumbel links)
# ---------------------------------------------------------------------------

_LN_2PI = math.log(2.0 * math.pi)
_LN_BETA_5_15 = math.lgamma(5.0) + math.lgamma(1.5) - math.lgamma(6.5)


def _gumbel_logc_ln(lx, x, ly, y, theta, log_tm1):
    """ln c from precomputed x = -ln u, lx = ln x (same for the v side).

    Evaluated in log space so that enormous theta values merely drive the
    density toward zero instead of producing overflow artifacts.
    """
    ln_a = np.logaddexp(theta * lx, theta * ly) / theta
    a = np.exp(np.minimum(ln_a, 700.0))
    return (-a + (theta - 1.0) * (lx + ly) + (1.0 - 2.0 * theta) * ln_a
            + np.logaddexp(ln_a, log_tm1) + x + y)


def gumbel_logc(u, v, theta):
    """Textbook Gumbel log density for a scalar parameter theta >= 1."""
    x = -np.log(u)
    y = -np.log(v)
    log_tm1 = math.log(theta - 1.0) if theta > 1.0 else -np.inf
    return _gumbel_logc_ln(np.log(x), x, np.log(y), y, theta, log_tm1)


def logistic_logpdf(x):
    return -x - 2.0 * np.logaddexp(0.0, -x)


def sv_path(q, n_obs):
    """Log-variance path from the unconstrained margin vector."""
    mu, xi, psi = q[0], q[1], q[2]
    phi = math.tanh(xi)
    sigma = math.exp(psi)
    s = np.empty(n_obs + 1)
    s[0] = mu + sigma * q[3] / math.sqrt(1.0 - phi * phi)
    for t in range(n_obs):
        s[t + 1] = mu + phi * (s[t] - mu) + sigma * q[4 + t]
    return s


def naive_margin_logpost(q, z, v, theta):
    """Margin log posterior with a Gumbel link, assembled from plain formulas.

    States whose PIT would reach the package's clamp region are treated as
    out of bounds (posterior mass there is ~1e-12, far below test tolerance).
    """
    mu, xi, psi = q[0], q[1], q[2]
    phi = math.tanh(xi)
    s = sv_path(q, z.size)
    x = z * np.exp(-0.5 * s[1:])
    if np.any(np.abs(x) > 7.0):
        return -np.inf
    u = special.ndtr(x)
    lp = float(np.sum(gumbel_logc(u, v, theta)
                      - 0.5 * x * x - 0.5 * _LN_2PI - 0.5 * s[1:]))
    # mu ~ N(0, 100)
    lp += -math.log(10.0) - 0.5 * _LN_2PI - mu * mu / 200.0
    # (phi + 1)/2 ~ Beta(5, 1.5), plus the artanh change of variables
    h = 0.5 * (phi + 1.0)
    lp += (-_LN_BETA_5_15 + 4.0 * math.log(h) + 0.5 * math.log(1.0 - h)
           + math.log(0.5 * (1.0 - phi * phi)))
    # sigma^2 ~ chi-squared(1), plus the log change of variables
    sig2 = math.exp(2.0 * psi)
    lp += (-0.5 * math.log(2.0) - math.lgamma(0.5) - 0.5 * math.log(sig2)
           - 0.5 * sig2 + math.log(2.0 * sig2))
    # iid standard normal innovations
    st = q[3:]
    lp += -0.5 * float(st @ st) - 0.5 * st.size * _LN_2PI
    return lp


def reference_joint_tau(z, n_sweeps=12_000, n_burn=2_000, seed=0,
                        rwm_scale=0.4, grid_size=561):
    """Rao-Blackwellized E[tau | z] for the joint model with Gumbel links.

    A gradient-free Gibbs reference: margins move by random-walk Metropolis,
    each w_t and delta_j is redrawn from its full conditional on a dense grid
    (piecewise-constant inverse CDF over [-10, 10] on the logit scale), and
    the returned per-margin tau estimate averages the exact grid conditional
    mean of tau at every sweep.
    """
    rng = np.random.default_rng(seed)
    z = np.asarray(z, dtype=float)
    T, d = z.shape

    grid = np.linspace(-10.0, 10.0, grid_size)
    step = grid[1] - grid[0]
    v_grid = special.expit(grid)
    tau_grid = special.expit(grid)
    theta_grid = 1.0 / (1.0 - tau_grid)
    log_tm1_grid = np.log(theta_grid - 1.0)
    lpi_grid = logistic_logpdf(grid)
    yg = -np.log(v_grid)          # v-side transforms on the grid, fixed
    lyg = np.log(yg)

    q = []
    for j in range(d):
        q.append(np.concatenate([
            [math.log(float(np.mean(z[:, j] ** 2)) + 1e-12), math.atanh(0.9),
             math.log(0.2)], np.zeros(T + 1)]))
    delta = np.zeros(d)
    w = np.zeros(T)

    tau_rb = np.zeros(d)
    kept = 0
    for sweep in range(n_sweeps):
        v = special.expit(w)
        theta = 1.0 / (1.0 - special.expit(delta))
        # margins: random-walk Metropolis
        for j in range(d):
            lp_cur = naive_margin_logpost(q[j], z[:, j], v, theta[j])
            prop = q[j] + rwm_scale * rng.standard_normal(T + 4)
            lp_prop = naive_margin_logpost(prop, z[:, j], v, theta[j])
            if math.log(rng.uniform()) < lp_prop - lp_cur:
                q[j] = prop
        u = np.column_stack([
            special.ndtr(z[:, j] * np.exp(-0.5 * sv_path(q[j], T)[1:]))
            for j in range(d)])
        xu = -np.log(u)
        lxu = np.log(xu)
        # factor path: exact grid draws, all t at once per margin
        ll_w = np.tile(lpi_grid, (T, 1))
        for j in range(d):
            log_tm1 = math.log(theta[j] - 1.0) if theta[j] > 1.0 else -np.inf
            ll_w += _gumbel_logc_ln(lxu[:, j][:, None], xu[:, j][:, None],
                                    lyg[None, :], yg[None, :], theta[j], log_tm1)
        pr = np.exp(ll_w - ll_w.max(axis=1, keepdims=True))
        pr /= pr.sum(axis=1, keepdims=True)
        cdf = np.cumsum(pr, axis=1)
        draws = rng.uniform(size=T)
        for t in range(T):
            k = int(np.searchsorted(cdf[t], draws[t], side="right"))
            w[t] = grid[min(k, grid_size - 1)] + (rng.uniform() - 0.5) * step
        v = special.expit(w)
        yv = -np.log(v)
        lyv = np.log(yv)
        # dependence parameters: exact grid draws + Rao-Blackwellized tau
        for j in range(d):
            ll = (_gumbel_logc_ln(lxu[:, j][None, :], xu[:, j][None, :],
                                  lyv[None, :], yv[None, :],
                                  theta_grid[:, None], log_tm1_grid[:, None])
                  .sum(axis=1) + lpi_grid)
            pr_d = np.exp(ll - ll.max())
            pr_d /= pr_d.sum()
            if sweep >= n_burn:
                tau_rb[j] += float(pr_d @ tau_grid)
            k = int(np.searchsorted(np.cumsum(pr_d), rng.uniform(), side="right"))
            delta[j] = grid[min(k, grid_size - 1)] + (rng.uniform() - 0.5) * step
        if sweep >= n_burn:
            kept += 1
    return tau_rb / kept

"""Independent reference implementations used as test oracles.

Nothing here imports the package's likelihood, kernels or dists modules:
densities come from scipy.stats, AR means are computed with plain loops and
the stationary law from an eigenvector.
"""

import itertools
import math

import numpy as np
from scipy import stats
from scipy.linalg import eig


def stationary_eig(tpm):
    w, vl = eig(np.asarray(tpm).T)
    v = np.real(vl[:, np.argmin(np.abs(w - 1.0))])
    return v / v.sum()


def ar_mean_step(steps, t, phi, mu):
    return (1.0 - sum(phi)) * mu + sum(phi[k] * steps[t - k - 1] for k in range(len(phi)))


def ar_mean_turn(turns, t, phi, mu):
    z = (1.0 - sum(phi)) * complex(math.cos(mu), math.sin(mu))
    for k in range(len(phi)):
        z += phi[k] * complex(math.cos(turns[t - k - 1]), math.sin(turns[t - k - 1]))
    return math.atan2(z.imag, z.real) if abs(z) >= 1e-12 else mu


def density_matrix(steps, turns, p):
    """(T, N) state-dependent density factors from a plain dict of parameters."""
    T, N = len(steps), len(p["mu_step"])
    out = np.ones((T, N))
    for t in range(T):
        for j in range(N):
            ps, pt = p["phi_step"][j], p["phi_turn"][j]
            if t >= len(ps):
                m = ar_mean_step(steps, t, ps, p["mu_step"][j])
                a = 1.0 / p["cv_step"][j] ** 2
                out[t, j] *= stats.gamma.pdf(steps[t], a, scale=m / a)
            if t >= len(pt):
                nu = ar_mean_turn(turns, t, pt, p["mu_turn"][j])
                out[t, j] *= stats.vonmises.pdf(turns[t], p["kappa_turn"][j], loc=nu)
    return out


def enumerate_loglik(steps, turns, p):
    """Log-likelihood by summing over every state sequence."""
    dens = density_matrix(steps, turns, p)
    tpm = np.asarray(p["tpm"])
    delta = stationary_eig(tpm)
    T, N = dens.shape
    total = 0.0
    for seq in itertools.product(range(N), repeat=T):
        prob = delta[seq[0]] * dens[0, seq[0]]
        for t in range(1, T):
            prob *= tpm[seq[t - 1], seq[t]] * dens[t, seq[t]]
        total += prob
    return math.log(total)


def enumerate_viterbi(steps, turns, p):
    """Best path (0-based) by exhaustive search; the first maximum in
    lexicographic order wins, which matches lower-index tie-breaking."""
    dens = density_matrix(steps, turns, p)
    with np.errstate(divide="ignore"):
        ld = np.log(dens)
        lt = np.log(np.asarray(p["tpm"]))
        l0 = np.log(stationary_eig(p["tpm"]))
    T, N = dens.shape
    best, best_seq = -np.inf, None
    for seq in itertools.product(range(N), repeat=T):
        s = l0[seq[0]] + ld[0, seq[0]] + sum(lt[seq[t - 1], seq[t]] + ld[t, seq[t]] for t in range(1, T))
        if s > best:
            best, best_seq = s, seq
    return np.array(best_seq), best


def basic_hmm_fit(steps, turns, n_starts=8, seed=0):
    """Direct numerical maximisation of a degree-0 two-state HMM likelihood.

    Uses its own parametrisation (gamma shape/scale, logistic off-diagonals)
    and a derivative-free optimiser.
    """
    from scipy.optimize import minimize

    steps = np.asarray(steps)
    turns = np.asarray(turns)

    def nll(w):
        g12, g21 = 1 / (1 + math.exp(-w[0])), 1 / (1 + math.exp(-w[1]))
        tpm = np.array([[1 - g12, g12], [g21, 1 - g21]])
        shape = np.exp(w[2:4])
        scale = np.exp(w[4:6])
        mu = w[6:8]
        kappa = np.exp(w[8:10])
        dens = np.column_stack([
            stats.gamma.pdf(steps, shape[j], scale=scale[j]) * stats.vonmises.pdf(turns, kappa[j], loc=mu[j])
            for j in range(2)
        ])
        a = stationary_eig(tpm) * dens[0]
        ll = 0.0
        for t in range(1, len(steps)):
            s = a.sum()
            ll += math.log(s)
            a = (a / s) @ tpm * dens[t]
        return -(ll + math.log(a.sum()))

    rng = np.random.default_rng(seed)
    q = np.quantile(steps, [0.25, 0.75])
    best = None
    for _ in range(n_starts):
        w0 = np.array([
            -2 + rng.normal(0, 0.3), -2 + rng.normal(0, 0.3),
            math.log(8) + rng.normal(0, 0.3), math.log(8) + rng.normal(0, 0.3),
            math.log(q[0] / 8), math.log(q[1] / 8),
            rng.normal(0, 0.1), rng.normal(0, 0.1),
            rng.normal(0.5, 0.3), rng.normal(1.5, 0.3),
        ])
        r = minimize(nll, w0, method="Nelder-Mead", options={"maxiter": 40000, "maxfev": 40000, "xatol": 1e-9, "fatol": 1e-11})
        r = minimize(nll, r.x, method="BFGS", options={"gtol": 1e-8})
        if best is None or r.fun < best.fun:
            best = r
    return -best.fun

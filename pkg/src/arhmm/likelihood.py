"""Partially penalised conditional log-likelihood.

For each track the forward recursion ``delta P(x_1) Gamma P(x_2) ... 1'`` is
run with per-step renormalisation. ``P(x_t)`` is diagonal with the product of
the step (gamma) and turn (von Mises) densities; for state ``j`` the step
factor is 1 while ``t <= p_step[j]`` and the turn factor is 1 while
``t <= p_turn[j]``. ``delta`` is always the stationary law of ``Gamma``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import _kernels
from .dists import (
    GammaMeanSd,
    LOG_2PI,
    VonMises,
    ar_step_mean,
    ar_turn_mean,
    bessel_i1_i0_ratio,
    gamma_logpdf,
    log_bessel_i0,
    vonmises_logpdf,
)
from .errors import NumericError
from .model import (
    from_working,
    param_count,
    stationary_dist,
    stationary_dist_jacobian,
    working_jacobian_transpose,
)

__all__ = [
    "PooledData",
    "PenaltyConfig",
    "smooth_l1",
    "state_density",
    "state_constants",
    "track_log_densities",
    "track_loglik",
    "cond_loglik",
    "penalty",
    "penalized_cond_loglik",
    "effective_sample_size",
    "Objective",
]


@dataclass
class PooledData:
    """Independent tracks sharing one parameter set."""

    series: list

    def __post_init__(self):
        if not isinstance(self.series, (list, tuple)):
            self.series = [self.series]
        self.series = list(self.series)
        if not self.series:
            raise ValueError("pooled data needs at least one track")
        for s in self.series:
            if len(s) == 0:
                raise ValueError(f"track {s.track_id!r} is empty")

    def __iter__(self):
        return iter(self.series)

    def __len__(self):
        return len(self.series)

    @property
    def total_length(self):
        return sum(len(s) for s in self.series)

    @property
    def min_length(self):
        return min(len(s) for s in self.series)


@dataclass(frozen=True)
class PenaltyConfig:
    lam: float = 0.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")


def smooth_l1(x, epsilon=1e-6):
    """Differentiable surrogate ``sqrt(x**2 + eps**2)`` for ``|x|``."""
    return np.sqrt(np.square(x) + epsilon * epsilon)


def state_density(series, params, spec, t, j):
    """Density factor of state ``j`` (0-based) at time ``t`` (1-based).

    Scalar reference path built directly on :mod:`arhmm.dists`; the
    vectorised kernels are checked against it.
    """
    if not 1 <= t <= len(series):
        raise IndexError(f"t must lie in 1..{len(series)}")
    i = t - 1
    out = 1.0
    ps, pt = spec.p_step[j], spec.p_turn[j]
    if t > ps:
        hist = series.steps[i - ps : i][::-1] if ps else []
        m = ar_step_mean(hist, params.phi_step[j], params.mu_step[j])
        out *= math.exp(gamma_logpdf(series.steps[i], GammaMeanSd(m, params.cv_step[j] * m)))
    if t > pt:
        hist = series.turns[i - pt : i][::-1] if pt else []
        nu = ar_turn_mean(hist, params.phi_turn[j], params.mu_turn[j])
        out *= math.exp(vonmises_logpdf(series.turns[i], VonMises(nu, params.kappa_turn[j])))
    return out


@dataclass
class StateConstants:
    shape: np.ndarray
    lgamma_shape: np.ndarray
    digamma_shape: np.ndarray
    log_norm: np.ndarray
    bessel_ratio: np.ndarray
    phi_step: np.ndarray
    p_step: np.ndarray
    phi_turn: np.ndarray
    p_turn: np.ndarray


def state_constants(params):
    """Per-state quantities that do not depend on time."""
    shape = 1.0 / np.square(params.cv_step)
    phs, ps = params.padded_phi("step")
    pht, pt = params.padded_phi("turn")
    return StateConstants(
        shape=shape,
        lgamma_shape=special.gammaln(shape),
        digamma_shape=special.digamma(shape),
        log_norm=np.array([LOG_2PI + log_bessel_i0(k) for k in params.kappa_turn]),
        bessel_ratio=np.array([bessel_i1_i0_ratio(k) for k in params.kappa_turn]),
        phi_step=phs, p_step=ps, phi_turn=pht, p_turn=pt,
    )


def track_log_densities(series, params, consts=None, kernels=None):
    """(T, N) matrix of log density factors (0 where the factor is 1)."""
    k = kernels or _kernels
    c = consts or state_constants(params)
    return k.log_densities(
        series.steps, series.turns, params.mu_step, c.shape, c.lgamma_shape, params.mu_turn,
        params.kappa_turn, c.log_norm, c.phi_step, c.p_step, c.phi_turn, c.p_turn,
    )


def _raise_nonfinite(series, logp):
    bad = np.argwhere(~np.isfinite(logp))
    if bad.size:
        t, j = (int(v) for v in bad[0])
        raise NumericError(
            f"non-finite density in track {series.track_id!r} at t={t + 1}, state={j + 1}",
            track=series.track_id, t=t + 1, state=j + 1,
        )
    raise NumericError(f"forward recursion underflowed in track {series.track_id!r}", track=series.track_id)


def track_loglik(series, params, delta=None, consts=None, kernels=None):
    k = kernels or _kernels
    logp = track_log_densities(series, params, consts, k)
    delta = stationary_dist(params.tpm) if delta is None else delta
    ll, _ = k.forward(logp, params.tpm, delta)
    if not np.isfinite(ll):
        _raise_nonfinite(series, logp)
    return ll


def cond_loglik(data, params, kernels=None):
    """Unpenalised conditional log-likelihood summed over tracks."""
    data = data if isinstance(data, PooledData) else PooledData(data)
    delta = stationary_dist(params.tpm)
    consts = state_constants(params)
    return float(sum(track_loglik(s, params, delta, consts, kernels) for s in data))


def penalty(params, epsilon=1e-6):
    """Sum of smoothed absolute AR coefficients over states and variables."""
    rows = [r for r in params.phi_step + params.phi_turn if r.size]
    if not rows:
        return 0.0
    return float(np.sum(smooth_l1(np.concatenate(rows), epsilon)))


def penalized_cond_loglik(data, params, spec=None, pen=None, kernels=None):
    pen = pen or PenaltyConfig()
    if spec is not None and params.spec != spec:
        raise ValueError("parameters do not match the model spec")
    ll = cond_loglik(data, params, kernels)
    if pen.lam == 0:
        return ll
    return ll - pen.lam * penalty(params, pen.epsilon)


def effective_sample_size(data, spec):
    """Conditional-likelihood time points: per track and variable, T minus the
    largest degree across states; halved because one time point carries a
    step and a turn term."""
    data = data if isinstance(data, PooledData) else PooledData(data)
    ms, mt = max(spec.p_step), max(spec.p_turn)
    return sum(max(len(s) - ms, 0) + max(len(s) - mt, 0) for s in data) / 2.0


def _loglik_and_natural_grad(data, params, kernels=None):
    k = kernels or _kernels
    n = params.n_states
    delta = stationary_dist(params.tpm)
    c = state_constants(params)
    total = 0.0
    g_tpm = np.zeros((n, n))
    g_delta = np.zeros(n)
    g_mu = np.zeros(n)
    g_shape = np.zeros(n)
    g_mut = np.zeros(n)
    g_kap = np.zeros(n)
    g_phs = np.zeros_like(c.phi_step)
    g_pht = np.zeros_like(c.phi_turn)
    for s in data:
        out = k.loglik_grad(
            s.steps, s.turns, params.tpm, delta, params.mu_step, c.shape, c.lgamma_shape,
            c.digamma_shape, params.mu_turn, params.kappa_turn, c.log_norm, c.bessel_ratio,
            c.phi_step, c.p_step, c.phi_turn, c.p_turn,
        )
        if not np.isfinite(out[0]):
            _raise_nonfinite(s, track_log_densities(s, params, c, k))
        total += out[0]
        g_tpm += out[1]
        g_delta += out[2]
        g_mu += out[3]
        g_shape += out[4]
        g_mut += out[5]
        g_kap += out[6]
        g_phs += out[7]
        g_pht += out[8]
    g_tpm = g_tpm + stationary_dist_jacobian(params.tpm, delta, g_delta)
    # shape = cv**-2
    g_cv = g_shape * (-2.0 * c.shape / params.cv_step)
    grads = dict(
        g_tpm=g_tpm, g_mu_step=g_mu, g_cv_step=g_cv, g_mu_turn=g_mut, g_kappa=g_kap,
        g_phi_step=[g_phs[j, : c.p_step[j]] for j in range(n)],
        g_phi_turn=[g_pht[j, : c.p_turn[j]] for j in range(n)],
    )
    return total, grads


class Objective:
    """Negative penalised conditional log-likelihood on the working scale.

    ``value`` and ``value_and_grad`` return ``inf`` when the parameters give
    a non-finite likelihood, so optimizers back off instead of failing.
    """

    def __init__(self, data, spec, pen=None, kernels=None):
        self.data = data if isinstance(data, PooledData) else PooledData(data)
        self.spec = spec
        self.pen = pen or PenaltyConfig()
        self.kernels = kernels
        self.size = param_count(spec)
        self.n_evals = 0

    def penalized(self, params):
        ll = cond_loglik(self.data, params, self.kernels)
        return ll - self.pen.lam * penalty(params, self.pen.epsilon) if self.pen.lam else ll

    def value(self, w):
        self.n_evals += 1
        try:
            return -self.penalized(from_working(w, self.spec))
        except (NumericError, FloatingPointError):
            return np.inf

    def value_and_grad(self, w):
        self.n_evals += 1
        params = from_working(w, self.spec)
        try:
            ll, g = _loglik_and_natural_grad(self.data, params, self.kernels)
        except (NumericError, FloatingPointError, np.linalg.LinAlgError):
            return np.inf, np.zeros(self.size)
        if self.pen.lam:
            eps = self.pen.epsilon
            ll -= self.pen.lam * penalty(params, eps)
            g["g_phi_step"] = [gp - self.pen.lam * r / smooth_l1(r, eps) for gp, r in zip(g["g_phi_step"], params.phi_step)]
            g["g_phi_turn"] = [gp - self.pen.lam * r / smooth_l1(r, eps) for gp, r in zip(g["g_phi_turn"], params.phi_turn)]
        gw = working_jacobian_transpose(params, self.spec, **g)
        if not (np.isfinite(ll) and np.all(np.isfinite(gw))):
            return np.inf, np.zeros(self.size)
        return -ll, -gw

    def __call__(self, w):
        return self.value_and_grad(w)

"""Viterbi decoding, decoding accuracy and one-step-ahead pseudo-residuals."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats
from scipy.optimize import linear_sum_assignment

from . import _kernels
from .dists import VonMises, vonmises_cdf
from .errors import NumericError, StructureError
from .likelihood import state_constants, track_log_densities
from .model import stationary_dist

__all__ = [
    "StateSequence",
    "ResidualSeries",
    "viterbi",
    "path_log_score",
    "decoding_accuracy",
    "pseudo_residuals",
    "residual_summary",
    "CDF_CLAMP",
]

CDF_CLAMP = 1e-12


@dataclass
class StateSequence:
    """Decoded or true states, labelled 1..N."""

    track_id: str
    states: np.ndarray

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.int64)
        if self.states.ndim != 1:
            raise StructureError("states must be 1-d")
        if self.states.size and self.states.min() < 1:
            raise StructureError("states are labelled from 1")

    def __len__(self):
        return len(self.states)


@dataclass
class ResidualSeries:
    """Pseudo-residuals; NaN marks the conditioning prefix."""

    track_id: str
    r_step: np.ndarray
    r_turn: np.ndarray
    u_step: np.ndarray
    u_turn: np.ndarray
    n_clamped: int = 0

    def __len__(self):
        return len(self.r_step)


def _check_spec(series, params, spec):
    if spec is not None and params.spec != spec:
        raise StructureError("parameters do not match the model spec")
    spec = params.spec
    if len(series) <= spec.max_degree:
        raise StructureError(
            f"track {series.track_id!r} has {len(series)} observations; needs more than {spec.max_degree}"
        )
    return spec


def _log_inputs(series, params):
    logp = track_log_densities(series, params)
    if not np.all(np.isfinite(logp)):
        t, j = np.argwhere(~np.isfinite(logp))[0]
        raise NumericError(
            f"non-finite log density in track {series.track_id!r} at t={t + 1}, state={j + 1}",
            track=series.track_id, t=int(t) + 1, state=int(j) + 1,
        )
    with np.errstate(divide="ignore"):
        return logp, np.log(params.tpm), np.log(stationary_dist(params.tpm))


def viterbi(series, params, spec=None):
    """Globally most probable state path under the conditional-likelihood factors."""
    _check_spec(series, params, spec)
    logp, log_tpm, log_delta = _log_inputs(series, params)
    path, _ = _kernels.viterbi(logp, log_tpm, log_delta)
    return StateSequence(series.track_id, path + 1)


def path_log_score(series, params, states):
    """Joint log score of a given (1-based) state path using the same factors."""
    logp, log_tpm, log_delta = _log_inputs(series, params)
    s = np.asarray(states.states if isinstance(states, StateSequence) else states) - 1
    return float(log_delta[s[0]] + log_tpm[s[:-1], s[1:]].sum() + logp[np.arange(len(s)), s].sum())


def decoding_accuracy(decoded, truth):
    """Fraction of matching labels, maximised over relabelings of the states."""
    a = np.asarray(getattr(decoded, "states", decoded), dtype=np.int64)
    b = np.asarray(getattr(truth, "states", truth), dtype=np.int64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} decoded vs {b.size} true states")
    if a.size == 0:
        raise ValueError("empty state sequences")
    k = int(max(a.max(), b.max()))
    confusion = np.zeros((k, k))
    np.add.at(confusion, (a - 1, b - 1), 1)
    # the assignment maximum equals the best of all k! relabelings
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(confusion[rows, cols].sum() / a.size)


def pseudo_residuals(series, params, spec=None):
    """One-step-ahead pseudo-residuals for steps and turns.

    For ``t`` past the conditioning prefix the conditional CDF of each
    variable is the mixture of state CDFs (at their AR means) weighted by the
    one-step-ahead state probabilities; the residual is its standard-normal
    quantile. Turn CDFs are taken from -pi.
    """
    spec = _check_spec(series, params, spec)
    c = state_constants(params)
    logp = track_log_densities(series, params, c)
    delta = stationary_dist(params.tpm)
    ll, filtered = _kernels.forward(logp, params.tpm, delta)
    if not np.isfinite(ll):
        raise NumericError(f"forward recursion failed for track {series.track_id!r}", track=series.track_id)
    m, nu = _kernels.ar_means(series.steps, series.turns, params.mu_step, params.mu_turn,
                              c.phi_step, c.p_step, c.phi_turn, c.p_turn)
    T, n = logp.shape
    pred = np.vstack([delta, filtered[:-1] @ params.tpm])
    pred /= pred.sum(axis=1, keepdims=True)

    u_step = np.full(T, np.nan)
    u_turn = np.full(T, np.nan)
    ps0, pt0 = max(spec.p_step), max(spec.p_turn)
    t_s = np.arange(ps0, T)
    t_t = np.arange(pt0, T)
    fs = np.zeros(len(t_s))
    ft = np.zeros(len(t_t))
    for j in range(n):
        # gamma with shape 1/cv^2 and mean m: rate = shape / m
        fs += pred[t_s, j] * special.gammainc(c.shape[j], c.shape[j] * series.steps[t_s] / m[t_s, j])
        for idx, t in enumerate(t_t):
            ft[idx] += pred[t, j] * vonmises_cdf(series.turns[t], VonMises(nu[t, j], params.kappa_turn[j]))
    u_step[t_s] = fs
    u_turn[t_t] = ft
    n_clamped = 0
    for u in (u_step, u_turn):
        ok = ~np.isnan(u)
        low, high = u[ok] < CDF_CLAMP, u[ok] > 1 - CDF_CLAMP
        n_clamped += int(low.sum() + high.sum())
        u[ok] = np.clip(u[ok], CDF_CLAMP, 1 - CDF_CLAMP)
    return ResidualSeries(series.track_id, stats.norm.ppf(u_step), stats.norm.ppf(u_turn), u_step, u_turn, n_clamped)


def residual_summary(r, u=None):
    """Normality summary of a residual vector (NaNs ignored)."""
    r = np.asarray(r, dtype=float)
    r = r[~np.isnan(r)]
    out = {
        "n": int(r.size),
        "mean": float(np.mean(r)),
        "sd": float(np.std(r, ddof=1)),
        "skewness": float(stats.skew(r)),
        "excess_kurtosis": float(stats.kurtosis(r)),
        "lag1_acf": float(np.corrcoef(r[:-1], r[1:])[0, 1]),
    }
    if u is not None:
        u = np.sort(np.asarray(u, dtype=float)[~np.isnan(u)])
        k = u.size
        grid = np.arange(1, k + 1) / k
        out["pit_max_dev"] = float(max(np.max(grid - u), np.max(u - (grid - 1.0 / k))))
    return out

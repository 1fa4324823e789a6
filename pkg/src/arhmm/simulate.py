"""Generative sampling from the autoregressive HMM and study presets."""

from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from .decode import StateSequence
from .geometry import StepTurnSeries, wrap_angle
from .model import ModelSpec, Parameters, stationary_dist

__all__ = ["SimScenario", "simulate", "paper_scenario", "rng_streams", "PAPER_PHI_STEP", "PAPER_PHI_TURN"]

PAPER_PHI_STEP = {
    0: ((), ()),
    1: ((0.45,), (0.55,)),
    2: ((0.3, 0.15), (0.4, 0.15)),
    3: ((0.25, 0.1, 0.1), (0.35, 0.1, 0.1)),
}
PAPER_PHI_TURN = {
    0: ((), ()),
    1: ((0.5,), (0.6,)),
    2: ((0.3, 0.2), (0.4, 0.2)),
    3: ((0.3, 0.1, 0.1), (0.4, 0.1, 0.1)),
}


@dataclass
class SimScenario:
    spec: ModelSpec
    params: Parameters
    T: int = 2000
    seed: int = 0
    history_init: str = "steady"

    def __post_init__(self):
        if self.params.spec != self.spec:
            raise ValueError("scenario parameters do not match its spec")
        if self.T < 1:
            raise ValueError("T must be positive")
        if self.history_init != "steady":
            raise ValueError(f"unknown history_init rule {self.history_init!r}")


def paper_scenario(degree, T=2000, seed=0):
    """Two-state simulation preset with AR degree ``degree`` in both variables.

    Step means (20, 40) with SDs (5, 7), von Mises (0, 0) with
    concentrations (2, 12), and a symmetric 0.9-persistence transition matrix.
    """
    if degree not in PAPER_PHI_STEP:
        raise ValueError(f"degree must be one of 0, 1, 2, 3, got {degree!r}")
    mu = np.array([20.0, 40.0])
    sd = np.array([5.0, 7.0])
    params = Parameters(
        tpm=[[0.9, 0.1], [0.1, 0.9]],
        mu_step=mu,
        cv_step=sd / mu,
        mu_turn=[0.0, 0.0],
        kappa_turn=[2.0, 12.0],
        phi_step=PAPER_PHI_STEP[degree],
        phi_turn=PAPER_PHI_TURN[degree],
    )
    return SimScenario(ModelSpec.uniform(2, degree), params, T=T, seed=seed)


def rng_streams(seed, names):
    """Independent counter-based generators, one per name, keyed by ``seed``."""
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.Generator(np.random.Philox(c)) for n, c in zip(names, children)}


def simulate(sc, track_id="sim"):
    """Draw one series and its true state path.

    The first ``max_degree`` observations are drawn at the steady state (AR
    coefficients treated as zero).
    """
    p = sc.params
    n, T = p.n_states, sc.T
    rng = rng_streams(sc.seed, ["states", "steps", "turns"])
    u = rng["states"].random(T)
    shape = 1.0 / np.square(p.cv_step)
    # standard gamma / centred von Mises innovations for every (t, state)
    g = np.column_stack([rng["steps"].standard_gamma(shape[j], size=T) for j in range(n)])
    v = np.column_stack([rng["turns"].vonmises(0.0, p.kappa_turn[j], size=T) for j in range(n)])
    g = np.maximum(g, np.finfo(float).tiny)

    cum_delta = np.cumsum(stationary_dist(p.tpm))
    cum_tpm = np.cumsum(p.tpm, axis=1)
    warm = sc.spec.max_degree
    states = np.empty(T, dtype=np.int64)
    steps = np.empty(T)
    turns = np.empty(T)
    e_turn = np.empty(T, dtype=complex)
    e_mu = np.exp(1j * p.mu_turn)
    for t in range(T):
        cdf = cum_delta if t == 0 else cum_tpm[states[t - 1]]
        s = min(int(np.searchsorted(cdf, u[t], side="right")), n - 1)
        states[t] = s
        ps, pt = p.phi_step[s], p.phi_turn[s]
        if t < warm:
            m = p.mu_step[s]
            nu = p.mu_turn[s]
        else:
            k = len(ps)
            m = (1.0 - ps.sum()) * p.mu_step[s] + (np.dot(ps, steps[t - k : t][::-1]) if k else 0.0)
            k = len(pt)
            z = (1.0 - pt.sum()) * e_mu[s] + (np.dot(pt, e_turn[t - k : t][::-1]) if k else 0.0)
            nu = cmath.phase(z) if abs(z) >= 1e-12 else p.mu_turn[s]
        steps[t] = g[t, s] * m / shape[s]
        turns[t] = wrap_angle(nu + v[t, s])
        e_turn[t] = cmath.exp(1j * turns[t])
    return StepTurnSeries(track_id, steps, turns), StateSequence(track_id, states + 1)

import numpy as np
import pytest

from arhmm import ModelSpec, Parameters, StepTurnSeries


def random_params(rng, n_states, p_step, p_turn):
    tpm = rng.dirichlet(np.ones(n_states), size=n_states) * 0.6 + np.eye(n_states) * 0.4
    tpm /= tpm.sum(axis=1, keepdims=True)

    def rows(degrees):
        return [rng.dirichlet(np.ones(p)) * rng.uniform(0.05, 0.9) if p else np.zeros(0) for p in degrees]

    return Parameters(
        tpm=tpm,
        mu_step=rng.uniform(5, 50, n_states),
        cv_step=rng.uniform(0.15, 0.9, n_states),
        mu_turn=rng.uniform(-np.pi, np.pi, n_states),
        kappa_turn=rng.uniform(0.2, 20, n_states),
        phi_step=rows(p_step),
        phi_turn=rows(p_turn),
    )


def random_instance(rng, n_states=None, T=None, max_degree=2):
    """Small random model and data for brute-force comparisons."""
    n = n_states or int(rng.integers(2, 4))
    T = T or int(rng.integers(4, 9))
    spec = ModelSpec(n, rng.integers(0, max_degree + 1, n), rng.integers(0, max_degree + 1, n))
    params = random_params(rng, n, spec.p_step, spec.p_turn)
    series = StepTurnSeries("r", rng.gamma(3.0, 8.0, T), rng.uniform(-np.pi, np.pi, T))
    return spec, params, series


def as_plain(params):
    return {
        "tpm": np.asarray(params.tpm),
        "mu_step": list(params.mu_step),
        "cv_step": list(params.cv_step),
        "mu_turn": list(params.mu_turn),
        "kappa_turn": list(params.kappa_turn),
        "phi_step": [list(r) for r in params.phi_step],
        "phi_turn": [list(r) for r in params.phi_turn],
    }


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)

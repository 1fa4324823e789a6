import math

import numpy as np
import pytest
from conftest import as_plain, random_instance, random_params
from oracles import density_matrix, enumerate_loglik

from arhmm import _kernels
from arhmm.geometry import StepTurnSeries
from arhmm.likelihood import (
    Objective,
    PenaltyConfig,
    PooledData,
    cond_loglik,
    effective_sample_size,
    penalized_cond_loglik,
    penalty,
    smooth_l1,
    state_density,
    track_log_densities,
)
from arhmm.model import ModelSpec, permute_states, to_working
from arhmm.simulate import paper_scenario, simulate

BACKENDS = ["python"] + (["cython"] if _kernels.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def kernels(request):
    return _kernels.get_backend(request.param)


class TestAgainstEnumeration:
    def test_random_instances(self, kernels):
        rng = np.random.default_rng(5)
        for _ in range(25):
            _, params, series = random_instance(rng)
            ref = enumerate_loglik(series.steps, series.turns, as_plain(params))
            assert cond_loglik([series], params, kernels) == pytest.approx(ref, rel=1e-10)

    def test_density_factors(self, kernels):
        rng = np.random.default_rng(6)
        for _ in range(10):
            spec, params, series = random_instance(rng)
            ref = density_matrix(series.steps, series.turns, as_plain(params))
            got = np.exp(track_log_densities(series, params, kernels=kernels))
            np.testing.assert_allclose(got, ref, rtol=1e-11)
            scalar = [[state_density(series, params, spec, t + 1, j) for j in range(spec.n_states)]
                      for t in range(len(series))]
            np.testing.assert_allclose(scalar, ref, rtol=1e-11)

    def test_ones_substitution(self):
        rng = np.random.default_rng(8)
        params = random_params(rng, 2, (2, 0), (1, 3))
        series = StepTurnSeries("s", rng.gamma(3, 5, 6), rng.uniform(-3, 3, 6))
        plain = as_plain(params)
        # state 1: steps from t=3, turns from t=2; state 2: steps from t=1, turns from t=4
        d = density_matrix(series.steps, series.turns, plain)
        assert state_density(series, params, params.spec, 1, 0) == 1.0
        assert state_density(series, params, params.spec, 2, 0) == pytest.approx(d[1, 0])
        assert d[1, 0] != 1.0
        assert state_density(series, params, params.spec, 1, 1) == pytest.approx(d[0, 1])


class TestProperties:
    def setup_method(self):
        self.sc = paper_scenario(2, T=300, seed=11)
        self.a, _ = simulate(self.sc, "a")
        self.b, _ = simulate(paper_scenario(2, T=200, seed=12), "b")

    def test_track_additivity(self):
        p = self.sc.params
        assert cond_loglik([self.a, self.b], p) == pytest.approx(cond_loglik([self.a], p) + cond_loglik([self.b], p), rel=1e-13)

    def test_permutation_invariance(self):
        p = self.sc.params.replace(tpm=[[0.85, 0.15], [0.05, 0.95]])
        assert cond_loglik([self.a], permute_states(p, [1, 0])) == pytest.approx(cond_loglik([self.a], p), rel=1e-12)

    def test_lambda_monotone(self):
        vals = [penalized_cond_loglik([self.a], self.sc.params, pen=PenaltyConfig(lam)) for lam in (0, 0.1, 1, 10, 100)]
        assert all(x > y for x, y in zip(vals, vals[1:]))

    def test_lambda_zero_is_unpenalised(self):
        p = self.sc.params
        assert penalized_cond_loglik([self.a], p, pen=PenaltyConfig(0.0)) == cond_loglik([self.a], p)

    def test_penalty_near_l1(self):
        p = self.sc.params
        l1 = sum(np.abs(r).sum() for r in p.phi_step + p.phi_turn)
        eps = 1e-6
        assert 0 <= penalty(p, eps) - l1 <= 8 * eps

    def test_smooth_l1(self):
        assert smooth_l1(0.0, 1e-3) == pytest.approx(1e-3)
        assert smooth_l1(-2.0, 1e-6) == pytest.approx(2.0, rel=1e-12)

    def test_spec_mismatch(self):
        with pytest.raises(ValueError):
            penalized_cond_loglik([self.a], self.sc.params, spec=ModelSpec.uniform(2, 1))

    def test_effective_sample_size(self):
        spec = ModelSpec(2, (1, 3), (0, 2))
        assert effective_sample_size([self.a, self.b], spec) == ((300 - 3) + (300 - 2) + (200 - 3) + (200 - 2)) / 2

    def test_pooled_data_rejects_empty(self):
        with pytest.raises(ValueError):
            PooledData([])


class TestObjective:
    @pytest.mark.parametrize("lam", [0.0, 3.0])
    def test_gradient_matches_finite_differences(self, lam, kernels):
        rng = np.random.default_rng(21)
        s, _ = simulate(paper_scenario(2, T=150, seed=4))
        spec = ModelSpec(2, (2, 1), (1, 2))
        obj = Objective([s], spec, PenaltyConfig(lam), kernels)
        for _ in range(3):
            p = random_params(rng, 2, spec.p_step, spec.p_turn)
            w = to_working(p, spec)
            f, g = obj.value_and_grad(w)
            assert f == pytest.approx(obj.value(w), rel=1e-12)
            fd = np.empty_like(w)
            for i in range(len(w)):
                h = 1e-5 * max(1.0, abs(w[i]))
                e = np.zeros_like(w)
                e[i] = h
                fd[i] = (obj.value(w + e) - obj.value(w - e)) / (2 * h)
            scale = np.max(np.abs(fd))
            np.testing.assert_allclose(g, fd, rtol=1e-5, atol=1e-5 * scale)

    def test_non_finite_is_inf(self):
        s = StepTurnSeries("s", [1.0, 2.0, 3.0], [0.0, 0.1, 0.2])
        spec = ModelSpec.uniform(2, 0)
        obj = Objective([s], spec)
        w = np.zeros(10)
        w[2:4] = 800.0  # step means overflow to inf
        assert obj.value(w) == math.inf
        assert obj.value_and_grad(w)[0] == math.inf

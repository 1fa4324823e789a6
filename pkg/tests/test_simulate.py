import numpy as np
import pytest

from arhmm.model import ModelSpec, Parameters
from arhmm.simulate import PAPER_PHI_STEP, PAPER_PHI_TURN, SimScenario, paper_scenario, rng_streams, simulate


class TestScenario:
    def test_table_values(self):
        p = paper_scenario(0).params
        np.testing.assert_allclose(p.mu_step, [20, 40])
        np.testing.assert_allclose(p.sigma_step, [5, 7])
        np.testing.assert_allclose(p.kappa_turn, [2, 12])
        np.testing.assert_allclose(p.tpm, [[0.9, 0.1], [0.1, 0.9]])

    @pytest.mark.parametrize("d", [0, 1, 2, 3])
    def test_degrees(self, d):
        sc = paper_scenario(d)
        assert sc.spec == ModelSpec.uniform(2, d)
        assert len(PAPER_PHI_STEP[d][0]) == len(PAPER_PHI_TURN[d][1]) == d

    @pytest.mark.parametrize("d", [4, -1, 1.5])
    def test_invalid_degree(self, d):
        with pytest.raises(ValueError):
            paper_scenario(d)

    def test_spec_mismatch(self):
        with pytest.raises(ValueError):
            SimScenario(ModelSpec.uniform(2, 1), paper_scenario(2).params)


class TestSimulate:
    def test_deterministic(self):
        a, sa = simulate(paper_scenario(2, T=300, seed=5))
        b, sb = simulate(paper_scenario(2, T=300, seed=5))
        np.testing.assert_array_equal(a.steps, b.steps)
        np.testing.assert_array_equal(a.turns, b.turns)
        np.testing.assert_array_equal(sa.states, sb.states)

    def test_seed_changes_output(self):
        a, _ = simulate(paper_scenario(2, T=50, seed=5))
        b, _ = simulate(paper_scenario(2, T=50, seed=6))
        assert not np.array_equal(a.steps, b.steps)

    def test_prefix_is_stable_across_lengths(self):
        a, sa = simulate(paper_scenario(1, T=100, seed=9))
        b, sb = simulate(paper_scenario(1, T=400, seed=9))
        np.testing.assert_array_equal(sa.states, sb.states[:100])

    def test_support(self):
        s, z = simulate(paper_scenario(3, T=3000, seed=2))
        assert np.all(s.steps > 0)
        assert np.all((s.turns > -np.pi) & (s.turns <= np.pi))
        assert set(np.unique(z.states)) == {1, 2}

    def test_state_frequencies(self):
        p = Parameters(tpm=[[0.8, 0.2], [0.4, 0.6]], mu_step=[5, 30], cv_step=[0.3, 0.3], mu_turn=[0, 0],
                       kappa_turn=[1, 10], phi_step=[[], []], phi_turn=[[], []])
        _, z = simulate(SimScenario(p.spec, p, T=60000, seed=3))
        assert np.mean(z.states == 1) == pytest.approx(2 / 3, abs=0.015)
        switches = np.mean(z.states[1:][z.states[:-1] == 1] == 2)
        assert switches == pytest.approx(0.2, abs=0.01)

    def test_within_state_autocorrelation(self):
        # a single persistent state: the steps follow the AR mean recursion
        p = Parameters(tpm=[[1.0]], mu_step=[20.0], cv_step=[0.1], mu_turn=[0.0], kappa_turn=[50.0],
                       phi_step=[[0.6]], phi_turn=[[0.5]])
        s, _ = simulate(SimScenario(p.spec, p, T=50000, seed=4))
        x = s.steps
        assert x.mean() == pytest.approx(20.0, rel=0.01)
        # E[x_t | x_{t-1}] = 0.6 x_{t-1} + 8, so the lag-1 autocorrelation is 0.6
        assert np.corrcoef(x[:-1], x[1:])[0, 1] == pytest.approx(0.6, abs=0.02)
        slope, intercept = np.polyfit(x[:-1], x[1:], 1)
        assert slope == pytest.approx(0.6, abs=0.02)
        assert intercept == pytest.approx(8.0, abs=0.5)

    def test_conditional_sd_tracks_mean(self):
        p = Parameters(tpm=[[1.0]], mu_step=[20.0], cv_step=[0.2], mu_turn=[0.0], kappa_turn=[5.0],
                       phi_step=[[0.5]], phi_turn=[[]])
        s, _ = simulate(SimScenario(p.spec, p, T=100000, seed=8))
        prev, cur = s.steps[:-1], s.steps[1:]
        m = 0.5 * prev + 10.0
        ratio = cur / m  # gamma with mean 1 and cv 0.2 whatever the mean
        assert ratio.mean() == pytest.approx(1.0, abs=0.005)
        assert ratio.std() == pytest.approx(0.2, rel=0.02)


def test_streams_are_independent():
    a, b = rng_streams(1, ["x", "y"]), rng_streams(1, ["x", "y"])
    ax, ay = a["x"].random(5), a["y"].random(5)
    assert not np.array_equal(ax, ay)
    np.testing.assert_array_equal(ax, b["x"].random(5))

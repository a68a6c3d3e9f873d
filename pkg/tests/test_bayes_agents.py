import numpy as np
import pytest

from irl_forge import bayes_agents
from irl_forge.errors import InputError


class TestSHTAgent:
    """Exact SHT policies on the observation-count lattice."""

    def test_kernel_is_stochastic(self):
        agent = bayes_agents.sht_agent(20.0, 20.0, accuracy=0.7)
        np.testing.assert_allclose(agent.kernel.sum(axis=1), 1.0)
        assert agent.expected_tau > 0

    def test_symmetric_costs_symmetric_kernel(self):
        agent = bayes_agents.sht_agent(20.0, 20.0, accuracy=0.7)
        assert agent.kernel[0, 0] == pytest.approx(agent.kernel[1, 1], abs=1e-10)
        low, high = agent.thresholds
        assert low == pytest.approx(1.0 - high, abs=1e-10)

    def test_cheap_errors_stop_immediately(self):
        agent = bayes_agents.sht_agent(0.1, 0.1, accuracy=0.7, c=1.0)
        assert agent.expected_tau == 0.0
        assert agent.stop[agent.depth]

    def test_costlier_error_is_rarer(self):
        agent = bayes_agents.sht_agent(80.0, 40.0, accuracy=0.7)
        # declaring 2 under state 1 costs L1, so it happens less than the reverse
        assert agent.kernel[0, 1] < agent.kernel[1, 0]

    def test_monte_carlo_agrees(self):
        agent = bayes_agents.sht_agent(60.0, 30.0, accuracy=0.7)
        kernel, tau = bayes_agents.simulate_sht(agent, 4000, np.random.default_rng(1))
        np.testing.assert_allclose(kernel, agent.kernel, atol=0.05)
        assert tau == pytest.approx(agent.expected_tau, rel=0.1)

    def test_accuracy_range(self):
        with pytest.raises(InputError):
            bayes_agents.sht_agent(1.0, 1.0, accuracy=0.5)


class TestSearchAgent:
    """Greedy search for a nonmoving target."""

    @pytest.fixture
    def agent(self):
        return bayes_agents.search_agent([1.0, 2.0, 1.0], [0.3, 0.2, 0.4], [0.5, 0.3, 0.2])

    def test_first_look(self, agent):
        # argmax pi (1 - overlook) / c = (0.35, 0.12, 0.12)
        assert agent.path[0] == 0

    def test_visits_cover_target_cell(self, agent):
        # looks at the true cell follow a geometric law: 1 / (1 - overlook)
        np.testing.assert_allclose(np.diag(agent.visits), 1.0 / (1.0 - np.array([0.3, 0.2, 0.4])), rtol=1e-9)

    def test_monte_carlo_agrees(self, agent):
        est = bayes_agents.simulate_search(agent, 20000, np.random.default_rng(2))
        np.testing.assert_allclose(est, agent.visits, atol=0.1)

    def test_expected_cost(self, agent):
        assert agent.expected_cost() == pytest.approx(np.einsum("x,xa,a->", agent.prior, agent.visits, agent.costs))

    def test_invalid_overlook(self):
        with pytest.raises(InputError):
            bayes_agents.search_agent([1.0, 1.0], [0.5, 1.0], [0.5, 0.5])


class TestQuickestAgents:
    """Shiryaev detectors tuned on common random numbers."""

    def test_prior(self):
        prior = bayes_agents.geometric_change_prior(5, 0.3)
        assert prior.sum() == pytest.approx(1.0)
        assert np.all(np.diff(prior) < 0)

    def test_higher_penalty_fewer_false_alarms(self):
        run = bayes_agents.quickest_agents([0.5, 50.0], N=10, rho=0.2, paths=500, seed=4)
        ds = run.dataset
        assert ds.false_alarm()[1] <= ds.false_alarm()[0]
        assert run.thresholds[1] >= run.thresholds[0]
        np.testing.assert_allclose(ds.stop_probs.sum(axis=2), 1.0)

    def test_chosen_thresholds_minimize_cost(self):
        run = bayes_agents.quickest_agents([2.0, 10.0], N=8, rho=0.25, paths=300, seed=5)
        best = run.costs.min(axis=1)
        observed = run.dataset.delay() + np.array([2.0, 10.0]) * run.dataset.false_alarm()
        np.testing.assert_allclose(observed, best, rtol=1e-12)

    def test_reproducible(self):
        a = bayes_agents.quickest_agents([1.0], N=6, paths=100, seed=7)
        b = bayes_agents.quickest_agents([1.0], N=6, paths=100, seed=7)
        np.testing.assert_array_equal(a.dataset.stop_probs, b.dataset.stop_probs)

import numpy as np
import pytest

from irl_forge import multiagent, rp, sim
from irl_forge.errors import (
    DimensionMismatch,
    InputError,
    NodeBudgetExceeded,
    NotCoordinated,
    NotNashRational,
    WitnessOutOfBounds,
)
from irl_forge.multiagent import AggregateDataset, MultiAgentDataset
from irl_forge.rp import BudgetDataset
from irl_forge.solvers import FeasibilityResult

ALPHA = np.array([[1.0, 2.0], [2.0, 1.0]])
CYCLE = np.array([[0.0, 0.5], [0.5, 0.0]])


def agent_consistent(alpha, beta_p):
    return rp.check_garp(BudgetDataset(alpha, beta_p, normalize=False)).consistent


class TestAggregateDataset:
    def test_lower_bounds_must_fit(self):
        with pytest.raises(InputError):
            AggregateDataset(ALPHA, CYCLE, np.stack([CYCLE, CYCLE]))

    def test_shapes(self):
        with pytest.raises(DimensionMismatch):
            AggregateDataset(ALPHA, CYCLE, np.zeros((2, 3, 2)))

    def test_single_agent_bounds_promoted(self):
        assert AggregateDataset(ALPHA, CYCLE, np.zeros((2, 2))).P == 1


class TestPareto:
    """Coordination test by mixed-integer feasibility."""

    def test_planner_data_coordinated(self):
        data, _ = sim.gen_pareto_dataset(P=2, N=4, m=2, seed=3)
        res = multiagent.pareto_test(data)
        assert res.coordinated
        np.testing.assert_allclose(res.personalized.sum(axis=0), data.beta, atol=1e-8)
        assert np.all(res.personalized >= data.lower - 1e-12)
        assert all(agent_consistent(data.alpha, b) for b in res.personalized)
        assert len(res.certificates) == 2

    def test_violating_aggregate_split_by_search(self):
        # an equal split inherits the cycle; giving each agent one observation does not
        data = AggregateDataset(ALPHA, CYCLE, np.zeros((2, 2, 2)))
        res = multiagent.pareto_test(data)
        assert res.coordinated
        assert res.nodes >= 1
        np.testing.assert_allclose(res.personalized.sum(axis=0), CYCLE, atol=1e-8)
        assert all(agent_consistent(ALPHA, b) for b in res.personalized)

    def test_pinned_bounds_violating(self):
        other = np.full((2, 2), 0.1)
        data = AggregateDataset(ALPHA, CYCLE + other, np.stack([CYCLE, other]))
        with pytest.raises(NotCoordinated) as info:
            multiagent.pareto_test(data)
        assert info.value.evidence.shape == (2, 2, 2)

    def test_pinned_bounds_consistent(self):
        data, shares = sim.gen_pareto_dataset(P=2, N=3, m=2, seed=5, lower_fraction=1.0)
        res = multiagent.pareto_test(data)
        assert res.coordinated
        np.testing.assert_allclose(res.personalized, shares)

    def test_node_budget_gives_undecided(self, monkeypatch):
        def exhausted(*args, **kwargs):
            raise NodeBudgetExceeded("budget")

        monkeypatch.setattr(multiagent, "milp_feasible", exhausted)
        res = multiagent.pareto_test(AggregateDataset(ALPHA, CYCLE, np.zeros((2, 2, 2))), node_budget=1)
        assert res.status == "undecided"
        assert not res.coordinated

    @pytest.mark.parametrize("slack, ok", [(1e-12, True), (1e-3, False)])
    def test_witness_below_bounds(self, monkeypatch, slack, ok):
        data = AggregateDataset(ALPHA, CYCLE, np.zeros((2, 2, 2)))
        _, L = multiagent.pareto_system(data)
        split = np.array([[[0.0, 0.5], [-slack, 0.0]], [[0.0, 0.0], [0.5 + slack, 0.0]]])
        witness = np.zeros(L.n_vars)
        for p in range(2):
            for k in range(2):
                witness[L.beta(p, k)] = split[p, k]
        monkeypatch.setattr(multiagent, "milp_feasible",
                            lambda *a, **kw: FeasibilityResult("feasible", witness, 0.0, nodes=1))
        if not ok:
            with pytest.raises(WitnessOutOfBounds):
                multiagent.pareto_test(data)
            return
        res = multiagent.pareto_test(data)
        assert np.all(res.personalized >= data.lower)
        np.testing.assert_allclose(res.personalized.sum(axis=0), CYCLE, rtol=0, atol=1e-15)
        np.testing.assert_array_equal(res.personalized[0, 1], [0.0, 0.0])

    def test_binary_rule_is_closure(self):
        rule = multiagent.pareto_binary_rule(ALPHA, CYCLE)
        np.testing.assert_array_equal(rule, [[0.0, 1.0], [1.0, 0.0]])


class TestNashPotential:
    """Concave potential games."""

    def test_generated_game(self):
        data = sim.gen_potential_dataset(P=3, N=6, m=2, seed=4)
        cert, V = multiagent.nash_potential_test(data)
        assert cert.lam.shape == (3, 6)
        assert np.all(cert.lam >= 1.0 - 1e-9)
        for k in range(data.N):
            assert V(data.beta[:, k, :]) == pytest.approx(cert.phi[k], abs=1e-7)

    def test_single_agent_cycle(self):
        with pytest.raises(NotNashRational):
            multiagent.nash_potential_test(MultiAgentDataset(ALPHA, CYCLE))

    def test_profile_shape_checked(self):
        _, V = multiagent.nash_potential_test(sim.gen_potential_dataset(P=2, N=3, m=2, seed=1))
        with pytest.raises(DimensionMismatch):
            V(np.ones((3, 2)))

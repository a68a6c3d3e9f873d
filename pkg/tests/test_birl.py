import numpy as np
import pytest

from irl_forge import bayes_agents, birl
from irl_forge.birl import BehaviorDataset, ChoiceData, QuickestDataset, SearchDataset
from irl_forge.errors import CertificateMismatch, DimensionMismatch, InputError, NonFinite, NotOptimal, NotUMRI

UNINFORMATIVE = np.full((2, 2), 0.5)


@pytest.fixture
def umri_data():
    rng = np.random.default_rng(31)
    spec = birl.random_umri_spec(rng, X=2, A=2, M=3, menu_size=4, cost_weight=0.2)
    ds, chosen = birl.simulate_umri(spec)
    return spec, ds, chosen


class TestBehaviorDataset:
    def test_rows_must_sum_to_one(self):
        with pytest.raises(InputError):
            BehaviorDataset([0.5, 0.5], [[[0.5, 0.4], [0.5, 0.5]]])

    def test_prior_dimension(self):
        with pytest.raises(DimensionMismatch):
            BehaviorDataset([1.0], [UNINFORMATIVE])

    def test_posteriors_of_unused_actions(self):
        ds = BehaviorDataset([0.5, 0.5], [[[1.0, 0.0], [1.0, 0.0]]])
        post, used = birl.revealed_posteriors(ds)
        assert used.tolist() == [[True, False]]
        np.testing.assert_allclose(post[0, 0], [0.5, 0.5])
        assert np.all(np.isnan(post[0, 1]))


class TestBrp:
    """NIAS/NIAC feasibility."""

    def test_simulated_agent_passes(self, umri_data):
        _, ds, _ = umri_data
        cert = birl.brp_feasible(ds)
        assert cert.rewards.shape == ds.kernels.shape
        assert np.all(cert.z >= 0)
        assert birl.brp_violation(ds, cert.rewards, cert.z) <= 1e-8
        assert birl.niac_cycles_hold(ds, cert.rewards, tol=1e-8)

    def test_true_rewards_satisfy_niac(self, umri_data):
        spec, ds, _ = umri_data
        assert birl.niac_cycles_hold(ds, spec.rewards, tol=1e-9)
        z = birl.niac_pairwise_z(ds, spec.rewards)
        assert z is not None
        assert birl.brp_violation(ds, spec.rewards, z) <= 1e-8

    @pytest.mark.parametrize("seed", range(5))
    def test_necessity_across_agents(self, seed):
        spec = birl.random_umri_spec(np.random.default_rng(seed), X=3, A=3, M=3, menu_size=4, cost_weight=0.1)
        ds, _ = birl.simulate_umri(spec)
        birl.brp_feasible(ds, margin=0.0)

    def test_identical_posteriors_break_strict_nias(self):
        ds = BehaviorDataset([0.5, 0.5], [UNINFORMATIVE, UNINFORMATIVE])
        birl.brp_feasible(ds)
        with pytest.raises(NotUMRI) as info:
            birl.brp_feasible(ds, margin=1e-3)
        assert info.value.evidence == {"margin": 1e-3}

    def test_unknown_mode(self, umri_data):
        with pytest.raises(InputError):
            birl.brp_feasible(umri_data[1], mode="mean")

    def test_fixed_z(self, umri_data):
        _, ds, _ = umri_data
        cert = birl.brp_feasible(ds, fixed_z=np.zeros(ds.M))
        np.testing.assert_allclose(cert.z, 0.0, atol=1e-12)

    def test_violation_shape_checked(self, umri_data):
        _, ds, _ = umri_data
        with pytest.raises(CertificateMismatch):
            birl.brp_violation(ds, np.zeros((1, 2, 2)), np.zeros(ds.M))


class TestInfoCost:
    """Reconstructed information cost of a query kernel."""

    def test_observed_kernel_bounded_below(self, umri_data):
        _, ds, _ = umri_data
        cert = birl.brp_feasible(ds)
        for m in range(ds.M):
            assert birl.reconstruct_info_cost(cert, ds, ds.kernels[m]) >= cert.z[m] - 1e-9

    def test_query_shape(self, umri_data):
        _, ds, _ = umri_data
        cert = birl.brp_feasible(ds)
        with pytest.raises(DimensionMismatch):
            birl.reconstruct_info_cost(cert, ds, np.eye(3))


class TestInverseSHT:
    """Misclassification costs from stopping behavior."""

    @pytest.fixture(scope="class")
    def sht_ds(self):
        agents = [bayes_agents.sht_agent(L1, L2, accuracy=0.7, c=1.0, depth=40)
                  for L1, L2 in [(5.0, 5.0), (20.0, 5.0), (5.0, 30.0)]]
        return bayes_agents.sht_dataset(agents)

    def test_costs_recovered(self, sht_ds):
        costs = birl.inverse_sht(sht_ds)
        assert costs.L1.shape == (3,) and costs.L2.shape == (3,)
        assert np.all(costs.L1 >= 0) and np.all(costs.L2 >= 0)
        np.testing.assert_array_equal(costs.certificate.z, sht_ds.continue_costs)

    def test_binary_only(self):
        with pytest.raises(DimensionMismatch):
            birl.SHTDataset(np.full(3, 1 / 3), np.full((1, 3, 2), 0.5), [1.0])

    def test_continue_costs_required(self):
        with pytest.raises(InputError):
            birl.SHTDataset([0.5, 0.5], [UNINFORMATIVE], [])


class TestInverseSearch:
    """Search costs from visit counts."""

    def test_optimal_searchers(self):
        prior = np.array([0.5, 0.3, 0.2])
        overlook = np.array([0.3, 0.2, 0.4])
        agents = [bayes_agents.search_agent(c, overlook, prior)
                  for c in ([1.0, 1.0, 1.0], [1.0, 3.0, 1.0], [2.0, 1.0, 5.0])]
        costs = birl.inverse_search(bayes_agents.search_dataset(agents))
        np.testing.assert_array_equal(costs[:, 0], 1.0)
        assert np.all(costs >= 0)

    def test_dominated_searcher(self):
        visits = np.ones((2, 2, 2))
        visits[0] *= 2.0
        with pytest.raises(NotOptimal) as info:
            birl.inverse_search(SearchDataset([0.5, 0.5], visits))
        assert info.value.evidence == {"environment": 1}


class TestInverseQuickest:
    """False-alarm penalties from declared change times."""

    def test_tuned_detectors(self):
        run = bayes_agents.quickest_agents([1.0, 5.0, 20.0], N=10, rho=0.2, paths=400, seed=3)
        penalties = birl.inverse_quickest(run.dataset)
        assert penalties.shape == (3,)
        assert np.all(penalties >= 0)

    def test_dominated_detector(self):
        # environment 1 is both later and more often early than environment 2
        worse = [[0.0, 1.0], [1.0, 0.0]]
        better = [[1.0, 0.0], [0.0, 1.0]]
        ds = QuickestDataset([0.5, 0.5], [worse, better])
        np.testing.assert_allclose(ds.delay(), [0.5, 0.0])
        np.testing.assert_allclose(ds.false_alarm(), [0.5, 0.0])
        with pytest.raises(NotOptimal):
            birl.inverse_quickest(ds)


class TestLogit:
    """Multinomial logit maximum likelihood."""

    def test_recovers_parameter(self):
        rng = np.random.default_rng(17)
        theta = np.array([1.0, -0.5])
        psi = rng.normal(size=(4000, 3, 2))
        data = ChoiceData(psi, birl.sample_choices(psi, theta, rng))
        est = birl.logit_mle(data, iters=5000, lr=0.5, tol=1e-8)
        np.testing.assert_allclose(est, theta, atol=0.12)

    def test_binary_choice_matches_logistic_regression(self):
        linear_model = pytest.importorskip("sklearn.linear_model")
        rng = np.random.default_rng(23)
        psi = rng.normal(size=(800, 2, 2))
        data = ChoiceData(psi, birl.sample_choices(psi, [0.8, -0.4], rng))
        est = birl.logit_mle(data, iters=20_000, lr=0.5, tol=1e-10)
        ref = linear_model.LogisticRegression(penalty=None, fit_intercept=False, tol=1e-10, max_iter=5000)
        ref.fit(psi[:, 1] - psi[:, 0], data.freq[:, 1].astype(int))
        np.testing.assert_allclose(est, ref.coef_[0], atol=1e-3)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        psi = rng.normal(size=(20, 3, 2))
        data = ChoiceData(psi, rng.dirichlet(np.ones(3), size=20))
        theta, h = np.array([0.3, -0.2]), 1e-6
        fd = [(birl.logit_loglik(data, theta + h * e) - birl.logit_loglik(data, theta - h * e)) / (2 * h)
              for e in np.eye(2)]
        np.testing.assert_allclose(birl.logit_gradient(data, theta), fd, atol=1e-7)

    def test_divergence_reported(self):
        rng = np.random.default_rng(3)
        psi = rng.normal(size=(10, 2, 1))
        data = ChoiceData(psi, birl.sample_choices(psi, [1.0], rng))
        with pytest.raises(NonFinite):
            birl.logit_mle(data, lr=1e12, iters=100)

    def test_weights_default(self):
        data = ChoiceData(np.zeros((2, 2, 1)), [[1.0, 0.0], [0.5, 0.5]])
        np.testing.assert_array_equal(data.weights, [1.0, 1.0])

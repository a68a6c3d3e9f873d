import numpy as np
import pytest

from irl_forge import experiments, langevin
from irl_forge.config import CMDPConfig, LangevinConfig, SwarmConfig, SwitchingConfig
from irl_forge.errors import DimensionMismatch, InputError, NonUnichainDetected
from irl_forge.experiments import CMDPModel
from irl_forge.langevin import RewardEstimate


@pytest.fixture
def soft_model():
    cfg = CMDPConfig()
    return CMDPModel(cfg.P, cfg.rho, cfg.cost, gamma=cfg.gamma, lam=1.0)


class TestSphericalMap:
    """Angle coordinates for stochastic policies."""

    def test_rows_on_simplex(self, rng):
        phi = experiments.spherical_map(rng.uniform(-5, 5, size=(10, 4, 3)))
        assert phi.shape == (10, 4, 4)
        assert np.all(phi >= 0)
        np.testing.assert_allclose(phi.sum(axis=-1), 1.0)

    def test_two_actions(self):
        phi = experiments.spherical_map([[0.3]])
        np.testing.assert_allclose(phi, [[np.cos(0.3) ** 2, np.sin(0.3) ** 2]])

    def test_inverse(self, rng):
        phi = rng.dirichlet(np.ones(4), size=6)
        alpha = experiments.inverse_spherical(phi)
        assert np.all((alpha >= 0) & (alpha <= np.pi / 2))
        np.testing.assert_allclose(experiments.spherical_map(alpha), phi, atol=1e-12)

    def test_folding_keeps_policy(self, rng):
        alpha = rng.uniform(-10, 10, size=(50, 2))
        folded = experiments.fold_angles(alpha)
        assert np.all((folded >= 0) & (folded <= np.pi / 2))
        np.testing.assert_allclose(experiments.spherical_map(folded), experiments.spherical_map(alpha), atol=1e-12)


class TestCMDPModel:
    def test_joint_is_stationary(self, soft_model):
        phi = np.array([[0.3, 0.7], [0.6, 0.4]])
        joint = soft_model.joint(phi)
        assert joint.sum() == pytest.approx(1.0)
        s = joint.sum(axis=1)
        P_phi = np.einsum("iu,uij->ij", phi, soft_model.P)
        np.testing.assert_allclose(s @ P_phi, s, atol=1e-12)

    def test_absorbing_states_rejected(self):
        model = CMDPModel([np.eye(2), np.eye(2)], np.zeros((2, 2)), np.zeros((2, 2)))
        with pytest.raises(NonUnichainDetected):
            model.joint(np.full((2, 2), 0.5))

    def test_shapes(self):
        with pytest.raises(DimensionMismatch):
            CMDPModel([np.eye(2), np.eye(2)], np.zeros((3, 2)), np.zeros((2, 2)))

    def test_row_stochastic(self):
        with pytest.raises(InputError):
            CMDPModel([[[0.5, 0.6], [0.5, 0.5]]] * 2, np.zeros((2, 2)), np.zeros((2, 2)))

    def test_penalty(self, soft_model):
        assert soft_model.penalized(3.0, 3.0) == pytest.approx(3.0 - 4.0)

    def test_sample_path_matches_stationary(self, soft_model, rng):
        alpha = np.array([0.7, 0.9])
        pairs = np.broadcast_to(alpha, (2, 300, 2))
        r = soft_model.sample_path_reward(pairs, 2000, rng)
        np.testing.assert_array_equal(r[0], r[1])
        assert r[0].mean() == pytest.approx(soft_model.reward(alpha[None])[0], abs=1.0)

    @pytest.mark.parametrize("gradient", ["stationary", "sample_path"])
    def test_spsa_gradient_unbiased(self, soft_model, gradient):
        horizon = 400
        oracle = experiments.cmdp_oracle(soft_model, gradient, horizon=horizon, c=0.05)
        n = 20_000 if gradient == "stationary" else 4000
        theta = np.array([0.7, 0.9])
        g = oracle.noisy_grad(np.tile(theta, (n, 1)), np.random.default_rng(9))
        se = g.std(axis=0) / np.sqrt(n)
        slack = 0.1 if gradient == "stationary" else 2.0
        assert np.all(np.abs(g.mean(axis=0) - oracle.fd_grad(theta)) < 4 * se + slack)


class TestOverlap:
    def test_top_cells(self):
        edges = [np.linspace(0.0, 1.0, 5)]
        est = RewardEstimate(edges, np.array([0.0, 0.0, 4.0, 0.0]), None, 1.0, "histogram")
        assert experiments.overlap_score(est, np.array([False, False, True, False])) == 1.0
        assert experiments.overlap_score(est, np.array([True, True, False, True])) == 0.0

    def test_generator_stationary(self):
        np.testing.assert_allclose(experiments.stationary_of_generator([[-1.0, 1.0], [2.0, -2.0]]), [2 / 3, 1 / 3])


class TestCMDPExperiment:
    """Penalized CMDP reward reconstruction."""

    small = dict(
        swarm=SwarmConfig(epsilon=1e-7, tau_min=5, tau_max=5, n_agents=200),
        sampler=LangevinConfig(variant="multikernel", mu=5e-6, pool=5, sigma=0.1, n_steps=300),
        horizon=20,
        grid=11,
    )

    @pytest.mark.parametrize("gradient", ["sample_path", "stationary"])
    def test_small_run(self, gradient):
        out = experiments.cmdp_experiment(seed=1, gradient=gradient, **self.small)
        assert out["J"].shape == (11, 11)
        assert out["R_true"].shape == (11, 11)
        assert 0.0 <= out["overlap"] <= 1.0
        assert np.all((out["samples"] >= 0) & (out["samples"] <= 1))
        assert out["samples"].shape == (240, 2)
        assert np.all(out["cloud"].path <= np.pi / 2)

    def test_samples_settle_on_constraint_band(self):
        out = experiments.cmdp_experiment(
            seed=3, gradient="stationary", grid=21,
            swarm=SwarmConfig(epsilon=1e-7, tau_min=5, tau_max=5, n_agents=2000),
            sampler=LangevinConfig(variant="multikernel", mu=5e-6, pool=50, sigma=0.1, n_chains=4, n_steps=3000),
        )
        assert np.mean(np.abs(out["B_samples"] - 1.0) < 0.1) >= 0.7

    def test_unknown_gradient(self):
        with pytest.raises(InputError):
            experiments.cmdp_experiment(gradient="exact", **self.small)

    def test_two_actions_only(self):
        P = (np.eye(2), np.eye(2)[::-1], np.full((2, 2), 0.5))
        with pytest.raises(InputError):
            experiments.cmdp_experiment(P=P, rho=np.zeros((2, 3)), cost=np.zeros((2, 3)), **self.small)

    def test_unknown_override(self):
        with pytest.raises(InputError):
            experiments.cmdp_experiment(budget=3)

    @pytest.mark.slow
    def test_samples_concentrate_on_constraint(self):
        out = experiments.cmdp_experiment(seed=0, jobs=4)
        assert out["overlap"] >= 0.6


class TestKLExperiment:
    """Relative-entropy and Bayesian-learning rewards."""

    small = dict(
        swarm=SwarmConfig(epsilon=1e-3, tau_min=20, tau_max=20, n_agents=100),
        sampler=LangevinConfig(variant="generalized", mu=5e-4, n_chains=2),
        bins=20,
    )

    def test_small_run(self):
        out = experiments.kl_experiment(seed=2, **self.small)
        assert out["trace_points"] == 2000
        assert out["passive"].path.shape == (1000, 2, 2)
        assert out["classical"].path.shape == (1000, 2, 2)
        assert out["d"].shape == (2,)
        assert np.all((out["d"] >= 0) & (out["d"] <= 1))
        assert out["modes"].shape[0] <= 2

    def test_bayesian_learning(self):
        out = experiments.kl_experiment(seed=2, mode="bayesian_learning", mh_samples=2000, **self.small)
        assert out["data"].shape == (100,)
        assert out["mh"].path.shape == (2000, 1, 2)
        assert out["d_classical"].shape == (2,) and out["d_passive"].shape == (2,)

    def test_data_reproducible(self):
        a = experiments.sample_mixture((0.0, 1.0), 2.0, 50, np.random.default_rng(3))
        b = experiments.sample_mixture((0.0, 1.0), 2.0, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_unknown_mode(self):
        with pytest.raises(InputError):
            experiments.kl_experiment(mode="entropy")

    @pytest.mark.slow
    def test_passive_matches_classical(self):
        out = experiments.kl_experiment(seed=0, jobs=4)
        assert out["trace_points"] == 1_000_000
        assert out["d"].max() <= 0.05
        top = out["modes"][0]
        assert min(np.abs(top - m).max() for m in ([0.0, 1.0], [1.0, -1.0])) <= 0.15

    @pytest.mark.slow
    def test_bayesian_learning_matches_mh(self):
        out = experiments.kl_experiment(seed=0, jobs=4, mode="bayesian_learning")
        assert out["d_classical"].max() <= 0.06
        assert out["d_passive"].max() <= 0.06


class TestSwitching:
    """Rewards that jump between regimes."""

    @pytest.fixture
    def two_regimes(self):
        return [langevin.quadratic_oracle(center=[-2.0]), langevin.quadratic_oracle(center=[2.0])]

    def test_one_oracle_per_regime(self, two_regimes):
        with pytest.raises(DimensionMismatch):
            experiments.switching_scenario(two_regimes[:1], n_steps=400)

    @pytest.mark.parametrize("kw", [dict(Q=((-1.0, 0.5), (1.0, -1.0))), dict(eta=2.0), dict(eta=0.0)])
    def test_config_validation(self, kw):
        with pytest.raises(InputError):
            SwitchingConfig(**kw)

    def test_single_regime(self):
        out = experiments.switching_scenario([langevin.quadratic_oracle(center=[1.5])], Q=((0.0,),), n_steps=2000)
        assert np.all(out["regimes"] == 0)
        assert out["accuracy"] == 1.0
        np.testing.assert_allclose(out["regime_modes"], [[1.5]], atol=1e-4)
        np.testing.assert_allclose(out["nu"], [1.0])
        assert out["window_means"].shape == (10, 1)

    def test_averaged_mode_and_case(self, two_regimes):
        out = experiments.switching_scenario(two_regimes, n_steps=400, eta=0.05)
        np.testing.assert_allclose(out["nu"], [0.5, 0.5])
        np.testing.assert_allclose(out["averaged_mode"], [0.0], atol=1e-4)
        assert out["case"] == "comparable"
        assert len(out["trace"]) == 400

    @pytest.mark.parametrize("eta, case", [(1e-4, "slow"), (0.5, "fast")])
    def test_case_label(self, two_regimes, eta, case):
        assert experiments.switching_scenario(two_regimes, n_steps=400, eta=eta)["case"] == case

    @pytest.mark.slow
    def test_slow_switching_tracked(self, two_regimes):
        out = experiments.switching_scenario(two_regimes, seed=3)
        assert out["accuracy"] >= 0.8

    @pytest.mark.slow
    def test_fast_switching_averages(self, two_regimes):
        out = experiments.switching_scenario(two_regimes, seed=3, eta=0.5)
        assert out["mode_estimate"][0] == pytest.approx(out["averaged_mode"][0], abs=0.2)

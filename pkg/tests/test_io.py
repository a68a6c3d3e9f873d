import json

import numpy as np
import pytest

from conftest import write_budget
from irl_forge import io
from irl_forge.birl import BehaviorDataset, ChoiceData, QuickestDataset, SearchDataset, SHTDataset
from irl_forge.detect import NoisyDataset
from irl_forge.errors import DimensionMismatch, InputError
from irl_forge.langevin import GradientTrace, SampleCloud, estimate_reward
from irl_forge.multiagent import AggregateDataset, MultiAgentDataset
from irl_forge.rp import BudgetDataset, RationalityCertificate

ALPHA = np.array([[1.0, 2.0], [2.0, 1.0], [0.5, 3.0]])
BETA = np.array([[0.3, 0.1], [0.1, 0.7], [1.0 / 3.0, 0.2]])


class TestJson:
    """Deterministic JSON encoding."""

    def test_float_precision(self):
        text = io.dumps_json({"x": 0.1, "third": 1.0 / 3.0, "one": 1.0, "n": 3})
        assert '"x": 0.10000000000000001' in text
        assert '"one": 1.0' in text
        assert '"n": 3' in text
        assert json.loads(text)["third"] == 1.0 / 3.0

    def test_numpy_and_nonfinite(self):
        text = io.dumps_json({"a": np.array([[1, 2], [3, 4]]), "b": np.float64("nan"), "c": -np.inf,
                              "ok": np.bool_(True)})
        data = json.loads(text)
        assert data["a"] == [[1, 2], [3, 4]]
        assert np.isnan(data["b"]) and data["c"] == -np.inf
        assert data["ok"] is True

    def test_key_order_kept(self):
        text = io.dumps_json({"z": 1, "a": 2})
        assert text.index('"z"') < text.index('"a"')
        assert text.endswith("}\n")

    def test_unserializable(self):
        with pytest.raises(InputError):
            io.dumps_json({"f": object()})

    def test_read_errors(self, tmp_path):
        with pytest.raises(InputError):
            io.read_json(tmp_path / "absent.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json", encoding="utf-8")
        with pytest.raises(InputError):
            io.read_json(bad)


class TestBudgetCsv:
    """Probe/response tables."""

    def test_read_normalizes(self, tmp_path):
        ds = io.read_budget_csv(write_budget(tmp_path / "b.csv", ALPHA, BETA))
        np.testing.assert_allclose(np.einsum("ki,ki->k", ds.alpha, ds.beta), 1.0)

    def test_read_raw(self, tmp_path):
        ds = io.read_budget_csv(write_budget(tmp_path / "b.csv", ALPHA, BETA), normalize=False)
        np.testing.assert_array_equal(ds.alpha, ALPHA)
        np.testing.assert_array_equal(ds.beta, BETA)

    def test_rows_ordered_by_k(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("k,alpha_1,alpha_2,beta_1,beta_2\n2,2,1,0.1,0.7\n1,1,2,0.3,0.1\n", encoding="utf-8")
        ds = io.read_budget_csv(path, normalize=False)
        np.testing.assert_array_equal(ds.alpha, [[1.0, 2.0], [2.0, 1.0]])

    def test_write_is_exact_and_stable(self, tmp_path):
        ds = BudgetDataset(ALPHA, BETA, normalize=False)
        first = io.write_budget_csv(ds, tmp_path / "a.csv").read_bytes()
        back = io.read_budget_csv(tmp_path / "a.csv", normalize=False)
        np.testing.assert_array_equal(back.beta, BETA)
        assert io.write_budget_csv(back, tmp_path / "b.csv").read_bytes() == first
        assert first.startswith(b"k,alpha_1,alpha_2,beta_1,beta_2\n")

    def test_random_floats_read_back_bit_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        ds = BudgetDataset(rng.uniform(0.1, 3.0, size=(50, 3)), rng.uniform(0.0, 1.0, size=(50, 3)),
                           normalize=False)
        back = io.read_budget_csv(io.write_budget_csv(ds, tmp_path / "r.csv"), normalize=False)
        np.testing.assert_array_equal(back.alpha, ds.alpha)
        np.testing.assert_array_equal(back.beta, ds.beta)

    def test_width_mismatch(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("k,alpha_1,alpha_2,beta_1\n1,1,2,0.5\n", encoding="utf-8")
        with pytest.raises(DimensionMismatch):
            io.read_budget_csv(path)

    @pytest.mark.parametrize("text", [
        "k,alpha_1,alpha_2\n1,1,2\n",
        "k,alpha_1,alpha_3,beta_1,beta_3\n1,1,2,0.5,0.5\n",
        "k,alpha_1,beta_1\n1,,0.5\n",
        "k,alpha_1,beta_1\n",
    ])
    def test_malformed(self, tmp_path, text):
        path = tmp_path / "b.csv"
        path.write_text(text, encoding="utf-8")
        with pytest.raises(InputError):
            io.read_budget_csv(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            io.read_budget_csv(tmp_path / "nope.csv")

    def test_noisy_responses_may_be_negative(self, tmp_path):
        ds = io.read_noisy_csv(write_budget(tmp_path / "n.csv", ALPHA, BETA - 0.2))
        assert isinstance(ds, NoisyDataset)
        assert ds.beta_bar.min() < 0
        io.write_noisy_csv(ds, tmp_path / "m.csv")
        np.testing.assert_array_equal(io.read_noisy_csv(tmp_path / "m.csv").beta_bar, ds.beta_bar)


class TestMultiAgentCsv:
    def test_per_agent_blocks(self, tmp_path):
        ds = MultiAgentDataset(ALPHA, np.stack([BETA, 2 * BETA]))
        path = io.write_multiagent_csv(ds, tmp_path / "ma.csv")
        assert "beta_p2_1" in path.read_text(encoding="utf-8").splitlines()[0]
        back = io.read_multiagent_csv(path)
        assert back.P == 2
        np.testing.assert_array_equal(back.beta, ds.beta)

    def test_aggregate_lower_bounds(self, tmp_path):
        ds = AggregateDataset(ALPHA, BETA, np.stack([0.5 * BETA, 0.25 * BETA]))
        back = io.read_aggregate_csv(io.write_aggregate_csv(ds, tmp_path / "agg.csv"))
        np.testing.assert_array_equal(back.lower, ds.lower)

    def test_aggregate_without_bounds(self, tmp_path):
        path = write_budget(tmp_path / "agg.csv", ALPHA, BETA)
        assert io.read_aggregate_csv(path, agents=3).lower.shape == (3, 3, 2)
        with pytest.raises(InputError):
            io.read_aggregate_csv(path)


class TestCertificate:
    def test_fields(self, tmp_path):
        cert = RationalityCertificate([1.0, 0.5], [2.0, 1.0])
        path = io.write_certificate(cert, tmp_path / "cert.json", margin=0.25)
        assert set(json.loads(path.read_text(encoding="utf-8"))) == {"phi", "lambda", "margin"}
        back, margin = io.read_certificate(path)
        np.testing.assert_array_equal(back.lam, cert.lam)
        assert margin == 0.25

    def test_incomplete(self, tmp_path):
        io.write_json({"phi": [1.0]}, tmp_path / "c.json")
        with pytest.raises(InputError):
            io.read_certificate(tmp_path / "c.json")


class TestBehaviorJson:
    """Bayesian behavior files of every kind."""

    def test_umri(self, tmp_path):
        ds = BehaviorDataset([0.5, 0.5], [[[0.8, 0.2], [0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]]])
        back = io.read_behavior_json(io.write_behavior_json(ds, tmp_path / "b.json"))
        np.testing.assert_array_equal(back.kernels, ds.kernels)

    def test_sht_needs_continue_cost(self, tmp_path):
        ds = SHTDataset([0.5, 0.5], [[[0.8, 0.2], [0.3, 0.7]]], [2.5])
        path = io.write_behavior_json(ds, tmp_path / "s.json")
        assert io.read_behavior_json(path, kind="sht").continue_costs.tolist() == [2.5]
        io.write_json({"prior": [0.5, 0.5], "envs": [{"p_a_given_x": ds.kernels[0]}]}, path)
        with pytest.raises(InputError):
            io.read_behavior_json(path, kind="sht")

    def test_search_and_quickest(self, tmp_path):
        search = SearchDataset([0.5, 0.5], np.ones((1, 2, 2)))
        back = io.read_behavior_json(io.write_behavior_json(search, tmp_path / "s.json"), kind="search")
        assert isinstance(back, SearchDataset)
        quick = QuickestDataset([0.6, 0.4], [[[0.5, 0.5], [0.0, 1.0]]])
        back = io.read_behavior_json(io.write_behavior_json(quick, tmp_path / "q.json"), kind="quickest")
        np.testing.assert_allclose(back.delay(), quick.delay())

    def test_wrong_field_for_kind(self, tmp_path):
        ds = BehaviorDataset([0.5, 0.5], [[[0.8, 0.2], [0.3, 0.7]]])
        path = io.write_behavior_json(ds, tmp_path / "b.json")
        with pytest.raises(InputError):
            io.read_behavior_json(path, kind="search")
        with pytest.raises(InputError):
            io.read_behavior_json(path, kind="bandit")

    def test_ragged_environments(self, tmp_path):
        path = io.write_json({"prior": [0.5, 0.5], "envs": [{"p_a_given_x": [[1.0, 0.0], [0.0, 1.0]]},
                                                              {"p_a_given_x": [[1.0], [1.0]]}]},
                             tmp_path / "r.json")
        with pytest.raises(DimensionMismatch):
            io.read_behavior_json(path)

    def test_empty_envs(self, tmp_path):
        path = io.write_json({"prior": [1.0], "envs": []}, tmp_path / "e.json")
        with pytest.raises(InputError):
            io.read_behavior_json(path)

    def test_choice_data(self, tmp_path):
        data = ChoiceData(np.zeros((2, 3, 1)), [[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]], [3.0, 1.0])
        back = io.read_choice_json(io.write_choice_json(data, tmp_path / "c.json"))
        np.testing.assert_array_equal(back.weights, [3.0, 1.0])
        io.write_json({"psi": [[[0.0]]]}, tmp_path / "bad.json")
        with pytest.raises(InputError):
            io.read_choice_json(tmp_path / "bad.json")


class TestTrajectories:
    def test_hmm_layout(self, tmp_path):
        path = io.write_trajectory_csv([0, 2, 1], [1, 0, 1], tmp_path / "t.csv")
        assert path.read_text(encoding="utf-8").splitlines()[0] == "k,x,a"
        x, a = io.read_trajectory_csv(path)
        assert x.dtype.kind == "i" and x.tolist() == [0, 2, 1] and a.tolist() == [1, 0, 1]

    def test_linear_layout(self, tmp_path):
        states, actions = np.arange(6.0).reshape(3, 2), np.array([[0.5], [1.5], [-2.0]])
        x, a = io.read_trajectory_csv(io.write_trajectory_csv(states, actions, tmp_path / "t.csv"))
        np.testing.assert_array_equal(x, states)
        np.testing.assert_array_equal(a, actions)

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(DimensionMismatch):
            io.write_trajectory_csv([0, 1], [0], tmp_path / "t.csv")

    def test_beliefs(self, tmp_path):
        path = io.write_beliefs_json(np.full((2, 3), 1 / 3), tmp_path / "b.json", atoms=[3, 5])
        data = io.read_json(path)
        assert data["k"] == [1, 2] and data["atoms"] == [3, 5]
        assert "cov" not in data


class TestLangevinFiles:
    def test_trace_drops_agent_ids(self, tmp_path):
        trace = GradientTrace(np.arange(6.0).reshape(3, 2), -np.arange(6.0).reshape(3, 2), np.array([0, 0, 1]))
        back = io.read_trace_csv(io.write_trace_csv(trace, tmp_path / "trace.csv"))
        np.testing.assert_array_equal(back.theta, trace.theta)
        np.testing.assert_array_equal(back.grad, trace.grad)
        assert back.agent.tolist() == [-1, -1, -1]

    def test_cloud_keeps_post_burn_in(self, tmp_path):
        cloud = SampleCloud(np.arange(12.0).reshape(6, 2, 1), 2, 1.0, "generalized")
        back = io.read_cloud_csv(io.write_cloud_csv(cloud, tmp_path / "cloud.csv"))
        np.testing.assert_array_equal(back[:, 0], np.arange(4.0, 12.0))

    def test_density_grid(self, tmp_path):
        samples = np.random.default_rng(0).uniform(size=(50, 1))
        est = estimate_reward(samples, grid=[np.array([0.0, 0.5, 1.0, 2.0])], min_samples=1)
        path = io.write_density_csv(est, tmp_path / "density.csv")
        lines = path.read_text(encoding="utf-8").splitlines()
        assert lines[0] == "x_1,density,R"
        assert lines[-1].endswith("-inf")


class TestManifest:
    def test_round_trip(self, tmp_path):
        from irl_forge import __version__

        manifest = io.RunManifest("detect", seed=7, inputs={"data": "d.csv"}, parameters={"gamma": 0.05})
        io.write_manifest(manifest, tmp_path)
        back = io.read_manifest(tmp_path / "manifest.json")
        assert back == manifest
        assert back.version == __version__

    def test_not_a_manifest(self, tmp_path):
        io.write_json({"seed": 1}, tmp_path / "m.json")
        with pytest.raises(InputError):
            io.read_manifest(tmp_path / "m.json")

import json

import numpy as np
import pytest

from conftest import write_budget
from irl_forge import io, main_pipeline
from irl_forge.errors import InputError, NotRationalizable, TooLargeForExact
from irl_forge.rp import GarpReport, MaskResult


def test_run_pipeline_steps(monkeypatch, tmp_path, cobb_douglas_ds):
    calls = []

    def mock_mask(ds, U, eta, grad=None):
        calls.append(("mask", eta))
        assert grad is not None
        return MaskResult(ds.beta, margin=0.1, target=0.1, original_margin=0.2, sacrifice=0.0, iterations=3)

    monkeypatch.setattr(main_pipeline, "mask_responses", mock_mask)
    monkeypatch.setattr(main_pipeline, "feasibility_margin", lambda ds, cert: calls.append("margin") or 0.2)
    monkeypatch.setattr(main_pipeline, "rationality_indices",
                        lambda ds: (_ for _ in ()).throw(TooLargeForExact("too many observations")))

    path = write_budget(tmp_path / "data.csv", cobb_douglas_ds.alpha, cobb_douglas_ds.beta)
    result = main_pipeline.run_pipeline(path, tmp_path / "out", eta=0.25, seed=11)

    assert result["status"] == "rationalizable"
    assert calls == ["margin", ("mask", 0.25)]
    assert result["margin"] == 0.2
    assert result["indices"] is None
    assert set(result["outputs"]) == {"garp", "certificate", "masked", "mask"}
    assert io.read_json(tmp_path / "out" / "mask.json")["iterations"] == 3

    manifest = io.read_manifest(tmp_path / "out" / "manifest.json")
    assert manifest.seed == 11
    assert manifest.parameters == {"eta": 0.25}
    assert manifest.outputs == result["outputs"]


class TestPipelineRuns:
    """Unmocked runs on small datasets."""

    def test_consistent_dataset(self, tmp_path, cobb_douglas_ds):
        path = write_budget(tmp_path / "data.csv", cobb_douglas_ds.alpha[:8], cobb_douglas_ds.beta[:8])
        result = main_pipeline.run_pipeline(path, tmp_path / "out", eta=0.5)
        assert result["status"] == "rationalizable"
        assert result["margin"] >= 0
        assert result["mask"].sacrifice >= 0
        assert result["indices"].hmi == 1.0
        for name in ("garp.json", "certificate.json", "masked.csv", "mask.json", "indices.json", "manifest.json"):
            assert (tmp_path / "out" / name).exists()

    def test_masking_skipped(self, tmp_path, cobb_douglas_ds):
        path = write_budget(tmp_path / "data.csv", cobb_douglas_ds.alpha[:5], cobb_douglas_ds.beta[:5])
        result = main_pipeline.run_pipeline(path, tmp_path / "out", eta=None)
        assert result["mask"] is None
        assert not (tmp_path / "out" / "masked.csv").exists()

    def test_violation_stops_early(self, tmp_path):
        path = write_budget(tmp_path / "cycle.csv", [[1.0, 2.0], [2.0, 1.0]], [[0.0, 0.5], [0.5, 0.0]])
        result = main_pipeline.run_pipeline(path, tmp_path / "out")
        assert result["status"] == "not_rationalizable"
        assert isinstance(result["report"], GarpReport)
        assert result["certificate"] is None
        garp = json.loads((tmp_path / "out" / "garp.json").read_text(encoding="utf-8"))
        assert garp["violating_cycle"] == [1, 2]
        assert result["indices"].hmi == pytest.approx(0.5)
        assert not (tmp_path / "out" / "certificate.json").exists()
        assert (tmp_path / "out" / "manifest.json").exists()

    def test_afriat_failure_stops(self, monkeypatch, tmp_path, cobb_douglas_ds):
        def infeasible(ds):
            raise NotRationalizable("infeasible")

        monkeypatch.setattr(main_pipeline, "afriat_certificate", infeasible)
        path = write_budget(tmp_path / "data.csv", cobb_douglas_ds.alpha[:4], cobb_douglas_ds.beta[:4])
        result = main_pipeline.run_pipeline(path, tmp_path / "out")
        assert result["status"] == "not_rationalizable"
        assert set(result["outputs"]) == {"garp"}

    def test_bad_input(self, tmp_path):
        with pytest.raises(InputError):
            main_pipeline.run_pipeline(tmp_path / "missing.csv", tmp_path / "out")

    def test_outputs_reproducible(self, tmp_path, cobb_douglas_ds):
        path = write_budget(tmp_path / "data.csv", cobb_douglas_ds.alpha[:6], cobb_douglas_ds.beta[:6])
        main_pipeline.run_pipeline(path, tmp_path / "a")
        main_pipeline.run_pipeline(path, tmp_path / "b")
        for name in ("certificate.json", "masked.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        np.testing.assert_array_equal(io.read_budget_csv(tmp_path / "a" / "masked.csv", normalize=False).alpha,
                                      io.read_budget_csv(path).alpha[:6])

"""
main_pipeline.py

End-to-end revealed-preference run on one budget dataset:
load -> GARP -> Afriat certificate -> margin -> masking -> indices,
writing every artifact into ``out_dir`` next to a run manifest.
"""

import logging
from pathlib import Path

from .errors import NotRationalizable, TooLargeForExact
from .io import RunManifest, read_budget_csv, write_budget_csv, write_certificate, write_json, write_manifest
from .rp import (BudgetDataset, PiecewiseUtility, afriat_certificate, check_garp, feasibility_margin, mask_responses,
                 rationality_indices)

logger = logging.getLogger(__name__)


def _indices_payload(idx):
    return {"hmi": idx.hmi, "afriat_index": idx.afriat_index, "varian_lower_bound": idx.varian_lower_bound,
            "varian_mean": idx.varian_mean, "mci": idx.mci, "varian_heuristic": idx.varian_heuristic}


def _try_indices(ds, out_dir, outputs):
    try:
        idx = rationality_indices(ds)
    except TooLargeForExact as exc:
        logger.warning("⚠️ skipping rationality indices", extra={"reason": str(exc)})
        return None
    outputs["indices"] = str(write_json(_indices_payload(idx), out_dir / "indices.json"))
    logger.info("✅ rationality indices", extra={"hmi": idx.hmi, "afriat_index": idx.afriat_index, "mci": idx.mci})
    return idx


def run_pipeline(input_csv, out_dir, eta=0.5, seed=None):
    """
    Run the revealed-preference checks on a budget CSV.

    Parameters
    ----------
    input_csv : str or Path
        ``k,alpha_1..alpha_m,beta_1..beta_m`` file.
    out_dir : str or Path
        Created if missing; receives garp.json, certificate.json, masked.csv,
        mask.json, indices.json and manifest.json.
    eta : float or None
        Masking level; None skips the masking step.
    seed : int, optional
        Recorded in the manifest; the steps are deterministic.

    Returns
    -------
    dict
        ``status`` ("rationalizable" or "not_rationalizable"), the step
        results that were reached and ``outputs`` (artifact paths).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    manifest = RunManifest("pipeline", seed=seed, inputs={"input": str(input_csv)},
                           parameters={"eta": eta}, outputs=outputs)
    logger.info("🚀 starting revealed-preference pipeline", extra={"input": str(input_csv), "out_dir": str(out_dir)})

    # --- Step 1: load ---
    ds = read_budget_csv(input_csv)
    logger.info("✅ loaded dataset", extra={"N": ds.N, "m": ds.m})

    # --- Step 2: GARP ---
    report = check_garp(ds)
    outputs["garp"] = str(write_json({"consistent": report.consistent, "violating_cycle": report.violating_cycle,
                                      "n_violations": report.n_violations}, out_dir / "garp.json"))
    result = {"status": "rationalizable", "report": report, "certificate": None, "margin": None,
              "mask": None, "indices": None, "outputs": outputs}

    if not report.consistent:
        logger.warning("⚠️ GARP violated, stopping early", extra={"cycle": report.violating_cycle})
        result["status"] = "not_rationalizable"
        result["indices"] = _try_indices(ds, out_dir, outputs)
        write_manifest(manifest, out_dir)
        return result

    # --- Step 3: Afriat certificate and margin ---
    try:
        cert = afriat_certificate(ds)
    except NotRationalizable as exc:
        logger.warning("⚠️ Afriat system infeasible, stopping early", extra={"reason": str(exc)})
        result["status"] = "not_rationalizable"
        write_manifest(manifest, out_dir)
        return result
    margin = feasibility_margin(ds, cert)
    outputs["certificate"] = str(write_certificate(cert, out_dir / "certificate.json", margin=margin))
    result.update(certificate=cert, margin=margin)
    logger.info("✅ certificate found", extra={"margin": margin})

    # --- Step 4: masking ---
    if eta is not None:
        U = PiecewiseUtility(cert, ds)
        mask = mask_responses(ds, U, eta, grad=U.gradient)
        outputs["masked"] = str(write_budget_csv(BudgetDataset(ds.alpha, mask.beta, normalize=False),
                                                 out_dir / "masked.csv"))
        outputs["mask"] = str(write_json({"eta": eta, "margin": mask.margin, "target": mask.target,
                                          "original_margin": mask.original_margin, "sacrifice": mask.sacrifice,
                                          "iterations": mask.iterations}, out_dir / "mask.json"))
        result["mask"] = mask
        logger.info("✅ responses masked", extra={"target": mask.target, "sacrifice": mask.sacrifice})

    # --- Step 5: indices ---
    result["indices"] = _try_indices(ds, out_dir, outputs)

    write_manifest(manifest, out_dir)
    logger.info("🏁 pipeline finished", extra={"outputs": sorted(outputs)})
    return result

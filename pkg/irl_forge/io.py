"""
io.py

Readers and writers for the on-disk formats: budget, noisy and multi-agent
CSV datasets, certificate and behavior JSON, inverse-filter trajectories,
Langevin traces, sample clouds, density grids and the run manifest.

All files are UTF-8 with LF line endings. CSV floats and JSON floats are
written with 17 significant digits so that a rerun with the same manifest
reproduces the same bytes.

Dependencies:
    numpy, pandas
"""

import json
import logging
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .birl import BehaviorDataset, ChoiceData, QuickestDataset, SearchDataset, SHTDataset
from .detect import NoisyDataset
from .errors import DimensionMismatch, InputError
from .langevin import GradientTrace, SampleCloud
from .multiagent import AggregateDataset, MultiAgentDataset
from .rp import BudgetDataset, RationalityCertificate

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
BEHAVIOR_KINDS = ("umri", "sht", "search", "quickest")


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------

def _plain(obj):
    """Convert numpy containers and dataclasses into JSON-ready python objects."""
    if hasattr(obj, "__dataclass_fields__"):
        return _plain(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        text = format(obj, ".17g")
        return text if re.search(r"[.eE]", text) else text + ".0"
    if isinstance(obj, (int, str)):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k, ensure_ascii=False)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, dict)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise InputError(f"cannot serialize {type(obj).__name__} to JSON")


def dumps_json(obj, indent=2):
    """
    Serialize to JSON text with floats at 17 significant digits.

    Keys keep insertion order; numpy arrays, numpy scalars, dataclasses and
    paths are converted first. Non-finite floats are written as NaN /
    Infinity, which Python's json module reads back.
    """
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_json(obj))
    return path


def read_json(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from exc


# --------------------------------------------------------------------------
# CSV helpers
# --------------------------------------------------------------------------

def _read_csv(path):
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    df = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    df.columns = [str(c).strip() for c in df.columns]
    if df.empty:
        raise InputError(f"{path} has no rows")
    return df


def _write_csv(df, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT, encoding="utf-8", lineterminator="\n")
    return path


def _block(df, prefix, path=""):
    """Columns ``{prefix}_1..{prefix}_m`` as an (N, m) float array, sorted by index."""
    pattern = re.compile(rf"^{re.escape(prefix)}_(\d+)$")
    found = sorted((int(m.group(1)), c) for c in df.columns if (m := pattern.match(c)))
    if not found:
        raise InputError(f"{path}: no '{prefix}_i' columns")
    idx = [i for i, _ in found]
    if idx != list(range(1, len(idx) + 1)):
        raise InputError(f"{path}: '{prefix}_i' columns must be numbered 1..m, got {idx}")
    values = df[[c for _, c in found]].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise InputError(f"{path}: '{prefix}_i' columns contain missing or non-finite values")
    return values


def _agent_blocks(df, prefix, path=""):
    """Columns ``{prefix}_p{j}_i`` as a (P, N, m) array."""
    agents = sorted({int(m.group(1)) for c in df.columns if (m := re.match(rf"^{prefix}_p(\d+)_\d+$", c))})
    if not agents:
        raise InputError(f"{path}: no '{prefix}_p{{j}}_i' columns")
    return np.stack([_block(df, f"{prefix}_p{j}", path) for j in agents])


def _sorted_by_k(df):
    return df.sort_values("k", kind="stable").reset_index(drop=True) if "k" in df.columns else df


def _numbered(prefix, values):
    values = np.atleast_2d(values)
    return {f"{prefix}_{i + 1}": values[:, i] for i in range(values.shape[1])}


def _frame(N, *blocks):
    data = {"k": np.arange(1, N + 1)}
    for block in blocks:
        data.update(block)
    return pd.DataFrame(data)


# --------------------------------------------------------------------------
# revealed-preference datasets
# --------------------------------------------------------------------------

def read_budget_csv(path, normalize=True):
    """
    Read ``k,alpha_1..alpha_m,beta_1..beta_m`` into a BudgetDataset.

    Rows are ordered by ``k`` when that column is present.
    """
    df = _sorted_by_k(_read_csv(path))
    alpha, beta = _block(df, "alpha", path), _block(df, "beta", path)
    if alpha.shape != beta.shape:
        raise DimensionMismatch(f"{path}: {alpha.shape[1]} alpha columns but {beta.shape[1]} beta columns")
    logger.debug("read budget dataset", extra={"path": str(path), "N": alpha.shape[0], "m": alpha.shape[1]})
    return BudgetDataset(alpha, beta, normalize=normalize)


def write_budget_csv(ds, path):
    return _write_csv(_frame(ds.N, _numbered("alpha", ds.alpha), _numbered("beta", ds.beta)), path)


def read_noisy_csv(path):
    """Same layout as the budget CSV; ``beta_i`` holds the noisy responses."""
    df = _sorted_by_k(_read_csv(path))
    return NoisyDataset(_block(df, "alpha", path), _block(df, "beta", path))


def write_noisy_csv(ds, path):
    N = ds.alpha.shape[0]
    return _write_csv(_frame(N, _numbered("alpha", ds.alpha), _numbered("beta", ds.beta_bar)), path)


def read_multiagent_csv(path):
    """``k,alpha_i..,beta_p{j}_i..`` into a MultiAgentDataset."""
    df = _sorted_by_k(_read_csv(path))
    return MultiAgentDataset(_block(df, "alpha", path), _agent_blocks(df, "beta", path))


def write_multiagent_csv(ds, path):
    blocks = [_numbered(f"beta_p{j + 1}", ds.beta[j]) for j in range(ds.P)]
    return _write_csv(_frame(ds.N, _numbered("alpha", ds.alpha), *blocks), path)


def read_aggregate_csv(path, agents=None):
    """
    ``k,alpha_i..,beta_i..,lower_p{j}_i..`` into an AggregateDataset.

    Without ``lower_p{j}_i`` columns, ``agents`` zero lower bounds are used.
    """
    df = _sorted_by_k(_read_csv(path))
    alpha, beta = _block(df, "alpha", path), _block(df, "beta", path)
    if any(c.startswith("lower_p") for c in df.columns):
        lower = _agent_blocks(df, "lower", path)
    elif agents:
        lower = np.zeros((int(agents),) + beta.shape)
    else:
        raise InputError(f"{path}: no 'lower_p{{j}}_i' columns and no agent count given")
    return AggregateDataset(alpha, beta, lower)


def write_aggregate_csv(ds, path):
    blocks = [_numbered(f"lower_p{j + 1}", ds.lower[j]) for j in range(ds.P)]
    return _write_csv(_frame(ds.N, _numbered("alpha", ds.alpha), _numbered("beta", ds.beta), *blocks), path)


def write_certificate(cert, path, margin=None):
    """``{"phi": [...], "lambda": [...], "margin": x}``."""
    return write_json({"phi": cert.phi, "lambda": cert.lam, "margin": margin}, path)


def read_certificate(path):
    """Return (RationalityCertificate, margin or None)."""
    data = read_json(path)
    missing = {"phi", "lambda"} - set(data)
    if missing:
        raise InputError(f"{path}: certificate is missing {sorted(missing)}")
    return RationalityCertificate(data["phi"], data["lambda"]), data.get("margin")


# --------------------------------------------------------------------------
# Bayesian behavior
# --------------------------------------------------------------------------

_ENV_FIELD = {"umri": "p_a_given_x", "sht": "p_a_given_x", "search": "visits", "quickest": "stop_probs"}


def read_behavior_json(path, kind="umri"):
    """
    Read ``{prior: [...], envs: [{p_a_given_x: [[...]]}, ...]}``.

    Parameters
    ----------
    kind : {"umri", "sht", "search", "quickest"}
        "sht" environments also carry ``continue_cost``; "search" ones carry
        ``visits`` (expected visit counts g(a|x)); "quickest" ones carry
        ``stop_probs`` (p(tau | tau0)) over the change-time prior.

    Returns
    -------
    BehaviorDataset, SHTDataset, SearchDataset or QuickestDataset
    """
    if kind not in BEHAVIOR_KINDS:
        raise InputError(f"unknown behavior kind '{kind}'")
    data = read_json(path)
    if "prior" not in data or not data.get("envs"):
        raise InputError(f"{path}: behavior file needs 'prior' and a non-empty 'envs' list")
    key = _ENV_FIELD[kind]
    try:
        kernels = np.array([env[key] for env in data["envs"]], dtype=float)
    except KeyError as exc:
        raise InputError(f"{path}: every environment needs '{key}'") from exc
    except ValueError as exc:
        raise DimensionMismatch(f"{path}: environments have different shapes") from exc
    if kind == "umri":
        return BehaviorDataset(data["prior"], kernels)
    if kind == "sht":
        costs = [env.get("continue_cost") for env in data["envs"]]
        if any(c is None for c in costs):
            raise InputError(f"{path}: every SHT environment needs 'continue_cost'")
        return SHTDataset(data["prior"], kernels, continue_costs=costs)
    if kind == "search":
        return SearchDataset(data["prior"], kernels)
    return QuickestDataset(data["prior"], kernels)


def write_behavior_json(ds, path):
    if isinstance(ds, SearchDataset):
        envs = [{"visits": v} for v in ds.visits]
    elif isinstance(ds, QuickestDataset):
        envs = [{"stop_probs": s} for s in ds.stop_probs]
    elif isinstance(ds, SHTDataset):
        envs = [{"p_a_given_x": k, "continue_cost": c} for k, c in zip(ds.kernels, ds.continue_costs)]
    else:
        envs = [{"p_a_given_x": k} for k in ds.kernels]
    return write_json({"prior": ds.prior, "envs": envs}, path)


def read_choice_json(path):
    """``{psi: (K, A, d), freq: (K, A), weights?: (K,)}`` into ChoiceData."""
    data = read_json(path)
    if "psi" not in data or "freq" not in data:
        raise InputError(f"{path}: choice file needs 'psi' and 'freq'")
    return ChoiceData(data["psi"], data["freq"], data.get("weights"))


def write_choice_json(data, path):
    return write_json({"psi": data.psi, "freq": data.freq, "weights": data.weights}, path)


# --------------------------------------------------------------------------
# inverse filtering
# --------------------------------------------------------------------------

def read_trajectory_csv(path):
    """
    Read a trajectory as (states, actions).

    ``k,x,a`` gives integer arrays (HMM); ``k,x_1..x_n,a_1..a_q`` gives
    float arrays of shape (K, n) and (K, q) (linear Gaussian).
    """
    df = _sorted_by_k(_read_csv(path))
    if "x" in df.columns and "a" in df.columns:
        if df[["x", "a"]].isna().any().any():
            raise InputError(f"{path}: missing states or actions")
        return df["x"].to_numpy(dtype=int), df["a"].to_numpy(dtype=int)
    return _block(df, "x", path), _block(df, "a", path)


def write_trajectory_csv(states, actions, path):
    states, actions = np.asarray(states), np.asarray(actions)
    K = states.shape[0]
    if actions.shape[0] != K:
        raise DimensionMismatch("states and actions must have the same length")
    if states.ndim == 1 and actions.ndim == 1:
        df = pd.DataFrame({"k": np.arange(1, K + 1), "x": states.astype(int), "a": actions.astype(int)})
    else:
        df = _frame(K, _numbered("x", states.reshape(K, -1)), _numbered("a", actions.reshape(K, -1)))
    return _write_csv(df, path)


def write_beliefs_json(means, path, covs=None, atoms=None):
    """Belief dump: per-step posterior means, plus covariances or mixture sizes when given."""
    means = np.asarray(means, float)
    payload = {"k": np.arange(1, means.shape[0] + 1), "mean": means}
    if covs is not None:
        payload["cov"] = np.asarray(covs, float)
    if atoms is not None:
        payload["atoms"] = list(atoms)
    return write_json(payload, path)


# --------------------------------------------------------------------------
# Langevin
# --------------------------------------------------------------------------

def write_trace_csv(trace, path):
    """``k,theta_1..theta_N,grad_1..grad_N``."""
    return _write_csv(_frame(len(trace), _numbered("theta", trace.theta), _numbered("grad", trace.grad)), path)


def read_trace_csv(path):
    """Read a gradient trace; agent ids are not stored and come back as -1."""
    df = _sorted_by_k(_read_csv(path))
    theta, grad = _block(df, "theta", path), _block(df, "grad", path)
    if theta.shape != grad.shape:
        raise DimensionMismatch(f"{path}: theta and grad blocks differ in width")
    return GradientTrace(theta, grad, np.full(theta.shape[0], -1))


def write_cloud_csv(cloud, path):
    """``k,v_1..v_N`` over the kept (post burn-in) samples, chain-interleaved."""
    kept = cloud.kept if isinstance(cloud, SampleCloud) else np.atleast_2d(np.asarray(cloud, float))
    return _write_csv(_frame(kept.shape[0], _numbered("v", kept)), path)


def read_cloud_csv(path):
    return _block(_sorted_by_k(_read_csv(path)), "v", path)


def write_density_csv(estimate, path):
    """``x_1..x_N,density,R`` on every grid cell center; empty cells have R = -inf."""
    mesh = estimate.mesh()
    df = pd.DataFrame(_numbered("x", mesh))
    df["density"] = estimate.density.ravel()
    df["R"] = estimate.values.ravel()
    return _write_csv(df, path)


# --------------------------------------------------------------------------
# run manifest
# --------------------------------------------------------------------------

@dataclass
class RunManifest:
    """What produced a set of outputs; written next to them as ``manifest.json``."""

    subcommand: str
    seed: int = None
    config: str = None
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    version: str = None

    def __post_init__(self):
        if self.version is None:
            from . import __version__

            self.version = __version__


def write_manifest(manifest, out_dir):
    return write_json(manifest, Path(out_dir) / "manifest.json")


def read_manifest(path):
    data = read_json(path)
    if "subcommand" not in data:
        raise InputError(f"{path}: not a run manifest")
    return RunManifest(**data)

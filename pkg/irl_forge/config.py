"""
config.py

Numeric defaults shared across modules, frozen run configurations and the
scenario-file loader.

Dependencies:
    numpy, tqdm, tomllib (or tomli on Python < 3.11)
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np
from tqdm import tqdm

from .errors import InputError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

# --- solver tolerances ---
TOL_LP = 1e-9
TOL_GARP = 1e-7
TOL_NORM = 1e-9
TOL_MASK = 1e-7
MAX_BINARIES = 30
MAX_NODES = 10_000

# --- revealed preference ---
EXACT_LIMIT = 12
MCI_EDGE_LIMIT = 16
DELTA_STRICT = 1e-6

# --- detection ---
ALPHA_MIN = 1e-3
MIN_CALIBRATION = 100

# --- Bayesian revealed preference ---
BRP_MARGIN = 1e-6

# --- inverse filters ---
W_PRUNE = 1e-10
DELTA_MERGE = 1e-8
POSTERIOR_GROUPING = 1e-12
HORIZON_WARNING = 12

# --- Langevin ---
BURN_IN = 0.2
KERNEL_VARIANCE = 0.01

SEED_REQUIRED = "a --seed is required for stochastic runs"


def load_scenario(path):
    """
    Read a JSON or TOML scenario file.

    Parameters
    ----------
    path : str or Path
        File ending in .json or .toml.

    Returns
    -------
    dict
        Parsed scenario. Top-level keys are passed through unchanged.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"scenario file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".json":
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    elif suffix == ".toml":
        with open(path, "rb") as f:
            data = tomllib.load(f)
    else:
        raise InputError(f"unsupported scenario format '{suffix}' (use .json or .toml)")
    if not isinstance(data, dict):
        raise InputError("scenario root must be a table/object")
    logger.debug("loaded scenario", extra={"path": str(path), "keys": sorted(data)})
    return data


def trial_rng(seed, *counters):
    """Independent stream for one Monte-Carlo trial: default_rng([seed, counter...])."""
    if seed is None:
        raise InputError(SEED_REQUIRED)
    return np.random.default_rng([int(seed), *(int(c) for c in counters)])


def run_trials(fn, n, jobs=1, progress=False, desc=None):
    """
    Evaluate fn(0), ..., fn(n - 1), optionally on a thread pool.

    Results come back in trial order whatever the number of workers, so a
    run with jobs=8 reproduces a serial run exactly.
    """
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(tqdm(pool.map(fn, range(n)), total=n, disable=not progress, desc=desc))
    else:
        results = [fn(t) for t in tqdm(range(n), disable=not progress, desc=desc)]
    return results


# --------------------------------------------------------------------------
# run configurations
# --------------------------------------------------------------------------

class _Overridable:
    def with_overrides(self, **kw):
        """Copy with some fields replaced; unknown names raise InputError."""
        names = {f.name for f in fields(self)}
        unknown = sorted(set(kw) - names)
        if unknown:
            raise InputError(f"unknown {type(self).__name__} field(s): {unknown}")
        return replace(self, **kw)


@dataclass(frozen=True)
class SwarmConfig(_Overridable):
    """Forward agents: step epsilon, horizons uniform in [tau_min, tau_max], step jitter j."""

    epsilon: float = 1e-3
    tau_min: int = 100
    tau_max: int = 100
    n_agents: int = 10_000
    step_jitter: float = 0.0
    batch: int = 20_000

    def __post_init__(self):
        if self.epsilon < 0 or not 1 <= self.tau_min <= self.tau_max or self.n_agents < 1:
            raise InputError("swarm needs epsilon >= 0, 1 <= tau_min <= tau_max and at least one agent")
        if not 0.0 <= self.step_jitter < 1.0:
            raise InputError("step_jitter must lie in [0, 1)")


VARIANTS = ("generalized", "classical_passive", "multikernel", "active", "nonreversible")


@dataclass(frozen=True)
class LangevinConfig(_Overridable):
    variant: str = "generalized"
    mu: float = 5e-4
    bandwidth: float = KERNEL_VARIANCE ** 0.5
    beta: float = 1.0
    skew: tuple = None
    pool: int = 50
    sigma: float = 0.1
    n_chains: int = 1
    n_steps: int = None
    burn_in: float = BURN_IN

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InputError(f"unknown Langevin variant '{self.variant}' (choose from {', '.join(VARIANTS)})")
        if self.mu <= 0 or self.bandwidth <= 0 or self.beta <= 0 or self.sigma <= 0:
            raise InputError("mu, bandwidth, beta and sigma must be positive")
        if self.pool < 1 or self.n_chains < 1 or not 0.0 <= self.burn_in < 1.0:
            raise InputError("pool and n_chains must be >= 1 and burn_in in [0, 1)")
        if self.skew is not None:
            S = np.asarray(self.skew, float)
            if S.ndim != 2 or S.shape[0] != S.shape[1] or not np.allclose(S, -S.T):
                raise InputError("skew must be a square skew-symmetric matrix")


@dataclass(frozen=True)
class KLConfig(_Overridable):
    theta_true: tuple = (0.0, 1.0)
    prior_var: tuple = (10.0, 2.0)
    obs_var: float = 2.0
    n_obs: int = 100
    mode: str = "kl"
    swarm: SwarmConfig = SwarmConfig(epsilon=1e-3, tau_min=100, tau_max=100, n_agents=10_000)
    sampler: LangevinConfig = LangevinConfig(variant="multikernel", mu=5e-4, beta=1.0, pool=500, sigma=0.1,
                                             n_chains=20, n_steps=200_000)
    bins: int = 60
    mh_samples: int = 100_000
    mh_step: float = 0.15

    def __post_init__(self):
        if self.mode not in ("kl", "bayesian_learning"):
            raise InputError("mode must be 'kl' or 'bayesian_learning'")


@dataclass(frozen=True)
class CMDPConfig(_Overridable):
    P: tuple = (((0.8, 0.2), (0.3, 0.7)), ((0.6, 0.4), (0.1, 0.9)))
    rho: tuple = ((1.0, 100.0), (30.0, 2.0))
    cost: tuple = ((0.2, 0.3), (2.0, 1.0))
    gamma: float = 1.0
    lam: float = 1e5
    gradient: str = "sample_path"
    horizon: int = 200
    spsa_c: float = 0.05
    swarm: SwarmConfig = SwarmConfig(epsilon=1e-7, tau_min=50, tau_max=50, n_agents=100_000)
    sampler: LangevinConfig = LangevinConfig(variant="multikernel", mu=5e-6, beta=1.0, pool=50, sigma=0.1,
                                             n_chains=4, n_steps=100_000)
    grid: int = 101
    band: float = 0.05
    top_mass: float = 0.1

    def __post_init__(self):
        if self.gradient not in ("sample_path", "stationary"):
            raise InputError("gradient must be 'sample_path' or 'stationary'")


@dataclass(frozen=True)
class SwitchingConfig(_Overridable):
    Q: tuple = ((-1.0, 1.0), (1.0, -1.0))
    eta: float = 1e-4
    sampler: LangevinConfig = LangevinConfig(variant="classical_passive", mu=0.01, beta=2.0, burn_in=0.0)
    n_steps: int = 20_000
    window: int = 200
    init_scale: float = 3.0

    def __post_init__(self):
        Q = np.asarray(self.Q, float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1] or np.any(np.abs(Q.sum(axis=1)) > 1e-9):
            raise InputError("Q must be a square generator with zero row sums")
        if self.eta <= 0 or self.eta * np.max(np.abs(np.diag(Q))) > 1.0:
            raise InputError("eta must be positive with I + eta Q stochastic")

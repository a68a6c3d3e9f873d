"""
detect.py

Statistical detection of utility maximization from noisy responses.

    test_statistic    smallest slack T making Afriat's inequalities feasible
    calibrate_M       Monte-Carlo distribution of the noise statistic M
    detect            gamma-level decision H0 (maximizer) / H1
    spsa_probe_opt    SPSA search for probes that minimize the Type-II error

Dependencies:
    numpy, tqdm (through config.run_trials)
"""

import hashlib
import logging
import re
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import (
    CalibrationMismatch,
    DimensionMismatch,
    GeneratorNotViolating,
    InputError,
    NonPositiveProbe,
)
from .rp import BudgetDataset, afriat_system, check_garp
from .solvers import scalar_bisect_lp

logger = logging.getLogger(__name__)

SPSA_DECAY = 0.602


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass
class NoisyDataset:
    """Probes alpha (N, m) > 0 and observed responses beta_bar = beta + eps (any sign)."""

    alpha: np.ndarray
    beta_bar: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, float))
        self.beta_bar = np.atleast_2d(np.asarray(self.beta_bar, float))
        if self.alpha.shape != self.beta_bar.shape:
            raise DimensionMismatch(f"alpha {self.alpha.shape} and beta_bar {self.beta_bar.shape} differ")
        if np.any(~np.isfinite(self.alpha)) or np.any(self.alpha <= 0):
            raise NonPositiveProbe("all probes must be finite and strictly positive")

    def a_matrix(self):
        cross = self.alpha @ self.beta_bar.T
        return cross - np.diag(cross)[:, None]


@dataclass(frozen=True)
class NoiseModel:
    """
    Additive response noise, iid across observations and goods.

    ``kind`` is one of gauss (sigma), uniform (half_width), laplace (scale)
    or none.
    """

    kind: str = "none"
    params: dict = field(default_factory=dict)

    _PARAMS = {"gauss": "sigma", "uniform": "half_width", "laplace": "scale", "none": None}

    def __post_init__(self):
        if self.kind not in self._PARAMS:
            raise InputError(f"unknown noise kind '{self.kind}'")
        key = self._PARAMS[self.kind]
        if key is not None and key not in self.params:
            raise InputError(f"noise '{self.kind}' needs parameter '{key}'")

    @classmethod
    def parse(cls, text):
        """Parse 'gauss:sigma=0.1', 'uniform:half_width=0.1', 'laplace:scale=0.1' or 'none'."""
        m = re.fullmatch(r"\s*(\w+)\s*(?::\s*(.*))?", text or "")
        if not m:
            raise InputError(f"cannot parse noise model '{text}'")
        kind, rest = m.group(1).lower(), m.group(2)
        params = {}
        if rest:
            for item in rest.split(","):
                if "=" not in item:
                    raise InputError(f"noise parameter '{item}' is not key=value")
                key, value = item.split("=", 1)
                try:
                    params[key.strip()] = float(value)
                except ValueError as exc:
                    raise InputError(f"noise parameter '{key.strip()}' is not a number") from exc
        return cls(kind, params)

    @property
    def tag(self):
        if self.kind == "none":
            return "none"
        return self.kind + ":" + ",".join(f"{k}={v:g}" for k, v in sorted(self.params.items()))

    @property
    def degenerate(self):
        return self.kind == "none" or all(v == 0 for v in self.params.values())

    def draw(self, rng, shape):
        if self.kind == "gauss":
            return rng.normal(0.0, self.params["sigma"], size=shape)
        if self.kind == "uniform":
            h = self.params["half_width"]
            return rng.uniform(-h, h, size=shape)
        if self.kind == "laplace":
            return rng.laplace(0.0, self.params["scale"], size=shape)
        return np.zeros(shape)


@dataclass
class MCalibration:
    samples: np.ndarray
    L: int
    probe_hash: str
    noise_tag: str = ""

    def cdf(self, t):
        """Right-continuous empirical CDF of M."""
        return np.searchsorted(self.samples, t, side="right") / self.L


@dataclass
class DetectionResult:
    verdict: str
    T_star: float
    p_value: float


@dataclass
class SpsaResult:
    probes: np.ndarray
    trace: np.ndarray
    history: list = field(default_factory=list)


def probe_hash(probes):
    probes = np.ascontiguousarray(np.atleast_2d(np.asarray(probes, dtype=np.float64)))
    h = hashlib.sha256()
    h.update(str(probes.shape).encode())
    h.update(probes.tobytes())
    return h.hexdigest()


# --------------------------------------------------------------------------
# statistic, calibration, decision
# --------------------------------------------------------------------------

def test_statistic(ds):
    """
    Smallest T >= 0 for which
    phi_s - phi_k - lambda_k alpha_k'(beta_bar_s - beta_bar_k) - lambda_k T <= 0, lambda >= 1
    is feasible.

    Parameters
    ----------
    ds : NoisyDataset

    Returns
    -------
    float
    """
    a = ds.a_matrix()
    t_hi = float(np.max(np.abs(a))) if a.size else 0.0
    return scalar_bisect_lp(lambda T: afriat_system(a, shift=T), 0.0, t_hi, tol_T=1e-8 * t_hi)


test_statistic.__test__ = False


def noise_statistic(probes, eps):
    """M = max_{k != s} alpha_k'(eps_k - eps_s)."""
    c = probes @ eps.T
    M = np.diag(c)[:, None] - c
    np.fill_diagonal(M, -np.inf)
    return float(M.max())


def calibrate_M(noise, probes, L, seed, jobs=1, progress=False):
    """
    Monte-Carlo distribution of M for the given probes and noise.

    Parameters
    ----------
    noise : NoiseModel
    probes : array_like, shape (N, m)
    L : int
        Number of draws, at least 100.
    seed : int
        Master seed; draw t uses default_rng([seed, t]).

    Returns
    -------
    MCalibration
    """
    probes = np.atleast_2d(np.asarray(probes, float))
    if L < config.MIN_CALIBRATION:
        raise InputError(f"calibration needs at least {config.MIN_CALIBRATION} draws, got {L}")
    if probes.shape[0] < 2:
        raise InputError("calibration needs at least two observations")

    def one(t):
        rng = config.trial_rng(seed, t)
        return noise_statistic(probes, noise.draw(rng, probes.shape))

    samples = np.sort(np.asarray(config.run_trials(one, L, jobs, progress, desc="calibrate M")))
    logger.debug("calibrated M", extra={"L": L, "median": float(np.median(samples))})
    return MCalibration(samples, int(L), probe_hash(probes), noise.tag)


def detect(ds, cal, gamma):
    """
    Decide H0 (utility maximizer) against H1 at significance gamma.

    Returns
    -------
    DetectionResult
        ``verdict`` is "H0" iff 1 - F_M(T*) > gamma.

    Raises
    ------
    CalibrationMismatch
        When ``cal`` was built from different probes.
    """
    if not 0.0 < gamma < 1.0:
        raise InputError("gamma must lie in (0, 1)")
    if probe_hash(ds.alpha) != cal.probe_hash:
        raise CalibrationMismatch("calibration was computed for different probes")
    T = test_statistic(ds)
    p = float(1.0 - cal.cdf(T))
    return DetectionResult("H0" if p > gamma else "H1", T, p)


def false_positive_rate(utility, noise, probes, gamma, trials, L, seed, jobs=1, progress=False):
    """
    Fraction of noisy datasets from a true maximizer on which detect declares H1.

    Parameters
    ----------
    utility : object with ``demand(alpha, income)``
        The maximizing agent.
    probes : array_like, shape (N, m)
        Budgets are normalized to unit income.
    """
    probes = np.atleast_2d(np.asarray(probes, float))
    beta = np.array([utility.demand(a, 1.0) for a in probes])
    cal = calibrate_M(noise, probes, L, seed, jobs)

    def one(t):
        rng = config.trial_rng(seed, L, t)
        noisy = NoisyDataset(probes, beta + noise.draw(rng, beta.shape))
        return detect(noisy, cal, gamma).verdict == "H1"

    hits = config.run_trials(one, trials, jobs, progress, desc="type I")
    return float(np.mean(hits))


# --------------------------------------------------------------------------
# probe design
# --------------------------------------------------------------------------

def cobb_douglas_violator(gamma_a=(0.9, 0.1), gamma_b=(0.1, 0.9), max_tries=50):
    """
    Responses that mix the demands of two different Cobb-Douglas agents.

    Each observation follows one of the two agents at random; draws are
    repeated until the result violates GARP.

    Returns
    -------
    callable
        (alpha, rng) -> beta, shape (N, m).
    """
    gamma_a = np.asarray(gamma_a, float) / np.sum(gamma_a)
    gamma_b = np.asarray(gamma_b, float) / np.sum(gamma_b)

    def generate(alpha, rng):
        alpha = np.atleast_2d(alpha)
        da, db = gamma_a / alpha, gamma_b / alpha
        beta = da
        for _ in range(max_tries):
            w = rng.integers(0, 2, size=(alpha.shape[0], 1)).astype(float)
            beta = w * da + (1.0 - w) * db
            if not check_garp(BudgetDataset(alpha, beta)).consistent:
                break
        return beta

    return generate


def rademacher(rng, shape):
    return rng.choice(np.array([-1.0, 1.0]), size=shape)


def type_two_error(generator, noise, probes, gamma, trials, L, seed, jobs=1):
    """
    Empirical probability that detect keeps H0 on non-maximizing responses.

    The same seed gives the same noise and generator draws for any probes.
    """
    probes = np.atleast_2d(np.asarray(probes, float))
    cal = calibrate_M(noise, probes, L, seed, jobs)

    def one(t):
        beta = np.atleast_2d(generator(probes, config.trial_rng(seed, L, t, 0)))
        if check_garp(BudgetDataset(probes, beta, normalize=False)).consistent:
            raise GeneratorNotViolating("scenario produced GARP-consistent responses", evidence=beta)
        noisy = NoisyDataset(probes, beta + noise.draw(config.trial_rng(seed, L, t, 1), beta.shape))
        return detect(noisy, cal, gamma).verdict == "H0"

    return float(np.mean(config.run_trials(one, trials, jobs)))


def spsa_probe_opt(generator, noise, probes0, gamma=0.05, iters=20, omega=0.05, mu0=0.1, trials=50, L=200,
                   seed=0, alpha_min=config.ALPHA_MIN, jobs=1, progress=False):
    """
    Minimize the Type-II error over probes by SPSA.

    Parameters
    ----------
    generator : callable
        (alpha, rng) -> non-maximizing responses for the given probes.
    noise : NoiseModel
    probes0 : array_like, shape (N, m)
        Strictly positive starting probes.
    omega : float
        Perturbation size.
    mu0 : float
        Step gain; step i uses mu0 / (i + 1) ** 0.602.
    trials, L : int
        Datasets per Type-II estimate and calibration draws.

    Returns
    -------
    SpsaResult
        Final probes and the Type-II estimate at each iteration.
    """
    alpha = np.atleast_2d(np.asarray(probes0, float)).copy()
    if np.any(alpha <= 0):
        raise NonPositiveProbe("initial probes must be strictly positive")
    trace, history = [], [alpha.copy()]
    for i in range(iters):
        rng = config.trial_rng(seed, i)
        delta = rademacher(rng, alpha.shape)
        eval_seed = int(rng.integers(0, 2**31 - 1))
        plus = np.maximum(alpha + omega * delta, alpha_min)
        minus = np.maximum(alpha - omega * delta, alpha_min)
        j_plus = type_two_error(generator, noise, plus, gamma, trials, L, eval_seed, jobs)
        j_minus = type_two_error(generator, noise, minus, gamma, trials, L, eval_seed, jobs)
        trace.append(0.5 * (j_plus + j_minus))
        mu = mu0 / (i + 1) ** SPSA_DECAY
        if omega > 0 and mu > 0:
            grad = (j_plus - j_minus) / (2.0 * omega) * delta
            alpha = np.maximum(alpha - mu * grad, alpha_min)
        history.append(alpha.copy())
        if progress:
            logger.info("spsa step", extra={"iter": i, "type_two": trace[-1]})
    return SpsaResult(alpha, np.asarray(trace), history)

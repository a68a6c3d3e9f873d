"""
sim.py

Ground-truth scenario generators with known utilities.

    gen_waveform_dataset            radar waveform choice under an SNR budget
    gen_beam_dataset                beam time allocation priced by tracker precision
    gen_nonlinear_waveform_dataset  covariance-eigenvalue (nonlinear) budget, m <= 2
    gen_pareto_dataset              social planner splitting a shared budget
    gen_potential_dataset           agents maximizing a separable concave potential

Dependencies:
    numpy, scipy
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import block_diag
from scipy.optimize import minimize

from .errors import InputError, OptimizerStall
from .multiagent import AggregateDataset, MultiAgentDataset
from .rp import BudgetDataset, NonlinearBudget
from .solvers import RiccatiSpec, solve_are

logger = logging.getLogger(__name__)

COV_BUDGET_TOL = 1e-6


# --------------------------------------------------------------------------
# utilities
# --------------------------------------------------------------------------

class CobbDouglas:
    """U(beta) = prod beta_i^gamma_i with gamma normalized to sum 1."""

    def __init__(self, gamma):
        gamma = np.asarray(gamma, float)
        if np.any(gamma <= 0):
            raise InputError("Cobb-Douglas exponents must be positive")
        self.gamma = gamma / gamma.sum()

    def __call__(self, beta):
        beta = np.maximum(np.asarray(beta, float), 0.0)
        return np.prod(beta ** self.gamma, axis=-1)

    def gradient(self, beta):
        beta = np.asarray(beta, float)
        return self(beta)[..., None] * self.gamma / np.maximum(beta, 1e-300)

    def demand(self, alpha, income=1.0):
        return self.gamma * income / np.asarray(alpha, float)


class CES:
    """U(beta) = (sum w_i beta_i^rho)^(1/rho), rho < 1, rho != 0."""

    def __init__(self, weights, rho):
        if rho >= 1 or rho == 0:
            raise InputError("CES needs rho < 1 and rho != 0")
        self.w = np.asarray(weights, float)
        self.rho = float(rho)

    def __call__(self, beta):
        beta = np.maximum(np.asarray(beta, float), 1e-300)
        return np.sum(self.w * beta ** self.rho, axis=-1) ** (1.0 / self.rho)

    def gradient(self, beta):
        beta = np.maximum(np.asarray(beta, float), 1e-300)
        inner = np.sum(self.w * beta ** self.rho, axis=-1)
        return (inner ** (1.0 / self.rho - 1.0))[..., None] * self.w * beta ** (self.rho - 1.0)

    def demand(self, alpha, income=1.0):
        alpha = np.asarray(alpha, float)
        sigma = 1.0 / (1.0 - self.rho)
        num = self.w ** sigma * alpha ** (-sigma)
        return income * num / np.sum(self.w ** sigma * alpha ** (1.0 - sigma))


def maximize_on_budget(U, alpha, income=1.0, grad=None, verify_grid=True, grid_points=4001):
    """
    argmax U(beta) subject to alpha'beta <= income, beta >= 0.

    Closed-form demand is used when the utility provides one; otherwise
    SLSQP with the budget as an equality (monotone utilities spend it all).
    For m = 2 the answer is checked against a dense grid on the budget line.
    """
    alpha = np.asarray(alpha, float)
    if hasattr(U, "demand"):
        return U.demand(alpha, income)
    m = len(alpha)
    x0 = np.full(m, income / (m * alpha.mean()))
    cons = {"type": "eq", "fun": lambda x: alpha @ x - income, "jac": lambda x: alpha}
    bounds = [(1e-12, income / a) for a in alpha]
    jac = (lambda x: -np.asarray(grad(x))) if grad is not None else None
    res = minimize(lambda x: -float(U(x)), x0, jac=jac, method="SLSQP", bounds=bounds,
                   constraints=[cons], options={"ftol": 1e-14, "maxiter": 500})
    if not res.success:
        raise OptimizerStall(f"SLSQP failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    x *= income / (alpha @ x)
    if verify_grid and m == 2:
        t = np.linspace(0.0, income / alpha[0], grid_points)
        pts = np.column_stack([t, (income - alpha[0] * t) / alpha[1]])
        vals = np.array([U(p) for p in pts])
        best = int(np.argmax(vals))
        if vals[best] > U(x) + 1e-9:
            logger.warning("⚠️ grid beats SLSQP, using grid point", extra={"gap": float(vals[best] - U(x))})
            x = pts[best]
    return x


# --------------------------------------------------------------------------
# spectral (waveform) scenario
# --------------------------------------------------------------------------

@dataclass
class SpectralScenario:
    """
    Target kinematics seen by a Kalman tracker.

    Probe alpha sets the maneuver noise Q = G diag(alpha) G'; response beta
    is the precision spectrum R^-1 = diag(beta).
    """

    A: np.ndarray
    C: np.ndarray
    G: np.ndarray
    snr_cap: float = 1.0

    @classmethod
    def kinematic(cls, T=1.0, axes=3, snr_cap=1.0):
        block = np.array([[1.0, T], [0.0, 1.0]])
        A = block_diag(*[block] * axes)
        C = np.zeros((axes, 2 * axes))
        G = np.zeros((2 * axes, axes))
        for i in range(axes):
            C[i, 2 * i] = 1.0
            G[2 * i:2 * i + 2, i] = [T ** 2 / 2.0, T]
        return cls(A, C, G, snr_cap)

    @property
    def m(self):
        return self.C.shape[0]

    def Q(self, alpha):
        alpha = np.asarray(alpha, float)
        if np.any(alpha <= 0):
            raise InputError("probe spectrum must be positive")
        return self.G @ np.diag(alpha) @ self.G.T

    def R(self, beta):
        beta = np.asarray(beta, float)
        if np.any(beta <= 0):
            raise InputError("response spectrum must be positive")
        return np.diag(1.0 / beta)


def tracker_covariance(scn, alpha, beta):
    """Stationary predicted covariance of the tracker for (alpha, beta)."""
    return solve_are(RiccatiSpec(scn.A, scn.C, scn.Q(alpha), scn.R(beta)))


def gen_waveform_dataset(scn, utility=None, N=20, seed=0, probe_range=(0.5, 2.0)):
    """
    Probe/response data from a radar maximizing U(beta) subject to alpha'beta <= snr_cap.

    Parameters
    ----------
    scn : SpectralScenario
        Tracker geometry; its ``m`` fixes the response dimension.
    utility : callable, optional
        Monotone symmetric utility (default: equal-weight Cobb-Douglas).
    N : int
        Number of epochs.
    seed : int
        Random seed for the probes.

    Returns
    -------
    (BudgetDataset, callable)
    """
    m = scn.m
    if m > 4:
        raise InputError("waveform generator supports m <= 4")
    U = utility or CobbDouglas(np.ones(m))
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(*probe_range, size=(N, m)) / scn.snr_cap
    beta = np.array([maximize_on_budget(U, a, 1.0, getattr(U, "gradient", None)) for a in alpha])
    logger.info("✅ waveform dataset generated", extra={"N": N, "m": m})
    return BudgetDataset(alpha, beta), U


# --------------------------------------------------------------------------
# beam allocation scenario
# --------------------------------------------------------------------------

@dataclass
class BeamScenario:
    """
    m targets tracked by one radar that splits its dwell time beta.

    Each target i has kinematics (A, C), base maneuver covariance Q[i] and
    measurement covariance R[i]. The price of target i is the trace of the
    inverse predicted covariance.
    """

    A: np.ndarray
    C: np.ndarray
    Q: list
    R: list
    p_star: float = 1.0
    maneuver_range: tuple = (0.5, 2.0)

    @classmethod
    def default(cls, m=3, T=1.0, p_star=1.0):
        A = np.array([[1.0, T], [0.0, 1.0]])
        C = np.array([[1.0, 0.0]])
        G = np.array([[T ** 2 / 2.0], [T]])
        Q = [(0.5 + i) * (G @ G.T) for i in range(m)]
        R = [np.array([[1.0 + 0.5 * i]]) for i in range(m)]
        return cls(A, C, Q, R, p_star)

    @property
    def m(self):
        return len(self.Q)


def beam_probe(scn, scales):
    """alpha(i) = trace of the inverse stationary predicted covariance of target i."""
    out = np.empty(scn.m)
    for i in range(scn.m):
        sigma = solve_are(RiccatiSpec(scn.A, scn.C, scales[i] * scn.Q[i], scn.R[i]))
        out[i] = np.trace(np.linalg.inv(sigma))
    return out


def gen_beam_dataset(scn, utility=None, N=20, seed=0, maneuvering=True):
    """
    Dwell-time allocations of a radar maximizing U(beta) s.t. beta'alpha_k <= p_star.

    The dataset is normalized (p_star scaled to 1).
    """
    U = utility or CobbDouglas(np.ones(scn.m))
    rng = np.random.default_rng(seed)
    alpha, beta = [], []
    for _ in range(N):
        scales = rng.uniform(*scn.maneuver_range, size=scn.m) if maneuvering else np.ones(scn.m)
        a = beam_probe(scn, scales)
        alpha.append(a)
        beta.append(maximize_on_budget(U, a, scn.p_star, getattr(U, "gradient", None)))
    return BudgetDataset(np.array(alpha), np.array(beta))


# --------------------------------------------------------------------------
# nonlinear (covariance eigenvalue) budget
# --------------------------------------------------------------------------

def _lambda_max(scn, alpha, noise):
    sigma = solve_are(RiccatiSpec(scn.A, scn.C, scn.Q(alpha), np.diag(noise)), tol=1e-11)
    return float(np.linalg.eigvalsh(sigma)[-1])


def gen_nonlinear_waveform_dataset(scn, utility=None, N=10, lam_fraction=0.6, beta_bar=5.0, seed=0,
                                   probe_range=(0.5, 2.0)):
    """
    Responses beta (observation-noise spectrum) maximizing U(beta) subject to
    lambda_max(Sigma*(alpha_k, beta)) <= lambda_bar_k and beta <= beta_bar.

    lambda_bar_k is ``lam_fraction`` times the eigenvalue reached at beta_bar,
    which keeps the covariance constraint active.

    Returns
    -------
    (numpy.ndarray, NonlinearBudget, numpy.ndarray)
        Responses, budget with g_k(beta_k) = 0, and the probes.
    """
    m = scn.m
    if m > 2:
        raise InputError("the nonlinear-budget generator supports m <= 2")
    U = utility or CobbDouglas(np.ones(m))
    rng = np.random.default_rng(seed)
    probes, responses, evaluators = [], [], []
    for _ in range(N):
        a = rng.uniform(*probe_range, size=m)
        lam_bar = lam_fraction * _lambda_max(scn, a, np.full(m, beta_bar))
        cons = {"type": "ineq", "fun": lambda b, a=a, lb=lam_bar: lb - _lambda_max(scn, a, b)}
        x0 = np.full(m, 0.05 * beta_bar)
        res = minimize(lambda b: -float(U(b)), x0, method="SLSQP", bounds=[(1e-6, beta_bar)] * m,
                       constraints=[cons], options={"ftol": 1e-9, "maxiter": 500})
        b = np.clip(res.x, 1e-6, beta_bar)
        if not res.success:
            # feasible last iterate is kept
            if not np.all(np.isfinite(b)) or cons["fun"](b) < -COV_BUDGET_TOL * lam_bar:
                raise OptimizerStall(f"SLSQP failed on the covariance budget: {res.message}")
            logger.warning("⚠️ SLSQP stopped early, keeping the feasible iterate",
                           extra={"status": int(res.status), "slack": float(cons["fun"](b))})
        level = _lambda_max(scn, a, b)
        probes.append(a)
        responses.append(b)
        evaluators.append(lambda x, a=a, lv=level: _lambda_max(scn, a, np.maximum(x, 1e-9)) - lv)
    return np.array(responses), NonlinearBudget(evaluators), np.array(probes)


# --------------------------------------------------------------------------
# multiagent generators
# --------------------------------------------------------------------------

def gen_pareto_dataset(P=2, N=5, m=2, seed=0, weights=None, lower_fraction=0.5):
    """
    Aggregate responses of a planner maximizing sum_p mu_p sum_i gamma_p(i) log beta^p(i)
    under the shared budget alpha_k' sum_p beta^p <= 1.

    Closed form: beta^p(i) = mu_p gamma_p(i) / (alpha(i) sum_q mu_q).
    Assignable lower bounds are ``lower_fraction`` of each true share.

    Returns
    -------
    (AggregateDataset, numpy.ndarray)
        The dataset and the true per-agent responses, shape (P, N, m).
    """
    rng = np.random.default_rng(seed)
    mu = np.asarray(weights, float) if weights is not None else rng.uniform(0.5, 1.5, size=P)
    gamma = rng.dirichlet(np.ones(m), size=P)
    alpha = rng.uniform(0.5, 2.0, size=(N, m))
    shares = mu[:, None, None] * gamma[:, None, :] / (alpha[None, :, :] * mu.sum())
    beta = shares.sum(axis=0)
    lower = lower_fraction * shares
    return AggregateDataset(alpha, beta, lower), shares


def gen_potential_dataset(P=2, N=5, m=2, seed=0):
    """
    Nash play of agents maximizing V = sum_p sum_i gamma_p(i) log beta^p(i),
    each under its own budget alpha_k' beta^p <= c_{p,k}.
    """
    rng = np.random.default_rng(seed)
    gamma = rng.dirichlet(np.ones(m), size=P)
    alpha = rng.uniform(0.5, 2.0, size=(N, m))
    income = rng.uniform(0.5, 1.5, size=(P, N))
    beta = gamma[:, None, :] * income[:, :, None] / alpha[None, :, :]
    return MultiAgentDataset(alpha, beta)


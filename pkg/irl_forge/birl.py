"""
birl.py

Bayesian revealed preferences.

A behavior dataset is the prior over states plus, per environment, the
agent's action kernel p_m(a|x). The BRP test looks for rewards (or stopping
costs) and information costs z_m that satisfy

    NIAS  the chosen action is optimal for its revealed posterior
    NIAC  no environment would do better with another environment's attention

Also here: the rationally inattentive agent simulator used to generate
datasets, information-cost reconstruction, inverse sequential hypothesis
testing, inverse search, inverse quickest detection and multinomial-logit
estimation.

Dependencies:
    numpy, scipy (special.logsumexp)
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, xlogy

from . import config
from .errors import (
    AllActionsUnused,
    CertificateMismatch,
    DegenerateMenu,
    DimensionMismatch,
    InputError,
    NonFinite,
    NotOptimal,
    NotUMRI,
)
from .solvers import LinearSystem, lp_feasible

logger = logging.getLogger(__name__)

UNUSED = 1e-15
MODES = ("max", "min")


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

def _check_stochastic(P, name, axis=-1):
    if np.any(P < -config.TOL_NORM) or np.any(np.abs(P.sum(axis=axis) - 1.0) > 1e-8):
        raise InputError(f"{name} must be nonnegative with rows summing to 1")


@dataclass
class BehaviorDataset:
    """
    Prior over X states and one X x A action kernel per environment.

    Parameters
    ----------
    prior : array_like, shape (X,)
    kernels : array_like, shape (M, X, A)
        kernels[m, x, a] = p_m(a | x).
    """

    prior: np.ndarray
    kernels: np.ndarray

    def __post_init__(self):
        self.prior = np.asarray(self.prior, float).ravel()
        self.kernels = np.asarray(self.kernels, float)
        if self.kernels.ndim == 2:
            self.kernels = self.kernels[None]
        if self.kernels.ndim != 3 or self.kernels.shape[1] != self.prior.size:
            raise DimensionMismatch("kernels must be (M, X, A) with X matching the prior")
        _check_stochastic(self.prior, "prior", axis=0)
        _check_stochastic(self.kernels, "action kernels")

    @property
    def M(self):
        return self.kernels.shape[0]

    @property
    def X(self):
        return self.kernels.shape[1]

    @property
    def A(self):
        return self.kernels.shape[2]

    def joint(self):
        """p_m(x, a) = prior(x) p_m(a | x), shape (M, X, A)."""
        return self.prior[None, :, None] * self.kernels

    def used(self):
        """(M, A) mask of actions with positive marginal probability."""
        return self.joint().sum(axis=1) > UNUSED


@dataclass
class SHTDataset(BehaviorDataset):
    """Binary-hypothesis behavior plus the expected continue cost C_m = E{tau_m}."""

    continue_costs: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        if self.X != 2 or self.A != 2:
            raise DimensionMismatch("sequential hypothesis testing needs X = A = 2")
        self.continue_costs = np.asarray(self.continue_costs, float).ravel()
        if self.continue_costs.size != self.M or np.any(self.continue_costs < 0):
            raise InputError("one nonnegative continue cost per environment is required")


@dataclass
class SearchDataset:
    """Prior over locations and expected visit counts g_m(a|x), shape (M, X, X)."""

    prior: np.ndarray
    visits: np.ndarray

    def __post_init__(self):
        self.prior = np.asarray(self.prior, float).ravel()
        self.visits = np.asarray(self.visits, float)
        if self.visits.ndim != 3 or self.visits.shape[1] != self.prior.size:
            raise DimensionMismatch("visits must be (M, X, A) with X matching the prior")
        _check_stochastic(self.prior, "prior", axis=0)
        if np.any(~np.isfinite(self.visits)) or np.any(self.visits < 0):
            raise InputError("visit counts must be finite and nonnegative")

    @property
    def M(self):
        return self.visits.shape[0]


@dataclass
class QuickestDataset:
    """
    Change-time prior over {1..N} and declared-change behavior p_m(tau | tau0).

    stop_probs[m, i, j] is the probability of declaring at time j + 1 when
    the change happens at time i + 1.
    """

    prior: np.ndarray
    stop_probs: np.ndarray

    def __post_init__(self):
        self.prior = np.asarray(self.prior, float).ravel()
        self.stop_probs = np.asarray(self.stop_probs, float)
        if self.stop_probs.ndim == 2:
            self.stop_probs = self.stop_probs[None]
        N = self.prior.size
        if self.stop_probs.shape[1:] != (N, N):
            raise DimensionMismatch("stop_probs must be (M, N, N) with N the prior length")
        _check_stochastic(self.prior, "change-time prior", axis=0)
        _check_stochastic(self.stop_probs, "declaration kernels")

    @property
    def M(self):
        return self.stop_probs.shape[0]

    def delay(self):
        """K_m = E{(tau - tau0)^+} per environment."""
        t = np.arange(self.prior.size)
        lag = np.maximum(t[None, :] - t[:, None], 0)
        return np.einsum("i,mij,ij->m", self.prior, self.stop_probs, lag)

    def false_alarm(self):
        """P(tau < tau0) per environment."""
        t = np.arange(self.prior.size)
        early = (t[None, :] < t[:, None]).astype(float)
        return np.einsum("i,mij,ij->m", self.prior, self.stop_probs, early)


@dataclass
class ChoiceData:
    """
    Attributes psi (K, A, d) and observed choice frequencies (K, A).

    ``weights`` (K,) counts how many agents each row stands for.
    """

    psi: np.ndarray
    freq: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        self.psi = np.asarray(self.psi, float)
        self.freq = np.asarray(self.freq, float)
        if self.psi.ndim != 3 or self.freq.shape != self.psi.shape[:2]:
            raise DimensionMismatch("psi must be (K, A, d) and freq (K, A)")
        _check_stochastic(self.freq, "choice frequencies")
        self.weights = np.ones(self.psi.shape[0]) if self.weights is None else np.asarray(self.weights, float)

    def pivoted(self):
        """psi_{k,a} - psi_{k,1}."""
        return self.psi - self.psi[:, :1, :]


@dataclass
class BRPCertificate:
    """
    Rewards (mode "max") or stopping costs (mode "min"), shape (M, X, A),
    and information costs z, shape (M,).
    """

    rewards: np.ndarray
    z: np.ndarray
    mode: str = "max"


@dataclass
class UMRIAgentSpec:
    """
    Rationally inattentive agent.

    Parameters
    ----------
    prior : (X,)
    rewards : (M, X, A)
    menu : list of (X, A) observation kernels (observations are identified with actions)
    cost : callable (B, prior) -> float
    """

    prior: np.ndarray
    rewards: np.ndarray
    menu: list
    cost: object = None

    def __post_init__(self):
        self.prior = np.asarray(self.prior, float).ravel()
        self.rewards = np.asarray(self.rewards, float)
        self.menu = [np.asarray(B, float) for B in self.menu]
        if not self.menu:
            raise DegenerateMenu("attention menu is empty")
        X, A = self.rewards.shape[1:]
        for B in self.menu:
            if B.shape != (X, A):
                raise DegenerateMenu(f"menu kernel of shape {B.shape}, expected {(X, A)}")
            _check_stochastic(B, "menu kernel")
        if self.cost is None:
            self.cost = mutual_information_cost(0.0)


@dataclass
class SHTCosts:
    L1: np.ndarray
    L2: np.ndarray
    certificate: BRPCertificate = field(repr=False, default=None)


# --------------------------------------------------------------------------
# forward model
# --------------------------------------------------------------------------

def mutual_information_cost(weight):
    """K(B, prior) = weight * I(x; y)."""

    def cost(B, prior):
        joint = prior[:, None] * B
        marginal = joint.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(joint > 0, B / np.where(marginal > 0, marginal, 1.0)[None, :], 1.0)
        return float(weight * np.sum(xlogy(joint, ratio)))

    return cost


def expected_reward(r, B, prior):
    """R(r, B, prior) = sum_y max_a sum_x r(x, a) B(x, y) prior(x)."""
    joint = prior[:, None] * B
    return float(np.sum(np.max(r.T @ joint, axis=0)))


def simulate_umri(spec):
    """
    Exact behavior of a rationally inattentive utility maximizer.

    Per environment the kernel maximizing R - K is picked from the menu and
    each observation maps to its best action (lowest index on ties).

    Returns
    -------
    (BehaviorDataset, list of int)
        The dataset and the chosen menu index per environment.
    """
    M, X, A = spec.rewards.shape
    kernels, chosen = np.zeros((M, X, A)), []
    for m in range(M):
        r = spec.rewards[m]
        values = [expected_reward(r, B, spec.prior) - spec.cost(B, spec.prior) for B in spec.menu]
        j = int(np.argmax(values))
        B = spec.menu[j]
        best = np.argmax(r.T @ (spec.prior[:, None] * B), axis=0)
        for y, a in enumerate(best):
            kernels[m, :, a] += B[:, y]
        chosen.append(j)
    logger.debug("simulated agent", extra={"chosen": chosen})
    return BehaviorDataset(spec.prior, kernels), chosen


def random_umri_spec(rng, X=2, A=2, M=3, menu_size=3, cost_weight=0.1):
    """Random prior, rewards in [0, 1] and a menu with random, uninformative and perfect kernels."""
    prior = rng.dirichlet(np.ones(X))
    rewards = rng.uniform(0.0, 1.0, size=(M, X, A))
    menu = [np.full((X, A), 1.0 / A)]
    if X == A:
        menu.append(np.eye(X))
    while len(menu) < menu_size:
        menu.append(rng.dirichlet(np.ones(A), size=X))
    return UMRIAgentSpec(prior, rewards, menu[:max(menu_size, 1)], mutual_information_cost(cost_weight))


# --------------------------------------------------------------------------
# BRP feasibility
# --------------------------------------------------------------------------

def revealed_posteriors(ds):
    """
    p_m(x | a), shape (M, A, X), with NaN rows for unused actions.

    Returns
    -------
    (posteriors, used)
    """
    joint = ds.joint()
    marg = joint.sum(axis=1)
    used = marg > UNUSED
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(used[:, :, None], np.transpose(joint, (0, 2, 1)) / marg[:, :, None], np.nan)
    return post, used


def _gross(joint_l, u_m, mode):
    """sum_a max_abar (or min) sum_x p_l(x, a) u_m(x, abar)."""
    scores = joint_l.T @ u_m
    return float(np.sum(scores.max(axis=1) if mode == "max" else scores.min(axis=1)))


def _own(joint_m, u_m):
    return float(np.sum(joint_m * u_m))


def _distinct(ds, l, m):
    return not np.allclose(ds.kernels[l], ds.kernels[m], atol=1e-12, rtol=0.0)


def brp_system(ds, mode="max", margin=0.0, fixed_z=None, zero_diagonal=False):
    """
    NIAS and pairwise NIAC rows over [u (M*X*A), z (M), v (M*M*A)].

    v are epigraph variables for the inner max (mode "max") or hypograph
    variables for the inner min (mode "min").
    """
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}")
    M, X, A = ds.kernels.shape
    joint = ds.joint()
    post, used = revealed_posteriors(ds)
    if not np.all(used.any(axis=1)):
        raise AllActionsUnused("an environment has no action with positive probability")

    nu, nz = M * X * A, M
    n = nu + nz + M * M * A

    def u(m, x, a):
        return (m * X + x) * A + a

    def z(m):
        return nu + m

    def v(l, m, a):
        return nu + nz + (l * M + m) * A + a

    lower = np.full(n, -np.inf)
    upper = np.full(n, np.inf)
    lower[:nu + nz] = 0.0
    if fixed_z is not None:
        fixed_z = np.asarray(fixed_z, float).ravel()
        if fixed_z.size != M:
            raise DimensionMismatch("fixed_z needs one value per environment")
        lower[nu:nu + nz] = fixed_z
        upper[nu:nu + nz] = fixed_z
    if zero_diagonal:
        for m in range(M):
            for x in range(min(X, A)):
                upper[u(m, x, x)] = 0.0
    sys = LinearSystem(n, var_lower=lower, var_upper=upper)
    sign = 1.0 if mode == "max" else -1.0

    for m in range(M):
        for a in np.flatnonzero(used[m]):
            for abar in range(A):
                if abar == a:
                    continue
                row = np.zeros(n)
                for x in range(X):
                    row[u(m, x, abar)] += sign * post[m, a, x]
                    row[u(m, x, a)] -= sign * post[m, a, x]
                sys.add_row(row, -margin, "<=")

    for l, m in itertools.permutations(range(M), 2):
        for a in range(A):
            for abar in range(A):
                row = np.zeros(n)
                for x in range(X):
                    row[u(m, x, abar)] = sign * joint[l, x, a]
                row[v(l, m, a)] = -sign
                sys.add_row(row, 0.0, "<=")
        row = np.zeros(n)
        for a in range(A):
            row[v(l, m, a)] = sign
        for x in range(X):
            for a in range(A):
                row[u(m, x, a)] -= sign * joint[m, x, a]
        row[z(l)] -= 1.0
        row[z(m)] += 1.0
        eps = margin if _distinct(ds, l, m) else 0.0
        sys.add_row(row, -eps, "<=")
    return sys, (nu, nz)


def brp_feasible(ds, mode="max", margin=0.0, fixed_z=None, zero_diagonal=False):
    """
    Bayesian revealed-preference test.

    Parameters
    ----------
    ds : BehaviorDataset
    mode : {"max", "min"}
        Reward maximization, or stopping-cost minimization (r = -s).
    margin : float
        Require NIAS and NIAC to hold with slack at least ``margin``. The NIAC
        margin is only imposed between environments with distinct kernels.
    fixed_z : array_like, optional
        Known information (continue) costs.

    Returns
    -------
    BRPCertificate

    Raises
    ------
    NotUMRI
    """
    if ds.M < 2:
        logger.warning("⚠️ a single environment cannot identify the agent", extra={"M": ds.M})
    sys, (nu, nz) = brp_system(ds, mode, margin, fixed_z, zero_diagonal)
    res = lp_feasible(sys)
    if not res.feasible:
        raise NotUMRI("no rewards and information costs satisfy NIAS and NIAC", evidence={"margin": margin})
    u = res.witness[:nu].reshape(ds.kernels.shape)
    z = res.witness[nu:nu + nz]
    return BRPCertificate(np.maximum(u, 0.0), np.maximum(z, 0.0), mode)


def brp_violation(ds, rewards, z, mode="max", margin=0.0):
    """Largest violation of NIAS/NIAC by a given reward (or cost) and z; <= 0 means feasible."""
    rewards = np.asarray(rewards, float)
    z = np.asarray(z, float)
    if rewards.shape != ds.kernels.shape or z.shape != (ds.M,):
        raise CertificateMismatch("rewards/costs must be (M, X, A) and z (M,)")
    sign = 1.0 if mode == "max" else -1.0
    post, used = revealed_posteriors(ds)
    joint = ds.joint()
    worst = -np.inf
    for m in range(ds.M):
        for a in np.flatnonzero(used[m]):
            gains = sign * (post[m, a] @ (rewards[m] - rewards[m][:, [a]]))
            gains[a] = -np.inf
            worst = max(worst, float(gains.max()) + margin)
    for l, m in itertools.permutations(range(ds.M), 2):
        other = _gross(joint[l], rewards[m], mode)
        own = _own(joint[m], rewards[m])
        eps = margin if _distinct(ds, l, m) else 0.0
        worst = max(worst, sign * (other - own) - z[l] + z[m] + eps)
    return worst


def niac_pairwise_z(ds, rewards, mode="max"):
    """Information costs z >= 0 satisfying pairwise NIAC for fixed rewards, or None."""
    joint = ds.joint()
    M = ds.M
    sign = 1.0 if mode == "max" else -1.0
    sys = LinearSystem(M, var_lower=np.zeros(M))
    for l, m in itertools.permutations(range(M), 2):
        gap = sign * (_gross(joint[l], rewards[m], mode) - _own(joint[m], rewards[m]))
        row = np.zeros(M)
        row[m] += 1.0
        row[l] -= 1.0
        sys.add_row(row, -gap, "<=")
    res = lp_feasible(sys)
    return res.witness if res.feasible else None


def niac_cycles_hold(ds, rewards, mode="max", tol=config.TOL_LP):
    """Combinatorial NIAC: no cycle of environments gains by passing attention along."""
    joint = ds.joint()
    M = ds.M
    sign = 1.0 if mode == "max" else -1.0
    gap = np.zeros((M, M))
    for m, l in itertools.permutations(range(M), 2):
        gap[m, l] = sign * (_gross(joint[l], rewards[m], mode) - _own(joint[m], rewards[m]))
    for size in range(2, M + 1):
        for nodes in itertools.combinations(range(M), size):
            first, rest = nodes[0], nodes[1:]
            for perm in itertools.permutations(rest):
                cycle = (first,) + perm
                total = sum(gap[cycle[t], cycle[(t + 1) % size]] for t in range(size))
                if total > tol:
                    return False
    return True


def reconstruct_info_cost(cert, ds, query):
    """
    Reconstructed information (or continue) cost of a query kernel p(a|x).

    max_m { z_m + sum_a max_abar sum_x p(x,a) r_m(x,abar) - sum_{x,a} p_m(x,a) r_m(x,a) }
    and the min-cost counterpart for stopping problems.
    """
    query = np.asarray(query, float)
    if cert.rewards.shape != ds.kernels.shape or cert.z.shape != (ds.M,):
        raise CertificateMismatch("certificate does not match the dataset dimensions")
    if query.shape != ds.kernels.shape[1:]:
        raise DimensionMismatch(f"query kernel must be {ds.kernels.shape[1:]}")
    qjoint = ds.prior[:, None] * query
    joint = ds.joint()
    vals = []
    for m in range(ds.M):
        gross = _gross(qjoint, cert.rewards[m], cert.mode)
        own = _own(joint[m], cert.rewards[m])
        vals.append(cert.z[m] + (gross - own if cert.mode == "max" else own - gross))
    return float(max(vals))


# --------------------------------------------------------------------------
# inverse stopping-time problems
# --------------------------------------------------------------------------

def inverse_sht(ds, margin=0.0):
    """
    Misclassification costs consistent with optimal sequential hypothesis testing.

    Stopping costs s_m(x, a) are zero on the diagonal; s_m(1, 2) = L1 and
    s_m(2, 1) = L2. z_m is fixed to the observed continue cost.

    Raises
    ------
    NotOptimal
    """
    try:
        cert = brp_feasible(ds, mode="min", margin=margin, fixed_z=ds.continue_costs, zero_diagonal=True)
    except NotUMRI as exc:
        raise NotOptimal("no misclassification costs explain the stopping behavior", evidence=exc.evidence) from exc
    return SHTCosts(cert.rewards[:, 0, 1].copy(), cert.rewards[:, 1, 0].copy(), cert)


def inverse_search(ds):
    """
    Search costs c_m(a) >= 0 with c_m(1) = 1 satisfying
    sum_{x,a} prior(x) (g_m(a|x) - g_l(a|x)) c_m(a) <= 0 for all l != m.

    Returns
    -------
    numpy.ndarray, shape (M, A)

    Raises
    ------
    NotOptimal
    """
    M, X, A = ds.visits.shape
    weighted = np.einsum("x,mxa->ma", ds.prior, ds.visits)
    costs = np.zeros((M, A))
    for m in range(M):
        lower = np.zeros(A)
        upper = np.full(A, np.inf)
        lower[0] = upper[0] = 1.0
        sys = LinearSystem(A, var_lower=lower, var_upper=upper)
        for l in range(M):
            if l != m:
                sys.add_row(weighted[m] - weighted[l], 0.0, "<=")
        res = lp_feasible(sys)
        if not res.feasible:
            raise NotOptimal(f"search behavior in environment {m + 1} is not optimal for any costs",
                             evidence={"environment": m + 1})
        costs[m] = res.witness
    return costs


def inverse_quickest(ds):
    """
    False-alarm penalties f_m >= 0 (delay penalty 1) with
    f_m (PFA_m - PFA_n) <= K_n - K_m for all n != m.

    Returns
    -------
    numpy.ndarray, shape (M,)

    Raises
    ------
    NotOptimal
    """
    K, pfa = ds.delay(), ds.false_alarm()
    out = np.zeros(ds.M)
    for m in range(ds.M):
        sys = LinearSystem(1, var_lower=np.zeros(1))
        for n in range(ds.M):
            if n != m:
                sys.add_row([pfa[m] - pfa[n]], K[n] - K[m], "<=")
        res = lp_feasible(sys)
        if not res.feasible:
            raise NotOptimal(f"detector in environment {m + 1} is dominated", evidence={"delay": K, "pfa": pfa})
        out[m] = res.witness[0]
    return out


# --------------------------------------------------------------------------
# multinomial logit
# --------------------------------------------------------------------------

def choice_probabilities(psi, theta):
    util = np.asarray(psi, float) @ np.asarray(theta, float)
    return np.exp(util - logsumexp(util, axis=1, keepdims=True))


def logit_loglik(data, theta):
    util = data.pivoted() @ theta
    logp = util - logsumexp(util, axis=1, keepdims=True)
    return float(np.sum(data.weights * np.sum(data.freq * logp, axis=1)) / np.sum(data.weights))


def logit_gradient(data, theta):
    psi = data.pivoted()
    P = choice_probabilities(psi, theta)
    expected = np.einsum("ka,kad->kd", P, psi)
    observed = np.einsum("ka,kad->kd", data.freq, psi)
    return (data.weights @ (observed - expected)) / np.sum(data.weights)


def logit_mle(data, theta0=None, iters=20_000, lr=0.5, tol=1e-10, max_norm=1e8):
    """
    Maximum-likelihood logit parameter by gradient ascent on the mean log-likelihood.

    Raises
    ------
    NonFinite
        When the iterate leaves the finite range (step size too large).
    """
    d = data.psi.shape[2]
    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, float).copy()
    for it in range(iters):
        g = logit_gradient(data, theta)
        if np.max(np.abs(g)) < tol:
            break
        theta = theta + lr * g
        if not np.all(np.isfinite(theta)) or np.linalg.norm(theta) > max_norm:
            raise NonFinite(f"logit iterate diverged at step {it} (lr={lr})")
    else:
        logger.warning("⚠️ logit ascent stopped at the iteration cap", extra={"iters": iters})
    return theta


def sample_choices(psi, theta, rng):
    """One Gumbel-utility choice per agent, returned as one-hot frequencies (K, A)."""
    psi = np.asarray(psi, float)
    util = psi @ np.asarray(theta, float) + rng.gumbel(size=psi.shape[:2])
    freq = np.zeros(psi.shape[:2])
    freq[np.arange(psi.shape[0]), np.argmax(util, axis=1)] = 1.0
    return freq

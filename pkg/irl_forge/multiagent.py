"""
multiagent.py

Coordination tests for groups of agents.

pareto_test builds the mixed-integer system whose feasibility is equivalent
to the aggregate data being generated by Pareto-optimal (social planner)
allocation, recovering personalized responses and one Afriat certificate
per agent. nash_potential_test checks whether per-agent responses are Nash
play of a concave potential game and reconstructs the potential.

Dependencies:
    numpy
"""

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from . import config
from .errors import (
    DimensionMismatch,
    InputError,
    NodeBudgetExceeded,
    NotCoordinated,
    NotNashRational,
    WitnessOutOfBounds,
)
from .rp import BudgetDataset, afriat_certificate, check_garp, snap, transitive_closure
from .solvers import LinearSystem, MixedSystem, lp_feasible, milp_feasible

logger = logging.getLogger(__name__)


@dataclass
class AggregateDataset:
    """
    Probes alpha (N, m), aggregate responses beta (N, m) and assignable
    lower bounds lower (P, N, m) with sum_p lower <= beta.
    """

    alpha: np.ndarray
    beta: np.ndarray
    lower: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, float))
        self.beta = np.atleast_2d(np.asarray(self.beta, float))
        self.lower = np.asarray(self.lower, float)
        if self.lower.ndim == 2:
            self.lower = self.lower[None]
        if self.alpha.shape != self.beta.shape or self.lower.shape[1:] != self.beta.shape:
            raise DimensionMismatch("alpha, beta and lower bounds disagree in shape")
        if np.any(self.alpha <= 0):
            raise InputError("probes must be strictly positive")
        if np.any(self.lower < 0) or np.any(self.lower.sum(axis=0) > self.beta + config.TOL_NORM):
            raise InputError("lower bounds must be nonnegative and sum to at most beta")

    @property
    def P(self):
        return self.lower.shape[0]

    @property
    def N(self):
        return self.beta.shape[0]

    @property
    def m(self):
        return self.beta.shape[1]


@dataclass
class MultiAgentDataset:
    """Shared probes alpha (N, m) and per-agent responses beta (P, N, m)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, float))
        self.beta = np.asarray(self.beta, float)
        if self.beta.ndim == 2:
            self.beta = self.beta[None]
        if self.beta.shape[1:] != self.alpha.shape:
            raise DimensionMismatch("per-agent responses must be (P, N, m) with alpha (N, m)")
        if np.any(self.alpha <= 0):
            raise InputError("probes must be strictly positive")
        if np.any(self.beta < 0):
            raise InputError("responses must be nonnegative")

    @property
    def P(self):
        return self.beta.shape[0]

    @property
    def N(self):
        return self.alpha.shape[0]


@dataclass
class ParetoResult:
    status: str
    personalized: np.ndarray = None
    certificates: list = field(default_factory=list)
    nodes: int = 0

    @property
    def coordinated(self):
        return self.status == "coordinated"


@dataclass
class PotentialCertificate:
    phi: np.ndarray
    lam: np.ndarray


# --------------------------------------------------------------------------
# Pareto coordination
# --------------------------------------------------------------------------

class _Layout:
    def __init__(self, P, N, m):
        self.P, self.N, self.m = P, N, m
        self.n_beta = P * N * m
        self.n_vars = self.n_beta + P * N * N

    def beta(self, p, k):
        start = (p * self.N + k) * self.m
        return slice(start, start + self.m)

    def x(self, p, s, k):
        return self.n_beta + (p * self.N + s) * self.N + k

    def binaries(self):
        return [self.x(p, s, k) for p in range(self.P) for s in range(self.N) for k in range(self.N) if s != k]


def pareto_system(ds, delta_strict=config.DELTA_STRICT):
    """
    Mixed-integer system for Pareto-optimal coordination.

    Rows, per agent p and distinct observations s, u, k:
        sum_p beta^p_k = beta_k
        alpha_s'beta^p_s - alpha_s'beta^p_k + delta_s <= (y_s + delta_s) x^p_sk
        x^p_su + x^p_uk <= 1 + x^p_sk
        alpha_k'beta^p_k - alpha_k'beta^p_s <= y_k (1 - x^p_sk)
    with y_s = alpha_s'beta_s and delta_s = delta_strict * y_s.
    """
    P, N, m = ds.P, ds.N, ds.m
    L = _Layout(P, N, m)
    y = np.einsum("ki,ki->k", ds.alpha, ds.beta)
    delta = delta_strict * y
    lower = np.concatenate([ds.lower.reshape(-1), np.zeros(P * N * N)])
    upper = np.concatenate([np.tile(ds.beta.reshape(-1), P), np.zeros(P * N * N)])
    binaries = L.binaries()
    upper[binaries] = 1.0
    sys = LinearSystem(L.n_vars, var_lower=lower, var_upper=upper)

    for k in range(N):
        for i in range(m):
            row = np.zeros(L.n_vars)
            for p in range(P):
                row[L.beta(p, k).start + i] = 1.0
            sys.add_row(row, ds.beta[k, i], "=")

    for p in range(P):
        for s, k in itertools.permutations(range(N), 2):
            row = np.zeros(L.n_vars)
            row[L.beta(p, s)] += ds.alpha[s]
            row[L.beta(p, k)] -= ds.alpha[s]
            row[L.x(p, s, k)] = -(y[s] + delta[s])
            sys.add_row(row, -delta[s], "<=")

            row = np.zeros(L.n_vars)
            row[L.beta(p, k)] += ds.alpha[k]
            row[L.beta(p, s)] -= ds.alpha[k]
            row[L.x(p, s, k)] = y[k]
            sys.add_row(row, y[k], "<=")
        for s, u, k in itertools.permutations(range(N), 3):
            row = np.zeros(L.n_vars)
            row[L.x(p, s, u)] = 1.0
            row[L.x(p, u, k)] = 1.0
            row[L.x(p, s, k)] = -1.0
            sys.add_row(row, 1.0, "<=")
    return MixedSystem(sys, binaries), L


def pareto_binary_rule(alpha, beta_p):
    """x_sk = 1 iff s is (transitively) revealed preferred to k for one agent's responses."""
    ds = BudgetDataset(alpha, beta_p, normalize=False)
    R = ds.a_matrix() <= 0.0
    np.fill_diagonal(R, False)
    closure = transitive_closure(R)
    np.fill_diagonal(closure, False)
    return closure.astype(float)


def _assemble(ds, L, personalized):
    x = np.zeros(L.n_vars)
    for p in range(ds.P):
        for k in range(ds.N):
            x[L.beta(p, k)] = personalized[p, k]
        rule = pareto_binary_rule(ds.alpha, personalized[p])
        for s, k in itertools.permutations(range(ds.N), 2):
            x[L.x(p, s, k)] = rule[s, k]
    return x


def _warm_starts(ds):
    free = ds.beta - ds.lower.sum(axis=0)
    yield ds.lower + free[None] / ds.P
    total = ds.lower.sum(axis=0)
    if np.all(total > 0):
        yield ds.beta[None] * ds.lower / total[None]


def _respect_lower(ds, personalized):
    """Move sub-tolerance shortfalls below the bounds onto the agent with the most headroom."""
    shortfall = np.maximum(ds.lower - personalized, 0.0)
    if shortfall.max() > config.TOL_LP:
        raise WitnessOutOfBounds(f"solver witness falls {shortfall.max():.3g} below the assignable bounds")
    if not shortfall.any():
        return personalized
    personalized = personalized + shortfall
    donor = np.argmax(personalized - ds.lower, axis=0)
    k, i = np.indices(donor.shape)
    personalized[donor, k, i] -= shortfall.sum(axis=0)
    return personalized


def _certificates(ds, personalized):
    return [afriat_certificate(BudgetDataset(ds.alpha, personalized[p], normalize=False)) for p in range(ds.P)]


def pareto_test(ds, node_budget=config.MAX_NODES, delta_strict=config.DELTA_STRICT):
    """
    Test aggregate data for Pareto-optimal coordination.

    Parameters
    ----------
    ds : AggregateDataset
        Probes, aggregate responses and assignable lower bounds.
    node_budget : int
        Branch-and-bound node limit.

    Returns
    -------
    ParetoResult
        ``status`` is "coordinated" (with personalized responses and per-agent
        certificates) or "undecided" when the node budget runs out.

    Raises
    ------
    NotCoordinated
        When no personalized split satisfies per-agent GARP.
    """
    free = ds.beta - ds.lower.sum(axis=0)
    if np.all(np.abs(free) <= config.TOL_NORM):
        personalized = ds.lower.copy()
        personalized[-1] += free
        bad = [p for p in range(ds.P)
               if not check_garp(BudgetDataset(ds.alpha, personalized[p], normalize=False)).consistent]
        if bad:
            raise NotCoordinated(f"responses pinned by the bounds violate GARP for agent(s) {[p + 1 for p in bad]}",
                                 evidence=personalized)
        return ParetoResult("coordinated", personalized, _certificates(ds, personalized))

    msys, L = pareto_system(ds, delta_strict)
    for guess in _warm_starts(ds):
        x = _assemble(ds, L, guess)
        if msys.base.max_violation(x) <= config.TOL_LP:
            logger.info("✅ warm start satisfies the coordination system")
            return ParetoResult("coordinated", guess, _certificates(ds, guess))

    try:
        res = milp_feasible(msys, max_nodes=node_budget, max_binaries=len(msys.binary_vars))
    except NodeBudgetExceeded:
        logger.warning("⚠️ node budget exhausted, verdict undecided", extra={"budget": node_budget})
        return ParetoResult("undecided")
    if not res.feasible:
        raise NotCoordinated("no personalized split is consistent with Pareto-optimal coordination")
    personalized = np.array([[res.witness[L.beta(p, k)] for k in range(ds.N)] for p in range(ds.P)])
    personalized = _respect_lower(ds, personalized)
    return ParetoResult("coordinated", personalized, _certificates(ds, personalized), res.nodes)


# --------------------------------------------------------------------------
# Nash potential games
# --------------------------------------------------------------------------

def _agent_a(ds):
    """a[p, k, s] = alpha_k'(beta^p_s - beta^p_k)."""
    cross = np.einsum("ki,psi->pks", ds.alpha, ds.beta)
    own = np.einsum("pkk->pk", cross)
    return snap(cross - own[:, :, None])


def nash_potential_test(ds):
    """
    Test per-agent responses for Nash play of a concave potential game.

    Solves phi_s - phi_k - sum_p lambda^p_k alpha_k'(beta^p_s - beta^p_k) <= 0,
    lambda >= 1, over (P + 1) N variables.

    Returns
    -------
    (PotentialCertificate, PotentialFunction)

    Raises
    ------
    NotNashRational
    """
    P, N = ds.P, ds.N
    a = _agent_a(ds)
    n_vars = N + P * N
    lower = np.concatenate([np.full(N, -np.inf), np.ones(P * N)])
    sys = LinearSystem(n_vars, var_lower=lower)
    for k, s in itertools.permutations(range(N), 2):
        row = np.zeros(n_vars)
        row[s] += 1.0
        row[k] -= 1.0
        for p in range(P):
            row[N + p * N + k] = -a[p, k, s]
        sys.add_row(row, 0.0, "<=")
    res = lp_feasible(sys)
    if not res.feasible:
        raise NotNashRational("no concave potential rationalizes the responses")
    phi = res.witness[:N] - res.witness[:N].min()
    lam = res.witness[N:].reshape(P, N)
    cert = PotentialCertificate(phi, lam)
    return cert, PotentialFunction(cert, ds)


class PotentialFunction:
    """V(beta^1..beta^P) = min_k {phi_k + sum_p lambda^p_k alpha_k'(beta^p - beta^p_k)}."""

    def __init__(self, cert, ds):
        self.cert = cert
        self.ds = ds

    def __call__(self, profile):
        profile = np.asarray(profile, float)
        if profile.shape != (self.ds.P, self.ds.alpha.shape[1]):
            raise DimensionMismatch("profile must be (P, m)")
        diff = profile[:, None, :] - self.ds.beta
        terms = np.einsum("ki,pki->pk", self.ds.alpha, diff)
        return float(np.min(self.cert.phi + np.sum(self.cert.lam * terms, axis=0)))

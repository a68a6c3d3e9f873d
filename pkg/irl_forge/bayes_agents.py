"""
bayes_agents.py

Forward models of Bayesian stopping agents. They generate the datasets that
the inverse tests in birl.py consume.

    sht_agent         optimal sequential hypothesis test (binary symmetric
                      observations), solved exactly on the count lattice
    search_agent      greedy optimal search for a nonmoving target, with
                      exact expected visit counts
    quickest_agents   Shiryaev-threshold change detectors with thresholds
                      chosen on a common grid using common random numbers

Dependencies:
    numpy, scipy (linalg.solve for absorbing chains)
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import config
from .birl import QuickestDataset, SearchDataset, SHTDataset
from .errors import InputError, NoConvergence

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# sequential hypothesis testing
# --------------------------------------------------------------------------

@dataclass
class SHTAgent:
    """
    Optimal stopping rule on the lattice d = #(y=1) - #(y=2), |d| <= depth.

    ``stop[i]`` and ``action[i]`` refer to d = i - depth; actions are 0-based.
    """

    L1: float
    L2: float
    accuracy: float
    prior: np.ndarray
    depth: int
    stop: np.ndarray
    action: np.ndarray
    value: np.ndarray
    kernel: np.ndarray
    expected_tau: float

    @property
    def thresholds(self):
        """(lower, upper) bounds on pi(2) of the continue region."""
        post2 = _posterior2(self.prior, self.accuracy, np.arange(-self.depth, self.depth + 1))
        cont = post2[~self.stop]
        return (float(cont.min()), float(cont.max())) if cont.size else (np.nan, np.nan)


def _posterior2(prior, q, d):
    rho = q / (1.0 - q)
    w1 = prior[0] * rho ** d.astype(float)
    return prior[1] / (w1 + prior[1])


def sht_agent(L1, L2, accuracy=0.7, prior=(0.5, 0.5), c=1.0, depth=40, tol=1e-13, max_iter=200_000):
    """
    Optimal SHT with misclassification costs s(1,2)=L1, s(2,1)=L2 and continue cost c.

    Observations are binary with P(y = x | x) = accuracy. Value iteration
    on the lattice gives the stopping set; absorbing-chain solves give the
    exact action kernel p(a|x) and E{tau}.

    Returns
    -------
    SHTAgent
    """
    prior = np.asarray(prior, float)
    q = float(accuracy)
    if not 0.5 < q < 1.0:
        raise InputError("accuracy must lie in (0.5, 1)")
    d = np.arange(-depth, depth + 1)
    pi2 = _posterior2(prior, q, d)
    pi1 = 1.0 - pi2
    stop_cost = np.minimum(L2 * pi2, L1 * pi1)
    action = np.where(L2 * pi2 <= L1 * pi1, 0, 1)
    up = pi1 * q + pi2 * (1.0 - q)

    V = stop_cost.copy()
    for it in range(max_iter):
        cont = np.full_like(V, np.inf)
        cont[1:-1] = c + up[1:-1] * V[2:] + (1.0 - up[1:-1]) * V[:-2]
        nxt = np.minimum(stop_cost, cont)
        if np.max(np.abs(nxt - V)) < tol:
            V = nxt
            break
        V = nxt
    else:
        raise NoConvergence("SHT value iteration did not converge")
    cont[1:-1] = c + up[1:-1] * V[2:] + (1.0 - up[1:-1]) * V[:-2]
    stop = stop_cost <= cont + 1e-14
    stop[[0, -1]] = True
    if not stop[1] or not stop[-2]:
        logger.warning("⚠️ SHT continue region reaches the lattice edge; increase depth", extra={"depth": depth})

    kernel, taus = np.zeros((2, 2)), np.zeros(2)
    origin = depth
    for x, p_up in enumerate((q, 1.0 - q)):
        probs, tau = _absorb(stop, action, p_up, origin)
        kernel[x] = probs
        taus[x] = tau
    expected_tau = float(prior @ taus)
    return SHTAgent(L1, L2, q, prior, depth, stop, action, V, kernel, expected_tau)


def _absorb(stop, action, p_up, origin):
    """Action distribution and expected steps of the walk from ``origin``."""
    if stop[origin]:
        probs = np.zeros(2)
        probs[action[origin]] = 1.0
        return probs, 0.0
    live = np.flatnonzero(~stop)
    index = {int(s): i for i, s in enumerate(live)}
    n = live.size
    Q = np.zeros((n, n))
    R = np.zeros((n, 2))
    for i, s in enumerate(live):
        for nxt, p in ((s + 1, p_up), (s - 1, 1.0 - p_up)):
            if nxt in index:
                Q[i, index[nxt]] += p
            else:
                R[i, action[nxt]] += p
    I = np.eye(n)
    absorbed = linalg.solve(I - Q, R)
    steps = linalg.solve(I - Q, np.ones(n))
    start = index[origin]
    return absorbed[start], float(steps[start])


def sht_dataset(agents):
    """SHTDataset from agents sharing prior and accuracy (one per environment)."""
    prior = agents[0].prior
    kernels = np.stack([a.kernel for a in agents])
    costs = np.array([a.expected_tau for a in agents])
    return SHTDataset(prior, kernels, costs)


def simulate_sht(agent, episodes, rng):
    """
    Monte-Carlo estimate of the agent's action kernel and E{tau}.

    Returns
    -------
    (kernel (2, 2), mean_tau)
    """
    counts = np.zeros((2, 2))
    total_tau = 0
    states = rng.choice(2, size=episodes, p=agent.prior)
    for x in states:
        i = agent.depth
        p_up = agent.accuracy if x == 0 else 1.0 - agent.accuracy
        tau = 0
        while not agent.stop[i]:
            i += 1 if rng.random() < p_up else -1
            tau += 1
        counts[x, agent.action[i]] += 1
        total_tau += tau
    rows = counts.sum(axis=1, keepdims=True)
    return counts / np.where(rows > 0, rows, 1), total_tau / episodes


# --------------------------------------------------------------------------
# search for a nonmoving target
# --------------------------------------------------------------------------

@dataclass
class SearchAgent:
    costs: np.ndarray
    overlook: np.ndarray
    prior: np.ndarray
    path: np.ndarray
    visits: np.ndarray

    def expected_cost(self, costs=None):
        costs = self.costs if costs is None else np.asarray(costs, float)
        return float(np.einsum("x,xa,a->", self.prior, self.visits, costs))


def _next_cell(belief, overlook, costs):
    return int(np.argmax(belief * (1.0 - overlook) / costs))


def search_agent(costs, overlook, prior, tail=1e-14, max_steps=100_000):
    """
    Greedy optimal search: look in argmax pi(a)(1 - overlook(a)) / c(a).

    The no-detection belief path is deterministic, so the expected number
    of looks g(a|x) at each cell, given the target sits in x, is exact up to
    the neglected tail probability.

    Returns
    -------
    SearchAgent
    """
    costs = np.asarray(costs, float)
    overlook = np.asarray(overlook, float)
    prior = np.asarray(prior, float)
    if np.any(costs <= 0) or np.any((overlook < 0) | (overlook >= 1)):
        raise InputError("costs must be positive and overlook probabilities in [0, 1)")
    X = prior.size
    belief = prior.copy()
    survive = np.ones(X)
    visits = np.zeros((X, X))
    path = []
    for _ in range(max_steps):
        if survive @ prior < tail:
            break
        a = _next_cell(belief, overlook, costs)
        path.append(a)
        visits[:, a] += survive
        survive[a] *= overlook[a]
        miss = 1.0 - belief[a] * (1.0 - overlook[a])
        belief = belief / miss
        belief[a] *= overlook[a]
    else:
        logger.warning("⚠️ search horizon reached before the tail vanished", extra={"steps": max_steps})
    return SearchAgent(costs, overlook, prior, np.asarray(path), visits)


def search_dataset(agents):
    return SearchDataset(agents[0].prior, np.stack([a.visits for a in agents]))


def simulate_search(agent, episodes, rng, max_steps=10_000):
    """Monte-Carlo estimate of g(a|x)."""
    X = agent.prior.size
    counts = np.zeros((X, X))
    seen = np.zeros(X)
    for x in rng.choice(X, size=episodes, p=agent.prior):
        seen[x] += 1
        belief = agent.prior.copy()
        for _ in range(max_steps):
            a = _next_cell(belief, agent.overlook, agent.costs)
            counts[x, a] += 1
            if a == x and rng.random() >= agent.overlook[a]:
                break
            miss = 1.0 - belief[a] * (1.0 - agent.overlook[a])
            belief = belief / miss
            belief[a] *= agent.overlook[a]
    return counts / np.where(seen > 0, seen, 1)[:, None]


# --------------------------------------------------------------------------
# quickest change detection
# --------------------------------------------------------------------------

def geometric_change_prior(N, rho):
    """P(tau0 = j) proportional to rho (1 - rho)^(j - 1), j = 1..N."""
    j = np.arange(N)
    p = rho * (1.0 - rho) ** j
    return p / p.sum()


def _change_posterior(y, prior, shift):
    """P(tau0 <= k | y_1..k) for every path and k, y shape (n, N)."""
    ll = shift * y - 0.5 * shift ** 2
    C = np.cumsum(ll, axis=1)
    C_prev = np.concatenate([np.zeros((y.shape[0], 1)), C[:, :-1]], axis=1)
    log_num = C + np.logaddexp.accumulate(np.log(prior)[None, :] - C_prev, axis=1)
    tail = np.concatenate([np.cumsum(prior[::-1])[::-1][1:], [0.0]])
    with np.errstate(divide="ignore"):
        log_tail = np.log(tail)[None, :]
    return np.exp(log_num - np.logaddexp(log_num, log_tail))


def _declare(post, threshold):
    """First k (0-based) with posterior >= threshold, else the last time."""
    hit = post >= threshold
    return np.where(hit.any(axis=1), np.argmax(hit, axis=1), post.shape[1] - 1)


@dataclass
class QuickestRun:
    dataset: QuickestDataset
    thresholds: np.ndarray
    grid: np.ndarray
    costs: np.ndarray


def quickest_agents(penalties, N=20, rho=0.1, shift=1.0, paths=2000, seed=0, grid=None):
    """
    Shiryaev detectors, one per false-alarm penalty f_m (delay penalty 1).

    For every change time the same noise paths are reused, and each
    environment picks the threshold on ``grid`` with the smallest empirical
    cost. The reported p_m(tau | tau0) come from those same paths.

    Returns
    -------
    QuickestRun
    """
    penalties = np.asarray(penalties, float)
    grid = np.linspace(0.05, 0.99, 48) if grid is None else np.asarray(grid, float)
    prior = geometric_change_prior(N, rho)
    rng = config.trial_rng(seed, 0)
    noise = rng.normal(size=(paths, N))
    t = np.arange(N)

    # declared time per change time, threshold and path
    declared = np.zeros((N, grid.size, paths), dtype=int)
    for i in range(N):
        y = noise + shift * (t[None, :] >= i)
        post = _change_posterior(y, prior, shift)
        for g, thr in enumerate(grid):
            declared[i, g] = _declare(post, thr)

    kernels = np.zeros((grid.size, N, N))
    for i in range(N):
        for g in range(grid.size):
            kernels[g, i] = np.bincount(declared[i, g], minlength=N) / paths
    lag = np.maximum(t[None, :] - t[:, None], 0)
    early = (t[None, :] < t[:, None]).astype(float)
    delay = np.einsum("i,gij,ij->g", prior, kernels, lag)
    false_alarm = np.einsum("i,gij,ij->g", prior, kernels, early)

    costs = delay[None, :] + penalties[:, None] * false_alarm[None, :]
    best = np.argmin(costs, axis=1)
    ds = QuickestDataset(prior, kernels[best])
    logger.info("✅ quickest detectors tuned", extra={"thresholds": grid[best].tolist()})
    return QuickestRun(ds, grid[best], grid, costs)

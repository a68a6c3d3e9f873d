"""
rp.py

Revealed-preference engine for probe/response datasets {alpha_k, beta_k}.

GARP checking (Warshall closure), Afriat certificates (LP), piecewise-linear
utility reconstruction, prediction of consistent responses, the feasibility
margin of a certificate, utility masking, and goodness-of-fit indices
(Houtman-Maks, Afriat efficiency, Varian, minimal cost).

Indices are 0-based internally; reported cycles are 1-based.

Dependencies:
    numpy, scipy, matplotlib (optional plotting)
"""

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import approx_fprime

from . import config
from .errors import (
    BudgetNotActive,
    CertificateInvalid,
    DimensionMismatch,
    InfeasibleMask,
    InputError,
    NonPositiveProbe,
    NotRationalizable,
    TooLargeForExact,
)
from .solvers import LinearSystem, lp_feasible

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# data types
# --------------------------------------------------------------------------

@dataclass
class BudgetDataset:
    """
    Probe/response observations.

    Parameters
    ----------
    alpha : array_like, shape (N, m)
        Strictly positive probes (prices).
    beta : array_like, shape (N, m)
        Nonnegative responses (consumption).
    normalize : bool
        Rescale each probe so that alpha_k' beta_k = 1.
    """

    alpha: np.ndarray
    beta: np.ndarray
    normalize: bool = True

    def __post_init__(self):
        self.alpha = np.atleast_2d(np.asarray(self.alpha, float)).copy()
        self.beta = np.atleast_2d(np.asarray(self.beta, float)).copy()
        if self.alpha.shape != self.beta.shape:
            raise DimensionMismatch(f"alpha {self.alpha.shape} and beta {self.beta.shape} differ")
        if np.any(~np.isfinite(self.alpha)) or np.any(self.alpha <= 0):
            raise NonPositiveProbe("all probes must be finite and strictly positive")
        if np.any(self.beta < 0):
            raise InputError("responses must be nonnegative")
        if self.normalize:
            income = np.einsum("ki,ki->k", self.alpha, self.beta)
            if np.any(income <= 0):
                raise InputError("cannot normalize an observation with alpha'beta = 0")
            self.alpha = self.alpha / income[:, None]
            self.normalize = False

    @property
    def N(self):
        return self.alpha.shape[0]

    @property
    def m(self):
        return self.alpha.shape[1]

    @property
    def income(self):
        return np.einsum("ki,ki->k", self.alpha, self.beta)

    def a_matrix(self, tol=config.TOL_GARP):
        """a[i, j] = alpha_i'(beta_j - beta_i), with |a| < tol set to 0."""
        cross = self.alpha @ self.beta.T
        a = cross - np.diag(cross)[:, None]
        return snap(a, tol)

    def subset(self, idx):
        idx = list(idx)
        return BudgetDataset(self.alpha[idx], self.beta[idx], normalize=False)

    def append(self, alpha_new, beta_new):
        return BudgetDataset(np.vstack([self.alpha, alpha_new]), np.vstack([self.beta, beta_new]), normalize=False)

    def scaled(self, c):
        """Same probes with every budget right-hand side multiplied by c."""
        return BudgetDataset(self.alpha, c * self.beta, normalize=False)


class NonlinearBudget:
    """
    Budget sets {beta : g_k(beta) <= 0} with g_k increasing and g_k(beta_k) = 0.

    Parameters
    ----------
    evaluators : list of callable
        One function beta -> float per observation.
    """

    def __init__(self, evaluators):
        self.evaluators = list(evaluators)

    def __len__(self):
        return len(self.evaluators)

    @classmethod
    def linear(cls, ds):
        """The linear budget alpha_k'(beta - beta_k) written as a nonlinear one."""
        return cls([lambda b, a=a, r=r: float(a @ (np.asarray(b) - r)) for a, r in zip(ds.alpha, ds.beta)])

    def check_active(self, responses, tol=config.TOL_NORM):
        values = np.array([g(b) for g, b in zip(self.evaluators, responses)])
        if np.any(np.abs(values) > tol):
            raise BudgetNotActive(f"g_k(beta_k) != 0 (worst {np.abs(values).max():.3g})")

    def a_matrix(self, responses, tol=config.TOL_GARP):
        responses = np.atleast_2d(responses)
        if len(responses) != len(self):
            raise DimensionMismatch("one evaluator per response is required")
        a = np.array([[g(b) for b in responses] for g in self.evaluators], dtype=float)
        np.fill_diagonal(a, 0.0)
        return snap(a, tol)


@dataclass
class RationalityCertificate:
    phi: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, float).ravel()
        self.lam = np.asarray(self.lam, float).ravel()
        if self.phi.shape != self.lam.shape:
            raise DimensionMismatch("phi and lambda must have the same length")

    def slacks(self, a):
        """slack[k, s] = phi_k + lambda_k a_ks - phi_s (nonnegative when valid)."""
        return self.phi[:, None] + self.lam[:, None] * a - self.phi[None, :]


@dataclass
class GarpReport:
    consistent: bool
    violating_cycle: list
    a_matrix: np.ndarray
    closure: np.ndarray = None
    n_violations: int = 0


@dataclass
class RationalityIndices:
    hmi: float
    afriat_index: float
    varian_lower_bound: np.ndarray
    varian_mean: float
    mci: float
    varian_heuristic: bool = True


@dataclass
class MaskResult:
    beta: np.ndarray
    margin: float
    target: float
    original_margin: float
    sacrifice: float
    iterations: int = 0


def snap(a, tol=config.TOL_GARP):
    a = np.array(a, dtype=float)
    a[np.abs(a) < tol] = 0.0
    return a


# --------------------------------------------------------------------------
# GARP
# --------------------------------------------------------------------------

def _resolve(ds, budget=None):
    if isinstance(ds, tuple):
        responses, budget = ds
        return budget.a_matrix(np.atleast_2d(np.asarray(responses, float)))
    if budget is not None:
        return budget.a_matrix(ds.beta)
    return ds.a_matrix()


def transitive_closure(R):
    """Warshall's algorithm on a boolean relation (reflexive)."""
    C = np.array(R, dtype=bool)
    np.fill_diagonal(C, True)
    for k in range(C.shape[0]):
        C |= C[:, k:k + 1] & C[k:k + 1, :]
    return C


def _shortest_path(R, src, dst):
    prev = {src: None}
    queue = deque([src])
    while queue:
        u = queue.popleft()
        if u == dst:
            break
        for v in np.flatnonzero(R[u]):
            v = int(v)
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path, node = [], dst
    while node is not None:
        path.append(node)
        node = prev[node]
    return path[::-1]


def garp_from_a(a, tol=config.TOL_GARP):
    """GARP on a precomputed a-matrix."""
    a = snap(a, tol)
    n = a.shape[0]
    R = a <= 0.0
    np.fill_diagonal(R, False)
    P = a < 0.0
    np.fill_diagonal(P, False)
    closure = transitive_closure(R)
    bad = closure & P.T
    if not bad.any():
        return GarpReport(True, [], a, closure, 0)

    best = None
    for i, j in zip(*np.nonzero(bad)):
        path = _shortest_path(R, int(i), int(j)) if i != j else [int(i)]
        if best is None or len(path) < len(best):
            best = path
    cycle = [k + 1 for k in best]
    return GarpReport(False, cycle, a, closure, int(bad.sum()))


def check_garp(ds, budget=None):
    """
    Generalized Axiom of Revealed Preference.

    Parameters
    ----------
    ds : BudgetDataset or tuple
        Dataset, or ``(responses, NonlinearBudget)``.
    budget : NonlinearBudget, optional
        Nonlinear budget evaluated on ``ds.beta``.

    Returns
    -------
    GarpReport
        ``violating_cycle`` is the shortest revealed-preference cycle that
        contains a strict edge, 1-based.
    """
    return garp_from_a(_resolve(ds, budget))


def garp_brute_force(a, tol=config.TOL_GARP):
    """Enumerate simple cycles; True when none has all a <= 0 and one a < 0."""
    a = snap(a, tol)
    n = a.shape[0]
    for size in range(2, n + 1):
        for nodes in itertools.combinations(range(n), size):
            first, rest = nodes[0], nodes[1:]
            for perm in itertools.permutations(rest):
                cycle = (first,) + perm
                vals = [a[cycle[t], cycle[(t + 1) % size]] for t in range(size)]
                if max(vals) <= 0.0 and min(vals) < 0.0:
                    return False
    return True


# --------------------------------------------------------------------------
# Afriat
# --------------------------------------------------------------------------

def afriat_system(a, shift=0.0):
    """
    phi_s - phi_k - lambda_k (a_ks + shift) <= 0 for k != s, lambda >= 1.

    Variables are [phi_1..phi_N, lambda_1..lambda_N].
    """
    n = a.shape[0]
    k_idx, s_idx = np.nonzero(~np.eye(n, dtype=bool))
    rows = np.zeros((len(k_idx), 2 * n))
    r = np.arange(len(k_idx))
    rows[r, s_idx] += 1.0
    rows[r, k_idx] -= 1.0
    rows[r, n + k_idx] = -(a[k_idx, s_idx] + shift)
    lower = np.concatenate([np.full(n, -np.inf), np.ones(n)])
    return LinearSystem(2 * n, rows, np.zeros(len(k_idx)), ["<="] * len(k_idx), lower, None)


def afriat_certificate(ds, budget=None):
    """
    Solve Afriat's inequalities.

    Parameters
    ----------
    ds : BudgetDataset or tuple
        Dataset, or ``(responses, NonlinearBudget)``.
    budget : NonlinearBudget, optional
        Evaluate the inequalities with g_k(beta_s) instead of alpha_k'(beta_s - beta_k).

    Returns
    -------
    RationalityCertificate

    Raises
    ------
    NotRationalizable
        With the GarpReport as evidence.
    """
    a = _resolve(ds, budget)
    n = a.shape[0]
    res = lp_feasible(afriat_system(a))
    if not res.feasible:
        report = garp_from_a(a)
        if report.consistent:
            logger.warning("⚠️ LP infeasible although GARP holds", extra={"N": n})
        raise NotRationalizable("no monotone concave utility rationalizes the data", evidence=report)
    phi, lam = res.witness[:n], res.witness[n:]
    phi = phi - phi.min() if n else phi
    return RationalityCertificate(phi, lam)


class PiecewiseUtility:
    """
    U(beta) = min_k { phi_k + lambda_k alpha_k'(beta - beta_k) }.

    With a NonlinearBudget the pieces are phi_k + lambda_k g_k(beta).
    """

    def __init__(self, cert, ds, budget=None):
        self.cert = cert
        self.ds = ds
        self.budget = budget

    @property
    def m(self):
        return self.ds.beta.shape[1]

    def pieces(self, beta):
        beta = np.atleast_2d(np.asarray(beta, float))
        if self.budget is None:
            offsets = np.einsum("ki,ki->k", self.ds.alpha, self.ds.beta)
            g = beta @ self.ds.alpha.T - offsets[None, :]
        else:
            g = np.array([[ev(b) for ev in self.budget.evaluators] for b in beta])
        return self.cert.phi[None, :] + self.cert.lam[None, :] * g

    def __call__(self, beta):
        beta = np.asarray(beta, float)
        values = self.pieces(beta).min(axis=1)
        return float(values[0]) if beta.ndim == 1 else values

    def gradient(self, beta):
        """Gradient of the active (lowest) piece; linear budgets only."""
        if self.budget is not None:
            raise InputError("piece gradients are only available for linear budgets")
        k = int(np.argmin(self.pieces(beta)[0]))
        return self.cert.lam[k] * self.ds.alpha[k]


def evaluate_utility(u, beta):
    """Evaluate a reconstructed utility at a nonnegative response."""
    beta = np.asarray(beta, float)
    if beta.shape[-1] != u.m:
        raise DimensionMismatch(f"expected responses of dimension {u.m}")
    if np.any(beta < 0):
        raise InputError("responses must be nonnegative")
    return u(beta)


def predict_member(ds, alpha_new, beta_candidate, tol=config.TOL_NORM):
    """
    True when (alpha_new, beta_candidate) can be added without breaking GARP.

    Raises
    ------
    BudgetNotActive
        When alpha_new' beta_candidate differs from 1.
    """
    alpha_new = np.asarray(alpha_new, float)
    beta_candidate = np.asarray(beta_candidate, float)
    if alpha_new.shape != (ds.m,) or beta_candidate.shape != (ds.m,):
        raise DimensionMismatch(f"expected vectors of dimension {ds.m}")
    if abs(alpha_new @ beta_candidate - 1.0) > tol:
        raise BudgetNotActive(f"alpha'beta = {alpha_new @ beta_candidate:.6g} (must be 1)")
    return check_garp(ds.append(alpha_new, beta_candidate)).consistent


def canonical_certificate(ds, U, grad=None, rescale=True):
    """
    phi_k = U(beta_k), lambda_k = dU/dbeta(1) at beta_k divided by alpha_k(1).

    Finite differences are used when ``grad`` is not given. With ``rescale``
    the certificate is multiplied by a positive constant so that min lambda = 1.
    """
    phi = np.array([U(b) for b in ds.beta], dtype=float)
    if grad is None:
        logger.info("⚠️ no utility gradient supplied, using finite differences")
        grads = np.array([approx_fprime(b, U, 1e-7 * max(1.0, np.abs(b).max())) for b in ds.beta])
    else:
        grads = np.array([grad(b) for b in ds.beta], dtype=float)
    lam = grads[:, 0] / ds.alpha[:, 0]
    if rescale and lam.size and lam.min() > 0:
        c = 1.0 / lam.min()
        phi, lam = c * phi, c * lam
    return RationalityCertificate(phi, lam)


def certificate_slacks(ds, cert, budget=None):
    a = _resolve(ds, budget)
    if len(cert.phi) != a.shape[0]:
        raise DimensionMismatch("certificate length differs from dataset size")
    slack = cert.slacks(a)
    off = ~np.eye(a.shape[0], dtype=bool)
    return slack[off]


def feasibility_margin(ds, cert, variant="min", budget=None, tol=config.TOL_LP):
    """
    Margin of a certificate in Afriat's inequalities.

    Parameters
    ----------
    variant : {"min", "all"}
        "min" is the smallest perturbation that breaks one inequality
        (minimum slack); "all" is the smallest one that breaks every
        inequality (maximum slack).

    Returns
    -------
    float
        Nonnegative margin; ``inf`` for a single observation.
    """
    slacks = certificate_slacks(ds, cert, budget)
    if np.any(cert.lam < 1.0 - tol) or (slacks.size and slacks.min() < -tol):
        raise CertificateInvalid("certificate violates Afriat's inequalities")
    if slacks.size == 0:
        return np.inf
    if variant == "min":
        return float(max(slacks.min(), 0.0))
    if variant == "all":
        return float(max(slacks.max(), 0.0))
    raise InputError(f"unknown margin variant '{variant}'")


# --------------------------------------------------------------------------
# masking
# --------------------------------------------------------------------------

def _pair_slacks(alpha, beta, U, grad):
    phi = np.array([U(b) for b in beta])
    if grad is None:
        grads = np.array([approx_fprime(b, U, 1e-7 * max(1.0, np.abs(b).max())) for b in beta])
    else:
        grads = np.array([grad(b) for b in beta])
    lam = grads[:, 0] / alpha[:, 0]
    cross = alpha @ beta.T
    a = cross - np.diag(cross)[:, None]
    slack = phi[:, None] + lam[:, None] * a - phi[None, :]
    np.fill_diagonal(slack, np.inf)
    return slack


def utility_margin(alpha, beta, U, grad=None):
    """Margin of the utility's own certificate at responses beta (0 if broken)."""
    if len(beta) < 2:
        return np.inf
    return float(max(_pair_slacks(alpha, beta, U, grad).min(), 0.0))


def _project_budget(alpha_k, x):
    x = np.maximum(x, 0.0)
    spend = alpha_k @ x
    return x / spend if spend > 1.0 else x


def mask_responses(ds, U, eta, iters=200, grad=None, tol_mask=config.TOL_MASK):
    """
    Perturb responses so the utility's feasibility margin drops to (1 - eta) of its value.

    Phase one moves the response of the least-slack pair toward the other
    response of that pair (scaled into budget) until the target margin is
    reached. Phase two is projected coordinate descent on the utility
    sacrifice sum_k U(beta_k) - U(beta~_k), each block pulled back toward the
    original response with step halving while the margin stays on target.

    Parameters
    ----------
    ds : BudgetDataset
        Data rationalized by U.
    U : callable
        Strictly monotone utility.
    eta : float
        Masking level in [0, 1].
    iters : int
        Coordinate-descent sweeps.

    Returns
    -------
    MaskResult
    """
    if not 0.0 <= eta <= 1.0:
        raise InputError("eta must lie in [0, 1]")
    alpha, beta = ds.alpha, ds.beta.copy()
    base = np.array([U(b) for b in beta])
    m0 = utility_margin(alpha, beta, U, grad)
    if not np.isfinite(m0):
        return MaskResult(beta, m0, m0, m0, 0.0)
    target = (1.0 - eta) * m0
    if m0 <= target + tol_mask:
        return MaskResult(beta, m0, target, m0, 0.0)

    def margin(b):
        return utility_margin(alpha, b, U, grad)

    # --- Phase 1: reach the target ---
    slack = _pair_slacks(alpha, beta, U, grad)
    order = np.dstack(np.unravel_index(np.argsort(slack, axis=None), slack.shape))[0]
    masked = None
    for k, s in order:
        if k == s:
            continue
        zeta_k = beta[k]
        c = min(1.0, 1.0 / float(alpha[s] @ zeta_k))
        goal = c * zeta_k

        def moved(t, s=s, goal=goal):
            b = beta.copy()
            b[s] = _project_budget(alpha[s], (1 - t) * beta[s] + t * goal)
            return b

        if margin(moved(1.0)) > target + tol_mask:
            continue
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if margin(moved(mid)) <= target:
                hi = mid
            else:
                lo = mid
        masked = moved(hi)
        break
    if masked is None:
        raise InfeasibleMask(f"target margin {target:.3g} unreachable by single-response moves")

    # --- Phase 2: give back utility while the margin stays on target ---
    sweeps = 0
    for sweeps in range(1, iters + 1):
        improved = False
        for j in range(ds.N):
            direction = beta[j] - masked[j]
            if not np.any(direction):
                continue
            step = 1.0
            while step > 1e-6:
                cand = masked.copy()
                cand[j] = _project_budget(alpha[j], masked[j] + step * direction)
                if U(cand[j]) > U(masked[j]) + 1e-12 and margin(cand) <= target + tol_mask:
                    masked = cand
                    improved = True
                    break
                step *= 0.5
        if not improved:
            break

    achieved = margin(masked)
    sacrifice = float(np.sum(base - np.array([U(b) for b in masked])))
    logger.info("✅ masking done", extra={"eta": eta, "margin": achieved, "target": target, "sweeps": sweeps})
    return MaskResult(masked, achieved, target, m0, sacrifice, sweeps)


# --------------------------------------------------------------------------
# goodness-of-fit indices
# --------------------------------------------------------------------------

def _consistent(a):
    return garp_from_a(a, tol=0.0).consistent


def _egarp_consistent(cross, e):
    """e-GARP: R iff alpha_i'beta_j <= e_i, P iff < e_i (normalized data)."""
    e = np.broadcast_to(np.asarray(e, float), (cross.shape[0],))
    R = cross <= e[:, None]
    P = cross < e[:, None]
    np.fill_diagonal(R, False)
    np.fill_diagonal(P, False)
    closure = transitive_closure(R)
    return not (closure & P.T).any()


def houtman_maks(a):
    n = a.shape[0]
    for size in range(n - 1, 0, -1):
        for keep in itertools.combinations(range(n), size):
            idx = np.array(keep)
            if _consistent(a[np.ix_(idx, idx)]):
                return size / n
    return 1.0 / n


def afriat_efficiency(cross):
    n = cross.shape[0]
    off = cross[~np.eye(n, dtype=bool)]
    candidates = np.unique(np.concatenate([off[(off >= 0) & (off < 1)], [0.0, 1.0]]))
    lo, hi = 0, len(candidates) - 1
    if _egarp_consistent(cross, candidates[hi]):
        return float(candidates[hi])
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _egarp_consistent(cross, candidates[mid]):
            lo = mid
        else:
            hi = mid
    return float(candidates[lo])


def varian_heuristic(cross, start):
    n = cross.shape[0]
    e = np.full(n, start)
    changed = True
    while changed:
        changed = False
        for i in range(n):
            row = cross[i][(cross[i] > e[i]) & (cross[i] < 1)]
            options = np.unique(np.concatenate([row, [1.0]]))
            for value in options[::-1]:
                trial = e.copy()
                trial[i] = value
                if _egarp_consistent(cross, trial):
                    if value > e[i]:
                        e = trial
                        changed = True
                    break
    return e


def _violating_edges(a):
    """R-edges lying inside strongly connected components that contain a strict edge."""
    R = a <= 0.0
    np.fill_diagonal(R, False)
    P = a < 0.0
    np.fill_diagonal(P, False)
    closure = transitive_closure(R)
    same = closure & closure.T
    edges = []
    for k, s in zip(*np.nonzero(R)):
        if not same[k, s]:
            continue
        members = same[k]
        if P[np.ix_(members, members)].any():
            edges.append((int(k), int(s)))
    return edges


def minimal_cost_index(ds, a, edge_limit=config.MCI_EDGE_LIMIT):
    edges = _violating_edges(a)
    if len(edges) > edge_limit:
        raise TooLargeForExact(f"{len(edges)} candidate relations exceed the limit of {edge_limit}")
    total = float(ds.income.sum())
    costs = np.array([-a[k, s] / total for k, s in edges])
    best = np.inf
    order = np.argsort(costs)
    edges = [edges[i] for i in order]
    costs = costs[order]

    def search(i, removed, cost):
        nonlocal best
        if cost >= best:
            return
        trial = a.copy()
        for k, s in removed:
            trial[k, s] = np.inf
        if _consistent(trial):
            best = cost
            return
        for j in range(i, len(edges)):
            search(j + 1, removed + [edges[j]], cost + costs[j])

    search(0, [], 0.0)
    return float(best)


def rationality_indices(ds, exact_limit=config.EXACT_LIMIT, edge_limit=config.MCI_EDGE_LIMIT):
    """
    Houtman-Maks, Afriat efficiency, Varian (heuristic) and minimal-cost indices.

    Parameters
    ----------
    ds : BudgetDataset
        Normalized dataset.
    exact_limit : int
        Largest N for the exact subset enumerations.

    Returns
    -------
    RationalityIndices
    """
    a = ds.a_matrix()
    n = ds.N
    if _consistent(a):
        return RationalityIndices(1.0, 1.0, np.ones(n), 1.0, 0.0)
    if n > exact_limit:
        raise TooLargeForExact(f"N={n} exceeds exact_limit={exact_limit}")
    cross = 1.0 + a / ds.income[:, None]
    hmi = houtman_maks(a)
    aei = afriat_efficiency(cross)
    varian = varian_heuristic(cross, aei)
    logger.info("⚠️ Varian index is a heuristic lower bound", extra={"mean": float(varian.mean())})
    mci = minimal_cost_index(ds, a, edge_limit)
    return RationalityIndices(hmi, aei, varian, float(varian.mean()), mci)


def plot_utility_contours(u, ax=None, levels=12, upper=None):
    """Contour plot of a reconstructed utility for m = 2 (matplotlib)."""
    import matplotlib.pyplot as plt

    if u.m != 2:
        raise DimensionMismatch("contour plots need m = 2")
    upper = upper or 1.5 * float(u.ds.beta.max())
    grid = np.linspace(0.0, upper, 120)
    X, Y = np.meshgrid(grid, grid)
    Z = u(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    if ax is None:
        fig, ax = plt.subplots(figsize=(5, 4))
    ax.contour(X, Y, Z, levels=levels)
    ax.scatter(u.ds.beta[:, 0], u.ds.beta[:, 1], c="k", s=12)
    ax.set_xlabel("beta(1)")
    ax.set_ylabel("beta(2)")
    return ax

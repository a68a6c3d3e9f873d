"""
solvers.py

Dense feasibility solvers used by every other module:

    lp_feasible        two-phase (phase-1) simplex with Bland's rule
    milp_feasible      depth-first branch and bound over binary variables
    solve_are          fixed-point iteration of the Kalman prediction/update map
    scalar_bisect_lp   smallest T for which a parametrized LP becomes feasible

Dependencies:
    numpy, scipy
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import config
from .errors import (
    DimensionMismatch,
    NoConvergence,
    NodeBudgetExceeded,
    NonMonotoneDetected,
    NonPDInnovation,
    NotFeasibleAtHi,
    TooLargeForExact,
)

logger = logging.getLogger(__name__)

SENSES = ("<=", "=", ">=")
_PIVOT_EPS = 1e-11


@dataclass
class LinearSystem:
    """
    Rows a'x (<=|=|>=) b with per-variable bounds.

    Rows are stored in matrix form; ``rows`` gives the tuple view.
    """

    n_vars: int
    coeffs: np.ndarray = None
    rhs: np.ndarray = None
    senses: list = field(default_factory=list)
    var_lower: np.ndarray = None
    var_upper: np.ndarray = None

    def __post_init__(self):
        n = int(self.n_vars)
        self.n_vars = n
        self.coeffs = np.zeros((0, n)) if self.coeffs is None else np.atleast_2d(np.asarray(self.coeffs, float))
        if self.coeffs.size == 0:
            self.coeffs = self.coeffs.reshape(0, n)
        self.rhs = np.zeros(0) if self.rhs is None else np.asarray(self.rhs, float).ravel()
        self.senses = list(self.senses)
        self.var_lower = np.full(n, -np.inf) if self.var_lower is None else np.asarray(self.var_lower, float).copy()
        self.var_upper = np.full(n, np.inf) if self.var_upper is None else np.asarray(self.var_upper, float).copy()
        self.validate()

    def validate(self):
        n = self.n_vars
        if self.coeffs.shape[1] != n:
            raise DimensionMismatch(f"row length {self.coeffs.shape[1]} != n_vars {n}")
        if not (self.coeffs.shape[0] == len(self.rhs) == len(self.senses)):
            raise DimensionMismatch("coeffs, rhs and senses must have the same number of rows")
        if self.var_lower.shape != (n,) or self.var_upper.shape != (n,):
            raise DimensionMismatch("bounds must have length n_vars")
        bad = [s for s in self.senses if s not in SENSES]
        if bad:
            raise DimensionMismatch(f"unknown row sense(s): {sorted(set(bad))}")

    @property
    def rows(self):
        return [(self.coeffs[i], float(self.rhs[i]), self.senses[i]) for i in range(len(self.rhs))]

    @property
    def n_rows(self):
        return len(self.rhs)

    def add_row(self, coeffs, rhs, sense="<="):
        coeffs = np.asarray(coeffs, float).reshape(1, -1)
        if coeffs.shape[1] != self.n_vars:
            raise DimensionMismatch(f"row length {coeffs.shape[1]} != n_vars {self.n_vars}")
        self.coeffs = np.vstack([self.coeffs, coeffs])
        self.rhs = np.append(self.rhs, float(rhs))
        self.senses.append(sense)
        return self

    def add_rows(self, coeffs, rhs, sense="<="):
        coeffs = np.atleast_2d(np.asarray(coeffs, float))
        if coeffs.size == 0:
            return self
        if coeffs.shape[1] != self.n_vars:
            raise DimensionMismatch(f"row length {coeffs.shape[1]} != n_vars {self.n_vars}")
        self.coeffs = np.vstack([self.coeffs, coeffs])
        self.rhs = np.concatenate([self.rhs, np.asarray(rhs, float).ravel()])
        self.senses.extend([sense] * coeffs.shape[0])
        return self

    def violations(self, x):
        """Per-row violation followed by per-bound violation of point x."""
        x = np.asarray(x, float)
        lhs = self.coeffs @ x if self.n_rows else np.zeros(0)
        senses = np.asarray(self.senses)
        row = np.zeros(self.n_rows)
        le, ge, eq = senses == "<=", senses == ">=", senses == "="
        row[le] = np.maximum(lhs[le] - self.rhs[le], 0.0)
        row[ge] = np.maximum(self.rhs[ge] - lhs[ge], 0.0)
        row[eq] = np.abs(lhs[eq] - self.rhs[eq])
        with np.errstate(invalid="ignore"):
            lo = np.where(np.isfinite(self.var_lower), np.maximum(self.var_lower - x, 0.0), 0.0)
            hi = np.where(np.isfinite(self.var_upper), np.maximum(x - self.var_upper, 0.0), 0.0)
        return np.concatenate([row, lo, hi])

    def max_violation(self, x):
        v = self.violations(x)
        return float(v.max()) if v.size else 0.0

    def copy(self):
        return LinearSystem(self.n_vars, self.coeffs.copy(), self.rhs.copy(), list(self.senses),
                            self.var_lower.copy(), self.var_upper.copy())


@dataclass
class FeasibilityResult:
    status: str
    witness: np.ndarray = None
    max_violation: float = np.inf
    nodes: int = 0

    @property
    def feasible(self):
        return self.status == "feasible"


@dataclass
class MixedSystem:
    base: LinearSystem
    binary_vars: tuple = ()

    def __post_init__(self):
        self.binary_vars = tuple(int(i) for i in self.binary_vars)
        if any(i < 0 or i >= self.base.n_vars for i in self.binary_vars):
            raise DimensionMismatch("binary index outside 0..n_vars-1")


@dataclass
class RiccatiSpec:
    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.C = np.atleast_2d(np.asarray(self.C, float))
        self.Q = np.atleast_2d(np.asarray(self.Q, float))
        self.R = np.atleast_2d(np.asarray(self.R, float))
        n = self.A.shape[0]
        p = self.C.shape[0]
        if self.A.shape != (n, n) or self.Q.shape != (n, n):
            raise DimensionMismatch("A and Q must be square of the same size")
        if self.C.shape[1] != n or self.R.shape != (p, p):
            raise DimensionMismatch("C must be p x n and R p x p")


# --------------------------------------------------------------------------
# phase-1 simplex
# --------------------------------------------------------------------------

def _standardize(sys):
    """
    Rewrite x in terms of y >= 0: x = D y + offset.

    Returns the transformed rows plus the finite upper bounds as extra rows.
    """
    n = sys.n_vars
    cols, offset = [], np.zeros(n)
    extra_rows, extra_rhs = [], []
    for j in range(n):
        lo, hi = sys.var_lower[j], sys.var_upper[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    D = np.zeros((n, len(cols)))
    for k, (j, s) in enumerate(cols):
        D[j, k] = s

    A = sys.coeffs @ D
    b = sys.rhs - sys.coeffs @ offset
    senses = list(sys.senses)
    if extra_rows:
        U = np.zeros((len(extra_rows), D.shape[1]))
        for r, (k, width) in enumerate(extra_rows):
            U[r, k] = 1.0
            extra_rhs.append(width)
        A = np.vstack([A, U])
        b = np.concatenate([b, extra_rhs])
        senses += ["<="] * len(extra_rows)
    return A, b, senses, D, offset


def _pivot(T, row, col):
    T[row] /= T[row, col]
    factor = T[:, col].copy()
    factor[row] = 0.0
    T -= np.outer(factor, T[row])


def _phase_one(A, b, senses, max_iter):
    m, n = A.shape
    A = A.copy()
    b = b.copy()
    senses = list(senses)
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1
    for i in np.flatnonzero(neg):
        senses[i] = {"<=": ">=", ">=": "<=", "=": "="}[senses[i]]

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    total = n + n_slack + n_art
    T = np.zeros((m + 1, total + 1))
    T[:m, :n] = A
    T[:m, -1] = b
    basis = np.empty(m, dtype=int)
    s_col, a_col = n, n + n_slack
    art_rows = []
    for i, s in enumerate(senses):
        if s == "<=":
            T[i, s_col] = 1.0
            basis[i] = s_col
            s_col += 1
        else:
            if s == ">=":
                T[i, s_col] = -1.0
                s_col += 1
            T[i, a_col] = 1.0
            basis[i] = a_col
            a_col += 1
            art_rows.append(i)
    # reduced costs for min sum(artificials)
    if art_rows:
        T[-1] = -T[art_rows].sum(axis=0)
    T[-1, n + n_slack:total] = 0.0

    for it in range(max_iter):
        z = T[-1, :total]
        entering = np.flatnonzero(z < -_PIVOT_EPS)
        if entering.size == 0:
            break
        col = entering[0]
        column = T[:m, col]
        ok = column > _PIVOT_EPS
        if not ok.any():
            # cannot happen for phase 1 (objective bounded below by 0)
            break
        ratios = np.full(m, np.inf)
        ratios[ok] = T[:m, -1][ok] / column[ok]
        best = ratios.min()
        ties = np.flatnonzero(np.isclose(ratios, best, rtol=0.0, atol=1e-12))
        row = ties[np.argmin(basis[ties])]
        _pivot(T, row, col)
        basis[row] = col
    else:
        raise NoConvergence(f"simplex did not terminate within {max_iter} pivots")

    y = np.zeros(total)
    y[basis] = T[:m, -1]
    artificial_sum = float(-T[-1, -1])
    return y[:n], max(artificial_sum, 0.0)


def lp_feasible(sys, tol=config.TOL_LP):
    """
    Decide feasibility of a LinearSystem.

    Parameters
    ----------
    sys : LinearSystem
        Rows and bounds.
    tol : float
        Phase-1 objective (sum of artificials) below which the system is feasible.

    Returns
    -------
    FeasibilityResult
        ``witness`` is set only when feasible.
    """
    sys.validate()
    if np.any(sys.var_lower > sys.var_upper):
        return FeasibilityResult("infeasible")
    if sys.n_rows == 0:
        x = np.where(np.isfinite(sys.var_lower), sys.var_lower,
                     np.where(np.isfinite(sys.var_upper), np.minimum(sys.var_upper, 0.0), 0.0))
        x = np.clip(x, sys.var_lower, sys.var_upper)
        return FeasibilityResult("feasible", x, sys.max_violation(x))

    A, b, senses, D, offset = _standardize(sys)
    if A.shape[0] == 0:
        x = offset.copy()
        return FeasibilityResult("feasible", x, sys.max_violation(x))
    max_iter = 50 * (A.shape[0] + A.shape[1]) + 100
    y, artificial_sum = _phase_one(A, b, senses, max_iter)
    if artificial_sum > tol:
        return FeasibilityResult("infeasible")
    x = D @ y + offset
    return FeasibilityResult("feasible", x, sys.max_violation(x))


# --------------------------------------------------------------------------
# branch and bound
# --------------------------------------------------------------------------

def milp_feasible(msys, max_nodes=config.MAX_NODES, max_binaries=config.MAX_BINARIES, tol=config.TOL_LP):
    """
    Exact feasibility of a system with {0,1} variables.

    Depth-first search, branching on the most fractional binary of the
    LP relaxation. Each LP solve counts as one node.

    Raises
    ------
    NodeBudgetExceeded
        When more than ``max_nodes`` relaxations would be needed.
    """
    base = msys.base
    binaries = list(msys.binary_vars)
    if not binaries:
        result = lp_feasible(base, tol)
        result.nodes = 1
        return result
    if len(binaries) > max_binaries:
        raise TooLargeForExact(f"{len(binaries)} binaries exceed the limit of {max_binaries}")

    lower0 = base.var_lower.copy()
    upper0 = base.var_upper.copy()
    lower0[binaries] = np.maximum(lower0[binaries], 0.0)
    upper0[binaries] = np.minimum(upper0[binaries], 1.0)

    stack = [(lower0, upper0)]
    nodes = 0
    while stack:
        lower, upper = stack.pop()
        if nodes >= max_nodes:
            raise NodeBudgetExceeded(f"branch and bound exceeded {max_nodes} nodes")
        nodes += 1
        relaxed = LinearSystem(base.n_vars, base.coeffs, base.rhs, base.senses, lower, upper)
        res = lp_feasible(relaxed, tol)
        if not res.feasible:
            continue
        values = res.witness[binaries]
        frac = np.abs(values - np.round(values))
        if np.all(frac <= 1e-9):
            x = res.witness.copy()
            x[binaries] = np.round(values)
            logger.debug("milp feasible", extra={"nodes": nodes})
            return FeasibilityResult("feasible", x, base.max_violation(x), nodes)
        k = int(np.argmax(frac))
        j = binaries[k]
        lo_child = (lower.copy(), upper.copy())
        lo_child[1][j] = 0.0
        hi_child = (lower.copy(), upper.copy())
        hi_child[0][j] = 1.0
        # the child nearer the relaxed value is explored first
        if values[k] >= 0.5:
            stack.extend([lo_child, hi_child])
        else:
            stack.extend([hi_child, lo_child])
    return FeasibilityResult("infeasible", nodes=nodes)


# --------------------------------------------------------------------------
# Riccati
# --------------------------------------------------------------------------

def riccati_map(spec, sigma):
    """One prediction/update step A(S - S C'(C S C' + R)^-1 C S)A' + Q."""
    S = spec.C @ sigma @ spec.C.T + spec.R
    try:
        factor = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:
        raise NonPDInnovation("innovation covariance C S C' + R is not positive definite") from exc
    gain_t = linalg.cho_solve(factor, spec.C @ sigma)
    updated = sigma - sigma @ spec.C.T @ gain_t
    out = spec.A @ updated @ spec.A.T + spec.Q
    return 0.5 * (out + out.T)


def are_residual(spec, sigma):
    return riccati_map(spec, sigma) - sigma


def solve_are(spec, tol=1e-10, max_iter=100_000):
    """
    Stationary predicted covariance of the Kalman filter.

    Parameters
    ----------
    spec : RiccatiSpec
        System matrices.
    tol : float
        Stop when the sup-norm of the ARE residual is below tol.
    max_iter : int
        Iteration cap.

    Returns
    -------
    numpy.ndarray
        Symmetric PSD solution of the algebraic Riccati equation.
    """
    sigma = 0.5 * (spec.Q + spec.Q.T)
    for it in range(max_iter):
        nxt = riccati_map(spec, sigma)
        if np.max(np.abs(nxt - sigma)) < tol:
            return nxt
        if not np.all(np.isfinite(nxt)):
            break
        sigma = nxt
    raise NoConvergence(f"Riccati iteration did not converge in {max_iter} steps")


# --------------------------------------------------------------------------
# line search over a family of LPs
# --------------------------------------------------------------------------

def scalar_bisect_lp(make_sys, lo, hi, tol_T, probes=3, tol=config.TOL_LP):
    """
    Smallest T in [lo, hi] for which ``make_sys(T)`` is feasible.

    Parameters
    ----------
    make_sys : callable
        T -> LinearSystem, assumed monotone (feasible stays feasible as T grows).
    lo, hi : float
        Search interval; ``make_sys(hi)`` must be feasible.
    tol_T : float
        Width of the final bracket.
    probes : int
        Interior grid points checked for non-monotone behavior before
        bisecting; they also narrow the starting bracket. 0 skips the check.

    Returns
    -------
    float

    Raises
    ------
    NotFeasibleAtHi
    NonMonotoneDetected
        When a grid point is infeasible above a feasible one.
    """
    if lp_feasible(make_sys(lo), tol).feasible:
        return float(lo)
    if not lp_feasible(make_sys(hi), tol).feasible:
        raise NotFeasibleAtHi(f"system infeasible at hi={hi}")
    a, b = float(lo), float(hi)
    for t in np.linspace(lo, hi, probes + 2)[1:-1]:
        if lp_feasible(make_sys(t), tol).feasible:
            b = min(b, float(t))
        elif b < hi:
            raise NonMonotoneDetected(f"feasible at T={b:g} but infeasible at T={t:g}")
        else:
            a = float(t)
    while b - a > tol_T:
        mid = 0.5 * (a + b)
        if lp_feasible(make_sys(mid), tol).feasible:
            b = mid
        else:
            a = mid
    return b

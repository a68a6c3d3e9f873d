"""
invfilter.py

Inverse filtering: estimate what an adversary believes about our state from
noisy measurements of its actions.

    inverse_hmm_step   one step of the finite inverse HMM filter over a
                       weighted set of candidate adversary beliefs
    inverse_kf_step    Kalman recursion on the adversary's state estimate

Dependencies:
    numpy, scipy (linalg.cho_factor)
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from . import config
from .errors import DimensionMismatch, InputError, SingularInnovation, ZeroLikelihood

logger = logging.getLogger(__name__)

THREE_STATE_P = np.array([[0.7, 0.2, 0.1], [0.1, 0.4, 0.5], [0.1, 0.1, 0.8]])
THREE_STATE_B = np.array([[0.3, 0.3, 0.4], [0.1, 0.8, 0.1], [0.1, 0.4, 0.5]])
THREE_STATE_PI0 = np.array([1.0, 0.0, 0.0])


# --------------------------------------------------------------------------
# action likelihoods
# --------------------------------------------------------------------------

class ThresholdAction:
    """Action 0 iff pi[state] >= threshold, else action 1; observed exactly."""

    n_actions = 2

    def __init__(self, threshold=0.5, state=0):
        self.threshold = threshold
        self.state = state

    def choose(self, beliefs):
        beliefs = np.atleast_2d(beliefs)
        return np.where(beliefs[:, self.state] >= self.threshold, 0, 1)

    def __call__(self, beliefs, a):
        return (self.choose(beliefs) == a).astype(float)

    def sample(self, belief, rng):
        return int(self.choose(belief)[0])


class NoisyThresholdAction(ThresholdAction):
    """Threshold action observed through a binary channel that flips it w.p. ``flip``."""

    def __init__(self, threshold=0.5, state=0, flip=0.1):
        super().__init__(threshold, state)
        self.flip = flip

    def __call__(self, beliefs, a):
        hit = self.choose(beliefs) == a
        return np.where(hit, 1.0 - self.flip, self.flip)

    def sample(self, belief, rng):
        a = int(self.choose(belief)[0])
        return 1 - a if rng.random() < self.flip else a


class UninformativeAction:
    """Actions independent of the belief."""

    def __init__(self, n_actions=2):
        self.n_actions = n_actions

    def __call__(self, beliefs, a):
        return np.full(np.atleast_2d(beliefs).shape[0], 1.0 / self.n_actions)

    def sample(self, belief, rng):
        return int(rng.integers(self.n_actions))


def threshold_action(threshold=0.5, state=0):
    return ThresholdAction(threshold, state)


def noisy_threshold_action(threshold=0.5, state=0, flip=0.1):
    return NoisyThresholdAction(threshold, state, flip)


def uninformative_action(n_actions=2):
    return UninformativeAction(n_actions)


# --------------------------------------------------------------------------
# inverse HMM filter
# --------------------------------------------------------------------------

@dataclass
class AdversaryModel:
    """
    Our Markov chain P, the adversary's observation kernel B and the action
    likelihood G(beliefs, a).
    """

    P: np.ndarray
    B: np.ndarray
    G: object = field(default_factory=uninformative_action)

    def __post_init__(self):
        self.P = np.asarray(self.P, float)
        self.B = np.asarray(self.B, float)
        X = self.P.shape[0]
        if self.P.shape != (X, X) or self.B.shape[0] != X:
            raise DimensionMismatch("P must be X x X and B must be X x Y")
        for name, K in (("P", self.P), ("B", self.B)):
            if np.any(K < 0) or np.any(np.abs(K.sum(axis=1) - 1.0) > 1e-9):
                raise InputError(f"{name} must be row-stochastic")

    @property
    def X(self):
        return self.P.shape[0]

    @property
    def Y(self):
        return self.B.shape[1]

    def update(self, beliefs):
        """
        HMM filter T(pi, y) for every belief and observation.

        Returns
        -------
        (posteriors (n, Y, X), normalizers (n, Y))
        """
        pred = np.atleast_2d(beliefs) @ self.P
        unnorm = pred[:, None, :] * self.B.T[None, :, :]
        sigma = unnorm.sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            post = unnorm / sigma[:, :, None]
        return post, sigma


@dataclass
class InverseHmmState:
    atoms: np.ndarray
    weights: np.ndarray
    k: int = 0

    @classmethod
    def initial(cls, pi0):
        return cls(np.atleast_2d(np.asarray(pi0, float)), np.ones(1), 0)

    def mean(self):
        return self.weights @ self.atoms

    def __len__(self):
        return self.weights.size


def _group(atoms, weights, tol=config.POSTERIOR_GROUPING):
    keys = np.round(atoms / tol).astype(np.int64)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    merged = np.bincount(inverse, weights=weights, minlength=first.size)
    return atoms[first], merged


def _merge(atoms, weights, delta):
    order = np.argsort(-weights, kind="stable")
    atoms, weights = atoms[order], weights[order]
    free = np.ones(weights.size, dtype=bool)
    out_atoms, out_weights = [], []
    for i in range(weights.size):
        if not free[i]:
            continue
        close = free & (np.abs(atoms - atoms[i]).sum(axis=1) <= delta)
        free &= ~close
        w = weights[close].sum()
        centre = atoms[i] if w <= 0 else weights[close] @ atoms[close] / w
        out_atoms.append(centre)
        out_weights.append(w)
    return np.array(out_atoms), np.array(out_weights)


def inverse_hmm_step(state, model, x_next, a_next, w_prune=config.W_PRUNE, delta_merge=config.DELTA_MERGE):
    """
    Posterior over the adversary's belief after our move to ``x_next`` and
    its observed action ``a_next``.

    Parameters
    ----------
    state : InverseHmmState
    model : AdversaryModel
    x_next : int
        Our (known) next state, 0-based.
    a_next : int
        Observed action, 0-based.
    w_prune : float
        Atoms with smaller weight are dropped; 0 disables pruning.
    delta_merge : float
        Atoms within this L1 distance are merged; 0 disables merging.

    Returns
    -------
    (InverseHmmState, numpy.ndarray)
        New state and the conditional-mean belief.

    Raises
    ------
    ZeroLikelihood
        When no candidate belief can produce the observed action.
    """
    post, sigma = model.update(state.atoms)
    live = sigma > 0
    weights = state.weights[:, None] * model.B[x_next][None, :]
    atoms = post[live]
    weights = weights[live]
    atoms, weights = _group(atoms, weights)
    weights = weights * model.G(atoms, a_next)
    total = weights.sum()
    if not total > 0:
        raise ZeroLikelihood(f"action {a_next} has zero likelihood under every candidate belief")
    weights = weights / total

    if w_prune > 0:
        keep = weights >= w_prune
        atoms, weights = atoms[keep], weights[keep] / weights[keep].sum()
    elif state.k + 1 > config.HORIZON_WARNING:
        logger.warning("⚠️ unpruned inverse filter is growing exponentially",
                       extra={"k": state.k + 1, "atoms": int(weights.size)})
    if delta_merge > 0 and weights.size > 1:
        atoms, weights = _merge(atoms, weights, delta_merge)
    new = InverseHmmState(atoms, weights, state.k + 1)
    return new, new.mean()


def run_inverse_hmm(model, pi0, states, actions, **kw):
    """Run inverse_hmm_step along a trajectory; returns the conditional means (K, X)."""
    state = InverseHmmState.initial(pi0)
    means = []
    for x, a in zip(states, actions):
        state, mean = inverse_hmm_step(state, model, int(x), int(a), **kw)
        means.append(mean)
    return np.array(means), state


def simulate_adversary(model, pi0=THREE_STATE_PI0, steps=10, rng=None, x0=None):
    """
    Sample our chain, the adversary's observations, its HMM beliefs and our
    measurements of its actions.

    Returns
    -------
    dict with keys states (K,), observations (K,), beliefs (K, X), actions (K,)
    """
    rng = np.random.default_rng() if rng is None else rng
    pi0 = np.asarray(pi0, float)
    x = int(rng.choice(model.X, p=pi0)) if x0 is None else int(x0)
    belief = pi0.copy()
    out = {"states": [], "observations": [], "beliefs": [], "actions": []}
    for _ in range(steps):
        x = int(rng.choice(model.X, p=model.P[x]))
        y = int(rng.choice(model.Y, p=model.B[x]))
        post, _ = model.update(belief)
        belief = post[0, y]
        a = model.G.sample(belief, rng)
        out["states"].append(x)
        out["observations"].append(y)
        out["beliefs"].append(belief)
        out["actions"].append(a)
    return {k: np.array(v) for k, v in out.items()}


# --------------------------------------------------------------------------
# inverse Kalman filter
# --------------------------------------------------------------------------

@dataclass
class LinearAdversary:
    """
    Our linear Gaussian dynamics x' = A x + w (cov Q), the adversary's
    measurements y = C x + v (cov R), and its action a = phi(Sigma) xhat + eps
    with eps ~ N(0, sigma_eps^2 I).
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    sigma_eps: float = 1.0
    phi: object = None

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, float))
        self.C = np.atleast_2d(np.asarray(self.C, float))
        self.Q = np.atleast_2d(np.asarray(self.Q, float))
        self.R = np.atleast_2d(np.asarray(self.R, float))
        n, p = self.A.shape[0], self.C.shape[0]
        if self.A.shape != (n, n) or self.Q.shape != (n, n) or self.C.shape[1] != n or self.R.shape != (p, p):
            raise DimensionMismatch("inconsistent A, C, Q, R shapes")
        if self.phi is None:
            self.phi = lambda sigma: np.eye(sigma.shape[0])

    @property
    def n(self):
        return self.A.shape[0]


@dataclass
class ForwardSchedule:
    predicted: list
    filtered: list
    gains: list


@dataclass
class InverseKfState:
    mean: np.ndarray
    cov: np.ndarray
    k: int = 0


def forward_schedule(model, sigma0, steps):
    """
    The adversary's covariance recursion, known to us in advance.

    Entry k (0-based) holds Sigma_{k+1|k}, Sigma_{k+1} and the gain Psi_{k+1}.
    """
    sigma = np.atleast_2d(np.asarray(sigma0, float))
    pred, filt, gains = [], [], []
    for _ in range(steps):
        P = model.A @ sigma @ model.A.T + model.Q
        S = model.C @ P @ model.C.T + model.R
        gain = linalg.solve(S, model.C @ P, assume_a="pos").T
        sigma = P - gain @ model.C @ P
        sigma = 0.5 * (sigma + sigma.T)
        pred.append(P)
        filt.append(sigma)
        gains.append(gain)
    return ForwardSchedule(pred, filt, gains)


def inverse_kf_step(state, model, schedule, x_next, a_next):
    """
    One Kalman step on the adversary's estimate xhat.

    Prediction uses xhat' = (I - Psi C) A xhat + Psi C x_next + Psi v,
    the update observes a_next = phi(Sigma) xhat' + eps. Covariance uses the
    Joseph form.

    Raises
    ------
    SingularInnovation
        When the innovation covariance is not positive definite.
    """
    k = state.k
    if k >= len(schedule.gains):
        raise InputError("forward schedule is shorter than the trajectory")
    gain = schedule.gains[k]
    I = np.eye(model.n)
    F = (I - gain @ model.C) @ model.A
    mean = F @ state.mean + gain @ model.C @ np.atleast_1d(x_next)
    cov = F @ state.cov @ F.T + gain @ model.R @ gain.T

    H = np.atleast_2d(model.phi(schedule.filtered[k]))
    S = H @ cov @ H.T + model.sigma_eps ** 2 * np.eye(H.shape[0])
    try:
        factor = linalg.cho_factor(S)
    except linalg.LinAlgError as exc:
        raise SingularInnovation("inverse filter innovation covariance is not positive definite") from exc
    K = linalg.cho_solve(factor, H @ cov).T
    mean = mean + K @ (np.atleast_1d(a_next) - H @ mean)
    J = I - K @ H
    cov = J @ cov @ J.T + model.sigma_eps ** 2 * K @ K.T
    return InverseKfState(mean, 0.5 * (cov + cov.T), k + 1)


def run_inverse_kf(model, schedule, xhat0, cov0, states, actions):
    state = InverseKfState(np.atleast_1d(np.asarray(xhat0, float)), np.atleast_2d(np.asarray(cov0, float)), 0)
    means, covs = [], []
    for x, a in zip(states, actions):
        state = inverse_kf_step(state, model, schedule, x, a)
        means.append(state.mean)
        covs.append(state.cov)
    return np.array(means), np.array(covs)


def simulate_tracker(model, x0, sigma0, steps, rng):
    """
    Our trajectory, the adversary's Kalman estimates and noisy actions.

    Returns
    -------
    dict with keys states (K, n), estimates (K, n), actions (K, q), schedule
    """
    x = np.atleast_1d(np.asarray(x0, float))
    xhat = x.copy()
    schedule = forward_schedule(model, sigma0, steps)
    n, p = model.n, model.C.shape[0]
    states, estimates, actions = [], [], []
    for k in range(steps):
        x = model.A @ x + rng.multivariate_normal(np.zeros(n), model.Q)
        y = model.C @ x + rng.multivariate_normal(np.zeros(p), model.R)
        gain = schedule.gains[k]
        pred = model.A @ xhat
        xhat = pred + gain @ (y - model.C @ pred)
        H = np.atleast_2d(model.phi(schedule.filtered[k]))
        a = H @ xhat + model.sigma_eps * rng.normal(size=H.shape[0])
        states.append(x)
        estimates.append(xhat)
        actions.append(a)
    return {"states": np.array(states), "estimates": np.array(estimates), "actions": np.array(actions),
            "schedule": schedule}

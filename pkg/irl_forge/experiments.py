"""
experiments.py

End-to-end passive Langevin experiments.

    kl_experiment        reconstruct a bimodal relative-entropy reward (or a
                         fixed-data posterior) from a swarm's gradients
    cmdp_experiment      reconstruct the penalized reward of a constrained MDP
                         in spherical policy coordinates
    switching_scenario   track a reward that jumps between regimes

Dependencies:
    numpy, scipy (optimize, linalg)
"""

import logging

import numpy as np
from scipy import linalg, optimize

from . import config
from .config import CMDPConfig, KLConfig, SwitchingConfig
from .errors import DimensionMismatch, InputError, NonUnichainDetected
from .langevin import (
    GradientTrace,
    RewardOracle,
    classical_langevin,
    estimate_reward,
    find_modes,
    gaussian_init,
    kl_oracle,
    metropolis_hastings,
    posterior_oracle,
    run_forward_agents,
    run_sampler,
    uniform_init,
    variational_distance,
)

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# relative entropy / Bayesian learning
# --------------------------------------------------------------------------

def sample_mixture(theta_true, obs_var, n, rng):
    t = np.asarray(theta_true, float)
    first = rng.random(n) < 0.5
    return np.where(first, t[0], t[0] + t[1]) + np.sqrt(obs_var) * rng.standard_normal(n)


def kl_experiment(cfg=None, seed=0, jobs=1, progress=False, **overrides):
    """
    Reconstruct the relative-entropy reward of the two-component mixture model.

    The swarm maximizes R with noisy gradients, the configured passive
    sampler turns its trace into samples of exp(beta R), and a classical
    Langevin run with the same step count serves as the reference. In
    ``mode="bayesian_learning"`` the reward is the log posterior of one fixed
    data path and both runs are compared against Metropolis-Hastings.

    Returns
    -------
    dict
        modes, d (passive vs classical) or d_classical / d_passive (vs MH),
        the passive and classical clouds and the reward estimate.
    """
    cfg = (cfg or KLConfig()).with_overrides(**overrides)
    if cfg.mode == "bayesian_learning":
        data = sample_mixture(cfg.theta_true, cfg.obs_var, cfg.n_obs, config.trial_rng(seed, 7))
        oracle = posterior_oracle(data, cfg.prior_var, cfg.obs_var)
    else:
        data = None
        oracle = kl_oracle(cfg.theta_true, cfg.prior_var, cfg.obs_var, cfg.n_obs)
    init = gaussian_init(np.zeros(2))

    logger.info("🚀 starting relative-entropy experiment", extra={"mode": cfg.mode, "seed": seed})
    trace = run_forward_agents(oracle, cfg.swarm, init, seed, jobs=jobs, progress=progress)
    passive = run_sampler(trace, cfg.sampler, init, seed, progress=progress)
    n_steps = passive.path.shape[0]
    baseline = classical_langevin(oracle, cfg.sampler.with_overrides(n_steps=n_steps), seed, init=init,
                                  progress=progress)
    estimate = estimate_reward(passive, grid=cfg.bins, min_samples=1)
    report = {
        "mode": cfg.mode,
        "modes": find_modes(estimate, 2),
        "estimate": estimate,
        "passive": passive,
        "classical": baseline,
        "trace_points": len(trace),
        "data": data,
    }
    if cfg.mode == "bayesian_learning":
        beta = cfg.sampler.beta
        mh = metropolis_hastings(lambda x: beta * oracle.true_R(x), np.asarray(cfg.theta_true, float),
                                 cfg.mh_samples, cfg.mh_step, seed)
        report["mh"] = mh
        report["d_classical"] = variational_distance(baseline, mh)
        report["d_passive"] = variational_distance(passive, mh)
    else:
        report["d"] = variational_distance(passive, baseline)
    logger.info("🏁 relative-entropy experiment finished", extra={"modes": report["modes"].tolist()})
    return report


# --------------------------------------------------------------------------
# constrained MDP
# --------------------------------------------------------------------------

def spherical_map(alpha):
    """
    Policy phi(u|x) from angles alpha (..., X, U - 1).

    phi(1) = cos^2 a_1, phi(u) = cos^2 a_u prod_{p<u} sin^2 a_p and
    phi(U) = prod_p sin^2 a_p; rows lie on the simplex for any real angles.
    """
    alpha = np.asarray(alpha, float)
    c2, s2 = np.cos(alpha) ** 2, np.sin(alpha) ** 2
    lead = np.cumprod(np.concatenate([np.ones(alpha.shape[:-1] + (1,)), s2], axis=-1), axis=-1)
    return lead * np.concatenate([c2, np.ones(alpha.shape[:-1] + (1,))], axis=-1)


def inverse_spherical(phi):
    """Angles in [0, pi/2] with spherical_map(inverse_spherical(phi)) == phi."""
    phi = np.asarray(phi, float)
    U = phi.shape[-1]
    rest = np.ones(phi.shape[:-1])
    angles = []
    for u in range(U - 1):
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(rest > 0, phi[..., u] / rest, 1.0)
        a = np.arccos(np.sqrt(np.clip(ratio, 0.0, 1.0)))
        angles.append(a)
        rest = rest - phi[..., u]
    return np.stack(angles, axis=-1)


def fold_angles(alpha):
    """Map angles into [0, pi/2] without changing spherical_map(alpha)."""
    a = np.mod(alpha, np.pi)
    return np.where(a > np.pi / 2, np.pi - a, a)


class CMDPModel:
    """Transition matrices P[u] (U, X, X), rewards rho (X, U) and constraint costs (X, U)."""

    def __init__(self, P, rho, cost, gamma=1.0, lam=1e5):
        self.P = np.asarray(P, float)
        self.rho = np.asarray(rho, float)
        self.cost = np.asarray(cost, float)
        U, X, _ = self.P.shape
        if self.P.shape != (U, X, X) or self.rho.shape != (X, U) or self.cost.shape != (X, U):
            raise DimensionMismatch("P must be (U, X, X) and rho, cost (X, U)")
        if np.any(self.P < 0) or np.any(np.abs(self.P.sum(axis=2) - 1.0) > 1e-9):
            raise InputError("every P[u] must be row-stochastic")
        self.gamma = gamma
        self.lam = lam

    @classmethod
    def from_config(cls, cfg):
        return cls(cfg.P, cfg.rho, cfg.cost, cfg.gamma, cfg.lam)

    @property
    def X(self):
        return self.P.shape[1]

    @property
    def U(self):
        return self.P.shape[0]

    def joint(self, phi):
        """Stationary joint pi(x, u) for policies phi (..., X, U)."""
        phi = np.asarray(phi, float)
        P_phi = np.einsum("...iu,uij->...ij", phi, self.P)
        A = np.swapaxes(P_phi, -1, -2) - np.eye(self.X)
        A[..., -1, :] = 1.0
        b = np.zeros(phi.shape[:-2] + (self.X,))
        b[..., -1] = 1.0
        try:
            s = np.linalg.solve(A, b[..., None])[..., 0]
        except np.linalg.LinAlgError as exc:
            raise NonUnichainDetected("stationary distribution is not unique") from exc
        if np.any(s < -1e-9) or not np.all(np.isfinite(s)):
            raise NonUnichainDetected("stationary solve returned an invalid distribution")
        return np.clip(s, 0.0, None)[..., None] * phi

    def values(self, phi):
        """Average reward J and constraint B of policies phi (..., X, U)."""
        joint = self.joint(phi)
        return np.einsum("...xu,xu->...", joint, self.rho), np.einsum("...xu,xu->...", joint, self.cost)

    def penalized(self, J, B):
        return J - self.lam * (B - self.gamma) ** 2

    def reward(self, alpha):
        """Penalized reward at angles (..., X (U - 1))."""
        alpha = np.asarray(alpha, float)
        phi = spherical_map(alpha.reshape(alpha.shape[:-1] + (self.X, self.U - 1)))
        return self.penalized(*self.values(phi))

    def sample_path_reward(self, alpha_pairs, horizon, rng):
        """
        N-step sample-path penalized objective for policies (2, n, d).

        Both members of a pair share their uniforms (common random numbers).
        """
        two, n, _ = alpha_pairs.shape
        phi = spherical_map(alpha_pairs.reshape(two, n, self.X, self.U - 1))
        cum_phi = np.cumsum(phi, axis=-1)
        cum_P = np.cumsum(self.P, axis=-1)
        x = np.broadcast_to(rng.integers(self.X, size=n), (two, n)).copy()
        rows = np.arange(n)[None, :]
        pairs = np.arange(two)[:, None]
        J = np.zeros((two, n))
        B = np.zeros((two, n))
        for _ in range(horizon):
            ua = rng.random(n)[None, :]
            us = rng.random(n)[None, :]
            a = np.sum(ua[..., None] > cum_phi[pairs, rows, x][..., :-1], axis=-1)
            J += self.rho[x, a]
            B += self.cost[x, a]
            x = np.sum(us[..., None] > cum_P[a, x][..., :-1], axis=-1)
        J /= horizon
        B /= horizon
        return self.penalized(J, B)


def cmdp_oracle(model, gradient="sample_path", horizon=200, c=0.05):
    """
    SPSA policy-gradient oracle in angle coordinates.

    ``gradient="sample_path"`` differentiates the N-step sample-path objective
    with common random numbers; ``"stationary"`` differentiates the exact
    stationary objective (SPSA noise only).
    """
    d = model.X * (model.U - 1)

    def grad(theta, rng):
        delta = rng.choice([-1.0, 1.0], size=theta.shape)
        pair = np.stack([theta + c * delta, theta - c * delta])
        if gradient == "sample_path":
            r = model.sample_path_reward(pair, horizon, rng)
        else:
            r = model.reward(pair)
        return ((r[0] - r[1]) / (2.0 * c))[:, None] * delta

    return RewardOracle(d, grad, lambda theta: model.reward(np.atleast_2d(theta)), "cmdp")


def overlap_score(estimate, band_mask, top_mass=0.1):
    """Share of the top ``top_mass`` probability cells that lie inside ``band_mask``."""
    mass = (estimate.density * estimate.cell_volume()).ravel()
    order = np.argsort(-mass, kind="stable")
    cum = np.cumsum(mass[order])
    top = order[: int(np.searchsorted(cum, top_mass * cum[-1])) + 1]
    return float(mass[top][band_mask.ravel()[top]].sum() / mass[top].sum())


def cmdp_experiment(cfg=None, seed=0, jobs=1, progress=False, **overrides):
    """
    Reconstruct the penalized CMDP reward from policy-gradient agents.

    Agents start from uniform angles in [0, pi/2]^(X (U-1)); the sampler
    (multikernel by default) runs on angles folded back into that box. The
    ground truth J, B on a grid of (phi(1|x))_x comes from the stationary
    joint distribution.

    Returns
    -------
    dict
        phi_grid, J, B, R_true, estimate, overlap, samples (phi(1|x)),
        B_samples and the raw cloud.

    Raises
    ------
    NonUnichainDetected
    """
    cfg = (cfg or CMDPConfig()).with_overrides(**overrides)
    model = CMDPModel.from_config(cfg)
    if model.U != 2:
        raise InputError("the reconstruction grid covers two-action models only")
    oracle = cmdp_oracle(model, cfg.gradient, cfg.horizon, cfg.spsa_c)
    d = oracle.dim
    init = uniform_init(np.zeros(d), np.full(d, np.pi / 2))

    logger.info("🚀 starting CMDP experiment", extra={"gradient": cfg.gradient, "seed": seed})
    trace = run_forward_agents(oracle, cfg.swarm, init, seed, jobs=jobs, progress=progress)
    cloud = run_sampler(trace, cfg.sampler, init, seed, project=fold_angles, progress=progress)

    alpha = cloud.kept.reshape(-1, model.X, 1)
    phi = spherical_map(alpha)
    samples = phi[..., 0]
    _, B_samples = model.values(phi)

    axis = np.linspace(0.0, 1.0, cfg.grid)
    mesh = np.stack(np.meshgrid(*([axis] * model.X), indexing="ij"), axis=-1)
    phi_grid = np.stack([mesh, 1.0 - mesh], axis=-1)
    J, B = model.values(phi_grid)

    edges = [np.linspace(0.0, 1.0, cfg.grid)] * model.X
    estimate = estimate_reward(samples, grid=edges, beta=cfg.sampler.beta, min_samples=1)
    centers = np.stack(np.meshgrid(*estimate.centers, indexing="ij"), axis=-1)
    _, B_centers = model.values(np.stack([centers, 1.0 - centers], axis=-1))
    band = np.abs(B_centers - cfg.gamma) < cfg.band
    overlap = overlap_score(estimate, band, cfg.top_mass)
    logger.info("🏁 CMDP experiment finished", extra={"overlap": overlap})
    return {
        "phi_grid": axis,
        "J": J,
        "B": B,
        "R_true": model.penalized(J, B),
        "estimate": estimate,
        "overlap": overlap,
        "samples": samples,
        "B_samples": B_samples,
        "cloud": cloud,
    }


# --------------------------------------------------------------------------
# switching rewards
# --------------------------------------------------------------------------

def stationary_of_generator(Q):
    Q = np.asarray(Q, float)
    n = Q.shape[0]
    A = np.vstack([Q.T, np.ones(n)])
    b = np.concatenate([np.zeros(n), [1.0]])
    nu, *_ = linalg.lstsq(A, b)
    return nu


def _argmax(true_R, x0):
    res = optimize.minimize(lambda x: -float(true_R(x[None])[0]), np.asarray(x0, float), method="Nelder-Mead",
                            options={"xatol": 1e-8, "fatol": 1e-12, "maxiter": 10_000})
    return res.x


def _regime_path(P, K, rng):
    cum = np.cumsum(P, axis=1)
    u = rng.random(K)
    r = np.empty(K, dtype=int)
    state = 0
    for k in range(K):
        r[k] = state
        state = min(int(np.searchsorted(cum[state], u[k], side="right")), P.shape[0] - 1)
    return r


def switching_scenario(oracles, cfg=None, seed=0, init=None, progress=False, **overrides):
    """
    Passive sampling while the reward jumps between regimes.

    Trace point k carries a gradient of the regime active at k; regimes follow
    the chain with transition matrix I + eta Q. The sampler consumes the
    trace with constant step mu and the path is cut into windows whose mean
    location is classified against the regimes' maximizers.

    Returns
    -------
    dict
        trace, regimes, cloud, window_means, window_regimes, window_class,
        accuracy, regime_modes, averaged_mode, mode_estimate, case
    """
    cfg = (cfg or SwitchingConfig()).with_overrides(**overrides)
    Q = np.asarray(cfg.Q, float)
    oracles = list(oracles)
    if Q.shape[0] != len(oracles):
        raise DimensionMismatch("one oracle per regime of Q is required")
    dim = oracles[0].dim
    C = cfg.sampler.n_chains
    K = cfg.n_steps * C
    init = init or gaussian_init(np.zeros(dim), cfg.init_scale ** 2)

    rng = config.trial_rng(seed, 5)
    P = np.eye(Q.shape[0]) + cfg.eta * Q
    regimes = _regime_path(P, K, rng) if len(oracles) > 1 else np.zeros(K, dtype=int)
    theta = np.array(init.sample(rng, K), float).reshape(K, dim)
    grad = np.empty_like(theta)
    for j, oracle in enumerate(oracles):
        mask = regimes == j
        if mask.any():
            grad[mask] = oracle.noisy_grad(theta[mask], rng)
    trace = GradientTrace(theta, grad, np.arange(K))

    sampler = cfg.sampler.with_overrides(n_steps=cfg.n_steps)
    cloud = run_sampler(trace, sampler, init, seed, theta0=np.zeros(dim), progress=progress)

    regime_modes = np.array([_argmax(o.true_R, np.zeros(dim)) for o in oracles])
    nu = stationary_of_generator(Q)
    averaged_mode = _argmax(lambda x: sum(w * o.true_R(x) for w, o in zip(nu, oracles)), nu @ regime_modes)

    W = cfg.window
    n_windows = cfg.n_steps // W
    step_regime = regimes[np.arange(cfg.n_steps) * C]
    means, majority = [], []
    for w in range(n_windows):
        block = cloud.path[w * W:(w + 1) * W].reshape(-1, dim)
        means.append(block.mean(axis=0))
        majority.append(np.bincount(step_regime[w * W:(w + 1) * W], minlength=len(oracles)).argmax())
    means = np.array(means).reshape(n_windows, dim)
    majority = np.array(majority, dtype=int)
    dist = np.linalg.norm(means[:, None, :] - regime_modes[None], axis=2)
    classified = np.argmin(dist, axis=1) if n_windows else np.zeros(0, dtype=int)
    accuracy = float(np.mean(classified == majority)) if n_windows else float("nan")

    rate = cfg.eta * C
    mu = cfg.sampler.mu
    case = "slow" if rate < 0.1 * mu else "fast" if rate > 10 * mu else "comparable"
    logger.info("🏁 switching scenario finished", extra={"case": case, "accuracy": accuracy})
    return {
        "trace": trace,
        "regimes": regimes,
        "cloud": cloud,
        "window_means": means,
        "window_regimes": majority,
        "window_class": classified,
        "accuracy": accuracy,
        "regime_modes": regime_modes,
        "averaged_mode": averaged_mode,
        "mode_estimate": cloud.kept.mean(axis=0),
        "nu": nu,
        "case": case,
    }

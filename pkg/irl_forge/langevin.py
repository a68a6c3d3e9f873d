"""
langevin.py

Passive Langevin samplers: gradients observed from a swarm of stochastic
gradient agents are turned into samples from the Gibbs measure exp(beta R),
from which the reward R is read off up to a constant.

    run_forward_agents   the swarm; produces the GradientTrace
    run_sampler          five passive sampler variants
    classical_langevin   non-passive baseline with gradients at the iterate
    estimate_reward      histogram or KDE log-density on a grid
    find_modes           local maxima of an estimate

Dependencies:
    numpy, scipy (linalg, ndimage, optimize), tqdm,
    scikit-learn (KernelDensity, only for method="kde")
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import linalg, ndimage, optimize
from tqdm import tqdm

from . import config
from .errors import DimensionMismatch, EmptyCloud, InputError, MissingDensity, NonFiniteIterate

logger = logging.getLogger(__name__)

MAX_BINS = 200
MIN_CLOUD = 10_000


# --------------------------------------------------------------------------
# reward oracles
# --------------------------------------------------------------------------

@dataclass
class RewardOracle:
    """
    Noisy gradient source for a reward R on R^dim.

    ``grad(theta, rng)`` maps an (n, dim) array to n unbiased gradient draws;
    ``true_R`` (optional) evaluates R on an (n, dim) array.
    """

    dim: int
    grad: object
    true_R: object = None
    name: str = "oracle"

    def noisy_grad(self, theta, rng):
        theta = np.atleast_2d(np.asarray(theta, float))
        if theta.shape[1] != self.dim:
            raise DimensionMismatch(f"{self.name} expects points of dimension {self.dim}")
        return self.grad(theta, rng)

    def fd_grad(self, theta, h=1e-6):
        """Finite-difference gradient of true_R at one point."""
        if self.true_R is None:
            raise InputError(f"{self.name} has no closed-form reward")
        return optimize.approx_fprime(np.asarray(theta, float),
                                      lambda x: float(self.true_R(x[None])[0]), h)


def quadratic_oracle(dim=1, center=None, curvature=1.0, noise=0.0):
    """R(theta) = -curvature/2 |theta - center|^2 with additive Gaussian gradient noise."""
    center = np.zeros(dim) if center is None else np.asarray(center, float)

    def grad(theta, rng):
        g = -curvature * (theta - center)
        if noise > 0:
            g = g + noise * rng.standard_normal(theta.shape)
        return g

    def true_R(theta):
        return -0.5 * curvature * np.sum((np.atleast_2d(theta) - center) ** 2, axis=1)

    return RewardOracle(dim, grad, true_R, "quadratic")


def bump_oracle(centers, scales=1.0, weights=None, noise=0.0):
    """R(theta) = log sum_j w_j exp(-|theta - c_j|^2 / (2 s_j^2)), a multimodal reward."""
    centers = np.atleast_2d(np.asarray(centers, float))
    J, dim = centers.shape
    scales = np.broadcast_to(np.asarray(scales, float), (J,))
    log_w = np.log(np.full(J, 1.0 / J) if weights is None else np.asarray(weights, float))

    def _terms(theta):
        diff = np.atleast_2d(theta)[:, None, :] - centers[None]
        return log_w - 0.5 * np.sum(diff ** 2, axis=2) / scales ** 2, diff

    def true_R(theta):
        terms, _ = _terms(theta)
        return np.logaddexp.reduce(terms, axis=1)

    def grad(theta, rng):
        terms, diff = _terms(theta)
        resp = np.exp(terms - np.logaddexp.reduce(terms, axis=1, keepdims=True))
        g = -np.einsum("nj,njd->nd", resp, diff / scales[None, :, None] ** 2)
        if noise > 0:
            g = g + noise * rng.standard_normal(g.shape)
        return g

    return RewardOracle(dim, grad, true_R, "bumps")


def _mixture_terms(theta, y, obs_var):
    """Log-likelihood of y under 0.5 N(theta1, v) + 0.5 N(theta1 + theta2, v) and its gradient."""
    m1 = theta[..., 0]
    m2 = theta[..., 0] + theta[..., 1]
    l1 = -0.5 * (y - m1) ** 2 / obs_var
    l2 = -0.5 * (y - m2) ** 2 / obs_var
    lse = np.logaddexp(l1, l2)
    w1 = np.exp(l1 - lse)
    w2 = 1.0 - w1
    d1 = (w1 * (y - m1) + w2 * (y - m2)) / obs_var
    d2 = w2 * (y - m2) / obs_var
    loglik = lse + np.log(0.5) - 0.5 * np.log(2 * np.pi * obs_var)
    return loglik, np.stack([d1, d2], axis=-1)


def kl_oracle(theta_true=(0.0, 1.0), prior_var=(10.0, 2.0), obs_var=2.0, n_obs=100, nodes=80):
    """
    R(theta) = E{log p(theta) + n_obs log p(y | theta)} with y drawn from the
    two-component mixture at ``theta_true``; each gradient draw uses a fresh y.
    """
    t = np.asarray(theta_true, float)
    pv = np.asarray(prior_var, float)
    x, w = hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    y_nodes = np.concatenate([t[0] + np.sqrt(obs_var) * x, t[0] + t[1] + np.sqrt(obs_var) * x])
    y_weights = 0.5 * np.concatenate([w, w])

    def grad(theta, rng):
        n = theta.shape[0]
        first = rng.random(n) < 0.5
        y = np.where(first, t[0], t[0] + t[1]) + np.sqrt(obs_var) * rng.standard_normal(n)
        _, d = _mixture_terms(theta, y, obs_var)
        return -theta / pv + n_obs * d

    def true_R(theta):
        theta = np.atleast_2d(theta)
        loglik, _ = _mixture_terms(theta[:, None, :], y_nodes[None, :], obs_var)
        return -0.5 * np.sum(theta ** 2 / pv, axis=1) + n_obs * loglik @ y_weights

    return RewardOracle(2, grad, true_R, "kl")


def posterior_oracle(data, prior_var=(10.0, 2.0), obs_var=2.0):
    """
    R(theta) = log p(theta | data) for a fixed sample path; each gradient draw
    uses one observation picked at random, scaled by the sample size.
    """
    data = np.asarray(data, float)
    n_obs = data.size
    pv = np.asarray(prior_var, float)

    def grad(theta, rng):
        y = data[rng.integers(n_obs, size=theta.shape[0])]
        _, d = _mixture_terms(theta, y, obs_var)
        return -theta / pv + n_obs * d

    def true_R(theta):
        theta = np.atleast_2d(theta)
        loglik, _ = _mixture_terms(theta[:, None, :], data[None, :], obs_var)
        return -0.5 * np.sum(theta ** 2 / pv, axis=1) + loglik.sum(axis=1)

    return RewardOracle(2, grad, true_R, "posterior")


# --------------------------------------------------------------------------
# initialization densities and kernels
# --------------------------------------------------------------------------

class GaussianInit:
    """Multivariate normal initialization density with its gradient."""

    def __init__(self, mean, cov=None):
        self.mean = np.atleast_1d(np.asarray(mean, float))
        n = self.mean.size
        cov = np.eye(n) if cov is None else np.asarray(cov, float)
        self.cov = cov * np.eye(n) if cov.ndim == 0 else np.atleast_2d(cov)
        chol = linalg.cho_factor(self.cov)
        self._prec = linalg.cho_solve(chol, np.eye(n))
        logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
        self._log_norm = -0.5 * (n * np.log(2 * np.pi) + logdet)

    @property
    def dim(self):
        return self.mean.size

    def sample(self, rng, n):
        return rng.multivariate_normal(self.mean, self.cov, size=n)

    def pdf(self, x):
        diff = np.atleast_2d(x) - self.mean
        return np.exp(self._log_norm - 0.5 * np.einsum("ni,ij,nj->n", diff, self._prec, diff))

    def grad_pdf(self, x):
        diff = np.atleast_2d(x) - self.mean
        return -self.pdf(x)[:, None] * (diff @ self._prec.T)


class UniformInit:
    """Uniform density on a box; its gradient vanishes inside."""

    def __init__(self, low, high):
        self.low = np.atleast_1d(np.asarray(low, float))
        self.high = np.atleast_1d(np.asarray(high, float))
        if np.any(self.high <= self.low):
            raise InputError("uniform box needs high > low")
        self._density = 1.0 / np.prod(self.high - self.low)

    @property
    def dim(self):
        return self.low.size

    def sample(self, rng, n):
        return rng.uniform(self.low, self.high, size=(n, self.low.size))

    def pdf(self, x):
        x = np.atleast_2d(x)
        inside = np.all((x >= self.low) & (x <= self.high), axis=1)
        return np.where(inside, self._density, 0.0)

    def grad_pdf(self, x):
        return np.zeros_like(np.atleast_2d(x), dtype=float)


def gaussian_init(mean, cov=None):
    return GaussianInit(mean, cov)


def uniform_init(low, high):
    return UniformInit(low, high)


class GaussianKernel:
    """K(u) = N(0, bandwidth^2 I) density: nonnegative, symmetric, integrates to 1."""

    def __init__(self, bandwidth):
        if bandwidth <= 0:
            raise InputError("kernel bandwidth must be positive")
        self.bandwidth = bandwidth

    def log(self, u):
        u = np.atleast_2d(u)
        n = u.shape[1]
        return (-0.5 * np.sum(u ** 2, axis=1) / self.bandwidth ** 2
                - 0.5 * n * np.log(2 * np.pi * self.bandwidth ** 2))

    def __call__(self, u):
        return np.exp(self.log(u))


def gaussian_kernel(bandwidth=config.KERNEL_VARIANCE ** 0.5):
    return GaussianKernel(bandwidth)


# --------------------------------------------------------------------------
# forward agents
# --------------------------------------------------------------------------

@dataclass
class GradientTrace:
    """Agent iterates theta (K, N), their noisy gradients (K, N) and agent ids, agent-major."""

    theta: np.ndarray
    grad: np.ndarray
    agent: np.ndarray

    def __len__(self):
        return self.theta.shape[0]

    @property
    def dim(self):
        return self.theta.shape[1]


def _agent_batch(oracle, swarm, init, seed, b):
    rng = config.trial_rng(seed, 1, b)
    first = b * swarm.batch
    n = min(swarm.batch, swarm.n_agents - first)
    tau = rng.integers(swarm.tau_min, swarm.tau_max + 1, size=n)
    eps = np.full(n, swarm.epsilon)
    if swarm.step_jitter > 0:
        eps = eps * (1.0 + rng.uniform(-swarm.step_jitter, swarm.step_jitter, size=n))
    theta = np.array(init.sample(rng, n), float).reshape(n, -1)
    N = theta.shape[1]
    thetas = np.full((n, swarm.tau_max, N), np.nan)
    grads = np.full((n, swarm.tau_max, N), np.nan)
    alive = np.ones(n, dtype=bool)
    for k in range(swarm.tau_max):
        active = alive & (k < tau)
        if not active.any():
            break
        g = oracle.noisy_grad(theta[active], rng)
        thetas[active, k] = theta[active]
        grads[active, k] = g
        theta[active] = theta[active] + eps[active, None] * g
        bad = active & ~np.all(np.isfinite(theta), axis=1)
        if bad.any():
            logger.warning("⚠️ forward agents diverged and were aborted",
                           extra={"batch": b, "step": k, "agents": int(bad.sum())})
            alive &= ~bad
    keep = np.all(np.isfinite(thetas), axis=2) & np.all(np.isfinite(grads), axis=2)
    ids = np.broadcast_to((first + np.arange(n))[:, None], keep.shape)
    return thetas[keep], grads[keep], ids[keep]


def run_forward_agents(oracle, swarm, init, seed, jobs=1, progress=False):
    """
    Run the swarm of stochastic-gradient agents.

    Agent n starts from a draw of ``init`` and iterates
    theta <- theta + eps_n g for a horizon drawn uniformly in
    [tau_min, tau_max]. Agents are simulated in batches with streams
    ``trial_rng(seed, 1, batch)``, so the trace does not depend on ``jobs``.

    Returns
    -------
    GradientTrace
        Agent-major: all iterates of agent 0, then agent 1, and so on.

    Raises
    ------
    NonFiniteIterate
        When every agent diverged.
    """
    n_batches = -(-swarm.n_agents // swarm.batch)
    logger.info("🚀 running forward agents", extra={"agents": swarm.n_agents, "oracle": oracle.name})
    parts = config.run_trials(lambda b: _agent_batch(oracle, swarm, init, seed, b), n_batches,
                              jobs=jobs, progress=progress, desc="agents")
    theta = np.concatenate([p[0] for p in parts])
    if theta.shape[0] == 0:
        raise NonFiniteIterate("every forward agent diverged")
    trace = GradientTrace(theta, np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts]))
    logger.info("✅ gradient trace ready", extra={"points": len(trace)})
    return trace


# --------------------------------------------------------------------------
# passive samplers
# --------------------------------------------------------------------------

@dataclass
class SampleCloud:
    """Sampler path (steps, chains, N); the first ``burn_in`` steps are discarded by ``kept``."""

    path: np.ndarray
    burn_in: int
    beta: float
    variant: str

    @property
    def kept(self):
        return self.path[self.burn_in:].reshape(-1, self.path.shape[2])

    @property
    def dim(self):
        return self.path.shape[2]

    def __len__(self):
        return (self.path.shape[0] - self.burn_in) * self.path.shape[1]


def multikernel_weights(pool, theta, sigma):
    """Self-normalized weights p(theta | pool_i) over the last-but-one axis of ``pool``."""
    sq = np.sum((pool - theta[..., None, :]) ** 2, axis=-1)
    logw = -0.5 * sq / sigma ** 2
    w = np.exp(logw - logw.max(axis=-1, keepdims=True))
    return w / w.sum(axis=-1, keepdims=True)


def _log_normal(v, sigma):
    n = v.shape[1]
    return -0.5 * np.sum(v ** 2, axis=1) / sigma ** 2 - 0.5 * n * np.log(2 * np.pi * sigma ** 2)


def _check_inputs(cfg, trace, init, oracle):
    if cfg.variant == "active":
        if oracle is None:
            raise InputError("the active sampler needs an oracle to query gradients")
        if cfg.n_steps is None:
            raise InputError("the active sampler needs n_steps")
        return
    if trace is None or len(trace) == 0:
        raise InputError(f"the {cfg.variant} sampler needs a gradient trace")
    if cfg.variant == "generalized" and (init is None or not hasattr(init, "grad_pdf")):
        raise MissingDensity("the generalized sampler needs the initialization density and its gradient")
    if cfg.variant in ("classical_passive", "nonreversible") and init is None:
        raise MissingDensity(f"the {cfg.variant} sampler needs the initialization density")


def _start(cfg, N, init, theta0, rng):
    C = cfg.n_chains
    if theta0 is not None:
        return np.array(np.broadcast_to(np.asarray(theta0, float), (C, N)))
    if init is not None:
        return np.array(init.sample(rng, C), float).reshape(C, N)
    return np.zeros((C, N))


def run_sampler(trace, cfg, init=None, seed=0, oracle=None, theta0=None, project=None, progress=False):
    """
    Run one passive Langevin variant over a gradient trace.

    Chain c at step k reads trace point (k C + c) mod K. The multikernel
    variant instead draws a fresh pool of ``cfg.pool`` trace points uniformly
    with replacement per chain and step (stream ``trial_rng(seed, 2, 3)``),
    so pool members are i.i.d. from the trace's empirical density.
    Injected noise comes from ``trial_rng(seed, 2, 0)``, so variants that
    share a formula share a sample stream.

    Parameters
    ----------
    trace : GradientTrace or None
        Not needed by the active variant.
    cfg : LangevinConfig
    init : GaussianInit or UniformInit, optional
        The agents' initialization density pi.
    oracle : RewardOracle, optional
        Gradient-at-request source for the active variant.
    theta0 : array_like, optional
        Starting point(s); defaults to draws from ``init``.
    project : callable, optional
        Applied to the iterate after every step (e.g. folding angles back
        into their fundamental domain).

    Returns
    -------
    SampleCloud

    Raises
    ------
    MissingDensity
    NonFiniteIterate
    """
    _check_inputs(cfg, trace, init, oracle)
    variant = cfg.variant
    N = oracle.dim if trace is None else trace.dim
    C, L = cfg.n_chains, cfg.pool
    K = None if trace is None else len(trace)
    if cfg.n_steps is not None:
        n_steps = cfg.n_steps
    else:
        n_steps = max(K // (C * L if variant == "multikernel" else C), 1)

    rng_noise = config.trial_rng(seed, 2, 0)
    rng_init = config.trial_rng(seed, 2, 1)
    rng_active = config.trial_rng(seed, 2, 2)
    rng_pool = config.trial_rng(seed, 2, 3)
    theta = _start(cfg, N, init, theta0, rng_init)
    kernel = gaussian_kernel(cfg.bandwidth)
    half = 0.5 * cfg.beta
    mu, sqrt_mu = cfg.mu, np.sqrt(cfg.mu)
    S = np.zeros((N, N)) if cfg.skew is None else np.asarray(cfg.skew, float)
    if S.shape != (N, N):
        raise DimensionMismatch("skew matrix does not match the parameter dimension")
    chains = np.arange(C)
    path = np.empty((n_steps, C, N))

    logger.info("🚀 running passive sampler", extra={"variant": variant, "steps": n_steps, "chains": C})
    for k in tqdm(range(n_steps), disable=not progress, desc=variant):
        noise = rng_noise.standard_normal((C, N))
        if variant == "multikernel":
            idx = rng_pool.integers(K, size=(C, L))
            w = multikernel_weights(trace.theta[idx], theta, cfg.sigma)
            drift = half * np.einsum("cl,cln->cn", w, trace.grad[idx])
            theta = theta + mu * drift + sqrt_mu * noise
        elif variant == "active":
            v = cfg.sigma * rng_active.standard_normal((C, N))
            g = oracle.noisy_grad(theta + v, rng_active)
            ratio = np.exp(kernel.log(v) - _log_normal(v, cfg.sigma))
            theta = theta + mu * ratio[:, None] * half * g + sqrt_mu * noise
        else:
            idx = (k * C + chains) % K
            g = trace.grad[idx]
            weight = kernel(trace.theta[idx] - theta)
            p = init.pdf(theta)
            if variant == "generalized":
                drift = weight[:, None] * half * g + init.grad_pdf(theta)
                theta = theta + mu * drift * p[:, None] + sqrt_mu * p[:, None] * noise
            else:
                if variant == "nonreversible":
                    g = g + g @ S.T
                with np.errstate(divide="ignore", invalid="ignore"):
                    scale = np.where(weight > 0, weight / p, 0.0)
                theta = theta + mu * scale[:, None] * half * g + sqrt_mu * noise
        if project is not None:
            theta = project(theta)
        if not np.all(np.isfinite(theta)):
            raise NonFiniteIterate(f"{variant} sampler diverged at step {k}")
        path[k] = theta
    cloud = SampleCloud(path, int(cfg.burn_in * n_steps), cfg.beta, variant)
    logger.info("✅ sampler finished", extra={"variant": variant, "kept": len(cloud)})
    return cloud


def classical_langevin(oracle, cfg, seed=0, init=None, theta0=None, progress=False):
    """
    Langevin baseline that evaluates the noisy gradient at its own iterate:
    theta <- theta + mu beta/2 g(theta) + sqrt(mu) n.
    """
    if cfg.n_steps is None:
        raise InputError("classical Langevin needs n_steps")
    N = oracle.dim
    rng_noise = config.trial_rng(seed, 3, 0)
    rng_init = config.trial_rng(seed, 3, 1)
    rng_grad = config.trial_rng(seed, 3, 2)
    theta = _start(cfg, N, init, theta0, rng_init)
    half, mu, sqrt_mu = 0.5 * cfg.beta, cfg.mu, np.sqrt(cfg.mu)
    path = np.empty((cfg.n_steps, cfg.n_chains, N))
    for k in tqdm(range(cfg.n_steps), disable=not progress, desc="classical"):
        noise = rng_noise.standard_normal(theta.shape)
        theta = theta + mu * half * oracle.noisy_grad(theta, rng_grad) + sqrt_mu * noise
        if not np.all(np.isfinite(theta)):
            raise NonFiniteIterate(f"classical Langevin diverged at step {k}")
        path[k] = theta
    return SampleCloud(path, int(cfg.burn_in * cfg.n_steps), cfg.beta, "classical")


def metropolis_hastings(log_density, x0, n_samples, step, seed, chains=1, burn_in=config.BURN_IN):
    """Random-walk Metropolis-Hastings on an unnormalized log density (n, N) -> (n,)."""
    rng = config.trial_rng(seed, 4)
    x = np.array(np.broadcast_to(np.atleast_1d(np.asarray(x0, float)), (chains, np.size(x0))))
    lp = log_density(x)
    path = np.empty((n_samples, chains, x.shape[1]))
    accepted = 0
    for k in range(n_samples):
        prop = x + step * rng.standard_normal(x.shape)
        lq = log_density(prop)
        accept = np.log(rng.random(chains)) < lq - lp
        x[accept] = prop[accept]
        lp[accept] = lq[accept]
        accepted += int(accept.sum())
        path[k] = x
    logger.debug("metropolis-hastings done", extra={"acceptance": accepted / (n_samples * chains)})
    return SampleCloud(path, int(burn_in * n_samples), 1.0, "mh")


# --------------------------------------------------------------------------
# reward reconstruction
# --------------------------------------------------------------------------

@dataclass
class RewardEstimate:
    """R-hat on a grid of bin centers; empty bins hold -inf and max R-hat is 0."""

    edges: list
    density: np.ndarray
    values: np.ndarray
    beta: float
    method: str

    @property
    def centers(self):
        return [0.5 * (e[1:] + e[:-1]) for e in self.edges]

    def mesh(self):
        grids = np.meshgrid(*self.centers, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def cell_volume(self):
        widths = np.meshgrid(*[np.diff(e) for e in self.edges], indexing="ij")
        return np.prod(np.stack(widths), axis=0)

    def at(self, points):
        """R-hat at the bins containing ``points`` (n, N); points outside the grid give nan."""
        points = np.atleast_2d(points)
        idx, inside = [], np.ones(points.shape[0], dtype=bool)
        for d, e in enumerate(self.edges):
            i = np.searchsorted(e, points[:, d], side="right") - 1
            i = np.where(points[:, d] == e[-1], len(e) - 2, i)
            inside &= (i >= 0) & (i < len(e) - 1)
            idx.append(np.clip(i, 0, len(e) - 2))
        return np.where(inside, self.values[tuple(idx)], np.nan)


def _samples(cloud):
    return cloud.kept if isinstance(cloud, SampleCloud) else np.atleast_2d(np.asarray(cloud, float))


def _edges(samples, grid):
    N = samples.shape[1]
    if grid is None or np.isscalar(grid):
        edges = []
        for d in range(N):
            x = samples[:, d]
            e = np.histogram_bin_edges(x, bins="fd" if grid is None else int(grid))
            if len(e) - 1 > MAX_BINS:
                e = np.histogram_bin_edges(x, bins=MAX_BINS)
            edges.append(e)
        return edges
    if len(grid) != N:
        raise DimensionMismatch("one edge array per coordinate is required")
    return [np.asarray(e, float) for e in grid]


def estimate_reward(cloud, grid=None, method="histogram", beta=None, min_samples=MIN_CLOUD):
    """
    Reward estimate log(p-hat) / beta on a grid, shifted so that its maximum is 0.

    Parameters
    ----------
    cloud : SampleCloud or array_like (n, N)
    grid : None, int or list of edge arrays
        None uses Freedman-Diaconis bins per coordinate.
    method : {"histogram", "kde"}
        "kde" uses scikit-learn's Gaussian KernelDensity (Scott bandwidth)
        evaluated at the bin centers and renormalized on the grid.

    Raises
    ------
    EmptyCloud
        When fewer than ``min_samples`` post-burn-in samples are available.
    """
    samples = _samples(cloud)
    if samples.shape[0] == 0 or samples.shape[0] < min_samples:
        raise EmptyCloud(f"{samples.shape[0]} samples available, at least {min_samples} needed")
    if beta is None:
        beta = cloud.beta if isinstance(cloud, SampleCloud) else 1.0
    edges = _edges(samples, grid)

    if method == "kde":
        try:
            from sklearn.neighbors import KernelDensity
        except ImportError:
            logger.warning("⚠️ scikit-learn unavailable, falling back to a histogram")
            method = "histogram"
    if method == "kde":
        rng = np.random.default_rng(0)
        sub = samples if samples.shape[0] <= 20_000 else samples[rng.choice(samples.shape[0], 20_000, replace=False)]
        kde = KernelDensity(kernel="gaussian", bandwidth="scott").fit(sub)
        est = RewardEstimate(edges, None, None, beta, method)
        shape = tuple(len(e) - 1 for e in edges)
        density = np.exp(kde.score_samples(est.mesh())).reshape(shape)
        density = density / np.sum(density * est.cell_volume())
    elif method == "histogram":
        density, _ = np.histogramdd(samples, bins=edges, density=True)
    else:
        raise InputError(f"unknown density method '{method}'")

    with np.errstate(divide="ignore"):
        values = np.log(density) / beta
    values = values - np.max(values[np.isfinite(values)])
    return RewardEstimate(edges, density, values, beta, method)


def find_modes(estimate, k=2, min_separation=None, smooth=1.0):
    """
    Locations of the ``k`` highest local maxima of the (smoothed) density.

    Returns
    -------
    numpy.ndarray (k', N)
        Sorted by height; fewer than k rows when fewer maxima exist.
    """
    d = ndimage.gaussian_filter(estimate.density, smooth) if smooth else estimate.density
    peaks = (d == ndimage.maximum_filter(d, size=3, mode="nearest")) & (d > 0)
    idx = np.argwhere(peaks)
    order = np.argsort(-d[tuple(idx.T)], kind="stable")
    centers = estimate.centers
    points = np.array([[centers[j][i[j]] for j in range(len(centers))] for i in idx[order]])
    if min_separation is None:
        min_separation = 10 * max(np.max(np.diff(e)) for e in estimate.edges)
    chosen = []
    for p in points:
        if all(np.linalg.norm(p - q) >= min_separation for q in chosen):
            chosen.append(p)
        if len(chosen) == k:
            break
    return np.array(chosen)


def variational_distance(a, b, bins=50):
    """Half the L1 distance between histogram marginals of two sample sets, per coordinate."""
    a, b = _samples(a), _samples(b)
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch("sample sets differ in dimension")
    out = np.empty(a.shape[1])
    for d in range(a.shape[1]):
        lo = min(a[:, d].min(), b[:, d].min())
        hi = max(a[:, d].max(), b[:, d].max())
        edges = np.linspace(lo, hi, bins + 1)
        p = np.histogram(a[:, d], edges)[0] / a.shape[0]
        q = np.histogram(b[:, d], edges)[0] / b.shape[0]
        out[d] = 0.5 * np.abs(p - q).sum()
    return out

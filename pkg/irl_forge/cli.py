"""
cli.py

``irl-forge`` command-line entry point.

Every subcommand reads its inputs, writes a JSON result (echoed on standard
output) plus any CSV artifacts into ``--out`` and a ``manifest.json`` next
to them. Exit codes: 0 success, 1 usage or input error, 2 numeric failure,
3 negative test verdict. Diagnostics go to standard error as JSON lines.
"""

import argparse
import logging
import sys
from dataclasses import fields, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__, bayes_agents, birl, config, detect, experiments, invfilter, io, langevin
from . import multiagent, rp, sim
from .errors import InputError, NotRationalizable, NumericError, VerdictError
from .log import configure_logging

logger = logging.getLogger(__name__)

STOCHASTIC = {"detect", "spsa", "agents", "langevin", "kl-exp", "cmdp-exp", "simulate"}
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_VERDICT = 0, 1, 2, 3


class UsageError(InputError):
    """Bad command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _floats(text):
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError as exc:
        raise UsageError(f"'{text}' is not a comma-separated list of numbers") from exc


def _scenario(args):
    return config.load_scenario(args.config) if args.config else {}


def _overrides(base, values):
    """Apply a (nested) dict of field values to a frozen config dataclass."""
    names = {f.name for f in fields(base)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise InputError(f"unknown {type(base).__name__} field(s): {unknown}")
    kw = {}
    for key, value in values.items():
        current = getattr(base, key)
        if is_dataclass(current) and isinstance(value, dict):
            kw[key] = _overrides(current, value)
        elif isinstance(value, list):
            kw[key] = _tuples(value)
        else:
            kw[key] = value
    return base.with_overrides(**kw)


def _tuples(value):
    return tuple(_tuples(v) for v in value) if isinstance(value, list) else value


class _Run:
    """Collects outputs of one subcommand and writes them with a manifest."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.manifest = io.RunManifest(args.command, seed=args.seed, config=args.config,
                                       inputs=_inputs(args), parameters=_parameters(args))

    def path(self, name):
        return self.out / name

    def add(self, key, path):
        self.manifest.outputs[key] = str(path)
        return path

    def result(self, payload, name=None):
        name = name or f"{self.args.command}.json"
        self.add("result", io.write_json(payload, self.path(name)))
        sys.stdout.write(io.dumps_json(payload))
        io.write_manifest(self.manifest, self.out)


_INPUT_KEYS = ("input", "trace", "trajectory", "probes", "cloud")


def _inputs(args):
    return {k: getattr(args, k) for k in _INPUT_KEYS if getattr(args, k, None) is not None}


def _parameters(args):
    skip = set(_INPUT_KEYS) | {"command", "seed", "config", "out", "func", "log_level", "progress", "jobs"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _garp_payload(report):
    return {"consistent": report.consistent, "violating_cycle": report.violating_cycle,
            "n_violations": report.n_violations}


def _seed(args):
    if args.seed is None:
        raise UsageError(config.SEED_REQUIRED)
    return args.seed


# --------------------------------------------------------------------------
# revealed preference
# --------------------------------------------------------------------------

def cmd_garp(args, run):
    report = rp.check_garp(io.read_budget_csv(args.input))
    run.result(_garp_payload(report))
    if not report.consistent:
        raise NotRationalizable("GARP violated", evidence=report)


def cmd_afriat(args, run):
    ds = io.read_budget_csv(args.input)
    cert = rp.afriat_certificate(ds)
    margin = rp.feasibility_margin(ds, cert, args.variant)
    run.add("certificate", io.write_certificate(cert, run.path("certificate.json"), margin=margin))
    run.result({"rationalizable": True, "margin": margin, "variant": args.variant})


def cmd_predict(args, run):
    ds = io.read_budget_csv(args.input)
    alpha = _floats(args.alpha)
    alpha = alpha / float(alpha @ _floats(args.beta)) if args.normalize else alpha
    member = rp.predict_member(ds, alpha, _floats(args.beta))
    run.result({"member": member})


def cmd_mask(args, run):
    ds = io.read_budget_csv(args.input)
    cert = rp.afriat_certificate(ds)
    U = rp.PiecewiseUtility(cert, ds)
    mask = rp.mask_responses(ds, U, args.eta, iters=args.iters, grad=U.gradient)
    run.add("masked", io.write_budget_csv(rp.BudgetDataset(ds.alpha, mask.beta, normalize=False),
                                          run.path("masked.csv")))
    run.result({"eta": args.eta, "margin": mask.margin, "target": mask.target,
                "original_margin": mask.original_margin, "sacrifice": mask.sacrifice,
                "iterations": mask.iterations})


def cmd_indices(args, run):
    idx = rp.rationality_indices(io.read_budget_csv(args.input), exact_limit=args.exact_limit)
    run.result({"hmi": idx.hmi, "afriat_index": idx.afriat_index, "varian_lower_bound": idx.varian_lower_bound,
                "varian_mean": idx.varian_mean, "mci": idx.mci, "varian_heuristic": idx.varian_heuristic})


def cmd_pareto(args, run):
    ds = io.read_aggregate_csv(args.input, agents=args.agents)
    res = multiagent.pareto_test(ds, node_budget=args.node_budget)
    payload = {"status": res.status, "nodes": res.nodes}
    if res.personalized is not None:
        payload["personalized"] = res.personalized
        payload["certificates"] = [{"phi": c.phi, "lambda": c.lam} for c in res.certificates]
    run.result(payload)


def cmd_nash(args, run):
    cert, _ = multiagent.nash_potential_test(io.read_multiagent_csv(args.input))
    run.result({"nash_rational": True, "phi": cert.phi, "lambda": cert.lam})


# --------------------------------------------------------------------------
# detection
# --------------------------------------------------------------------------

def cmd_detect(args, run):
    seed = _seed(args)
    ds = io.read_noisy_csv(args.input)
    noise = detect.NoiseModel.parse(args.noise)
    cal = detect.calibrate_M(noise, ds.alpha, args.trials, seed, jobs=args.jobs, progress=args.progress)
    res = detect.detect(ds, cal, args.gamma)
    run.result({"verdict": res.verdict, "T_star": res.T_star, "p_value": res.p_value})
    if res.verdict == "H1":
        raise NotRationalizable("responses are not consistent with utility maximization", evidence=res)


def cmd_spsa(args, run):
    seed = _seed(args)
    probes = io.read_budget_csv(args.probes, normalize=False).alpha
    noise = detect.NoiseModel.parse(args.noise)
    res = detect.spsa_probe_opt(detect.cobb_douglas_violator(), noise, probes, gamma=args.gamma,
                                iters=args.iters, omega=args.omega, mu0=args.mu0, trials=args.trials,
                                L=args.L, seed=seed, jobs=args.jobs, progress=args.progress)
    N, m = res.probes.shape
    run.add("probes", io.write_budget_csv(rp.BudgetDataset(res.probes, np.ones((N, m)) / (m * res.probes),
                                                           normalize=False), run.path("probes.csv")))
    run.result({"type_two": res.trace, "probes": res.probes})


# --------------------------------------------------------------------------
# Bayesian revealed preference
# --------------------------------------------------------------------------

def cmd_brp(args, run):
    ds = io.read_behavior_json(args.input, "umri")
    cert = birl.brp_feasible(ds, mode=args.mode, margin=args.margin)
    run.result({"umri": True, "mode": cert.mode, "rewards": cert.rewards, "z": cert.z})


def cmd_inv_sht(args, run):
    costs = birl.inverse_sht(io.read_behavior_json(args.input, "sht"), margin=args.margin)
    run.result({"L1": costs.L1, "L2": costs.L2})


def cmd_inv_search(args, run):
    run.result({"costs": birl.inverse_search(io.read_behavior_json(args.input, "search"))})


def cmd_inv_quickest(args, run):
    run.result({"false_alarm_penalty": birl.inverse_quickest(io.read_behavior_json(args.input, "quickest"))})


def cmd_logit(args, run):
    theta = birl.logit_mle(io.read_choice_json(args.input), iters=args.iters, lr=args.lr)
    run.result({"theta": theta})


# --------------------------------------------------------------------------
# inverse filters
# --------------------------------------------------------------------------

_ACTIONS = {
    "threshold": lambda c: invfilter.threshold_action(c.get("threshold", 0.5), c.get("state", 0)),
    "noisy_threshold": lambda c: invfilter.noisy_threshold_action(c.get("threshold", 0.5), c.get("state", 0),
                                                                  c.get("flip", 0.1)),
    "uninformative": lambda c: invfilter.uninformative_action(c.get("n_actions", 2)),
}


def _adversary(scn):
    action = dict(scn.get("action", {"kind": "threshold"}))
    kind = action.pop("kind", "threshold")
    if kind not in _ACTIONS:
        raise InputError(f"unknown action likelihood '{kind}'")
    model = invfilter.AdversaryModel(scn.get("P", invfilter.THREE_STATE_P), scn.get("B", invfilter.THREE_STATE_B),
                                     _ACTIONS[kind](action))
    return model, np.asarray(scn.get("pi0", invfilter.THREE_STATE_PI0), float)


def _tracker(scn):
    model = invfilter.LinearAdversary(scn.get("A", [[1.0]]), scn.get("C", [[1.0]]), scn.get("Q", [[1.0]]),
                                      scn.get("R", [[1.0]]), scn.get("sigma_eps", 1.0))
    n = model.n
    return (model, np.asarray(scn.get("sigma0", np.eye(n)), float), np.asarray(scn.get("x0", np.zeros(n)), float),
            np.asarray(scn.get("cov0", np.eye(n)), float))


def cmd_inv_hmm(args, run):
    scn = _scenario(args)
    model, pi0 = _adversary(scn)
    states, actions = io.read_trajectory_csv(args.trajectory)
    means, state = invfilter.run_inverse_hmm(model, pi0, states, actions,
                                             w_prune=scn.get("w_prune", config.W_PRUNE),
                                             delta_merge=scn.get("delta_merge", config.DELTA_MERGE))
    run.add("beliefs", io.write_beliefs_json(means, run.path("beliefs.json"), atoms=[len(state)]))
    run.result({"steps": len(means), "final_mean": means[-1] if len(means) else [], "atoms": len(state)})


def cmd_inv_kf(args, run):
    model, sigma0, xhat0, cov0 = _tracker(_scenario(args))
    states, actions = io.read_trajectory_csv(args.trajectory)
    schedule = invfilter.forward_schedule(model, sigma0, len(states))
    means, covs = invfilter.run_inverse_kf(model, schedule, xhat0, cov0, states, actions)
    run.add("beliefs", io.write_beliefs_json(means, run.path("beliefs.json"), covs=covs))
    run.result({"steps": len(means), "final_mean": means[-1], "final_cov": covs[-1]})


# --------------------------------------------------------------------------
# Langevin
# --------------------------------------------------------------------------

def _oracle(spec):
    spec = dict(spec)
    kind = spec.pop("kind", "quadratic")
    makers = {"quadratic": langevin.quadratic_oracle, "bumps": langevin.bump_oracle, "kl": langevin.kl_oracle}
    if kind not in makers:
        raise InputError(f"unknown oracle '{kind}' (choose from {', '.join(makers)})")
    return makers[kind](**spec)


def _init(spec, dim):
    if not spec:
        return langevin.gaussian_init(np.zeros(dim))
    spec = dict(spec)
    kind = spec.pop("kind", "gaussian")
    if kind == "gaussian":
        return langevin.gaussian_init(spec.get("mean", np.zeros(dim)), spec.get("cov"))
    if kind == "uniform":
        return langevin.uniform_init(spec["low"], spec["high"])
    raise InputError(f"unknown initialization density '{kind}'")


def cmd_agents(args, run):
    seed = _seed(args)
    scn = _scenario(args)
    oracle = _oracle(scn.get("oracle", {"kind": args.oracle, "dim": args.dim}))
    swarm = _overrides(config.SwarmConfig(), scn.get("swarm", {}))
    if args.agents:
        swarm = swarm.with_overrides(n_agents=args.agents)
    trace = langevin.run_forward_agents(oracle, swarm, _init(scn.get("init"), oracle.dim), seed,
                                        jobs=args.jobs, progress=args.progress)
    run.add("trace", io.write_trace_csv(trace, run.path("trace.csv")))
    run.result({"points": len(trace), "dim": trace.dim, "oracle": oracle.name})


def _sampler_config(args, scn):
    cfg = _overrides(config.LangevinConfig(), scn.get("sampler", {}))
    flags = {"variant": args.variant, "mu": args.mu, "pool": args.L, "sigma": args.sigma, "beta": args.beta,
             "bandwidth": args.bandwidth, "n_steps": args.steps, "n_chains": args.chains}
    return cfg.with_overrides(**{k: v for k, v in flags.items() if v is not None})


def _write_estimate(run, samples, beta, method, bins):
    estimate = langevin.estimate_reward(samples, grid=bins, method=method, beta=beta, min_samples=1)
    run.add("density", io.write_density_csv(estimate, run.path("density.csv")))
    return estimate


def cmd_langevin(args, run):
    scn = _scenario(args)
    if args.action == "estimate":
        if not args.cloud:
            raise UsageError("langevin estimate needs --cloud")
        samples = io.read_cloud_csv(args.cloud)
        estimate = _write_estimate(run, samples, args.beta or 1.0, args.method, args.bins)
        run.result({"samples": len(samples), "modes": langevin.find_modes(estimate, args.modes)})
        return
    seed = _seed(args)
    cfg = _sampler_config(args, scn)
    oracle = _oracle(scn["oracle"]) if "oracle" in scn else None
    trace = io.read_trace_csv(args.trace) if args.trace else None
    if trace is None and cfg.variant != "active":
        raise UsageError(f"variant '{cfg.variant}' needs --trace")
    dim = trace.dim if trace is not None else oracle.dim
    cloud = langevin.run_sampler(trace, cfg, _init(scn.get("init"), dim), seed, oracle=oracle,
                                 progress=args.progress)
    run.add("cloud", io.write_cloud_csv(cloud, run.path("cloud.csv")))
    estimate = _write_estimate(run, cloud, cfg.beta, args.method, args.bins)
    run.result({"variant": cfg.variant, "samples": len(cloud), "mean": cloud.kept.mean(axis=0),
                "modes": langevin.find_modes(estimate, args.modes)})


def cmd_kl_exp(args, run):
    seed = _seed(args)
    cfg = _overrides(config.KLConfig(), _scenario(args))
    if args.mode:
        cfg = cfg.with_overrides(mode=args.mode)
    report = experiments.kl_experiment(cfg, seed, jobs=args.jobs, progress=args.progress)
    run.add("cloud", io.write_cloud_csv(report["passive"], run.path("cloud.csv")))
    run.add("density", io.write_density_csv(report["estimate"], run.path("density.csv")))
    keys = ("d",) if report["mode"] == "kl" else ("d_classical", "d_passive")
    run.result({"mode": report["mode"], "modes": report["modes"], "trace_points": report["trace_points"],
                **{k: report[k] for k in keys}})


def cmd_cmdp_exp(args, run):
    seed = _seed(args)
    cfg = _overrides(config.CMDPConfig(), _scenario(args))
    if args.gradient:
        cfg = cfg.with_overrides(gradient=args.gradient)
    report = experiments.cmdp_experiment(cfg, seed, jobs=args.jobs, progress=args.progress)
    run.add("cloud", io.write_cloud_csv(report["samples"].reshape(len(report["samples"]), -1),
                                        run.path("cloud.csv")))
    run.add("density", io.write_density_csv(report["estimate"], run.path("density.csv")))
    run.result({"overlap": report["overlap"], "samples": len(report["samples"]),
                "B_mean": float(np.mean(report["B_samples"]))})


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------

def _sim_budget(args, scn, run):
    if args.scenario == "waveform":
        spec = sim.SpectralScenario.kinematic(**scn.get("kinematics", {"axes": args.m}))
        ds, _ = sim.gen_waveform_dataset(spec, N=args.N, seed=args.seed)
    else:
        spec = sim.BeamScenario.default(m=args.m, **scn.get("beam", {}))
        ds = sim.gen_beam_dataset(spec, N=args.N, seed=args.seed, maneuvering=scn.get("maneuvering", True))
    run.add("dataset", io.write_budget_csv(ds, run.path("dataset.csv")))
    return {"N": ds.N, "m": ds.m}


def _sim_multi(args, scn, run):
    if args.scenario == "pareto":
        ds, shares = sim.gen_pareto_dataset(args.P, args.N, args.m, args.seed, weights=scn.get("weights"))
        run.add("dataset", io.write_aggregate_csv(ds, run.path("dataset.csv")))
        run.add("truth", io.write_multiagent_csv(multiagent.MultiAgentDataset(ds.alpha, shares),
                                                 run.path("truth.csv")))
    else:
        ds = sim.gen_potential_dataset(args.P, args.N, args.m, args.seed)
        run.add("dataset", io.write_multiagent_csv(ds, run.path("dataset.csv")))
    return {"P": ds.P, "N": ds.N}


def _sim_behavior(args, scn, run):
    rng = config.trial_rng(args.seed, 6)
    if args.scenario == "umri":
        spec = birl.random_umri_spec(rng, scn.get("X", 2), scn.get("A", 2), scn.get("M", 3))
        ds, chosen = birl.simulate_umri(spec)
        extra = {"chosen": chosen}
    elif args.scenario == "sht":
        costs = scn.get("costs", [[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]])
        ds = bayes_agents.sht_dataset([bayes_agents.sht_agent(L1, L2, scn.get("accuracy", 0.7))
                                       for L1, L2 in costs])
        extra = {"expected_tau": ds.continue_costs}
    elif args.scenario == "search":
        prior = scn.get("prior", [0.5, 0.3, 0.2])
        overlook = scn.get("overlook", [0.3, 0.2, 0.1])
        costs = scn.get("costs", [[1.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
        ds = bayes_agents.search_dataset([bayes_agents.search_agent(c, overlook, prior) for c in costs])
        extra = {}
    else:
        res = bayes_agents.quickest_agents(scn.get("penalties", [1.0, 5.0, 20.0]), N=scn.get("N", 20),
                                           seed=args.seed)
        ds = res.dataset
        extra = {"thresholds": res.thresholds}
    run.add("dataset", io.write_behavior_json(ds, run.path("dataset.json")))
    return {"M": ds.M, **extra}


def _sim_filter(args, scn, run):
    rng = config.trial_rng(args.seed, 6)
    if args.scenario == "adversary":
        model, pi0 = _adversary(scn)
        out = invfilter.simulate_adversary(model, pi0, args.steps, rng)
        run.add("trajectory", io.write_trajectory_csv(out["states"], out["actions"], run.path("trajectory.csv")))
        run.add("beliefs", io.write_beliefs_json(out["beliefs"], run.path("beliefs.json")))
    else:
        model, sigma0, x0, _ = _tracker(scn)
        out = invfilter.simulate_tracker(model, x0, sigma0, args.steps, rng)
        run.add("trajectory", io.write_trajectory_csv(out["states"], out["actions"], run.path("trajectory.csv")))
        run.add("beliefs", io.write_beliefs_json(out["estimates"], run.path("beliefs.json")))
    return {"steps": args.steps}


_SIMULATORS = {"waveform": _sim_budget, "beam": _sim_budget, "pareto": _sim_multi, "potential": _sim_multi,
               "umri": _sim_behavior, "sht": _sim_behavior, "search": _sim_behavior, "quickest": _sim_behavior,
               "adversary": _sim_filter, "tracker": _sim_filter}


def cmd_simulate(args, run):
    _seed(args)
    summary = _SIMULATORS[args.scenario](args, _scenario(args), run)
    run.result({"scenario": args.scenario, **summary})


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed (required for stochastic runs).")
    common.add_argument("--jobs", type=int, default=1, help="Worker threads for Monte-Carlo loops.")
    common.add_argument("--config", default=None, help="JSON or TOML scenario file.")
    common.add_argument("--out", default=".", help="Output directory.")
    common.add_argument("--progress", action="store_true", help="Show progress bars.")
    common.add_argument("--log-level", default=None, choices=["error", "warning", "info", "debug"])

    parser = _Parser(prog="irl-forge", description="Revealed preference and inverse learning toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.set_defaults(func=func)
        return p

    for name, func, text in (("garp", cmd_garp, "GARP consistency check"),
                             ("indices", cmd_indices, "Goodness-of-fit indices")):
        p = add(name, func, text)
        p.add_argument("--input", required=True)
        if name == "indices":
            p.add_argument("--exact-limit", type=int, default=config.EXACT_LIMIT)

    p = add("afriat", cmd_afriat, "Afriat certificate and margin")
    p.add_argument("--input", required=True)
    p.add_argument("--variant", choices=["min", "all"], default="min")

    p = add("predict", cmd_predict, "Set-valued response prediction")
    p.add_argument("--input", required=True)
    p.add_argument("--alpha", required=True, help="Comma-separated probe.")
    p.add_argument("--beta", required=True, help="Comma-separated candidate response.")
    p.add_argument("--normalize", action="store_true", help="Scale the probe so that alpha'beta = 1.")

    p = add("mask", cmd_mask, "Utility masking")
    p.add_argument("--input", required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--iters", type=int, default=200)

    p = add("pareto", cmd_pareto, "Pareto coordination test")
    p.add_argument("--input", required=True)
    p.add_argument("--agents", type=int, default=None)
    p.add_argument("--node-budget", type=int, default=config.MAX_NODES)

    p = add("nash", cmd_nash, "Concave potential game test")
    p.add_argument("--input", required=True)

    p = add("detect", cmd_detect, "Statistical rationality detector")
    p.add_argument("--input", required=True)
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--trials", type=int, default=2000, help="Calibration draws L.")
    p.add_argument("--noise", default="gauss:sigma=0.1")

    p = add("spsa", cmd_spsa, "Probe design by SPSA")
    p.add_argument("--probes", required=True, help="Budget CSV whose alpha columns start the search.")
    p.add_argument("--noise", default="gauss:sigma=0.1")
    p.add_argument("--gamma", type=float, default=0.05)
    p.add_argument("--iters", type=int, default=20)
    p.add_argument("--omega", type=float, default=0.05)
    p.add_argument("--mu0", type=float, default=0.1)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--L", type=int, default=200)

    p = add("brp", cmd_brp, "Bayesian revealed preference (NIAS/NIAC)")
    p.add_argument("--input", required=True)
    p.add_argument("--mode", choices=list(birl.MODES), default="max")
    p.add_argument("--margin", type=float, default=config.BRP_MARGIN)

    p = add("inv-sht", cmd_inv_sht, "Inverse sequential hypothesis testing")
    p.add_argument("--input", required=True)
    p.add_argument("--margin", type=float, default=0.0)

    for name, func, text in (("inv-search", cmd_inv_search, "Inverse optimal search"),
                             ("inv-quickest", cmd_inv_quickest, "Inverse quickest detection")):
        add(name, func, text).add_argument("--input", required=True)

    p = add("logit", cmd_logit, "Multinomial logit maximum likelihood")
    p.add_argument("--input", required=True)
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--lr", type=float, default=0.5)

    for name, func, text in (("inv-hmm", cmd_inv_hmm, "Inverse HMM filter"),
                             ("inv-kf", cmd_inv_kf, "Inverse Kalman filter")):
        add(name, func, text).add_argument("--trajectory", required=True)

    p = add("agents", cmd_agents, "Run stochastic-gradient agents and dump their trace")
    p.add_argument("--oracle", choices=["quadratic", "bumps", "kl"], default="quadratic")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--agents", type=int, default=None)

    p = add("langevin", cmd_langevin, "Passive Langevin sampling and reward estimation")
    p.add_argument("action", choices=["run", "estimate"])
    p.add_argument("--trace", default=None)
    p.add_argument("--cloud", default=None)
    p.add_argument("--variant", choices=list(config.VARIANTS), default=None)
    p.add_argument("--mu", type=float, default=None)
    p.add_argument("--L", type=int, default=None, help="Multikernel pool size.")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--chains", type=int, default=None)
    p.add_argument("--method", choices=["histogram", "kde"], default="histogram")
    p.add_argument("--bins", type=int, default=None)
    p.add_argument("--modes", type=int, default=2)

    p = add("kl-exp", cmd_kl_exp, "Relative-entropy reconstruction experiment")
    p.add_argument("--mode", choices=["kl", "bayesian_learning"], default=None)

    p = add("cmdp-exp", cmd_cmdp_exp, "Constrained MDP reconstruction experiment")
    p.add_argument("--gradient", choices=["sample_path", "stationary"], default=None)

    p = add("simulate", cmd_simulate, "Generate datasets from known agents")
    p.add_argument("scenario", choices=sorted(_SIMULATORS))
    p.add_argument("--N", type=int, default=20)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--P", type=int, default=2)
    p.add_argument("--steps", type=int, default=50)
    return parser


def dispatch(argv=None):
    """
    Parse ``argv`` and run one subcommand.

    Returns
    -------
    int
        0 success, 1 usage/input/IO error, 2 numeric failure, 3 negative verdict.
    """
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        configure_logging()
        logger.error(str(exc))
        print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)

    configure_logging(args.log_level)
    try:
        if args.command in STOCHASTIC and getattr(args, "action", None) != "estimate":
            _seed(args)
        Path(args.out).mkdir(parents=True, exist_ok=True)
        args.func(args, _Run(args))
    except VerdictError as exc:
        logger.error(f"❌ {exc}", extra={"command": args.command, "evidence": getattr(exc, "evidence", None)})
        return EXIT_VERDICT
    except NumericError as exc:
        logger.error(f"❌ {exc}", extra={"command": args.command, "error": type(exc).__name__})
        return EXIT_NUMERIC
    except (InputError, OSError) as exc:
        logger.error(f"❌ {exc}", extra={"command": args.command, "error": type(exc).__name__})
        if isinstance(exc, UsageError):
            print(str(exc), file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


def main(argv=None):
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()

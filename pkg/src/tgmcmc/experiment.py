"""Experiment configuration and the multi-kernel, multi-repeat runner."""
from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import data as datamod
from .crm import CrmPrior
from .diagnostics import TraceRecord, TraceWriter, summarize, write_summary_csv
from .errors import ConfigError
from .ibhc import flat_init, ibhc_build
from .likelihood import DirichletMultinomial, GaussianWishart
from .samplers import (ChainState, FlatPartition, joint_log_prob, marginal_gibbs_iteration,
                       optimal_u, split_merge_iteration, subset_wrap, tgmcmc_iteration)
from .samplers.tgmcmc import iteration_log_r

log = logging.getLogger(__name__)

KERNEL_KINDS = ("tgmcmc", "gibbs", "split_merge")

_TOP_KEYS = {"dataset", "model", "prior", "kernels", "budget", "repeats", "base_seed",
             "output_dir", "init", "ibhc_restarts", "u_init", "resample_u", "workers"}
_DATASET_KEYS = {
    "gaussian_mixture": {"generator", "k", "n", "d", "separation", "seed"},
    "py_mixture": {"generator", "n", "d", "theta", "discount", "separation", "seed"},
    "csv": {"generator", "path"},
    "uci_bow": {"generator", "docword", "vocab", "max_docs"},
}
_MODEL_KEYS = {"gaussian_wishart": {"kind", "r", "nu"},
               "dirichlet_multinomial": {"kind", "gamma"}}
_PRIOR_KEYS = {"kind", "alpha", "sigma"}
_KERNEL_KEYS = {"kind", "label", "G", "D", "t_restricted", "subset_fraction"}
_BUDGET_KEYS = {"seconds", "iterations"}


@dataclass
class KernelSpec:
    kind: str
    label: str
    G: int = 20
    D: int = 2
    t_restricted: int = 5
    subset_fraction: float = 1.0


@dataclass
class ExperimentConfig:
    dataset: dict
    model: dict
    prior: dict
    kernels: list
    budget: dict
    repeats: int = 1
    base_seed: int = 0
    output_dir: str = "out"
    init: str = "ibhc"
    ibhc_restarts: int = 1
    u_init: object = 1.0
    resample_u: bool = True
    workers: int = 1
    kernel_specs: list = field(default_factory=list, repr=False)


def _check_keys(section, got, allowed):
    unknown = set(got) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(sorted(unknown))}")


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def parse_config(raw, base_dir="."):
    """Validate a config mapping (strict: unknown keys are errors)."""
    _require(isinstance(raw, dict), "config must be a JSON object")
    _check_keys("config", raw, _TOP_KEYS)
    for key in ("dataset", "model", "prior", "kernels", "budget"):
        _require(key in raw, f"missing required key '{key}'")
    ds = dict(raw["dataset"])
    gen = ds.get("generator")
    _require(gen in _DATASET_KEYS, f"dataset.generator must be one of {sorted(_DATASET_KEYS)}")
    _check_keys("dataset", ds, _DATASET_KEYS[gen])
    for key in ("path", "docword", "vocab"):
        if key in ds and ds[key] is not None:
            p = ds[key] if os.path.isabs(ds[key]) else os.path.join(base_dir, ds[key])
            _require(os.path.exists(p), f"dataset file not found: {ds[key]}")
            ds[key] = p
    model = dict(raw["model"])
    _require(model.get("kind") in _MODEL_KEYS, f"model.kind must be one of {sorted(_MODEL_KEYS)}")
    _check_keys("model", model, _MODEL_KEYS[model["kind"]])
    prior = dict(raw["prior"])
    _check_keys("prior", prior, _PRIOR_KEYS)
    _require(prior.get("kind") in ("dp", "nggp"), "prior.kind must be 'dp' or 'nggp'")
    budget = dict(raw["budget"])
    _check_keys("budget", budget, _BUDGET_KEYS)
    _require(budget, "budget needs 'seconds' and/or 'iterations'")
    for key, val in budget.items():
        _require(isinstance(val, (int, float)) and val > 0, f"budget.{key} must be > 0")
    kernels = raw["kernels"]
    _require(isinstance(kernels, list) and kernels, "kernels must be a non-empty list")
    specs = []
    for kr in kernels:
        _check_keys("kernel", kr, _KERNEL_KEYS)
        _require(kr.get("kind") in KERNEL_KINDS, f"kernel.kind must be one of {KERNEL_KINDS}")
        spec = KernelSpec(kind=kr["kind"], label=kr.get("label", kr["kind"]),
                          G=int(kr.get("G", 20)), D=int(kr.get("D", 2)),
                          t_restricted=int(kr.get("t_restricted", 5)),
                          subset_fraction=float(kr.get("subset_fraction", 1.0)))
        _require(spec.G >= 0 and spec.D >= 1 and spec.t_restricted >= 0,
                 f"invalid options for kernel {spec.label}")
        _require(0 < spec.subset_fraction <= 1, "subset_fraction must lie in (0, 1]")
        specs.append(spec)
    labels = [s.label for s in specs]
    _require(len(set(labels)) == len(labels), "kernel labels must be unique")
    cfg = ExperimentConfig(dataset=ds, model=model, prior=prior, kernels=kernels, budget=budget)
    for key in ("repeats", "base_seed", "output_dir", "init", "ibhc_restarts", "u_init",
                "resample_u", "workers"):
        if key in raw:
            setattr(cfg, key, raw[key])
    _require(isinstance(cfg.repeats, int) and cfg.repeats >= 1, "repeats must be >= 1")
    _require(cfg.init in ("ibhc", "flat"), "init must be 'ibhc' or 'flat'")
    _require(cfg.u_init == "auto" or (isinstance(cfg.u_init, (int, float)) and cfg.u_init > 0),
             "u_init must be a positive number or 'auto'")
    _require(isinstance(cfg.workers, int) and cfg.workers >= 1, "workers must be >= 1")
    cfg.kernel_specs = specs
    return cfg


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(raw, os.path.dirname(os.path.abspath(path)))


# ------------------------------------------------------------------ set-up
def load_dataset(ds):
    gen = ds["generator"]
    if gen == "gaussian_mixture":
        X, _ = datamod.gen_gaussian_mixture(ds.get("k", 13), ds.get("n", 1300), ds.get("d", 2),
                                            ds.get("separation", 1.0), ds.get("seed", 0))
        return X
    if gen == "py_mixture":
        X, _ = datamod.gen_py_mixture(ds.get("n", 10000), ds.get("d", 6), ds.get("theta", 3.0),
                                      ds.get("discount", 0.8), ds.get("separation", 1.0),
                                      ds.get("seed", 0))
        return X
    if gen == "csv":
        return datamod.read_dense_csv(ds["path"])
    mat, _ = datamod.read_uci_bow(ds["docword"], ds.get("vocab"))
    if ds.get("max_docs"):
        mat = mat[: int(ds["max_docs"])]
    return mat


def build_model(cfg_model, X):
    if cfg_model["kind"] == "gaussian_wishart":
        return GaussianWishart.from_data(np.asarray(X), r=cfg_model.get("r", 0.1),
                                         nu=cfg_model.get("nu"))
    return DirichletMultinomial(X.shape[1], gamma=cfg_model.get("gamma", 0.1))


def build_prior(cfg_prior):
    if cfg_prior["kind"] == "dp":
        return CrmPrior.dirichlet(cfg_prior.get("alpha", 1.0))
    return CrmPrior.generalized_gamma(cfg_prior.get("alpha", 1.0), cfg_prior.get("sigma", 0.5))


def initial_forest(data, model, prior, u, init, restarts, rng):
    order = rng.permutation(len(data))
    if init == "flat":
        return flat_init(data, model, prior, u, order=order)
    return ibhc_build(data, model, prior, u, order=order, restarts=restarts, rng=rng)


def make_step(spec):
    """Bind a kernel spec to a ``step(state) -> (log_r, accepted)`` callable."""
    if spec.kind == "tgmcmc":
        def step(state):
            outs = tgmcmc_iteration(state, spec.G, spec.D)
            real = [o for o in outs if o.kind != "noop"]
            return iteration_log_r(outs), (any(o.accepted for o in real) if real else None)
    elif spec.kind == "gibbs":
        def step(state):
            subset_wrap(marginal_gibbs_iteration, state, spec.subset_fraction)
            return None, None
    else:
        def step(state):
            out = subset_wrap(split_merge_iteration, state, spec.subset_fraction,
                              t_restricted=spec.t_restricted)
            return out.log_r, out.accepted
    return step


def run_chain(state, step, label, budget, writer=None, clock=time.perf_counter):
    """Iterate ``step`` until the budget is spent; returns the trace."""
    max_iter = budget.get("iterations", math.inf)
    max_sec = budget.get("seconds", math.inf)
    trace = []
    t0 = clock()
    it = 0
    while it < max_iter:
        log_r, acc = step(state)
        it += 1
        elapsed = clock() - t0
        rec = TraceRecord(it, elapsed, joint_log_prob(state), state.forest.num_clusters,
                          log_r, acc, label)
        trace.append(rec)
        if writer is not None:
            writer.write(rec)
        if elapsed >= max_sec:
            break
    return trace


def _run_task(args):
    cfg, X, rep, k_index = args
    spec = cfg.kernel_specs[k_index]
    seeds = np.random.SeedSequence(cfg.base_seed + rep).spawn(len(cfg.kernel_specs) + 1)
    init_rng = np.random.default_rng(seeds[0])
    chain_rng = np.random.default_rng(seeds[1 + k_index])
    model = build_model(cfg.model, X)
    prior = build_prior(cfg.prior)
    data = model.prepare(X)
    u = optimal_u(prior, len(data)) if cfg.u_init == "auto" else float(cfg.u_init)
    forest = initial_forest(data, model, prior, u, cfg.init, cfg.ibhc_restarts, init_rng)
    clusters = forest if spec.kind == "tgmcmc" else FlatPartition.from_forest(forest)
    state = ChainState(clusters, chain_rng, resample_u=cfg.resample_u)
    path = trace_path(cfg.output_dir, spec.label, rep)
    with TraceWriter(path, mode="w") as writer:
        trace = run_chain(state, make_step(spec), spec.label, cfg.budget, writer)
    return spec.label, rep, trace


def trace_path(output_dir, label, rep):
    return os.path.join(output_dir, f"trace_{label}_r{rep}.jsonl")


def _prepare_output(path):
    os.makedirs(path, exist_ok=True)
    probe = os.path.join(path, ".write_test")
    with open(probe, "w") as fh:
        fh.write("")
    os.remove(probe)


def run_experiment(cfg, X=None):
    """Run every (repeat, kernel) chain, write traces and ``summary.csv``.

    Returns ``(runs, rows)``: traces grouped by kernel label and the summary.
    """
    _prepare_output(cfg.output_dir)
    if X is None:
        X = load_dataset(cfg.dataset)
    tasks = [(cfg, X, rep, k) for rep in range(cfg.repeats) for k in range(len(cfg.kernel_specs))]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    runs = {}
    for label, rep, trace in sorted(results, key=lambda r: (r[0], r[1])):
        runs.setdefault(label, []).append(trace)
    rows = summarize(runs)
    write_summary_csv(rows, os.path.join(cfg.output_dir, "summary.csv"))
    return runs, rows

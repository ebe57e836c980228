"""Experiment configuration, orchestration, metrics and export.

A run config (JSON or TOML) fully determines every output byte together
with the master seed: per-run streams derive from SeedSequence([master,
run_seed]) and all files are written with deterministic formatting.
"""

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from . import privacy as privacy_mod
from .dpsgd import dpsgd_comm_cost, run_dpsgd
from .errors import ValidationError
from .optimizer import HyperParams, check_theory_preconditions, run_async, run_local_sgd, run_sync
from .problems import (
    load_csv,
    make_logistic,
    make_mlp,
    make_quadratic,
    make_shards,
    quadratic_shards,
    split_holdout,
    two_blobs,
)
from .rng import seed_streams
from .theory import derive_theory_params

ALGORITHMS = ("leasgd_sync", "leasgd_async", "dpsgd", "local_sgd")
CSV_COLUMNS = ("t", "mean_loss", "d_t", "vectors_cum", "scalars_cum", "epsilon")


@dataclass
class ProblemSpec:
    kind: str
    dimension: int = 10
    mu: float = 1.0
    lipschitz: float = 3.0
    reg_lambda: float = 0.0
    b_scale: float = 1.0
    data_seed: int = 0
    samples_per_worker: int = 50
    grad_noise: float = 0.3
    # classification datasets
    dataset: str = "blobs"
    samples: int = 1000
    features: int = 2
    separation: float = 4.0
    holdout_fraction: float = 0.2
    csv_path: Optional[str] = None


@dataclass
class RunConfig:
    algorithm: str
    problem: ProblemSpec
    m: int
    follower_count: int
    hp: HyperParams
    batch_size: Optional[int] = None  # None = full shard
    privacy: Optional[privacy_mod.PrivacyConfig] = None
    seeds: List[int] = field(default_factory=lambda: [0])
    mode: str = "explore"
    init_offset: float = 0.0
    init_jitter: float = 1.0
    rates: Optional[List[float]] = None
    total_events: Optional[int] = None
    out_dir: Optional[str] = None


def load_config(path):
    """Parse a JSON or TOML config file into a validated RunConfig."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if str(path).endswith(".toml"):
        data = tomllib.loads(raw.decode("utf-8"))
    else:
        data = json.loads(raw.decode("utf-8"))
    return config_from_dict(data)


def config_from_dict(data):
    try:
        prob = ProblemSpec(**data["problem"])
        hp_map = dict(data["hp"])
        hp = HyperParams(
            eta=hp_map["eta"],
            rho=hp_map["rho"],
            tau=hp_map.get("tau", 1),
            kappa=hp_map.get("kappa", 1),
            iterations=hp_map.get("iterations", hp_map.get("T", 1)),
        )
        priv = None
        if data.get("privacy"):
            pm = data["privacy"]
            priv = privacy_mod.PrivacyConfig(
                clip_C=pm["clip"],
                sigma2=pm["sigma2"],
                delta=pm.get("delta", 1e-5),
                sampling_ratio=1.0,  # recomputed against the shard size below
            )
        init = data.get("init", {})
        cfg = RunConfig(
            algorithm=data["algorithm"],
            problem=prob,
            m=data["m"],
            follower_count=data.get("follower_count", 0),
            hp=hp,
            batch_size=data.get("batch_size"),
            privacy=priv,
            seeds=list(data.get("seeds", [0])),
            mode=data.get("mode", "explore"),
            init_offset=init.get("offset", 0.0),
            init_jitter=init.get("jitter", 1.0),
            rates=data.get("rates"),
            total_events=data.get("total_events"),
            out_dir=data.get("out_dir"),
        )
    except KeyError as exc:
        raise ValidationError(f"config missing required key: {exc}") from exc
    return validate_config(cfg)


def build_problem(spec, m):
    """Materialize (problem, shards, holdout) deterministically from the spec."""
    if spec.kind == "quadratic":
        problem = make_quadratic(
            spec.dimension, spec.mu, spec.lipschitz, spec.data_seed, spec.b_scale
        )
        shards = quadratic_shards(
            problem, m, spec.samples_per_worker, spec.grad_noise, spec.data_seed + 1
        )
        return problem, shards, None
    if spec.kind in ("logistic", "mlp"):
        if spec.dataset == "csv":
            X, y = load_csv(spec.csv_path)
        elif spec.dataset == "blobs":
            X, y = two_blobs(spec.samples, spec.features, spec.separation, spec.data_seed)
        else:
            raise ValidationError(f"unknown dataset {spec.dataset!r}")
        (Xtr, ytr), holdout = split_holdout(X, y, spec.holdout_fraction)
        shards = make_shards(Xtr, ytr, m)
        if spec.kind == "logistic":
            problem = make_logistic(Xtr, ytr, spec.reg_lambda)
        else:
            problem = make_mlp(Xtr.shape[1])
        return problem, shards, holdout
    raise ValidationError(f"unknown problem kind {spec.kind!r}")


def validate_config(cfg):
    """Fail fast, naming the violated constraint; theory mode is strict."""
    if cfg.algorithm not in ALGORITHMS:
        raise ValidationError(f"unknown algorithm {cfg.algorithm!r}")
    if cfg.mode not in ("theory", "explore"):
        raise ValidationError(f"mode must be 'theory' or 'explore', got {cfg.mode!r}")
    if cfg.m < 1:
        raise ValidationError("m must be >= 1")
    if not cfg.seeds:
        raise ValidationError("seeds list must be non-empty")
    if cfg.algorithm == "dpsgd" and cfg.m < 3:
        raise ValidationError("dpsgd needs m >= 3 for the ring")
    if cfg.algorithm == "leasgd_sync":
        if not 0 < cfg.follower_count or not 2 * cfg.follower_count < cfg.m:
            raise ValidationError(
                f"leader pool must outnumber followers: need 0 < 2*{cfg.follower_count} < m={cfg.m}"
            )
    if cfg.algorithm == "leasgd_async":
        if cfg.m > 1 and cfg.follower_count > 0 and not 2 * cfg.follower_count < cfg.m:
            raise ValidationError("async pools need 2*follower_count < m")
        if cfg.rates is None or len(cfg.rates) != cfg.m:
            raise ValidationError("async runs need one wake-up rate per worker")
        if any(r <= 0 for r in cfg.rates):
            raise ValidationError("wake-up rates must be positive")
        if not cfg.total_events or cfg.total_events < 1:
            raise ValidationError("async runs need total_events >= 1")

    problem, shards, _ = build_problem(cfg.problem, cfg.m)
    shard_size = min(s.sample_count for s in shards)
    if cfg.batch_size is not None and not 1 <= cfg.batch_size <= shard_size:
        raise ValidationError(
            f"batch_size {cfg.batch_size} must be in [1, {shard_size}]"
        )
    if cfg.privacy is not None:
        q = 1.0 if cfg.batch_size is None else cfg.batch_size / shard_size
        cfg.privacy = privacy_mod.PrivacyConfig(
            clip_C=cfg.privacy.clip_C,
            sigma2=cfg.privacy.sigma2,
            delta=cfg.privacy.delta,
            sampling_ratio=q,
        )
    if cfg.algorithm in ("leasgd_sync", "leasgd_async"):
        max_fan_in = cfg.m - cfg.follower_count if cfg.algorithm == "leasgd_sync" else 1
        if cfg.mode == "theory":
            check_theory_preconditions(problem, cfg.hp, max_fan_in)
        elif problem.convex and problem.mu and problem.optimum is not None:
            try:
                check_theory_preconditions(problem, cfg.hp, max_fan_in)
            except ValidationError as exc:
                warnings.warn(f"outside the convergence guarantee's domain: {exc}")
    elif cfg.mode == "theory" and problem.optimum is None:
        raise ValidationError("theory mode requires a known optimum")
    return cfg


def run_one(cfg, run_seed, master_seed=0):
    """Execute one run; all randomness derives from (master_seed, run_seed)."""
    problem, shards, _ = build_problem(cfg.problem, cfg.m)
    streams = seed_streams([master_seed, run_seed], cfg.m)
    common = dict(
        problem=problem,
        shards=shards,
        hp=cfg.hp,
        batch_size=cfg.batch_size,
        streams=streams,
        privacy=cfg.privacy,
        mode=cfg.mode,
        seed=run_seed,
        init_offset=cfg.init_offset,
        init_jitter=cfg.init_jitter,
    )
    if cfg.algorithm == "leasgd_sync":
        return run_sync(follower_count=cfg.follower_count, **common)
    if cfg.algorithm == "leasgd_async":
        return run_async(
            follower_count=cfg.follower_count,
            rates=cfg.rates,
            total_events=cfg.total_events,
            **common,
        )
    if cfg.algorithm == "dpsgd":
        return run_dpsgd(**common)
    if cfg.algorithm == "local_sgd":
        return run_local_sgd(**common)
    raise ValidationError(f"unknown algorithm {cfg.algorithm!r}")


def evaluate_accuracy(problem, w, X, y):
    """Fraction of held-out samples the model labels correctly."""
    if problem.kind == "logistic":
        pred = (X @ w > 0).astype(np.int64)
        return float(np.mean(pred == y))
    if problem.kind == "mlp":
        n_in = X.shape[1]
        nh, nc = problem.n_hidden, problem.n_classes
        W1 = w[: n_in * nh].reshape(n_in, nh)
        b1 = w[n_in * nh: n_in * nh + nh]
        o = n_in * nh + nh
        W2 = w[o: o + nh * nc].reshape(nh, nc)
        b2 = w[o + nh * nc:]
        logits = np.tanh(X @ W1 + b1) @ W2 + b2
        return float(np.mean(np.argmax(logits, axis=1) == y))
    raise ValidationError("accuracy is defined for classification problems only")


def _stderr(values):
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(len(values)))


def run_experiment(cfg, master_seed=0):
    """One run per configured seed; returns (traces, summary)."""
    traces = [run_one(cfg, s, master_seed) for s in cfg.seeds]
    problem, _, holdout = build_problem(cfg.problem, cfg.m)

    finals = [tr.final_mean_loss for tr in traces]
    summary = {
        "algorithm": cfg.algorithm,
        "mode": cfg.mode,
        "m": cfg.m,
        "seeds": list(cfg.seeds),
        "master_seed": master_seed,
        "iterations": traces[0].rows,  # events for async runs
        "final_mean_loss": float(np.mean(finals)),
        "final_mean_loss_stderr": _stderr(finals),
        "total_vectors": int(traces[0].total_vectors),
        "total_scalars": int(traces[0].total_scalars),
        "mean_vectors_per_iteration": traces[0].total_vectors / traces[0].rows,
    }
    if traces[0].d_t is not None:
        summary["final_d"] = float(np.mean([tr.d_t[-1] for tr in traces]))
        sq0 = [np.sum((tr.initial_w - problem.optimum) ** 2, axis=1) for tr in traces]
        summary["c0_mean"] = float(np.mean([sq.max() for sq in sq0]))
        summary["d0_mean"] = float(np.mean([sq.mean() for sq in sq0]))
    if traces[0].final_epsilon is not None:
        summary["epsilon"] = float(traces[0].final_epsilon)
        summary["ledger"] = traces[0].ledger_dict
    if holdout is not None and problem.kind in ("logistic", "mlp"):
        Xte, yte = holdout
        accs = np.array(
            [
                [evaluate_accuracy(problem, tr.final_w[i], Xte, yte) for i in range(cfg.m)]
                for tr in traces
            ]
        )
        summary["accuracy_mean"] = float(accs.mean())
        summary["accuracy_max"] = float(accs.max(axis=1).mean())
    return traces, summary


def comm_accounting(trace, baseline_trace=None):
    """Communication metrics and the reduction against ring D-PSGD."""
    increments = np.diff(np.append(trace.vectors_cum, trace.total_vectors))
    comm_rounds = increments[increments > 0]
    per_round = int(comm_rounds[0]) if len(comm_rounds) else 0
    iters = trace.rows
    mean_per_iter = trace.total_vectors / iters
    if baseline_trace is not None:
        if baseline_trace.m != trace.m:
            raise ValidationError("traces compare different worker counts")
        base_rate = baseline_trace.total_vectors / baseline_trace.rows
    else:
        base_rate = float(dpsgd_comm_cost(trace.m))
    return {
        "vectors_per_comm_round": per_round,
        "mean_vectors_per_iteration": mean_per_iter,
        "reduction_vs_dpsgd": 1.0 - mean_per_iter / base_rate,
    }


# ---------------------------------------------------------------------------
# export


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def trace_to_csv(trace):
    lines = [",".join(CSV_COLUMNS)]
    for k in range(trace.rows):
        row = [
            _fmt(trace.t[k]),
            _fmt(trace.mean_loss[k]),
            _fmt(None if trace.d_t is None else trace.d_t[k]),
            _fmt(trace.vectors_cum[k]),
            _fmt(trace.scalars_cum[k]),
            _fmt(None if trace.epsilon is None else trace.epsilon[k]),
        ]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def parse_trace_csv(path):
    """Read an exported per-run CSV back into column arrays."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValidationError(f"unexpected CSV columns {header}")
        cols = {name: [] for name in CSV_COLUMNS}
        for line in fh:
            parts = line.rstrip("\n").split(",")
            for name, val in zip(CSV_COLUMNS, parts):
                cols[name].append(val)
    out = {
        "t": np.array([int(v) for v in cols["t"]], dtype=np.int64),
        "mean_loss": np.array([float(v) for v in cols["mean_loss"]]),
        "vectors_cum": np.array([int(v) for v in cols["vectors_cum"]], dtype=np.int64),
        "scalars_cum": np.array([int(v) for v in cols["scalars_cum"]], dtype=np.int64),
        "d_t": None
        if all(v == "" for v in cols["d_t"])
        else np.array([float(v) for v in cols["d_t"]]),
        "epsilon": None
        if all(v == "" for v in cols["epsilon"])
        else np.array([float(v) for v in cols["epsilon"]]),
    }
    return out


def export(traces, summary, out_dir):
    """Write per-run CSVs, summary.json and the loss-vs-vectors plot data."""
    if not traces:
        raise ValidationError("refusing to export an empty ensemble")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for tr in traces:
        path = os.path.join(out_dir, f"run_{tr.seed}.csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(trace_to_csv(tr))
        paths.append(path)

    spath = os.path.join(out_dir, "summary.json")
    with open(spath, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    paths.append(spath)

    mean_curve = np.mean(np.stack([tr.mean_loss for tr in traces]), axis=0)
    ppath = os.path.join(out_dir, "loss_vs_vectors.csv")
    with open(ppath, "w", encoding="utf-8") as fh:
        fh.write("vectors_cum,mean_loss\n")
        for v, val in zip(traces[0].vectors_cum, mean_curve):
            fh.write(f"{int(v)},{_fmt(val)}\n")
    paths.append(ppath)
    return paths


def ensemble_theory_params(problem, hp, p, sigma1_sq, traces):
    """Bound constants with c0/d0 seed-averaged over the ensemble's inits."""
    tps = [
        derive_theory_params(problem, hp, p, sigma1_sq, list(tr.initial_w))
        for tr in traces
    ]
    tp = tps[0]
    tp.c0 = float(np.mean([x.c0 for x in tps]))
    tp.d0 = float(np.mean([x.d0 for x in tps]))
    return tp

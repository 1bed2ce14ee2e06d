"""Command-line experiment harness.

Subcommands::

    isograd solve --config cfg [--seed N] [--engine E] [--out report.txt]
    isograd bench --config cfg --out results.csv [--trials N] [--seed N]
    isograd feas  --config cfg --out feas.csv
    isograd mlmc  --config cfg [--out summary.json]

``bench`` executes trials x sweep-points seeded runs and appends rows to a
versioned CSV; ``mlmc`` emits a JSON summary of the debiasing demo.  Report
paths also render a PNG figure next to the delimited output unless --no-fig
is given.  Exit codes: 0 on success, 2 on configuration errors, 3 on I/O
failures.  The worker pool size comes from the ISOGRAD_THREADS environment
variable (default 1).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import mlmc as mlmc_mod
from .config import ConfigError, as_list, get, load_config, require
from .errors import ConfigurationError, InputError
from .geometry import WalkConfig, solve_feasibility
from .instances import make_instance
from .oracles import NoiseSpec
from .solver import ScoProblem, SolverConfig, sgd_baseline, solve_sco

SCHEMA_VERSION = "isograd-results v1"

RESULT_COLUMNS = ["trial", "seed", "d", "eps", "sigma", "method", "engine",
                  "queries_stage1", "queries_stage2", "total_queries",
                  "f_gap", "success", "wall_ms", "reason"]

FEAS_COLUMNS = ["trial", "seed", "d", "engine", "rprime", "r", "oracle_calls",
                "reason", "wall_ms"]


def trial_seed(master_seed, sweep_index, trial_index):
    """Deterministic per-trial seed from (master, sweep point, trial)."""
    seq = np.random.SeedSequence((int(master_seed), int(sweep_index),
                                  int(trial_index)))
    return int(seq.generate_state(1)[0])


def _build_instance(cfg, master_seed):
    kind = require(cfg, "instance.kind")
    d = require(cfg, "instance.d", int)
    radius = get(cfg, "instance.R", 1.0, float)
    lipschitz = get(cfg, "instance.L", 1.0, float)
    seed = get(cfg, "instance.seed", master_seed, int)
    kwargs = {}
    for name in ("sigma_e", "eps_tilde", "eps", "smoothing", "rho",
                 "hinge_slope"):
        value = get(cfg, f"instance.{name}", None, float)
        if value is not None:
            kwargs[name] = value
    try:
        return make_instance(kind, d, radius, lipschitz, seed=seed, **kwargs)
    except InputError as exc:
        raise ConfigError(f"field 'instance.*': {exc}") from exc


def _build_oracle(cfg, instance, seed):
    klass = get(cfg, "oracle.class", "isotropic")
    if klass == "intrinsic":
        if not hasattr(instance, "make_oracle") or not hasattr(instance, "v"):
            raise ConfigError("field 'oracle.class': intrinsic noise requires "
                              "the hard instance kind")
        return instance.make_oracle(seed=seed)
    sigma = get(cfg, "oracle.sigma", 0.0, float)
    delta = get(cfg, "oracle.delta", None, float)
    if klass == "none":
        klass, sigma, delta = "isotropic", 0.0, None
    try:
        spec = NoiseSpec(klass, sigma, delta=delta, seed=seed)
        return spec.make_oracle(instance.d, instance.subgrad)
    except InputError as exc:
        raise ConfigError(f"field 'oracle.*': {exc}") from exc


def _build_solver_config(cfg, seed, engine_override=None):
    walk = WalkConfig(
        steps=get(cfg, "walk.steps", None, int),
        samples=get(cfg, "walk.samples", 64, int),
        chains=get(cfg, "walk.chains", 8, int))
    return SolverConfig(
        engine=engine_override or get(cfg, "solver.engine", "ellipsoid"),
        xi_stage1=get(cfg, "solver.xi1", 0.1, float),
        xi_stage2=get(cfg, "solver.xi2", 0.1, float),
        batch_constant=get(cfg, "solver.c_b", 2.0, float),
        conversion_constant=get(cfg, "solver.c_k", 48.0, float),
        conversion_delta=get(cfg, "solver.conversion_delta", None, float),
        walk=walk,
        max_iters=get(cfg, "solver.max_iters", None, int),
        seed=seed)


def run_single_trial(cfg, master_seed, sweep_index, trial_index,
                     engine_override=None, extras=None):
    """Execute one seeded trial and return a ResultRow dict.

    When `extras` is a dict it receives the run transcript and instance for
    report rendering.
    """
    seed = trial_seed(master_seed, sweep_index, trial_index)
    method = get(cfg, "solver.method", "cutting-plane")
    eps = require(cfg, "solver.eps", float)
    instance = _build_instance(cfg, master_seed)
    oracle = _build_oracle(cfg, instance, seed)
    row = {
        "trial": trial_index, "seed": seed, "d": instance.d, "eps": eps,
        "sigma": getattr(oracle, "sigma", 0.0), "method": method,
        "engine": "", "queries_stage1": 0, "queries_stage2": 0,
        "total_queries": 0, "f_gap": float("nan"), "success": 0,
        "wall_ms": 0.0, "reason": "",
    }
    started = time.perf_counter()
    try:
        if method == "sgd":
            steps = get(cfg, "sgd.steps", None, int)
            if steps is None:
                sigma = getattr(oracle, "sigma", 0.0)
                steps = int(math.ceil(
                    instance.radius ** 2 * (instance.lipschitz ** 2 + sigma ** 2)
                    / eps ** 2))
            step_size = get(cfg, "sgd.step_size", None, float)
            if step_size is None:
                g_bound = math.hypot(instance.lipschitz, getattr(oracle, "sigma", 0.0))
                step_size = instance.radius / (g_bound * math.sqrt(steps))
            out = sgd_baseline(oracle, instance.radius, steps, step_size)
            gap = instance.gap(out)
            row.update(queries_stage1=steps, total_queries=steps,
                       f_gap=gap, success=int(gap <= eps),
                       reason="" if gap <= eps else "gap-exceeds-eps")
        elif method == "cutting-plane":
            solver_cfg = _build_solver_config(cfg, seed, engine_override)
            row["engine"] = solver_cfg.engine
            problem = ScoProblem(instance.d, instance.lipschitz,
                                 instance.radius, eps, oracle,
                                 objective=instance.f,
                                 f_star=instance.f_star,
                                 x_star=instance.x_star)
            transcript = solve_sco(problem, solver_cfg)
            if extras is not None:
                extras["transcript"] = transcript
                extras["instance"] = instance
            gap = transcript.gap
            success = int(gap is not None and gap <= eps)
            reason = ""
            if not success:
                reason = "flagged:" + transcript.feasibility.reason \
                    if transcript.flagged else "gap-exceeds-eps"
            row.update(queries_stage1=transcript.queries_stage1,
                       queries_stage2=transcript.queries_stage2,
                       total_queries=transcript.total_queries,
                       f_gap=gap if gap is not None else float("nan"),
                       success=success, reason=reason)
        else:
            raise ConfigError(f"field 'solver.method': unknown method {method!r}")
    except (InputError, ConfigurationError) as exc:
        row.update(success=0, reason=f"error:{exc}")
    row["wall_ms"] = 1000.0 * (time.perf_counter() - started)
    return row


def _worker(args):
    cfg, master_seed, sweep_key, sweep_value, sweep_index, trial_index, engine = args
    cfg = dict(cfg)
    if sweep_key is not None:
        cfg[sweep_key] = sweep_value
    row = run_single_trial(cfg, master_seed, sweep_index, trial_index, engine)
    row["sweep_value"] = sweep_value
    return sweep_index, trial_index, row


def _pool_size():
    raw = os.environ.get("ISOGRAD_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def run_bench(cfg, out_path, trials=None, master_seed=None, engine=None,
              render_fig=True):
    """Sweep x trial grid -> ordered CSV rows (and a figure alongside)."""
    master_seed = master_seed if master_seed is not None \
        else get(cfg, "seed", 0, int)
    trials = trials if trials is not None else get(cfg, "trials", 1, int)
    if trials < 1:
        raise ConfigError("field 'trials': must be >= 1")
    sweep_key = get(cfg, "sweep.parameter", None)
    sweep_values = as_list(get(cfg, "sweep.values", None))
    if sweep_key is None:
        sweep_key, sweep_values = None, [None]
    elif not sweep_values:
        raise ConfigError("field 'sweep.values': empty sweep")
    else:
        for v in sweep_values:
            if not isinstance(v, (int, float)) or not math.isfinite(float(v)) \
                    or float(v) <= 0:
                raise ConfigError(
                    f"field 'sweep.values': values must be finite and positive, got {v!r}")

    tasks = [(cfg, master_seed, sweep_key, sv, si, ti, engine)
             for si, sv in enumerate(sweep_values) for ti in range(trials)]
    rows = {}
    pool = _pool_size()
    if pool > 1:
        with ProcessPoolExecutor(max_workers=pool) as ex:
            for si, ti, row in ex.map(_worker, tasks):
                rows[(si, ti)] = row
    else:
        for task in tasks:
            si, ti, row = _worker(task)
            rows[(si, ti)] = row
    ordered = [rows[(si, ti)] for si in range(len(sweep_values))
               for ti in range(trials)]
    _write_result_csv(out_path, ordered)
    if render_fig and sweep_key is not None:
        from .report import render_bench_figure
        render_bench_figure(ordered, sweep_key, _fig_path(out_path))
    return ordered


def _fig_path(out_path):
    stem, _ = os.path.splitext(str(out_path))
    return stem + ".png"


def _fmt(value):
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return format(value, ".10g")
    return str(value)


def _write_result_csv(path, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {SCHEMA_VERSION}\n")
            writer = csv.writer(fh)
            writer.writerow(RESULT_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    except OSError as exc:
        raise IOError(f"cannot write {path}: {exc}") from exc


def run_solve(cfg, master_seed=None, engine=None, extras=None):
    master_seed = master_seed if master_seed is not None \
        else get(cfg, "seed", 0, int)
    return run_single_trial(cfg, master_seed, 0, 0, engine, extras=extras)


def format_solve_report(row):
    lines = [
        "solve report",
        f"  method          {row['method']}",
        f"  engine          {row['engine'] or '-'}",
        f"  dimension       {row['d']}",
        f"  eps             {_fmt(row['eps'])}",
        f"  oracle sigma    {_fmt(row['sigma'])}",
        f"  seed            {row['seed']}",
        f"  stage-1 queries {row['queries_stage1']}",
        f"  stage-2 queries {row['queries_stage2']}",
        f"  total queries   {row['total_queries']}",
        f"  objective gap   {_fmt(row['f_gap'])}",
        f"  success         {row['success']}",
        f"  wall ms         {_fmt(row['wall_ms'])}",
    ]
    if row["reason"]:
        lines.append(f"  reason          {row['reason']}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# feasibility micro-benchmarks
# ---------------------------------------------------------------------------

def run_feas(cfg, out_path, master_seed=None, trials=None, render_fig=True):
    master_seed = master_seed if master_seed is not None \
        else get(cfg, "seed", 0, int)
    trials = trials if trials is not None else get(cfg, "trials", 3, int)
    dims = [int(v) for v in as_list(get(cfg, "feas.dims", [2, 5, 10]))]
    engines = [str(e) for e in as_list(get(cfg, "feas.engine", "ellipsoid"))]
    r_prime = get(cfg, "feas.rprime", 1.0, float)
    r = get(cfg, "feas.r", 0.01, float)
    walk = WalkConfig(steps=get(cfg, "walk.steps", None, int),
                      samples=get(cfg, "walk.samples", 64, int),
                      chains=get(cfg, "walk.chains", 8, int))
    oracle_kind = get(cfg, "feas.oracle", "toward-point")
    rows = []
    for engine in engines:
        for d in dims:
            for ti in range(trials):
                seed = trial_seed(master_seed, d, ti)
                rng = np.random.default_rng(seed)
                target = rng.normal(size=d)
                target *= 0.5 * r_prime / np.linalg.norm(target)
                if oracle_kind == "toward-point":
                    oracle = lambda x, z=target: z - x
                elif oracle_kind == "constant":
                    oracle = lambda x, z=target: z
                else:
                    raise ConfigError(
                        f"field 'feas.oracle': unknown oracle {oracle_kind!r}")
                started = time.perf_counter()
                transcript = solve_feasibility(
                    oracle, r_prime, r, d, engine=engine, walk=walk,
                    rng=np.random.default_rng(seed + 1))
                rows.append({
                    "trial": ti, "seed": seed, "d": d, "engine": engine,
                    "rprime": r_prime, "r": r,
                    "oracle_calls": transcript.oracle_calls,
                    "reason": transcript.reason,
                    "wall_ms": 1000.0 * (time.perf_counter() - started)})
    try:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# {SCHEMA_VERSION}\n")
            writer = csv.writer(fh)
            writer.writerow(FEAS_COLUMNS)
            for row in rows:
                writer.writerow([_fmt(row[c]) for c in FEAS_COLUMNS])
    except OSError as exc:
        raise IOError(f"cannot write {out_path}: {exc}") from exc
    if render_fig:
        from .report import render_feas_figure
        render_feas_figure(rows, _fig_path(out_path))
    return rows


# ---------------------------------------------------------------------------
# debiasing demo
# ---------------------------------------------------------------------------

def run_mlmc_demo(cfg, master_seed=None):
    """Paired debiasing experiment; returns the JSON-ready summary dict."""
    master_seed = master_seed if master_seed is not None \
        else get(cfg, "seed", 0, int)
    d = get(cfg, "mlmc.d", 5, int)
    sigma = get(cfg, "mlmc.sigma", 1.0, float)
    eps = get(cfg, "mlmc.epsilon", 0.1, float)
    delta = get(cfg, "mlmc.delta", 0.05, float)
    runs = get(cfg, "mlmc.runs", 1000, int)
    bias = get(cfg, "mlmc.bias", 0.5, float)
    family_kind = get(cfg, "mlmc.family", "biased")
    if runs < 1:
        raise ConfigError("field 'mlmc.runs': must be >= 1")

    rng = np.random.default_rng(np.random.SeedSequence((master_seed, 0xF00D)))
    mu = rng.normal(size=d)
    mu *= 0.5 * sigma / np.linalg.norm(mu)

    if family_kind == "biased":
        direction = np.zeros(d)
        direction[0] = 1.0
        family = mlmc_mod.biased_family(mu, bias, direction, noise_std=0.5)
    elif family_kind == "calibrated":
        family = mlmc_mod.calibrated_family(mu)
    elif family_kind == "truncated":
        sampler = mlmc_mod.gaussian_sampler(mu, sigma, d=d,
                                            actual_std=0.4 * sigma)
        family = mlmc_mod.truncated_mean_family(sampler, delta)
    else:
        raise ConfigError(f"field 'mlmc.family': unknown family {family_kind!r}")

    threshold = eps * math.log(8.0 / delta) ** 2
    level0_cost = family.cost(0, eps / 6.0)
    debiased = np.zeros(d)
    baseline = np.zeros(d)
    exceed = 0
    total_cost = 0.0
    for _ in range(runs):
        u = rng.normal(size=d)
        u /= np.linalg.norm(u)
        result = mlmc_mod.mlmc_debias(family, eps, delta, rng)
        debiased += result.value
        total_cost += result.cost
        baseline += family.call(0, eps / 6.0, delta, rng)
        if abs(float(u @ (result.value - mu))) >= threshold:
            exceed += 1
    debiased /= runs
    baseline /= runs
    return {
        "mean_bias_per_coord": [float(b) for b in (baseline - mu)],
        "unbiased_mean_bias": float(np.max(np.abs(debiased - mu))),
        "tail_exceedance_rate": exceed / runs,
        "cost_ratio": total_cost / (runs * level0_cost),
    }


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", required=True, help="path to a key=value config")
    p.add_argument("--seed", type=int, default=None, help="master seed override")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="isograd")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="one run, human-readable report")
    _add_common(p_solve)
    p_solve.add_argument("--engine", default=None)
    p_solve.add_argument("--out", default=None)
    p_solve.add_argument("--no-fig", action="store_true")

    p_bench = sub.add_parser("bench", help="sweep x trials -> CSV")
    _add_common(p_bench)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--trials", type=int, default=None)
    p_bench.add_argument("--engine", default=None)
    p_bench.add_argument("--no-fig", action="store_true")

    p_feas = sub.add_parser("feas", help="feasibility engine micro-benchmarks")
    _add_common(p_feas)
    p_feas.add_argument("--out", required=True)
    p_feas.add_argument("--trials", type=int, default=None)
    p_feas.add_argument("--no-fig", action="store_true")

    p_mlmc = sub.add_parser("mlmc", help="multilevel debiasing demo")
    _add_common(p_mlmc)
    p_mlmc.add_argument("--out", default=None)
    p_mlmc.add_argument("--no-fig", action="store_true")

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "solve":
            extras = {}
            row = run_solve(cfg, args.seed, args.engine, extras=extras)
            report = format_solve_report(row)
            print(report)
            if args.out:
                try:
                    with open(args.out, "w", encoding="utf-8") as fh:
                        fh.write(report + "\n")
                except OSError as exc:
                    raise IOError(str(exc)) from exc
                if not args.no_fig and "transcript" in extras:
                    from .report import render_solve_figure
                    inst = extras["instance"]
                    render_solve_figure(extras["transcript"], inst.f,
                                        inst.f_star, _fig_path(args.out))
        elif args.command == "bench":
            run_bench(cfg, args.out, trials=args.trials, master_seed=args.seed,
                      engine=args.engine, render_fig=not args.no_fig)
            print(f"wrote {args.out}")
        elif args.command == "feas":
            run_feas(cfg, args.out, master_seed=args.seed, trials=args.trials,
                     render_fig=not args.no_fig)
            print(f"wrote {args.out}")
        elif args.command == "mlmc":
            summary = run_mlmc_demo(cfg, args.seed)
            text = json.dumps(summary, indent=2)
            print(text)
            if args.out:
                try:
                    with open(args.out, "w", encoding="utf-8") as fh:
                        fh.write(text + "\n")
                except OSError as exc:
                    raise IOError(str(exc)) from exc
                if not args.no_fig:
                    from .report import render_mlmc_figure
                    render_mlmc_figure(summary, _fig_path(args.out))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except IOError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

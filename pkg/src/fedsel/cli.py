"""Command-line entry point.

Commands: run, sweep-epsilon, compare, checkpoint-opt, fit-weibull.
Exit codes: 0 success, 1 runtime failure, 2 config/usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings

from .config import (
    ConfigError,
    ExperimentConfig,
    build_federation,
    build_round_config,
    build_selection_config,
    load_experiment_config,
)
from .errors import FedSelError, InsufficientDataError
from .fault import (
    CostModelParams,
    MonotonicCostWarning,
    WeibullParams,
    checkpoint_cost_amortized,
    checkpoint_cost_paper,
    fit_weibull,
    optimal_checkpoint_interval,
)
from .orchestrator import RunReport, run_simulation
from .privacy import PrivacyBudget, calibrate_sigma
from .stats import compare_runs

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_fedsel_")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _resolve_seed(cfg: ExperimentConfig, flag_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("FEDSEL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError("FEDSEL_SEED: cannot parse %r as int" % env)
    return cfg.seed


def _run_trials(cfg: ExperimentConfig, seed: int, policy: str | None = None) -> list[RunReport]:
    round_cfg = build_round_config(cfg)
    sel_cfg = build_selection_config(cfg, policy)
    reports = []
    for trial in range(cfg.trials):
        trial_seed = seed + trial
        fed = build_federation(cfg, trial_seed)
        reports.append(run_simulation(fed, round_cfg, sel_cfg, trial_seed))
    return reports


def cmd_run(args) -> int:
    cfg = load_experiment_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    out_dir = args.out or cfg.output_dir
    reports = _run_trials(cfg, seed)
    accs, losses, sims = [], [], []
    for trial, report in enumerate(reports):
        _atomic_write(
            os.path.join(out_dir, "trial_%03d.jsonl" % trial), report.serialize()
        )
        final = report.records[-1]
        accs.append(final.acc)
        losses.append(final.loss)
        sims.append(report.sim_time)
    summary = {
        "trials": cfg.trials,
        "seed": seed,
        "mean_final_acc": sum(accs) / len(accs),
        "mean_final_loss": sum(losses) / len(losses),
        "mean_sim_time": sum(sims) / len(sims),
    }
    _atomic_write(
        os.path.join(out_dir, "summary.json"),
        json.dumps(summary, sort_keys=True) + "\n",
    )
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_sweep_epsilon(args) -> int:
    cfg = load_experiment_config(args.config)
    seed = _resolve_seed(cfg, args.seed)
    out_dir = args.out or cfg.output_dir
    epsilons = [float(e) for e in args.epsilons.split(",") if e.strip()]
    if len(epsilons) < 2:
        raise ConfigError("epsilons: need at least 2 values")
    if len(set(epsilons)) != len(epsilons):
        raise ConfigError("epsilons: duplicate values not allowed")
    if any(e <= 0 for e in epsilons):
        raise ConfigError("epsilons: all values must be positive")

    rows = []
    for eps in epsilons:
        sweep_cfg = ExperimentConfig(**vars(cfg))
        sweep_cfg.dp_enabled = True
        sweep_cfg.epsilon = eps
        reports = _run_trials(sweep_cfg, seed)
        finals = [r.records[-1] for r in reports]
        sigma = calibrate_sigma(
            PrivacyBudget(eps, cfg.delta), cfg.clip_norm
        ).sigma
        rows.append(
            {
                "epsilon": eps,
                "sigma": sigma,
                "mean_final_acc": sum(f.acc for f in finals) / len(finals),
                "mean_final_loss": sum(f.loss for f in finals) / len(finals),
            }
        )
    content = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    _atomic_write(os.path.join(out_dir, "epsilon_sweep.jsonl"), content)
    print(content, end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = load_experiment_config(args.config)
    if cfg.trials < 3:
        raise ConfigError("run.trials: comparison needs at least 3 trials")
    seed = _resolve_seed(cfg, args.seed)
    out_dir = args.out or cfg.output_dir
    # Paired seeds: both arms see identical data and failure draws.
    reports_a = _run_trials(cfg, seed, policy="utility")
    reports_b = _run_trials(cfg, seed, policy=cfg.baseline)
    rows = []
    for metric in ("acc", "rounds-to-target"):
        result = compare_runs(
            reports_a, reports_b, metric=metric, target=cfg.target_accuracy
        )
        rows.append(
            {
                "comparison": "utility-vs-%s" % cfg.baseline,
                "metric": metric,
                "u_statistic": result.u_statistic,
                "p_value": result.p_value,
                "method": result.method,
            }
        )
    content = "\n".join(json.dumps(r, sort_keys=True) for r in rows) + "\n"
    _atomic_write(os.path.join(out_dir, "comparison.jsonl"), content)
    print(content, end="")
    return EXIT_OK


def cmd_checkpoint_opt(args) -> int:
    try:
        cost = CostModelParams(
            total_time=args.total_time,
            recovery_time=args.recovery_time,
            write_cost=args.write_cost,
        )
        weibull = WeibullParams(scale_lambda=args.weibull_lambda, shape_k=args.weibull_k)
    except FedSelError as exc:
        raise ConfigError(str(exc))
    if args.model not in ("paper", "amortized"):
        raise ConfigError("model: must be 'paper' or 'amortized'")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", MonotonicCostWarning)
        policy = optimal_checkpoint_interval(cost, weibull, model=args.model)
    fn = checkpoint_cost_paper if args.model == "paper" else checkpoint_cost_amortized
    print("t_c* = %.6g" % policy.interval)
    print("cost at optimum = %.6g" % fn(policy.interval, cost, weibull))
    for w in caught:
        if issubclass(w.category, MonotonicCostWarning):
            print("warning: %s" % w.message)
    return EXIT_OK


def cmd_fit_weibull(args) -> int:
    try:
        with open(args.failures_csv, encoding="utf-8") as fh:
            times = [float(line.strip()) for line in fh if line.strip()]
    except ValueError as exc:
        raise ConfigError("failures_csv: %s" % exc)
    try:
        params = fit_weibull(times)
    except InsufficientDataError as exc:
        raise ConfigError(str(exc))
    print("lambda = %.6g" % params.scale_lambda)
    print("k = %.6g" % params.shape_k)
    print("n = %d" % len(times))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fedsel",
        description="Deterministic federated-learning simulator with "
        "utility-based selection, DP, and fault tolerance.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--out", default=None, help="output directory")

    p_run = sub.add_parser("run", help="run seeded simulation trials")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep-epsilon", help="sweep the privacy budget")
    add_common(p_sweep)
    p_sweep.add_argument("--epsilons", required=True, help="comma-separated values")
    p_sweep.set_defaults(func=cmd_sweep_epsilon)

    p_cmp = sub.add_parser("compare", help="utility selection vs a baseline")
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_opt = sub.add_parser("checkpoint-opt", help="optimal checkpoint interval")
    p_opt.add_argument("--total-time", dest="total_time", type=float, required=True)
    p_opt.add_argument("--recovery-time", dest="recovery_time", type=float, required=True)
    p_opt.add_argument("--write-cost", dest="write_cost", type=float, required=True)
    p_opt.add_argument("--weibull-lambda", dest="weibull_lambda", type=float, required=True)
    p_opt.add_argument("--weibull-k", dest="weibull_k", type=float, required=True)
    p_opt.add_argument("--model", default="amortized")
    p_opt.set_defaults(func=cmd_checkpoint_opt)

    p_fit = sub.add_parser("fit-weibull", help="fit Weibull params to failure times")
    p_fit.add_argument("failures_csv")
    p_fit.set_defaults(func=cmd_fit_weibull)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, matching our convention.
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FedSelError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG if isinstance(exc, ConfigError) else EXIT_RUNTIME
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

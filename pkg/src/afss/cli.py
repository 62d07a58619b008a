"""``afss`` command line.

Sidecar loop for an external trainer::

    afss init   --ids ids.txt --out state.jsonl
    afss plan   --state state.jsonl --manifest epoch1.txt --state-out state.jsonl
    # ... train on the manifest, evaluate ...
    afss update --state state.jsonl --metrics metrics.csv --state-out state.jsonl

Self-contained studies::

    afss simulate --policy afss --n 10000 --epochs 200 --out report.csv
    afss sweep --param review-staleness --values 5,10,15,20 --out-dir sweep/

Config precedence is built-in defaults < snapshot echo (plan/update) <
``--config`` file < command-line flags. Data goes to files or stdout;
diagnostics go to stderr. Exit status is 0 on success, 1 on a data or I/O
error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

from afss.errors import StaleMetricsWarning, ValidationError
from afss.scheduler import SchedulerConfig, compose_plan
from afss.sidecar_io import (
    CONFIG_KEYS,
    coerce_config_value,
    read_config,
    read_metrics,
    read_snapshot,
    write_manifest,
    write_report,
    write_snapshot,
)
from afss.simulator import (
    AFSS,
    SWEEP_PARAMETERS,
    Curriculum,
    EvalAccounting,
    FullCoverage,
    LearnerDynamics,
    RandomSubset,
    StaticPrune,
    generate_dataset,
    run_experiment,
    sweep,
)
from afss.state_store import apply_metrics, apply_usage, init_state

POLICIES = ("afss", "full", "random", "prune", "curriculum")


def _config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="key = value config file")
    group = parser.add_argument_group("scheduler overrides")
    for key in CONFIG_KEYS:
        group.add_argument("--" + key.replace("_", "-"), dest=key, metavar="VALUE", default=None)


def _resolve_config(args, base: SchedulerConfig | None = None) -> SchedulerConfig:
    cfg = base or SchedulerConfig()
    if args.config is not None:
        cfg = read_config(args.config, base=cfg)
    overrides = {}
    for key in CONFIG_KEYS:
        raw = getattr(args, key)
        if raw is not None:
            overrides[key] = coerce_config_value(key, raw)
    return cfg.with_overrides(**overrides) if overrides else cfg


def _simulation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--policy", choices=POLICIES, default="afss")
    parser.add_argument("--n", type=int, default=10000, help="synthetic dataset size")
    parser.add_argument("--epochs", type=int, default=200)
    parser.add_argument("--learn-rate", type=float, default=LearnerDynamics.learn_rate)
    parser.add_argument("--forget-rate", type=float, default=LearnerDynamics.forget_rate)
    parser.add_argument("--noise-scale", type=float, default=LearnerDynamics.noise_scale)
    parser.add_argument("--random-fraction", type=float, default=RandomSubset.p, help="RandomSubset share")
    parser.add_argument("--prune-threshold", type=float, default=StaticPrune.threshold)
    parser.add_argument("--prune-epoch", type=int, default=StaticPrune.prune_epoch)
    parser.add_argument("--ramp-epochs", type=int, default=None, help="Curriculum ramp (default: whole run)")
    parser.add_argument("--eval-accounting", choices=[m.value for m in EvalAccounting], default="full")


def _policy(args):
    return {
        "afss": lambda: AFSS(),
        "full": lambda: FullCoverage(),
        "random": lambda: RandomSubset(args.random_fraction),
        "prune": lambda: StaticPrune(args.prune_threshold, args.prune_epoch),
        "curriculum": lambda: Curriculum(args.ramp_epochs),
    }[args.policy]()


def _dynamics(args) -> LearnerDynamics:
    return LearnerDynamics(args.learn_rate, args.forget_rate, args.noise_scale)


def cmd_init(args) -> int:
    cfg = _resolve_config(args)
    ids = [line.strip() for line in Path(args.ids).read_text(encoding="utf-8").splitlines()]
    ids = [i for i in ids if i]
    table = init_state(ids, cfg.warmup_epochs)
    write_snapshot(table, cfg, args.out)
    print(f"initialised {len(table)} images at epoch 0 -> {args.out}", file=sys.stderr)
    return 0


def cmd_plan(args) -> int:
    table, echoed = read_snapshot(args.state)
    cfg = _resolve_config(args, base=echoed)
    t = table.epoch + 1 if args.epoch is None else args.epoch
    if t != table.epoch + 1:
        raise ValidationError(f"snapshot is at epoch {table.epoch}; the next plan is epoch {table.epoch + 1}, not {t}")
    plan = compose_plan(table, cfg, t)
    write_manifest(plan, args.manifest)
    write_snapshot(apply_usage(table, plan, t), cfg, args.state_out)
    counts = " ".join(f"{tag}={len(ids)}" for tag, ids in plan.groups())
    print(f"epoch {t}: {len(plan)}/{len(table)} images ({counts})", file=sys.stderr)
    return 0


def cmd_update(args) -> int:
    table, echoed = read_snapshot(args.state)
    cfg = _resolve_config(args, base=echoed)
    t = table.epoch if args.epoch is None else args.epoch
    batch = read_metrics(args.metrics, t)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", StaleMetricsWarning)
        updated = apply_metrics(table, batch, t, cfg.refresh_interval)
    for w in caught:
        print(f"afss: warning: {w.message}", file=sys.stderr)
    write_snapshot(updated, cfg, args.state_out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _resolve_config(args)
    dataset = generate_dataset(args.n, seed=cfg.seed)
    report = run_experiment(_policy(args), dataset, args.epochs, cfg, _dynamics(args), cfg.seed,
                            EvalAccounting(args.eval_accounting))
    write_report(report, args.out)
    print(report.summary())
    return 0


def cmd_sweep(args) -> int:
    param = args.param.replace("-", "_")
    if param not in SWEEP_PARAMETERS:
        raise ValidationError(f"cannot sweep {args.param!r}; choose from {', '.join(SWEEP_PARAMETERS)}")
    raw_values = [v.strip() for v in args.values.split(",") if v.strip()]
    values = [coerce_config_value(param, v) for v in raw_values]
    cfg = _resolve_config(args)
    dataset = generate_dataset(args.n, seed=cfg.seed)
    reports = sweep(param, values, cfg, dataset, args.epochs, _dynamics(args), cfg.seed, _policy(args),
                    EvalAccounting(args.eval_accounting))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for raw, report in zip(raw_values, reports):
        path = out_dir / f"{param}_{raw}.csv"
        write_report(report, path)
        print(f"{param}={raw} {report.summary()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="afss", description="Anti-forgetting epoch sampling scheduler")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write the epoch-0 snapshot for a list of image ids")
    p.add_argument("--ids", required=True, type=Path, help="one image id per line")
    p.add_argument("--out", required=True, type=Path)
    _config_flags(p)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("plan", help="compose the next epoch's manifest and stamp usage")
    p.add_argument("--state", required=True, type=Path)
    p.add_argument("--epoch", type=int, help="epoch to plan (must be snapshot epoch + 1)")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--state-out", required=True, type=Path)
    _config_flags(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("update", help="merge evaluated precision/recall into the snapshot")
    p.add_argument("--state", required=True, type=Path)
    p.add_argument("--metrics", required=True, type=Path)
    p.add_argument("--epoch", type=int, help="epoch the metrics belong to (default: snapshot epoch)")
    p.add_argument("--state-out", required=True, type=Path)
    _config_flags(p)
    p.set_defaults(func=cmd_update)

    p = sub.add_parser("simulate", help="run one synthetic experiment and write its report CSV")
    _simulation_flags(p)
    p.add_argument("--out", required=True, type=Path)
    _config_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="one synthetic experiment per value of a scheduler parameter")
    p.add_argument("--param", required=True)
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--out-dir", required=True, type=Path)
    _simulation_flags(p)
    _config_flags(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError) as exc:
        print(f"afss: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

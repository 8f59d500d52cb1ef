"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from .classifier import ForestConfig, load_model, save_model, train_forest
from .dataset import DataError, SchemaError, fit_standardizer, load_dataset, load_schema
from .demo import write_demo
from .generator import (
    distribution_report,
    fit_native_sampler,
    format_distribution_report,
    generate,
    load_external_pool,
    load_pools,
    save_pools,
)
from .guardrail import BiasGuard, GuardrailConfig, write_guard_dump
from .harness import (
    ExperimentConfig,
    LabelBias,
    emit_report,
    format_table,
    format_timing,
    run_bench,
    run_experiment,
    sweep_augmentations,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _data_args(p, data_help="data file"):
    p.add_argument("--schema", required=True, help="schema JSON file")
    p.add_argument("--data", required=True, help=data_help)
    p.add_argument("--delimiter", default=",")


def _forest_args(p):
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=12)
    p.add_argument("--min-leaf", type=int, default=2)


def _experiment_args(p):
    _data_args(p)
    _forest_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--t", type=int, action="append", help="augmentation count (repeatable)")
    p.add_argument("--pool-size", type=int, default=1000)
    p.add_argument("--pool-external", nargs=2, metavar=("PA0_FILE", "PA1_FILE"))
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--aggregation", choices=("mean", "majority"), default="mean")
    p.add_argument("--label-bias", type=float, metavar="RATE",
                   help="flip favorable training labels of the unprivileged group with this probability")
    p.add_argument("--name", default="")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="biasguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("validate", help="check a data file against its schema")
    _data_args(p)

    p = sub.add_parser("train", help="train the reference forest")
    _data_args(p, "training data file")
    _forest_args(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file to write")

    p = sub.add_parser("pools", help="generate or ingest synthetic pools")
    _data_args(p, "training data file (pools and standardizer are fitted on it)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pool-size", type=int, default=1000)
    p.add_argument("--pool-external", nargs=2, metavar=("PA0_FILE", "PA1_FILE"))
    p.add_argument("--out", required=True, help="pool cache file to write")

    p = sub.add_parser("guard", help="score a file with the guardrail")
    _data_args(p, "file to score")
    p.add_argument("--model", required=True)
    p.add_argument("--pools", required=True, help="pool cache from the pools command")
    p.add_argument("--t", type=int, action="append")
    p.add_argument("--weight", type=float, default=0.5)
    p.add_argument("--aggregation", choices=("mean", "majority"), default="mean")
    p.add_argument("--out", required=True, help="guarded-prediction dump to write")

    for name, text in (("evaluate", "full k-fold comparison"),
                       ("bench", "k-fold comparison with timing table"),
                       ("sweep", "augmentation-count sensitivity")):
        _experiment_args(sub.add_parser(name, help=text))

    p = sub.add_parser("demo", help="write the synthetic demo dataset and schema")
    p.add_argument("--out", required=True)
    p.add_argument("--rows", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _forest(args) -> ForestConfig:
    try:
        return ForestConfig(args.trees, args.max_depth, args.min_leaf)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(args):
    schema = load_schema(args.schema)
    return load_dataset(args.data, schema, delimiter=args.delimiter)


def _experiment_config(args) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig(
            data_path=args.data,
            schema_path=args.schema,
            name=args.name,
            folds=args.folds,
            seed=args.seed,
            forest=_forest(args),
            pool_size=args.pool_size,
            pool_external=tuple(args.pool_external) if args.pool_external else None,
            weight=args.weight,
            aggregation=args.aggregation,
            t_sweep=tuple(args.t) if args.t else (2, 4, 6, 8),
            label_bias=LabelBias(args.label_bias) if args.label_bias is not None else None,
        )
        cfg.validate()
        GuardrailConfig(max(cfg.t_sweep), cfg.weight, cfg.aggregation)
    except (ValueError, FileNotFoundError) as exc:
        raise UsageError(str(exc)) from None
    return cfg


def _cmd_validate(args):
    d = _load(args)
    s = d.schema
    print(f"{args.data}: {len(d)} rows, {len(s.columns)} columns OK")
    for v, name in ((1, "privileged"), (0, "unprivileged")):
        m = d.protected == v
        print(f"  {name:<12} n={int(m.sum()):<7} favorable rate={d.labels[m].mean() if m.any() else float('nan'):.4f}")


def _cmd_train(args):
    d = _load(args)
    model = train_forest(d, _forest(args), args.seed)
    save_model(model, args.out)
    print(f"trained {len(model.trees)} trees on {len(d)} rows -> {args.out}")


def _cmd_pools(args):
    d = _load(args)
    if args.pool_size < 1:
        raise UsageError("--pool-size must be >= 1")
    if args.pool_external:
        pools = tuple(load_external_pool(p, d.schema, v, args.delimiter)
                      for v, p in enumerate(args.pool_external))
    else:
        pools = tuple(generate(fit_native_sampler(d, v, args.seed + v), args.pool_size) for v in (0, 1))
    meta = {"seed": args.seed, "pool_size": args.pool_size, "source": args.data}
    save_pools(args.out, pools, fit_standardizer(d), meta)
    for p in pools:
        group = d.take((d.protected == p.pa_value).nonzero()[0])
        print(f"pool for protected value {p.pa_value}: {len(p)} members ({p.provenance})")
        print(format_distribution_report(distribution_report(p, group)))


def _cmd_guard(args):
    d = _load(args)
    model = load_model(args.model)
    pools, standardizer, _ = load_pools(args.pools)
    if args.t and len(args.t) > 1:
        raise UsageError("guard takes a single --t")
    try:
        cfg = GuardrailConfig(args.t[0] if args.t else 8, args.weight, args.aggregation)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if model.schema != d.schema:
        raise SchemaError("model was trained on a different schema")
    out, stats = BiasGuard(model, pools, cfg, standardizer).predict_batch(d.without_labels())
    write_guard_dump(args.out, d.row_ids, out)
    print(f"{len(out)} rows, {stats.triggered} triggered, {stats.flips} flipped "
          f"in {stats.total_seconds:.3f} s -> {args.out}")


def _cmd_experiment(args):
    cfg = _experiment_config(args)
    data = _load(args)
    timing = None
    if args.command == "evaluate":
        report = run_experiment(cfg, data)
    elif args.command == "sweep":
        report = sweep_augmentations(cfg, data)
    else:
        report, timing = run_bench(cfg, data)
    emit_report(report, args.out, timing)
    print(format_table(report))
    if timing is not None:
        print()
        print(format_timing(timing))


def _cmd_demo(args):
    data, schema = write_demo(args.out, args.rows, args.seed)
    print(json.dumps({"data": str(data), "schema": str(schema)}))


COMMANDS = {
    "validate": _cmd_validate,
    "train": _cmd_train,
    "pools": _cmd_pools,
    "guard": _cmd_guard,
    "evaluate": _cmd_experiment,
    "bench": _cmd_experiment,
    "sweep": _cmd_experiment,
    "demo": _cmd_demo,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"biasguard: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, SchemaError, FileNotFoundError) as exc:
        print(f"biasguard: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"biasguard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``procaudit {generate,train,crossval,predict,inspect}``.

Exit codes: 0 success, 1 runtime or I/O failure, 2 usage or validation error.
``PROCAUDIT_SEED`` and ``PROCAUDIT_JOBS`` override the default seed and
worker count.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, data, normalize, plotting, synthgen, train
from .core import NumericError
from .mlp import ModelContractError, ModelFormatError, load_model, save_model

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageFailure(Exception):
    """Bad flag combination or invalid input detected after parsing."""


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise UsageFailure(f"{name} must be an integer, got {raw!r}") from None


def _default_jobs(k: int) -> int:
    return max(1, min(k, os.cpu_count() or 1))


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--task", choices=("binary", "multiclass"), default="binary")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--hidden", type=int, default=512)
    p.add_argument("--dropout", type=float, default=0.2)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=None,
                   help="learning rate (default 0.001 for rmsprop, 0.01 for sgd)")
    p.add_argument("--optimizer", choices=("rmsprop", "sgd"), default="rmsprop")
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")
    p.add_argument("--include-clean", action="store_true",
                   help="multiclass only: keep FT=0 rows as class 0")
    p.add_argument("--seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="procaudit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic procurement ledger as CSV")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--fraud-ratio", type=float, default=None)
    g.add_argument("--k-fraud", type=int, default=None)
    g.add_argument("--noise", type=float, default=None, help="label noise rate in [0, 0.5)")
    g.add_argument("--blacklist-fraction", type=float, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--config", type=Path, help="key = value file with generator options")
    g.add_argument("--out", type=Path, required=True)

    c = sub.add_parser("crossval", help="k-fold cross-validation report")
    c.add_argument("--data", type=Path, required=True)
    c.add_argument("--k", type=int, default=10)
    _add_model_flags(c)
    c.add_argument("--paper-faithful", action="store_true",
                   help="fit normalisation on all rows before splitting")
    c.add_argument("--stratified", action="store_true")
    c.add_argument("--jobs", type=int, default=None)
    c.add_argument("--report", type=Path, help="JSON-lines report path")
    c.add_argument("--no-figures", action="store_true",
                   help="skip the PNG figures written next to --report")

    t = sub.add_parser("train", help="train on the whole file and save a model")
    t.add_argument("--data", type=Path, required=True)
    _add_model_flags(t)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--stats-out", type=Path, help="also write the normalisation stats file")

    pr = sub.add_parser("predict", help="prediction table for a CSV file")
    pr.add_argument("--model", type=Path, required=True)
    pr.add_argument("--data", type=Path, required=True)
    pr.add_argument("--sample", type=int, default=None, help="score N random rows only")
    pr.add_argument("--seed", type=int, default=None)
    pr.add_argument("--out", type=Path, help="CSV prediction table path")
    pr.add_argument("--no-figures", action="store_true")

    i = sub.add_parser("inspect", help="summarise a data, model, stats or report file")
    i.add_argument("path", type=Path)
    return parser


def _train_config(args) -> train.TrainConfig:
    lr = args.lr if args.lr is not None else (0.001 if args.optimizer == "rmsprop" else 0.01)
    for flag, value, ok in (("--epochs", args.epochs, args.epochs >= 1),
                            ("--hidden", args.hidden, args.hidden >= 1),
                            ("--batch", args.batch, args.batch >= 1),
                            ("--dropout", args.dropout, 0.0 <= args.dropout < 1.0),
                            ("--lr", lr, lr > 0)):
        if not ok:
            raise UsageFailure(f"invalid {flag} {value}")
    return train.TrainConfig(hidden=args.hidden, dropout=args.dropout, batch=args.batch,
                             lr=lr, optimizer=args.optimizer, epochs=args.epochs,
                             activation=args.activation)


def _figure_paths(report: Path) -> tuple[Path, Path]:
    stem = report.with_suffix("")
    return Path(f"{stem}_folds.png"), Path(f"{stem}_loss.png")


def cmd_generate(args) -> int:
    options = synthgen.read_config_file(args.config) if args.config else {}
    overrides = {"n": args.n, "fraud_ratio": args.fraud_ratio, "k_fraud": args.k_fraud,
                 "label_noise": args.noise, "blacklist_fraction": args.blacklist_fraction,
                 "seed": args.seed}
    options.update({k: v for k, v in overrides.items() if v is not None})
    options.setdefault("seed", _env_int("PROCAUDIT_SEED", 0))
    cfg = synthgen.GeneratorConfig.from_mapping(options)
    cfg.validate()
    ds = synthgen.generate(cfg)
    data.write_csv(ds, args.out)
    counts = ds.class_counts()
    print(f"wrote {len(ds)} records to {args.out}")
    print(f"clean: {counts.get(0, 0)}  fraud: {ds.fraud_count()}")
    for ft in sorted(c for c in counts if c != 0):
        print(f"  FT={ft} ({synthgen.ARCHETYPES.get(ft, '?')}): {counts[ft]}")
    print(f"bayes ceiling: binary {synthgen.bayes_accuracy(cfg, 'binary'):.4f}  "
          f"multiclass {synthgen.bayes_accuracy(cfg, 'multiclass'):.4f}")
    return EXIT_OK


def cmd_crossval(args) -> int:
    tc = _train_config(args)
    if args.k < 2:
        raise UsageFailure("--k must be at least 2")
    seed = args.seed if args.seed is not None else _env_int("PROCAUDIT_SEED", 0)
    jobs = args.jobs if args.jobs is not None else _env_int("PROCAUDIT_JOBS", _default_jobs(args.k))
    ds = data.parse_csv(args.data)
    report = train.cross_validate(
        ds, args.task, tc, k=args.k, seed=seed, paper_faithful=args.paper_faithful,
        stratified=args.stratified, include_clean=args.include_clean, jobs=jobs,
    )
    print(report.table())
    if args.report:
        args.report.parent.mkdir(parents=True, exist_ok=True)
        args.report.write_text(report.to_jsonl(), encoding="utf-8")
        print(f"report: {args.report}")
        if not args.no_figures:
            folds_png, loss_png = _figure_paths(args.report)
            plotting.fold_figure(report, folds_png)
            plotting.loss_curve_figure(report, loss_png)
            print(f"figures: {folds_png} {loss_png}")
    return EXIT_OK


def cmd_train(args) -> int:
    tc = _train_config(args)
    seed = args.seed if args.seed is not None else _env_int("PROCAUDIT_SEED", 0)
    ds = data.parse_csv(args.data)
    model, trace = train.train_model(ds, args.task, tc, seed=seed, include_clean=args.include_clean)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "wb") as fh:
        save_model(model, fh)
    if args.stats_out:
        normalize.save(model.stats, args.stats_out)
    print(f"trained {model.task} model on {len(ds)} records; final epoch loss {trace[-1]:.4f}")
    print(f"model: {args.out}")
    return EXIT_OK


def _truth_for(model, ds: data.Dataset):
    """Rows to score, their labels in the model's output space, and the label offset."""
    rows = np.arange(len(ds))
    if model.task == "binary":
        offset = 0
        truth = (ds.ft != 0).astype(np.int64) if ds.has_labels else None
    elif model.task == "multiclass":
        offset = 1
        if ds.has_labels:
            rows = np.flatnonzero(ds.ft != 0)
            truth = ds.ft[rows]
        else:
            truth = None
    else:
        offset = 0
        truth = ds.ft.copy() if ds.has_labels else None
    return rows, truth, offset


def cmd_predict(args) -> int:
    with open(args.model, "rb") as fh:
        model = load_model(fh)
    if model.stats is None:
        raise ModelFormatError("model file carries no normalisation stats")
    ds = data.parse_csv(args.data, require_labels=False)
    rows, truth, offset = _truth_for(model, ds)
    if args.sample is not None:
        seed = args.seed if args.seed is not None else _env_int("PROCAUDIT_SEED", 0)
        pick = train.sample_rows(rows.size, args.sample, seed)
        rows = rows[pick]
        truth = truth[pick] if truth is not None else None
    table = train.prediction_table(model.params, model.stats, ds.subset(rows), truth, offset)
    print(table.render())
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(table.to_csv(), encoding="utf-8")
        if not args.no_figures and table.rows:
            png = Path(f"{args.out.with_suffix('')}_probs.png")
            plotting.prediction_figure(table, png)
            print(f"figure: {png}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path: Path = args.path
    head = path.read_bytes()[:64]
    if head.startswith(b"PK"):
        model = load_model(path)
        cfg = model.config
        print(f"model: task={model.task} classes={cfg.output_classes} hidden={cfg.hidden_dim} "
              f"dropout={cfg.dropout_ratio} activation={cfg.activation}")
        if model.stats is not None:
            print(model.stats.dumps(), end="")
    elif head.startswith(normalize.STATS_MAGIC.encode()):
        print(normalize.load(path).dumps(), end="")
    elif head.lstrip().startswith(b"{"):
        folds, summary = train.read_report(path.read_text(encoding="utf-8"))
        report = train.CrossValReport(
            [train.FoldReport(f["fold"], f["loss"], f["accuracy"]) for f in folds],
            summary["task"], summary["seed"], summary.get("config", {}))
        print(report.table())
    else:
        ds = data.parse_csv(path, require_labels=False)
        print(f"records: {len(ds)}")
        if ds.has_labels:
            print(json.dumps({f"FT={k}": v for k, v in ds.class_counts().items()}))
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "crossval": cmd_crossval,
    "train": cmd_train,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (UsageFailure, data.DataError, synthgen.GeneratorError, ModelContractError,
            train.StratificationError) as exc:
        print(f"procaudit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ModelFormatError, normalize.StatsFormatError, NumericError, ValueError) as exc:
        print(f"procaudit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: build-sheaf, train, spectrum, bench, synth.

Metrics go to stdout as line-delimited JSON records; files use the formats
defined by the library modules. Exit codes: 0 success, 1 usage error,
2 data error, 3 numerical guard.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .data import load_dataset, save_dataset, synth_sbm
from .errors import DataError, GuardError
from .graph import homophily
from .laplacian import normalise, sheaf_laplacian, spectrum
from .model import (
    BASELINE_KINDS,
    SHEAF_KINDS,
    TrainConfig,
    build_sheaf_by_kind,
    config_field_names,
    train,
)
from .sheaf import BuildDiagnostics, write_sheaf_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_GUARD = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route through UsageError
    # instead so usage problems map to exit code 1.
    def error(self, message):
        raise UsageError(message)


def load_train_config(path: str | None, overrides: dict) -> TrainConfig:
    values = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise UsageError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file is not valid JSON: {path}") from exc
        if not isinstance(raw, dict):
            raise UsageError("config file must hold a JSON object")
        known = set(config_field_names())
        for key in raw:
            if key not in known:
                raise UsageError(f"unknown config key: {key}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    cfg = TrainConfig(**values)
    try:
        cfg.validate()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _emit(record: dict) -> None:
    print(json.dumps(record))


def cmd_build_sheaf(args) -> int:
    ds = load_dataset(args.dataset)
    t0 = time.perf_counter()
    sheaf = build_sheaf_by_kind(ds.graph, args.kind, args.d, args.seed)
    build_seconds = time.perf_counter() - t0
    write_sheaf_csv(sheaf, args.out)
    diag = sheaf.diagnostics or BuildDiagnostics()
    _emit(
        {
            "command": "build-sheaf",
            "kind": args.kind,
            "d": args.d,
            "n": sheaf.n,
            "edges": sheaf.num_edges,
            "padded_nodes": diag.padded_nodes,
            "rank_completed_bases": diag.rank_completed_bases,
            "singular_alignments": diag.singular_alignments,
            "build_seconds": build_seconds,
            "out": args.out,
        }
    )
    return EXIT_OK


def _train_one(ds, kind, cfg, split_index, emit_epochs=True):
    params, history = train(ds, kind, cfg, split_index)
    if emit_epochs:
        for i in range(len(history["epoch"])):
            _emit(
                {
                    "epoch": history["epoch"][i],
                    "train_loss": history["train_loss"][i],
                    "train_acc": history["train_acc"][i],
                    "val_acc": history["val_acc"][i],
                    "test_acc": history["test_acc"][i],
                    "epoch_seconds": history["epoch_seconds"][i],
                }
            )
    return history


def cmd_train(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = load_train_config(args.config, {"d": args.d, "seed": args.seed})
    kind = args.kind
    if kind not in SHEAF_KINDS + BASELINE_KINDS:
        raise UsageError(f"unknown model kind: {kind}")
    if args.split == "all":
        indices = list(range(len(ds.splits)))
    else:
        try:
            index = int(args.split)
        except ValueError as exc:
            raise UsageError(f"bad split value: {args.split}") from exc
        if not 0 <= index < len(ds.splits):
            raise UsageError(
                f"split out of range: {index} (dataset has {len(ds.splits)})"
            )
        indices = [index]

    accs = []
    for index in indices:
        history = _train_one(ds, kind, cfg, index, emit_epochs=len(indices) == 1)
        accs.append(history["test_acc_at_best"])
        _emit(
            {
                "summary": True,
                "split": index,
                "kind": kind,
                "best_epoch": history["best_epoch"],
                "best_val_acc": history["best_val_acc"],
                "test_acc_at_best": history["test_acc_at_best"],
                "sheaf_build_seconds": history["sheaf_build_seconds"],
                "mean_epoch_seconds": history["mean_epoch_seconds"],
            }
        )
    if len(indices) > 1:
        accs_arr = np.asarray(accs)
        _emit(
            {
                "summary": True,
                "splits": len(indices),
                "kind": kind,
                "mean_test_acc": float(accs_arr.mean()),
                "std_test_acc": float(accs_arr.std(ddof=1)),
            }
        )
    return EXIT_OK


def cmd_spectrum(args) -> int:
    ds = load_dataset(args.dataset)
    sheaf = build_sheaf_by_kind(ds.graph, args.kind, args.d, args.seed)
    lap = normalise(sheaf_laplacian(sheaf, ds.graph))
    eigs = spectrum(lap)
    with open(args.out, "w") as fh:
        fh.write("eigenvalue\n")
        for val in eigs:
            fh.write(f"{repr(float(val))}\n")
    _emit(
        {
            "command": "spectrum",
            "kind": args.kind,
            "d": args.d,
            "count": int(eigs.size),
            "min": float(eigs[0]),
            "max": float(eigs[-1]),
            "out": args.out,
        }
    )
    return EXIT_OK


def cmd_bench(args) -> int:
    ds = load_dataset(args.dataset)
    cfg = load_train_config(args.config, {"d": args.d, "seed": args.seed})
    if cfg.epochs < 20:
        cfg.epochs = 20  # timing statistics need at least 20 samples
    cfg.patience = 0  # keep every epoch for the timing record
    _, history = train(ds, args.kind, cfg, 0)
    secs = np.asarray(history["epoch_seconds"])
    _emit(
        {
            "command": "bench",
            "kind": args.kind,
            "n": ds.graph.n,
            "edges": ds.graph.num_edges,
            "d": cfg.d,
            "epochs": int(secs.size),
            "sheaf_build_seconds": history["sheaf_build_seconds"],
            "mean_epoch_seconds": float(secs.mean()),
            "std_epoch_seconds": float(secs.std(ddof=1)),
        }
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    ds = synth_sbm(
        n=args.n,
        n_classes=args.classes,
        p_in=args.p_in,
        p_out=args.p_out,
        feature_dim=args.feature_dim,
        separation=args.separation,
        seed=args.seed,
    )
    save_dataset(ds, args.out)
    _emit(
        {
            "command": "synth",
            "n": ds.graph.n,
            "edges": ds.graph.num_edges,
            "classes": args.classes,
            "homophily": homophily(ds.graph) if ds.graph.num_edges else None,
            "out": args.out,
        }
    )
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="sheaflab")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("build-sheaf", help="precompute a sheaf and export it as CSV")
    ps.add_argument("--dataset", required=True)
    ps.add_argument("--d", type=int, default=2)
    ps.add_argument("--kind", default="connection", choices=SHEAF_KINDS)
    ps.add_argument("--seed", type=int, default=0)
    ps.add_argument("--out", required=True)
    ps.set_defaults(func=cmd_build_sheaf)

    pt = sub.add_parser("train", help="train and evaluate on dataset splits")
    pt.add_argument("--dataset", required=True)
    pt.add_argument("--config", default=None)
    pt.add_argument("--kind", default="connection")
    pt.add_argument("--split", default="0", help="split index or 'all'")
    pt.add_argument("--d", type=int, default=None)
    pt.add_argument("--seed", type=int, default=None)
    pt.set_defaults(func=cmd_train)

    pe = sub.add_parser("spectrum", help="eigenvalues of the normalised sheaf Laplacian")
    pe.add_argument("--dataset", required=True)
    pe.add_argument("--d", type=int, default=2)
    pe.add_argument("--kind", default="connection", choices=SHEAF_KINDS)
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--out", required=True)
    pe.set_defaults(func=cmd_spectrum)

    pb = sub.add_parser("bench", help="time sheaf precompute and training epochs")
    pb.add_argument("--dataset", required=True)
    pb.add_argument("--config", default=None)
    pb.add_argument("--kind", default="connection")
    pb.add_argument("--d", type=int, default=None)
    pb.add_argument("--seed", type=int, default=None)
    pb.set_defaults(func=cmd_bench)

    pg = sub.add_parser("synth", help="generate a synthetic SBM dataset directory")
    pg.add_argument("--out", required=True)
    pg.add_argument("--n", type=int, default=200)
    pg.add_argument("--classes", type=int, default=2)
    pg.add_argument("--p-in", type=float, default=0.1, dest="p_in")
    pg.add_argument("--p-out", type=float, default=0.01, dest="p_out")
    pg.add_argument("--feature-dim", type=int, default=8, dest="feature_dim")
    pg.add_argument("--separation", type=float, default=2.0)
    pg.add_argument("--seed", type=int, default=0)
    pg.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GuardError as exc:
        print(f"numerical guard: {exc}", file=sys.stderr)
        return EXIT_GUARD


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface: one-shot medoid selection on gradient dumps,
full defense simulations, and CSV export of report series.

Exit codes: 0 success, 1 runtime failure (e.g. divergence), 2 usage or
parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .defense import DefenseConfig, elimination_round
from .data import DatasetState
from .dumpio import read_gradient_dump, read_labels_file
from .errors import ConfigError, EpicError, FileFormatError, InvalidInput
from .experiments import run_experiment
from .proxies import ProxyMatrix
from .report import UnknownSeries, canonical_json, export_series


def _cmd_select(args) -> int:
    rows, _ = read_gradient_dump(args.input)
    if rows.shape[0] == 0:
        raise FileFormatError("empty dump", offset=8)
    labels, poison_mask = read_labels_file(args.labels)
    if labels.shape[0] != rows.shape[0]:
        raise FileFormatError(
            f"labels file has {labels.shape[0]} entries for {rows.shape[0]} dump rows"
        )
    if not 0.0 < args.fraction <= 1.0:
        raise InvalidInput("fraction must be in (0, 1]")
    num_classes = int(labels.max()) + 1
    dataset = DatasetState(rows, labels, num_classes, poison_mask)
    config = DefenseConfig(
        warmup_epochs=0,
        interval_epochs=1,
        medoid_fraction=args.fraction,
        greedy_mode=args.mode,
        seed=args.seed,
        min_class_size_guard=args.min_class_size,
    )
    proxies = ProxyMatrix(rows)
    report = elimination_round(dataset, proxies, config)
    for cr in report.classes:
        if cr.skipped is not None:
            print(f"class {cr.label}: {cr.members} examples, skipped ({cr.skipped})")
            continue
        print(f"class {cr.label}: {cr.members} examples, k={cr.k}, c0={cr.c0:.6g}")
        for rank, (m, g, gm) in enumerate(zip(cr.medoids, cr.gains, cr.gamma)):
            print(f"  medoid {m} rank={rank} gain={g:.6g} gamma={gm}")
        for idx in cr.dropped:
            print(f"  drop {idx}")
    dropped = report.dropped
    print(f"would drop {len(dropped)} of {rows.shape[0]}: {list(dropped)}")
    if args.json:
        Path(args.json).write_text(
            canonical_json(report.to_jsonable()), encoding="utf-8"
        )
    return 0


def _cmd_defend_sim(args) -> int:
    try:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    report = run_experiment(config)
    Path(args.out).write_text(canonical_json(report), encoding="utf-8")
    runs = report["runs"]
    for name in sorted(runs):
        entry = runs[name]
        line = f"{name}: final loss {entry['loss'][-1]:.6g}" if entry["loss"] else name
        if "test_accuracy" in entry:
            line += f", test accuracy {entry['test_accuracy']:.4f}"
        if "target_prediction" in entry:
            line += f", target -> class {entry['target_prediction']}"
        print(line)
    if "attack" in report:
        atk = report["attack"]
        for key in ("success_undefended", "success_defended"):
            if key in atk:
                print(f"{key}: {atk[key]}")
    print(f"report written to {args.out}")
    return 0


def _cmd_export(args) -> int:
    report = json.loads(Path(args.report).read_text(encoding="utf-8"))
    sys.stdout.write(export_series(report, args.series))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epic",
        description=(
            "Defend training against targeted data poisoning by iteratively "
            "eliminating isolated gradient-space medoids."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sel = sub.add_parser(
        "select", help="one selection round on an external gradient dump"
    )
    p_sel.add_argument("--input", required=True, help="gradient dump file")
    p_sel.add_argument("--labels", required=True, help="labels file")
    p_sel.add_argument("--fraction", type=float, required=True, help="medoid fraction per class")
    p_sel.add_argument("--mode", choices=("naive", "lazy", "stochastic"), default="lazy")
    p_sel.add_argument("--seed", type=int, default=0)
    p_sel.add_argument("--min-class-size", type=int, default=0, dest="min_class_size",
                       help="skip classes at or below this size (default 0: none)")
    p_sel.add_argument("--json", help="also write the round report as JSON")
    p_sel.set_defaults(func=_cmd_select)

    p_sim = sub.add_parser("defend-sim", help="run a full defense simulation")
    p_sim.add_argument("--config", required=True, help="JSON experiment config")
    p_sim.add_argument("--out", required=True, help="where to write the JSON report")
    p_sim.set_defaults(func=_cmd_defend_sim)

    p_exp = sub.add_parser("export", help="print one report series as CSV")
    p_exp.add_argument("--report", required=True, help="report JSON produced by defend-sim")
    p_exp.add_argument("--series", required=True, help="series name, e.g. loss")
    p_exp.set_defaults(func=_cmd_export)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        return args.func(args)
    except FileFormatError as exc:
        where = ""
        if exc.offset is not None:
            where = f" (byte offset {exc.offset})"
        elif exc.line is not None:
            where = f" (line {exc.line})"
        print(f"error: {exc}{where}", file=sys.stderr)
        return 2
    except (ConfigError, InvalidInput, UnknownSeries) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EpicError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())

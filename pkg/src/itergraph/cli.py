"""Command-line entry point: ``itergraph {train,eval,robustness,convergence,timing}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import experiments
from .config import ConfigError, RunConfig, load_config, parse_override
from .data import DataError
from .engine import TrainingDiverged, accuracy, forward_pass, init_params, prepare
from .experiments import ExperimentReport
from .numkit import ContractError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

logger = logging.getLogger("itergraph")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _seed_list(text: str) -> list[int]:
    try:
        return [int(s) for s in text.replace(" ", "").split(",") if s]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--seeds expects comma-separated integers, got {text!r}") from None


def _ratio_list(text: str) -> list[float]:
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"--ratios expects comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="TOML config file, or the name of a bundled one (wine, cancer, digits)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    common.add_argument("--seeds", type=_seed_list, help="comma-separated seeds (default: from config)")
    common.add_argument("--out", type=Path, help="directory for report.jsonl, summary.txt and CSV files")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="itergraph", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("train", parents=[common], help="train and test over seeds")
    ev = sub.add_parser("eval", parents=[common], help="evaluate saved parameters")
    ev.add_argument("--params", type=Path, required=True, help="params_seed<N>.npz written by train --out")
    ev.add_argument("--mask", choices=("train", "dev", "test"), default="test")
    rb = sub.add_parser("robustness", parents=[common], help="edge deletion/addition sweep")
    rb.add_argument("--mode", choices=("delete", "add"), default="delete")
    rb.add_argument("--ratios", type=_ratio_list, default=[0.25, 0.5, 0.75])
    sub.add_parser("convergence", parents=[common], help="per-iteration delta_A and accuracy curves")
    tm = sub.add_parser("timing", parents=[common], help="training time with and without refinement")
    tm.add_argument("--sizes", type=_seed_list, default=[100, 200, 400], help="synthetic n values")
    return p


# ---------------------------------------------------------------------------
# output

def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"not serialisable: {type(v)}")


def _clean(v):
    # NaN is not JSON; None is the undefined marker everywhere
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_clean(x) for x in v]
    return v


def summary_text(report: ExperimentReport) -> str:
    cfg = report.config
    lines = [f"{report.kind}: dataset={cfg.get('dataset') or cfg.get('features')} seeds={report.seeds}"]
    if report.kind in ("train", "convergence"):
        for r in report.runs:
            lines.append(f"  seed {r['seed']}: test {100 * r['test_acc']:.2f}  dev {100 * r['dev_acc']:.2f}  "
                         f"epochs {r['epochs']}  {r['seconds']:.1f}s")
        mean, std = report.mean_std()
        lines.append(f"test accuracy {100 * mean:.2f} +- {100 * std:.2f} (n={len(report.runs)})")
    for row in report.table:
        if "ratio" in row:
            lines.append(f"  {row['mode']} {row['ratio']:.2f} {row['variant']:>5}: "
                         f"{100 * row['mean_test_acc']:.2f} +- {100 * row['std_test_acc']:.2f}")
        elif "stopping" in row:
            lines.append(f"  {row['stopping']:>9}: {100 * row['mean_test_acc']:.2f} +- {100 * row['std_test_acc']:.2f}")
        elif "exponent" in row:
            lines.append(f"  forward-pass time ~ n^{row['exponent']:.2f}")
        elif "mean_seconds" in row:
            lines.append(f"  {row['variant']:>12}: {row['mean_seconds']:.2f} +- {row['std_seconds']:.2f} s per run")
    for f in report.failed:
        lines.append(f"FAILED seed {f['seed']} {f.get('variant', '')}: {f['error']}")
    return "\n".join(lines) + "\n"


def _write_csv(path: Path, rows: list[dict[str, Any]]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        fields = list(dict.fromkeys(k for r in rows for k in r))
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: experiments.UNDEFINED if v is None and k == "delta_a" else v for k, v in r.items()})


def write_report(report: ExperimentReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.jsonl", "w") as fh:
        for rec in report.records():
            fh.write(json.dumps(_clean(rec), default=_json_default, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(summary_text(report))
    for name, rows in report.curves.items():
        _write_csv(out / f"{report.kind}_{name}.csv", rows)
    if report.table:
        _write_csv(out / f"{report.kind}_table.csv", report.table)


def _save_params(out: Optional[Path]):
    if out is None:
        return None

    def keep(seed: int, run: dict[str, Any]) -> None:
        out.mkdir(parents=True, exist_ok=True)
        np.savez(out / f"params_seed{seed}.npz", **run["params"].snapshot())

    return keep


# ---------------------------------------------------------------------------
# commands

def cmd_train(config: RunConfig, seeds: Optional[Sequence[int]], out: Optional[Path]) -> ExperimentReport:
    return experiments.train(config, seeds, keep=_save_params(out))


def cmd_eval(config: RunConfig, params_file: Path, mask_name: str) -> float:
    if not params_file.exists():
        raise DataError(f"missing file: {params_file}")
    dataset = experiments.resolve_dataset(config)
    params = init_params(dataset, config, np.random.default_rng(0))
    with np.load(params_file) as snap:
        try:
            params.load({k: snap[k] for k in params.tensors()})
        except KeyError as exc:
            raise DataError(f"{params_file}: missing array {exc}") from None
        except ContractError as exc:  # shape mismatch
            raise DataError(f"{params_file}: {exc}") from None
    mask = getattr(dataset, mask_name)
    ctx = prepare(dataset, config)
    res = forward_pass(dataset, params, config, training=False, ctx=ctx, loss_mask=mask)
    return accuracy(res.probs, dataset.y, mask)


def _run(args: argparse.Namespace) -> int:
    overrides = dict(parse_override(s) for s in args.set)
    config = load_config(Path(args.config), overrides)
    t0 = time.perf_counter()
    if args.command == "eval":
        acc = cmd_eval(config, args.params, args.mask)
        print(f"{args.mask} accuracy {100 * acc:.2f}")
        if args.out:
            args.out.mkdir(parents=True, exist_ok=True)
            rec = {"record": "eval", "config": config.to_dict(), "params": str(args.params),
                   "mask": args.mask, "accuracy": acc}
            (args.out / "report.jsonl").write_text(json.dumps(rec, sort_keys=True) + "\n")
        return EXIT_OK
    if args.command == "train":
        report = cmd_train(config, args.seeds, args.out)
    elif args.command == "robustness":
        report = experiments.robustness(config, args.mode, args.ratios, args.seeds)
    elif args.command == "convergence":
        report = experiments.convergence(config, args.seeds)
    else:
        report = experiments.timing(config, args.seeds, sizes=args.sizes)
    text = summary_text(report)
    sys.stdout.write(text)
    if args.out:
        write_report(report, args.out)
    logger.info("done in %.1fs", time.perf_counter() - t0)
    if report.failed:
        failed = ", ".join(str(f["seed"]) for f in report.failed)
        print(f"failed seeds: {failed}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"itergraph: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"itergraph: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"itergraph: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"itergraph: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

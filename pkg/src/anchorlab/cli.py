"""Command-line front end.

Verbs: run (one config, all seeds), grid (hyperparameter search on the CV
tasks), verify (gradient and expansion-order checks), report (re-aggregate a
results directory), fixtures (emit tiny hand-built IDX files).

Exit codes: 0 success, 1 configuration error, 2 data or filesystem error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

import numpy as np

from .data import DataError, write_idx_images, write_idx_labels
from .harness import (
    ConfigError,
    ExperimentConfig,
    aggregate,
    apply_overrides,
    grid_search,
    run_config,
    write_report,
)
from .verification import (
    DEFAULT_ALPHAS,
    gradient_check_suite,
    hvp_self_check,
    order_check_suite,
)


class _Parser(argparse.ArgumentParser):
    # argparse exits with its own status on bad usage; route through the
    # config-error path instead so the documented codes hold
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="anchorlab",
                description="Continual-learning experiments with hindsight anchors")
    sub = p.add_subparsers(dest="verb", required=True)

    run = sub.add_parser("run", help="train one configuration across its seeds")
    run.add_argument("--config", required=True, help="path to a JSON config")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config field (dots descend, e.g. hyper.lr=0.3)")
    run.set_defaults(func=cmd_run)

    grid = sub.add_parser("grid", help="grid search on the cross-validation tasks")
    grid.add_argument("--config", required=True)
    grid.add_argument("--grid", required=True,
                      help="JSON object mapping hyperparameter names to value lists")
    grid.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    grid.set_defaults(func=cmd_grid)

    verify = sub.add_parser("verify", help="numerical verification suite")
    verify.add_argument("--seeds", type=int, default=20,
                        help="number of random cases for the order check")
    verify.add_argument("--out", default="results",
                        help="directory for the verification report")
    verify.set_defaults(func=cmd_verify)

    report = sub.add_parser("report", help="aggregate run files into CSVs")
    report.add_argument("--dir", required=True, help="directory of run_*.json files")
    report.set_defaults(func=cmd_report)

    fixtures = sub.add_parser("fixtures", help="write tiny hand-built IDX files")
    fixtures.add_argument("--out", default="fixtures")
    fixtures.set_defaults(func=cmd_fixtures)
    return p


def _load_config(args) -> ExperimentConfig:
    try:
        with open(args.config, "rb") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {args.config}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {args.config} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(apply_overrides(doc, args.set))


def cmd_run(args) -> int:
    config = _load_config(args)
    results = run_config(config)
    for r in results:
        forg = "n/a" if r.max_forgetting is None else f"{r.max_forgetting:.4f}"
        print(f"seed {r.seed}: accuracy {r.average_accuracy:.4f} "
              f"forgetting {forg} ({r.wall_time_seconds:.1f}s)")
    s = aggregate(results)
    forg = "n/a" if s.forgetting_mean is None else f"{s.forgetting_mean:.4f}"
    print(f"{s.method} m={s.mem_per_class}: accuracy "
          f"{s.accuracy_mean:.4f} +/- {s.accuracy_std:.4f}, forgetting {forg}")
    paths = write_report(config.output_dir)
    print(f"wrote {len(results)} run files and {len(paths)} CSVs to "
          f"{config.output_dir}")
    return 0


def cmd_grid(args) -> int:
    config = _load_config(args)
    try:
        with open(args.grid, "rb") as f:
            grid = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read grid {args.grid}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"grid {args.grid} is not valid JSON: {e}") from e
    result = grid_search(config, grid)
    for point, score in result.scores:
        print(f"{point} -> {score:.4f}")
    print(f"best: {dataclasses.asdict(result.best)} ({result.best_score:.4f})")
    os.makedirs(config.output_dir, exist_ok=True)
    out = os.path.join(config.output_dir, "grid_result.json")
    with open(out, "w") as f:
        json.dump({"best": dataclasses.asdict(result.best),
                   "best_score": result.best_score,
                   "scores": result.scores}, f, indent=2)
        f.write("\n")
    print(f"wrote {out}")
    return 0


def cmd_verify(args) -> int:
    if args.seeds < 1:
        raise ConfigError("--seeds must be at least 1")
    failures = []
    worst_param, worst_input = gradient_check_suite(n_cases=50)
    ok = worst_param < 1e-4 and worst_input < 1e-4
    print(f"gradient check: max rel err param {worst_param:.2e} "
          f"input {worst_input:.2e} [{'ok' if ok else 'FAIL'}]")
    if not ok:
        failures.append("gradient check")
    self_check = hvp_self_check()
    ok = (self_check["symmetry_rel_err"] < 1e-6
          and self_check["linearity_rel_err"] < 1e-8)
    print(f"hvp self check: symmetry {self_check['symmetry_rel_err']:.2e} "
          f"linearity {self_check['linearity_rel_err']:.2e} "
          f"[{'ok' if ok else 'FAIL'}]")
    if not ok:
        failures.append("hvp self check")
    mean_order, reports = order_check_suite(n_seeds=args.seeds)
    ok = 1.7 <= mean_order <= 2.3 and all(r.passed for r in reports)
    print(f"expansion order: mean {mean_order:.3f} over {args.seeds} seeds "
          f"[{'ok' if ok else 'FAIL'}]")
    if not ok:
        failures.append("expansion order")
    os.makedirs(args.out, exist_ok=True)
    out = os.path.join(args.out, "verify.json")
    with open(out, "w") as f:
        json.dump({
            "gradient_max_rel_param": worst_param,
            "gradient_max_rel_input": worst_input,
            "hvp_self_check": self_check,
            "alphas": list(DEFAULT_ALPHAS),
            "mean_order": mean_order,
            "reports": [dataclasses.asdict(r) for r in reports],
            "passed": not failures,
        }, f, indent=2)
        f.write("\n")
    print(f"wrote {out}")
    if failures:
        print(f"verification FAILED: {', '.join(failures)}", file=sys.stderr)
        return 3
    return 0


def cmd_report(args) -> int:
    paths = write_report(args.dir)
    for path in sorted(set(paths.values())):
        print(f"wrote {path}")
    return 0


# two classes of tiny 3x3 glyphs: horizontal vs vertical bars
_FIXTURE_TRAIN = [
    ([[0, 0, 0], [255, 255, 255], [0, 0, 0]], 0),
    ([[0, 255, 0], [0, 255, 0], [0, 255, 0]], 1),
    ([[255, 255, 255], [0, 0, 0], [0, 0, 0]], 0),
    ([[255, 0, 0], [255, 0, 0], [255, 0, 0]], 1),
    ([[0, 0, 0], [0, 0, 0], [255, 255, 255]], 0),
    ([[0, 0, 255], [0, 0, 255], [0, 0, 255]], 1),
    ([[0, 0, 0], [200, 200, 200], [0, 0, 0]], 0),
    ([[0, 200, 0], [0, 200, 0], [0, 200, 0]], 1),
]
_FIXTURE_TEST = [
    ([[0, 0, 0], [128, 128, 128], [0, 0, 0]], 0),
    ([[0, 128, 0], [0, 128, 0], [0, 128, 0]], 1),
    ([[255, 255, 255], [255, 255, 255], [0, 0, 0]], 0),
    ([[255, 255, 0], [255, 255, 0], [255, 255, 0]], 1),
]


def cmd_fixtures(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    written = []
    for prefix, rows in (("train", _FIXTURE_TRAIN), ("t10k", _FIXTURE_TEST)):
        images = np.array([r[0] for r in rows], dtype=np.uint8)
        labels = np.array([r[1] for r in rows], dtype=np.uint8)
        ipath = os.path.join(args.out, f"{prefix}-images-idx3-ubyte")
        lpath = os.path.join(args.out, f"{prefix}-labels-idx1-ubyte")
        write_idx_images(ipath, images)
        write_idx_labels(lpath, labels)
        written += [ipath, lpath]
    for path in written:
        print(f"wrote {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (DataError, OSError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

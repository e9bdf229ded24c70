"""Experiment runner: config parsing, seeded runs, grid search, reporting.

A run is fully determined by (config, seed). The master seed expands through
one SeedSequence into four disjoint child streams, consumed by
    [0] network initialization
    [1] the task stream (transforms and data order; spawns further per task)
    [2] replay-memory sampling
    [3] hindsight fine-tune shuffling and anchor initialization
so changing how many draws one consumer makes never perturbs the others.
The base dataset itself is seeded from the dataset config (default 0), not
from the run seed: all runs of an experiment share one dataset, the way they
would share one copy of a benchmark corpus on disk.
"""
from __future__ import annotations

import csv
import dataclasses
import itertools
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, DataError, build_task_stream, load_idx_dataset, make_synthetic
from .learners import LEARNER_KINDS, HyperParams, LearnerState, end_task, make_learner, observe, start_task
from .metrics import AccuracyMatrix, average_accuracy, evaluate_task, max_forgetting
from .nn import init_network

PROTOCOLS = ("permute", "rotate", "split")

_DATASET_KEYS = {
    "synthetic": {"kind", "n_classes", "dim", "train_per_class", "test_per_class",
                  "seed", "image_shape"},
    "idx": {"kind", "train_images", "train_labels", "test_images", "test_labels"},
}


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass
class ExperimentConfig:
    learner: str
    dataset: dict
    protocol: str
    n_tasks: int
    samples_per_task: int
    classes_per_task: int | None = None
    cv_tasks: int = 3
    hidden: tuple = (256, 256)
    hyper: HyperParams = field(default_factory=HyperParams)
    seeds: tuple = (0, 1, 2, 3, 4)
    output_dir: str = "results"
    cv_epochs: int = 1
    exclude_current_task_from_replay: bool = False
    forgetting_max_from_row_j: bool = False
    dump_anchors: bool = False

    def __post_init__(self):
        if self.learner not in LEARNER_KINDS:
            raise ConfigError(f"learner must be one of {LEARNER_KINDS}, "
                              f"got {self.learner!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, "
                              f"got {self.protocol!r}")
        self.n_tasks = int(self.n_tasks)
        self.samples_per_task = int(self.samples_per_task)
        self.cv_tasks = int(self.cv_tasks)
        self.cv_epochs = int(self.cv_epochs)
        if self.n_tasks <= 0 or self.samples_per_task <= 0:
            raise ConfigError("n_tasks and samples_per_task must be positive")
        if not 0 <= self.cv_tasks < self.n_tasks:
            raise ConfigError(f"cv_tasks must satisfy 0 <= cv_tasks < n_tasks, "
                              f"got {self.cv_tasks} of {self.n_tasks}")
        if self.cv_epochs < 1:
            raise ConfigError("cv_epochs must be at least 1")
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h <= 0 for h in self.hidden):
            raise ConfigError("hidden layer sizes must be positive")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        if self.protocol == "split" and not self.classes_per_task:
            raise ConfigError("split protocol needs classes_per_task")
        self._check_dataset()

    def _check_dataset(self):
        if not isinstance(self.dataset, dict) or "kind" not in self.dataset:
            raise ConfigError("dataset must be an object with a 'kind' field")
        kind = self.dataset["kind"]
        if kind not in _DATASET_KEYS:
            raise ConfigError(f"dataset kind must be one of "
                              f"{sorted(_DATASET_KEYS)}, got {kind!r}")
        unknown = set(self.dataset) - _DATASET_KEYS[kind]
        if unknown:
            raise ConfigError(f"unknown dataset field(s): {sorted(unknown)}")
        required = _DATASET_KEYS[kind] - {"kind", "seed", "image_shape"}
        missing = required - set(self.dataset)
        if missing:
            raise ConfigError(f"dataset kind {kind!r} needs field(s): "
                              f"{sorted(missing)}")

    @staticmethod
    def from_dict(d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in dataclasses.fields(ExperimentConfig)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config field(s): {sorted(unknown)}")
        missing = {"learner", "dataset", "protocol", "n_tasks",
                   "samples_per_task"} - set(d)
        if missing:
            raise ConfigError(f"missing config field(s): {sorted(missing)}")
        d = dict(d)
        hyper = d.get("hyper", {})
        if isinstance(hyper, dict):
            try:
                d["hyper"] = HyperParams(**hyper)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"bad hyper block: {e}") from e
        try:
            return ExperimentConfig(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e

    def to_dict(self) -> dict:
        return {
            "learner": self.learner,
            "dataset": dict(self.dataset),
            "protocol": self.protocol,
            "n_tasks": self.n_tasks,
            "samples_per_task": self.samples_per_task,
            "classes_per_task": self.classes_per_task,
            "cv_tasks": self.cv_tasks,
            "hidden": list(self.hidden),
            "hyper": dataclasses.asdict(self.hyper),
            "seeds": list(self.seeds),
            "output_dir": self.output_dir,
            "cv_epochs": self.cv_epochs,
            "exclude_current_task_from_replay": self.exclude_current_task_from_replay,
            "forgetting_max_from_row_j": self.forgetting_max_from_row_j,
            "dump_anchors": self.dump_anchors,
        }


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return ExperimentConfig.from_dict(doc)


def apply_overrides(doc: dict, assignments) -> dict:
    """Apply `key=value` strings to a config document; dots descend."""
    doc = json.loads(json.dumps(doc))
    for item in assignments:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot descend into {p!r} in override {item!r}")
        node[parts[-1]] = value
    return doc


# ------------------------------------------------------------------- running

def load_base_dataset(spec: dict) -> Dataset:
    if spec["kind"] == "synthetic":
        ds = make_synthetic(int(spec["n_classes"]), int(spec["dim"]),
                            int(spec["train_per_class"]), int(spec["test_per_class"]),
                            seed=int(spec.get("seed", 0)))
        if "image_shape" in spec:
            h, w = (int(v) for v in spec["image_shape"])
            if h * w != ds.input_dim:
                raise DataError(f"image_shape {h}x{w} does not match "
                                f"input dimension {ds.input_dim}")
            ds.image_shape = (h, w)
        return ds
    return load_idx_dataset(spec["train_images"], spec["train_labels"],
                            spec["test_images"], spec["test_labels"])


@dataclass
class RunResult:
    config: dict
    seed: int
    accuracy_matrix: np.ndarray
    average_accuracy: float
    max_forgetting: float | None
    wall_time_seconds: float
    anchors_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seed": self.seed,
            "accuracy_matrix": self.accuracy_matrix.tolist(),
            "average_accuracy": self.average_accuracy,
            "max_forgetting": self.max_forgetting,
            "wall_time_seconds": self.wall_time_seconds,
            "anchors_path": self.anchors_path,
        }

    @staticmethod
    def from_dict(d: dict) -> "RunResult":
        return RunResult(d["config"], int(d["seed"]),
                         np.asarray(d["accuracy_matrix"], dtype=np.float64),
                         d["average_accuracy"], d["max_forgetting"],
                         d["wall_time_seconds"], d.get("anchors_path"))


def _build_learner(config: ExperimentConfig, base: Dataset, seed: int):
    """One learner plus its task stream, wired to the four seed substreams."""
    ss = np.random.SeedSequence(int(seed))
    init_ss, stream_ss, sampling_ss, hindsight_ss = ss.spawn(4)
    stream = build_task_stream(base, config.protocol, config.n_tasks,
                               config.samples_per_task, config.classes_per_task,
                               seed=stream_ss, cv_tasks=config.cv_tasks)
    if config.protocol == "split":
        head_size = int(config.classes_per_task)
        out_dim = config.n_tasks * head_size
    else:
        head_size = None
        out_dim = base.n_classes
    net = init_network([base.input_dim, *config.hidden, out_dim],
                       head_size=head_size, seed=init_ss)
    state = make_learner(config.learner, net, config.hyper,
                         np.random.default_rng(sampling_ss), hindsight_ss,
                         config.exclude_current_task_from_replay)
    return state, stream


def _train_task(state: LearnerState, task, batch_size: int, epochs: int) -> None:
    start_task(state, task.task_id)
    for _ in range(epochs):
        visited = 0
        for batch in task.train_batches(batch_size):
            observe(state, batch)
            visited += len(batch)
        # single-pass audit: every stored training example seen exactly once
        assert visited == len(task.train_labels), \
            f"task {task.task_id}: visited {visited} of {len(task.train_labels)}"
    end_task(state, task.task_id)


def run_single(config: ExperimentConfig, seed: int, base: Dataset | None = None) -> RunResult:
    """Train one learner through the full stream and score it.

    Rows of the accuracy matrix cover the non-CV tasks only; one full row is
    recorded after each non-CV task finishes. With a single evaluated task
    the forgetting statistic is undefined and reported as None.
    """
    t0 = time.perf_counter()
    if base is None:
        base = load_base_dataset(config.dataset)
    state, stream = _build_learner(config, base, seed)
    eval_tasks = stream.tasks[config.cv_tasks:]
    matrix = AccuracyMatrix.empty(len(eval_tasks), eval_offset=config.cv_tasks)
    for task in stream.tasks:
        epochs = config.cv_epochs if task.is_cv else 1
        _train_task(state, task, config.hyper.batch_size, epochs)
        if not task.is_cv:
            row = [evaluate_task(state.net, t) for t in eval_tasks]
            matrix.record_row(task.task_id - config.cv_tasks, row)
    avg = average_accuracy(matrix)
    forg = (max_forgetting(matrix, from_row_j=config.forgetting_max_from_row_j)
            if matrix.n_eval >= 2 else None)
    anchors_path = None
    if config.dump_anchors and state.kind == "hal" and state.anchors.count:
        anchors_path = _dump_anchors(config, seed, state)
    return RunResult(config.to_dict(), int(seed), matrix.a, avg, forg,
                     time.perf_counter() - t0, anchors_path)


def _dump_anchors(config: ExperimentConfig, seed: int, state: LearnerState) -> str:
    name = f"anchors_{config.learner}_m{config.hyper.mem_per_class}_seed{seed}.csv"
    os.makedirs(config.output_dir, exist_ok=True)
    a = state.anchors
    with open(os.path.join(config.output_dir, name), "w", newline="") as f:
        w = csv.writer(f)
        for i in range(a.count):
            w.writerow([int(a.task_ids[i]), int(a.labels[i]),
                        *(repr(v) for v in a.inputs[i])])
    return name


def run_result_filename(result: RunResult) -> str:
    cfg = result.config
    return (f"run_{cfg['learner']}_m{cfg['hyper']['mem_per_class']}"
            f"_seed{result.seed}.json")


def write_run_result(result: RunResult, output_dir) -> str:
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, run_result_filename(result))
    with open(path, "w") as f:
        json.dump(result.to_dict(), f, indent=2)
        f.write("\n")
    return path


def load_run_results(output_dir) -> list:
    results = []
    for name in sorted(os.listdir(output_dir)):
        if name.startswith("run_") and name.endswith(".json"):
            with open(os.path.join(output_dir, name)) as f:
                results.append(RunResult.from_dict(json.load(f)))
    return results


def run_config(config: ExperimentConfig) -> list:
    """All seeds of one config; writes one result file per seed."""
    base = load_base_dataset(config.dataset)
    results = []
    for seed in config.seeds:
        result = run_single(config, seed, base=base)
        write_run_result(result, config.output_dir)
        results.append(result)
    return results


# ---------------------------------------------------------------- aggregation

@dataclass
class Summary:
    method: str
    mem_per_class: int
    seed_count: int
    accuracy_mean: float
    accuracy_std: float
    forgetting_mean: float | None
    forgetting_std: float | None
    evolution: list
    eval_offset: int


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
    return float(arr.mean()), std


def aggregate(results) -> Summary:
    """Seed-mean and sample std of both statistics, plus evolution curves.

    evolution[i] is the accuracy averaged over tasks seen so far (columns
    j <= i of row i), seed-averaged: the learning-curve analogue.
    """
    if not results:
        raise ConfigError("aggregate needs at least one result")
    first = results[0].config
    if any(r.config != first for r in results[1:]):
        raise ConfigError("aggregate needs results from one config "
                          "(only the seed may vary)")
    acc_mean, acc_std = _mean_std([r.average_accuracy for r in results])
    forgs = [r.max_forgetting for r in results]
    if any(v is None for v in forgs):
        forg_mean, forg_std = None, None
    else:
        forg_mean, forg_std = _mean_std(forgs)
    mats = np.stack([r.accuracy_matrix for r in results])
    evolution = [float(np.mean(mats[:, i, :i + 1])) for i in range(mats.shape[1])]
    return Summary(first["learner"], first["hyper"]["mem_per_class"],
                   len(results), acc_mean, acc_std, forg_mean, forg_std,
                   evolution, first["cv_tasks"])


def write_report(output_dir) -> dict:
    """Aggregate every run file in a directory into the plot-data CSVs.

    Runs are grouped by (method, mem_per_class); emits summary.csv, one
    evolution CSV per group, and a memory-size sweep CSV.
    """
    results = load_run_results(output_dir)
    if not results:
        raise DataError(f"no run_*.json files found in {output_dir}")
    groups: dict = {}
    for r in results:
        key = (r.config["learner"], r.config["hyper"]["mem_per_class"])
        groups.setdefault(key, []).append(r)
    summaries = [aggregate(group) for _, group in sorted(groups.items())]
    paths = {"summary": os.path.join(output_dir, "summary.csv")}
    with open(paths["summary"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "mem_per_class", "seed_count", "accuracy_mean",
                    "accuracy_std", "forgetting_mean", "forgetting_std"])
        for s in summaries:
            w.writerow([s.method, s.mem_per_class, s.seed_count,
                        repr(s.accuracy_mean), repr(s.accuracy_std),
                        "" if s.forgetting_mean is None else repr(s.forgetting_mean),
                        "" if s.forgetting_std is None else repr(s.forgetting_std)])
    for s in summaries:
        name = f"evolution_{s.method}_m{s.mem_per_class}.csv"
        paths[name] = os.path.join(output_dir, name)
        with open(paths[name], "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["task_index", "accuracy_mean"])
            for i, v in enumerate(s.evolution):
                w.writerow([s.eval_offset + i, repr(v)])
    paths["mem_sweep"] = os.path.join(output_dir, "mem_sweep.csv")
    with open(paths["mem_sweep"], "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "mem_per_class", "accuracy_mean"])
        for s in summaries:
            w.writerow([s.method, s.mem_per_class, repr(s.accuracy_mean)])
    return paths


# ---------------------------------------------------------------- grid search

@dataclass
class GridSearchResult:
    best: HyperParams
    best_score: float
    scores: list


def _cv_score(config: ExperimentConfig, hyper: HyperParams, base: Dataset,
              seed: int) -> float:
    """Train on the CV tasks only; mean accuracy over them afterwards."""
    cfg = dataclasses.replace(config, hyper=hyper)
    state, stream = _build_learner(cfg, base, seed)
    cv = stream.tasks[:cfg.cv_tasks]
    for task in cv:
        _train_task(state, task, hyper.batch_size, cfg.cv_epochs)
    return float(np.mean([evaluate_task(state.net, t) for t in cv]))


def grid_search(config: ExperimentConfig, grid: dict) -> GridSearchResult:
    """Argmax of CV-task accuracy over the cartesian product of the grid.

    Ties break toward the earliest point in iteration order, so listing the
    preferred value first makes it the default.
    """
    if not isinstance(grid, dict) or not grid:
        raise ConfigError("grid must be a non-empty object of value lists")
    hyper_names = {f.name for f in dataclasses.fields(HyperParams)}
    unknown = set(grid) - hyper_names
    if unknown:
        raise ConfigError(f"unknown grid field(s): {sorted(unknown)}")
    if any(not v for v in grid.values()):
        raise ConfigError("every grid field needs at least one value")
    if config.cv_tasks < 1:
        raise ConfigError("grid search needs cv_tasks >= 1")
    base = load_base_dataset(config.dataset)
    names = list(grid)
    best = None
    scores = []
    for combo in itertools.product(*(grid[n] for n in names)):
        point = dict(zip(names, combo))
        try:
            hyper = dataclasses.replace(config.hyper, **point)
        except ValueError as e:
            raise ConfigError(f"bad grid point {point}: {e}") from e
        score = float(np.mean([_cv_score(config, hyper, base, s)
                               for s in config.seeds]))
        scores.append((point, score))
        if best is None or score > best[1]:
            best = (hyper, score)
    return GridSearchResult(best[0], best[1], scores)

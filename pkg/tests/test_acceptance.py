"""Acceptance gate: every numbered criterion at its stated tolerance.

Each test prints one `criterion N: PASS/FAIL/SKIP` line (visible with -s;
the test name carries the same information in plain -v output). The MNIST
criteria need the four canonical IDX files; point ANCHORLAB_MNIST_DIR at a
directory containing them to enable those tests. Without it they skip, and
an offline stand-in built from sklearn's 8x8 digits exercises the identical
harness path and trend assertions at small scale.
"""
import json
import os
import time
import warnings

import numpy as np
import pytest

from anchorlab.data import build_task_stream, write_idx_images, write_idx_labels
from anchorlab.harness import ExperimentConfig, load_base_dataset, run_single, write_run_result
from anchorlab.learners import HyperParams, make_learner, observe, start_task, end_task
from anchorlab.memory import RingMemory, memory_add, memory_sample
from anchorlab.metrics import AccuracyMatrix, average_accuracy, max_forgetting
from anchorlab.nn import (
    Batch,
    _trunk,
    batch_loss_and_grad,
    ce_loss,
    forward,
    init_network,
    input_grad,
    params_flat,
    with_params_flat,
)
from anchorlab.verification import DEFAULT_ALPHAS, order_check_suite


def report(n, ok, note=""):
    tag = "PASS" if ok else "FAIL"
    msg = f"criterion {n}: {tag}" + (f" ({note})" if note else "")
    print(msg)
    assert ok, msg


def skip(n, reason):
    print(f"criterion {n}: SKIP ({reason})")
    pytest.skip(reason)


# --------------------------------------------------------------- criterion 1

def _kink_margin(net, X):
    _, zs = _trunk(net, np.atleast_2d(X))
    return min(float(np.abs(z).min()) for z in zs) if zs else np.inf


def test_criterion_01_gradient_exactness():
    """Analytic gradients vs central differences on 50 random nets."""
    t0 = time.perf_counter()
    worst = 0.0
    seed = 0
    for _ in range(50):
        # skip draws within 1e-3 of a ReLU kink; central differences
        # straddle the nondifferentiable point there
        while True:
            rng = np.random.default_rng(seed)
            net = init_network([6, 5, 4, 3], seed=seed)
            batch = Batch(rng.normal(size=(4, 6)), rng.integers(0, 3, size=4),
                          np.zeros(4, dtype=np.int64))
            seed += 1
            if _kink_margin(net, batch.inputs) > 1e-3:
                break
        _, g = batch_loss_and_grad(net, batch)
        base = params_flat(net)
        analytic = g.flat()
        h = 1e-5
        for i in range(base.size):
            bp, bm = base.copy(), base.copy()
            bp[i] += h
            bm[i] -= h
            fd = (batch_loss_and_grad(with_params_flat(net, bp), batch)[0]
                  - batch_loss_and_grad(with_params_flat(net, bm), batch)[0]) / (2 * h)
            if abs(fd) > 1e-8:
                worst = max(worst, abs(analytic[i] - fd)
                            / max(abs(analytic[i]), abs(fd)))
        x = rng.normal(size=6)
        while _kink_margin(net, x) <= 1e-3:
            x = rng.normal(size=6)
        label = int(rng.integers(0, 3))
        gi = input_grad(net, x, label)
        for i in range(6):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd = (ce_loss(forward(net, xp), label)
                  - ce_loss(forward(net, xm), label)) / (2 * h)
            if abs(fd) > 1e-8:
                worst = max(worst, abs(gi[i] - fd) / max(abs(gi[i]), abs(fd)))
    elapsed = time.perf_counter() - t0
    report(1, worst < 1e-4 and elapsed < 10.0,
           f"max rel err {worst:.2e}, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 2

def test_criterion_02_expansion_order():
    """First-order expansion residual shrinks quadratically in alpha."""
    t0 = time.perf_counter()
    mean_order, reports = order_check_suite(n_seeds=20, alphas=DEFAULT_ALPHAS)
    elapsed = time.perf_counter() - t0
    finite = all(np.isfinite(r.residuals).all() and r.fitted_order is not None
                 for r in reports)
    report(2, 1.7 <= mean_order <= 2.3 and finite and elapsed < 30.0,
           f"mean order {mean_order:.3f} over 20 seeds, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 3

def _brute_average(a):
    last = a[-1]
    return sum(float(v) for v in last) / len(last)


def _brute_forgetting(a, from_row_j=False):
    T = len(a)
    drops = []
    for j in range(T - 1):
        lo = j if from_row_j else 0
        drops.append(max(float(a[l][j] - a[T - 1][j]) for l in range(lo, T - 1)))
    return sum(drops) / len(drops)


def test_criterion_03_metric_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    ok = True
    for _ in range(1000):
        T = int(rng.integers(2, 8))
        a = rng.uniform(size=(T, T))
        m = AccuracyMatrix(a, eval_offset=0, _recorded=set(range(T)))
        ok &= average_accuracy(m) == _brute_average(a)
        ok &= max_forgetting(m) == _brute_forgetting(a)
        ok &= (max_forgetting(m, from_row_j=True)
               == _brute_forgetting(a, from_row_j=True))
        if not ok:
            break
    elapsed = time.perf_counter() - t0
    report(3, ok and elapsed < 5.0, f"1000 matrices exact, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 4

def _synthetic_doc(learner, **over):
    doc = {
        "learner": learner,
        "dataset": {"kind": "synthetic", "n_classes": 4, "dim": 8,
                    "train_per_class": 60, "test_per_class": 30},
        "protocol": "permute",
        "n_tasks": 3,
        "samples_per_task": 80,
        "cv_tasks": 0,
        "hidden": [10],
        "hyper": {"lr": 0.1, "batch_size": 10, "mem_per_class": 1,
                  "lam": 0.1, "gamma": 0.1, "beta": 0.5, "anchor_steps": 20},
        "seeds": [0],
        "output_dir": "unused",
    }
    doc.update(over)
    return doc


def test_criterion_04_lambda_zero_degeneracy():
    t0 = time.perf_counter()
    er = run_single(ExperimentConfig.from_dict(_synthetic_doc("er")), 9)
    hal_doc = _synthetic_doc("hal")
    hal_doc["hyper"]["lam"] = 0.0
    hal = run_single(ExperimentConfig.from_dict(hal_doc), 9)
    elapsed = time.perf_counter() - t0
    bitwise = np.array_equal(er.accuracy_matrix, hal.accuracy_matrix)
    report(4, bitwise and er.average_accuracy == hal.average_accuracy
           and elapsed < 10.0, f"3-task synthetic stream, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 5

def _tagged_batch(task, label, tags):
    n = len(tags)
    x = np.zeros((n, 4))
    x[:, 0] = np.asarray(tags) / 1000.0
    return Batch(x, np.full(n, label, dtype=np.int64),
                 np.full(n, task, dtype=np.int64))


def test_criterion_05_ring_memory_properties():
    t0 = time.perf_counter()
    # capacity and FIFO eviction: m=2 keeps the last two per slot, in order
    mem = RingMemory(m=2)
    memory_add(mem, _tagged_batch(0, 0, [1, 2, 3, 4, 5]))
    kept = sorted(v[0] * 1000 for v in mem.slots[(0, 0)])
    fifo_ok = np.allclose(kept, [4, 5]) and mem.total_count == 2
    # O(t) growth: t tasks of c classes at m=1 hold exactly t*c examples
    mem = RingMemory(m=1)
    growth_ok = True
    for t in range(1, 9):
        for c in range(3):
            memory_add(mem, _tagged_batch(t, c, [t * 10 + c] * 4))
        growth_ok &= mem.total_count == 3 * t
    # sampling uniformity over 5 singleton slots, 3-sigma chi-square
    mem = RingMemory(m=1)
    for c in range(5):
        memory_add(mem, _tagged_batch(0, c, [c]))
    rng = np.random.default_rng(7)
    counts = np.zeros(5)
    draws = 100_000
    for _ in range(draws):
        got = memory_sample(mem, 1, rng)
        counts[int(round(got.inputs[0, 0] * 1000))] += 1
    expected = draws / 5
    sigma3 = 3 * np.sqrt(draws * 0.2 * 0.8)
    per_slot_ok = np.all(np.abs(counts - expected) < sigma3)
    chi2 = float(((counts - expected) ** 2 / expected).sum())
    chi2_ok = chi2 < 16.2514  # 4 dof at the 3-sigma tail probability
    elapsed = time.perf_counter() - t0
    report(5, fifo_ok and growth_ok and per_slot_ok and chi2_ok
           and elapsed < 10.0, f"chi2 {chi2:.2f}, {elapsed:.1f}s")


# --------------------------------------------------------------- criterion 6

def test_criterion_06_agem_projection_invariant():
    from anchorlab.data import make_synthetic
    ds = make_synthetic(4, 8, 60, 20, seed=1)
    stream = build_task_stream(ds, "permute", 4, 80, seed=3, cv_tasks=0)
    net = init_network([8, 10, 4], seed=3)
    state = make_learner("agem", net, HyperParams(lr=0.1, mem_per_class=1),
                         np.random.default_rng(3))
    worst = np.inf
    projected_steps = 0
    for task in stream.tasks:
        start_task(state, task.task_id)
        for batch in task.train_batches(10):
            observe(state, batch)
            dot = state.last_step_info["proj_dot"]
            if dot is not None:
                worst = min(worst, dot)
                projected_steps += 1
        end_task(state, task.task_id)
    report(6, worst >= -1e-10 and projected_steps > 0,
           f"min post-projection dot {worst:.2e} over {projected_steps} steps")


# ------------------------------------------------- criteria 7-9 (need MNIST)

MNIST_FILES = ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
               "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
MNIST_SKIP = ("MNIST IDX files unavailable: this sandbox has no network "
              "access and no ANCHORLAB_MNIST_DIR with the four canonical "
              "IDX files; the digits trend test below exercises the same "
              "harness path offline")


def _mnist_dir():
    d = os.environ.get("ANCHORLAB_MNIST_DIR")
    if d and all(os.path.exists(os.path.join(d, f)) for f in MNIST_FILES):
        return d
    return None


def _mnist_doc(learner, m):
    d = _mnist_dir()
    return {
        "learner": learner,
        "dataset": {"kind": "idx",
                    "train_images": os.path.join(d, MNIST_FILES[0]),
                    "train_labels": os.path.join(d, MNIST_FILES[1]),
                    "test_images": os.path.join(d, MNIST_FILES[2]),
                    "test_labels": os.path.join(d, MNIST_FILES[3])},
        "protocol": "permute",
        "n_tasks": 23,
        "samples_per_task": 1000,
        "cv_tasks": 3,
        "hidden": [256, 256],
        "hyper": {"lr": 0.1, "batch_size": 10, "mem_per_class": m,
                  "lam": 0.1, "gamma": 0.1, "beta": 0.5, "anchor_steps": 100},
        "seeds": [0, 1, 2, 3, 4],
        "output_dir": "unused",
    }


@pytest.fixture(scope="module")
def mnist_results():
    cache = {}

    def get(learner, m=1):
        if (learner, m) not in cache:
            cfg = ExperimentConfig.from_dict(_mnist_doc(learner, m))
            base = load_base_dataset(cfg.dataset)
            runs = [run_single(cfg, s, base=base) for s in cfg.seeds]
            cache[(learner, m)] = (
                float(np.mean([r.average_accuracy for r in runs])),
                float(np.mean([r.max_forgetting for r in runs])))
        return cache[(learner, m)]

    return get


def test_criterion_07_table_trends_permuted_mnist(mnist_results):
    if not _mnist_dir():
        skip(7, MNIST_SKIP)
    finetune_acc, _ = mnist_results("finetune")
    er_acc, er_forg = mnist_results("er")
    hal_acc, hal_forg = mnist_results("hal")
    a = hal_acc - er_acc >= 0.010
    b = er_acc - finetune_acc >= 0.100
    c = hal_forg < er_forg
    d = abs(hal_acc - 0.736) <= 0.060
    report(7, a and b and c and d,
           f"finetune {finetune_acc:.3f}, er {er_acc:.3f}/{er_forg:.3f}, "
           f"hal {hal_acc:.3f}/{hal_forg:.3f}")


def test_criterion_08_memory_sweep_monotonicity(mnist_results):
    if not _mnist_dir():
        skip(8, MNIST_SKIP)
    er1, _ = mnist_results("er", 1)
    er5, _ = mnist_results("er", 5)
    hal1, _ = mnist_results("hal", 1)
    hal5, _ = mnist_results("hal", 5)
    report(8, er5 >= er1 and hal5 >= hal1,
           f"er {er1:.3f}->{er5:.3f}, hal {hal1:.3f}->{hal5:.3f}")


def test_criterion_09_ablation_soft(mnist_results):
    if not _mnist_dir():
        skip(9, MNIST_SKIP)
    hal1, _ = mnist_results("hal", 1)
    er2, _ = mnist_results("er", 2)
    ok = hal1 >= er2 - 0.010
    note = f"hal m=1 {hal1:.3f} vs er m=2 {er2:.3f}"
    if ok:
        report(9, True, note)
    else:
        # soft criterion: this margin sits within run-to-run variance
        print(f"criterion 9: WARN ({note}; soft criterion, not a failure)")
        warnings.warn(f"ablation trend not met: {note}")


# --------------------------------------------------------------- criterion 10

def test_criterion_10_determinism(tmp_path):
    cfg_doc = _synthetic_doc("hal", output_dir=str(tmp_path / "x"))
    a = run_single(ExperimentConfig.from_dict(cfg_doc), 5)
    b = run_single(ExperimentConfig.from_dict(cfg_doc), 5)
    pa = write_run_result(a, tmp_path / "x")
    pb = write_run_result(b, tmp_path / "y")
    # byte-identical apart from the wall-time line
    la = [l for l in open(pa, "rb").read().splitlines()
          if b"wall_time_seconds" not in l]
    lb = [l for l in open(pb, "rb").read().splitlines()
          if b"wall_time_seconds" not in l]
    report(10, la == lb, "rerun result files byte-identical minus wall time")


# ------------------------------------------- offline stand-in for 7/8/9

@pytest.fixture(scope="module")
def digits_idx(tmp_path_factory):
    skdata = pytest.importorskip("sklearn.datasets")
    d = skdata.load_digits()
    images = np.round(d.images * (255.0 / 16.0)).astype(np.uint8)
    test_mask = np.arange(len(d.target)) % 5 == 0
    root = tmp_path_factory.mktemp("digits")
    paths = {}
    for name, imgs, labs in (("train", images[~test_mask], d.target[~test_mask]),
                             ("t10k", images[test_mask], d.target[test_mask])):
        ip = str(root / f"{name}-images-idx3-ubyte")
        lp = str(root / f"{name}-labels-idx1-ubyte")
        write_idx_images(ip, imgs)
        write_idx_labels(lp, labs.astype(np.uint8))
        paths[name] = (ip, lp)
    return paths


def test_offline_trend_benchmark_digits(digits_idx):
    """Table-trend analogue on permuted 8x8 digits, full harness path.

    Margins were calibrated on this exact (deterministic) configuration:
    replay beats finetuning by >23 points, anchoring adds ~2.7 points over
    replay and more than halves forgetting, and both replay methods improve
    with memory size. The assertions leave slack below those measurements
    but keep the directional claims strict.
    """
    def doc(learner, m):
        return {
            "learner": learner,
            "dataset": {"kind": "idx",
                        "train_images": digits_idx["train"][0],
                        "train_labels": digits_idx["train"][1],
                        "test_images": digits_idx["t10k"][0],
                        "test_labels": digits_idx["t10k"][1]},
            "protocol": "permute", "n_tasks": 8, "samples_per_task": 1000,
            "cv_tasks": 2, "hidden": [64, 64],
            "hyper": {"lr": 0.1, "batch_size": 10, "mem_per_class": m,
                      "lam": 0.1, "gamma": 0.1, "beta": 0.5,
                      "anchor_steps": 100},
            "seeds": [0, 1, 2], "output_dir": "unused",
        }

    stats = {}
    for learner, m in (("finetune", 1), ("er", 1), ("er", 5),
                       ("hal", 1), ("hal", 5)):
        cfg = ExperimentConfig.from_dict(doc(learner, m))
        base = load_base_dataset(cfg.dataset)
        runs = [run_single(cfg, s, base=base) for s in cfg.seeds]
        stats[(learner, m)] = (
            float(np.mean([r.average_accuracy for r in runs])),
            float(np.mean([r.max_forgetting for r in runs])))
    finetune, er1, er5 = stats[("finetune", 1)], stats[("er", 1)], stats[("er", 5)]
    hal1, hal5 = stats[("hal", 1)], stats[("hal", 5)]
    print(f"digits trends: finetune {finetune[0]:.3f}, er {er1[0]:.3f}, "
          f"hal {hal1[0]:.3f}; forgetting er {er1[1]:.3f} hal {hal1[1]:.3f}; "
          f"m=5 er {er5[0]:.3f} hal {hal5[0]:.3f}")
    assert er1[0] - finetune[0] >= 0.10
    assert hal1[0] - er1[0] >= 0.01
    assert hal1[1] < er1[1]
    assert er5[0] >= er1[0]
    assert hal5[0] >= hal1[0]

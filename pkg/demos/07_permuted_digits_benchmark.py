"""
A full benchmark run on permuted 8x8 digits
===========================================

End-to-end use of the experiment harness: serialize a real dataset to IDX
files, run four learners over a permuted task stream with several seeds,
and aggregate the results into the report CSVs. The 8x8 digits bundled
with scikit-learn stand in for a larger image benchmark so the whole
script finishes in seconds while exercising the identical code path.
"""

import tempfile
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from anchorlab.data import write_idx_images, write_idx_labels
from anchorlab.harness import (ExperimentConfig, aggregate, load_base_dataset,
                               run_single, write_report, write_run_result)

root = Path(tempfile.mkdtemp(prefix="digits_bench_"))

# pack the digits into the same binary format a downloaded image benchmark
# would arrive in; every fifth example becomes test data
d = load_digits()
images = np.round(d.images * (255.0 / 16.0)).astype(np.uint8)
test_mask = np.arange(len(d.target)) % 5 == 0
for name, imgs, labs in (("train", images[~test_mask], d.target[~test_mask]),
                         ("t10k", images[test_mask], d.target[test_mask])):
    write_idx_images(str(root / f"{name}-images-idx3-ubyte"), imgs)
    write_idx_labels(str(root / f"{name}-labels-idx1-ubyte"),
                     labs.astype(np.uint8))
print(f"wrote IDX files to {root}")


def config(learner, m):
    return ExperimentConfig.from_dict({
        "learner": learner,
        "dataset": {"kind": "idx",
                    "train_images": str(root / "train-images-idx3-ubyte"),
                    "train_labels": str(root / "train-labels-idx1-ubyte"),
                    "test_images": str(root / "t10k-images-idx3-ubyte"),
                    "test_labels": str(root / "t10k-labels-idx1-ubyte")},
        "protocol": "permute", "n_tasks": 8, "samples_per_task": 1000,
        "cv_tasks": 2, "hidden": [64, 64],
        "hyper": {"lr": 0.1, "batch_size": 10, "mem_per_class": m,
                  "lam": 0.1, "gamma": 0.1, "beta": 0.5, "anchor_steps": 100},
        "seeds": [0, 1, 2],
        "output_dir": str(root / "results"),
    })


print(f"\n{'method':10s} {'mem':>3s} {'accuracy':>16s} {'forgetting':>16s}")
for learner, m in (("finetune", 1), ("er", 1), ("agem", 1),
                   ("hal", 1), ("hal", 5)):
    cfg = config(learner, m)
    base = load_base_dataset(cfg.dataset)
    runs = []
    for seed in cfg.seeds:
        r = run_single(cfg, seed, base=base)
        write_run_result(r, cfg.output_dir)
        runs.append(r)
    s = aggregate(runs)
    print(f"{learner:10s} {m:3d} {s.accuracy_mean:8.3f} +- {s.accuracy_std:.3f} "
          f"{s.forgetting_mean:8.3f} +- {s.forgetting_std:.3f}")

paths = write_report(str(root / "results"))
print("\nreport files:")
for p in sorted(paths.values()):
    print(f"  {p}")

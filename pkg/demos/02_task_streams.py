"""
Building task streams from one base dataset
============================================

A continual-learning protocol turns a single classification dataset into a
sequence of related tasks. Pixel permutation reshuffles input coordinates
per task, rotation spins the images by a per-task angle, and the split
protocol partitions the label set.
"""

import numpy as np

from anchorlab.data import build_task_stream, make_synthetic

dataset = make_synthetic(n_classes=4, dim=12, n_train_per_class=50,
                         n_test_per_class=20, seed=0)
print(f"base dataset: {dataset.train_inputs.shape[0]} train, "
      f"{dataset.test_inputs.shape[0]} test, dim {dataset.input_dim}")

# each task draws samples_per_task training examples and transforms them
# with its own pixel permutation; the full transformed test split rides
# along so any task can be evaluated at any time
stream = build_task_stream(dataset, "permute", n_tasks=5,
                           samples_per_task=100, seed=7)
for task in stream.tasks[:3]:
    print(f"task {task.task_id}: train {task.train_inputs.shape}, "
          f"test {task.test_inputs.shape}")

# the first cv_tasks tasks are flagged for hyperparameter selection and
# the remainder form the evaluation stream
stream = build_task_stream(dataset, "permute", n_tasks=5,
                           samples_per_task=100, seed=7, cv_tasks=2)
print(f"cv tasks {[t.task_id for t in stream.tasks if t.is_cv]}, "
      f"eval tasks {[t.task_id for t in stream.tasks if not t.is_cv]}")

# training batches may be visited once only; the stream hands out
# single-pass iterators to keep the online protocol honest
task = next(t for t in stream.tasks if not t.is_cv)
seen = sum(len(b) for b in task.train_batches(16))
print(f"one pass over task {task.task_id} covers {seen} examples")
try:
    sum(len(b) for b in task.train_batches(16))
except RuntimeError as e:
    print(f"second pass refused: {e}")

# rotation needs an image shape; the synthetic generator can fake one as
# long as height*width matches the input dimension
square = make_synthetic(n_classes=3, dim=16, n_train_per_class=40,
                        n_test_per_class=10, seed=1)
square.image_shape = (4, 4)
rotated = build_task_stream(square, "rotate", n_tasks=4,
                            samples_per_task=60, seed=3)
drift = [float(np.abs(t.test_inputs - square.test_inputs).mean())
         for t in rotated.tasks]
print("mean pixel drift per rotated task:",
      " ".join(f"{d:.3f}" for d in drift))

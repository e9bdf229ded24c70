"""
Why replay helps: finetuning forgets, rehearsal remembers
=========================================================

Train the same network twice over a stream of five permuted tasks, once
with plain SGD on the incoming batches and once interleaving a small
replay sample from episodic memory, then compare the accuracy matrices.
Row i holds accuracy on every task after finishing task i, so reading a
column downward shows what later learning did to earlier skills.
"""

import numpy as np

from anchorlab.data import build_task_stream, make_synthetic
from anchorlab.learners import HyperParams, end_task, make_learner, observe, start_task
from anchorlab.metrics import AccuracyMatrix, average_accuracy, evaluate_task, max_forgetting
from anchorlab.nn import init_network


def run(kind):
    dataset = make_synthetic(n_classes=4, dim=16, n_train_per_class=150,
                             n_test_per_class=40, seed=0)
    stream = build_task_stream(dataset, "permute", n_tasks=5,
                               samples_per_task=400, seed=11)
    net = init_network([16, 32, 4], seed=5)
    state = make_learner(kind, net, HyperParams(lr=0.1, batch_size=10,
                                                mem_per_class=2),
                         np.random.default_rng(5))
    matrix = AccuracyMatrix.empty(len(stream.tasks))
    for i, task in enumerate(stream.tasks):
        start_task(state, task.task_id)
        for batch in task.train_batches(10):
            observe(state, batch)
        end_task(state, task.task_id)
        matrix.record_row(i, [evaluate_task(state.net, t) for t in stream.tasks])
    return matrix


for kind in ("finetune", "er"):
    matrix = run(kind)
    print(f"\n{kind}: accuracy after each task")
    for row in matrix.a:
        print("  " + " ".join(f"{v:.2f}" for v in row))
    print(f"  average accuracy {average_accuracy(matrix):.3f}, "
          f"max forgetting {max_forgetting(matrix):.3f}")

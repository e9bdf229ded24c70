"""Accuracy-matrix bookkeeping and the two summary statistics.

The matrix holds one row per evaluated (non-CV) task: row i, column j is the
test accuracy on evaluated task j measured right after training evaluated
task i. Rows cover every column, including tasks not yet trained, so
reporting can choose what to plot.

average_accuracy is the mean of the final row. max_forgetting averages, over
every column but the last, the worst drop from any earlier row to the final
row; rows before a task's own training are included literally (the flag
from_row_j restricts the maximum to rows at or after column j's training).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Network, forward_batch


@dataclass
class AccuracyMatrix:
    a: np.ndarray
    eval_offset: int = 0
    _recorded: set = field(default_factory=set)

    @staticmethod
    def empty(n_eval: int, eval_offset: int = 0) -> "AccuracyMatrix":
        return AccuracyMatrix(np.full((n_eval, n_eval), np.nan), eval_offset)

    @property
    def n_eval(self) -> int:
        return self.a.shape[0]

    def record_row(self, i: int, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.n_eval,):
            raise ValueError(f"row must have {self.n_eval} entries")
        if values.min() < 0.0 or values.max() > 1.0:
            raise ValueError("accuracies must lie in [0, 1]")
        self.a[i] = values
        self._recorded.add(int(i))


def evaluate_task(net: Network, task_data) -> float:
    """Fraction of the task's test set whose argmax logit equals the label.

    Ties break toward the lowest class index.
    """
    if len(task_data.test_labels) == 0:
        raise ValueError(f"task {task_data.task_id} has an empty test set")
    logits = forward_batch(net, task_data.test_inputs, task_data.task_id)
    return float((logits.argmax(axis=1) == task_data.test_labels).mean())


def average_accuracy(m: AccuracyMatrix) -> float:
    """Mean of the final row over evaluated tasks."""
    last = m.n_eval - 1
    if last not in m._recorded:
        raise ValueError("final row not recorded yet")
    return float(m.a[last].mean())


def max_forgetting(m: AccuracyMatrix, from_row_j: bool = False) -> float:
    """Mean over tasks j < T of the largest drop max_l (a[l][j] - a[T][j]).

    The maximum runs over all rows l < T by default; with from_row_j it runs
    only over rows l >= j (measurements taken after task j was trained).
    """
    T = m.n_eval
    if T < 2:
        raise ValueError("forgetting needs at least two evaluated tasks")
    if any(i not in m._recorded for i in range(T)):
        raise ValueError("all rows must be recorded")
    drops = []
    for j in range(T - 1):
        lo = j if from_row_j else 0
        drops.append((m.a[lo:T - 1, j] - m.a[T - 1, j]).max())
    return float(np.mean(drops))

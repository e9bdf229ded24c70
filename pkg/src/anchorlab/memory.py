"""Episodic memory: per-(task, class) FIFO ring buffers with uniform sampling.

Each (task_id, label) slot keeps the last m examples observed for that pair,
so the total footprint grows linearly in the number of tasks for fixed m.
Sampling flattens the slots in sorted key order (insertion order within a
slot) and draws uniformly without replacement using only the supplied rng,
which keeps draws reproducible across learners sharing a seed.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .nn import Batch


@dataclass
class RingMemory:
    m: int
    slots: dict = field(default_factory=dict)
    input_dim: int = 0

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("memory capacity m must be >= 1")

    @property
    def total_count(self) -> int:
        return sum(len(s) for s in self.slots.values())


def memory_add(mem: RingMemory, batch: Batch) -> RingMemory:
    """Append each triplet to its (task_id, label) slot, evicting the oldest
    entry of a full slot. Mutates and returns mem."""
    if len(batch):
        mem.input_dim = batch.inputs.shape[1]
    for x, y, t in zip(batch.inputs, batch.labels, batch.task_ids):
        key = (int(t), int(y))
        if key not in mem.slots:
            mem.slots[key] = deque(maxlen=mem.m)
        mem.slots[key].append(x.copy())
    return mem


def memory_entries(mem: RingMemory) -> Batch:
    """Every stored triplet, in the deterministic flat order used for sampling
    (sorted slot keys, insertion order within each slot)."""
    xs, ys, ts = [], [], []
    for (t, y) in sorted(mem.slots):
        for x in mem.slots[(t, y)]:
            xs.append(x)
            ys.append(y)
            ts.append(t)
    if not xs:
        return Batch(np.zeros((0, mem.input_dim)), np.zeros(0, dtype=np.int64),
                     np.zeros(0, dtype=np.int64))
    return Batch(np.stack(xs), np.array(ys, dtype=np.int64), np.array(ts, dtype=np.int64))


def memory_sample(mem: RingMemory, n: int, rng: np.random.Generator,
                  exclude_task: int | None = None) -> Batch:
    """min(n, stored) triplets drawn uniformly without replacement.

    An empty memory yields an empty batch and consumes no rng state.
    exclude_task hides that task's slots from the draw.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    xs, ys, ts = [], [], []
    for (t, y) in sorted(mem.slots):
        if t == exclude_task:
            continue
        for x in mem.slots[(t, y)]:
            xs.append(x)
            ys.append(y)
            ts.append(t)
    total = len(xs)
    if total == 0:
        return Batch(np.zeros((0, mem.input_dim)), np.zeros(0, dtype=np.int64),
                     np.zeros(0, dtype=np.int64))
    pick = rng.choice(total, size=min(n, total), replace=False)
    return Batch(np.stack([xs[i] for i in pick]),
                 np.array([ys[i] for i in pick], dtype=np.int64),
                 np.array([ts[i] for i in pick], dtype=np.int64))

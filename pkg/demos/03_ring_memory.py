"""
Episodic memory as per-class FIFO rings
========================================

"""

import numpy as np

from anchorlab.memory import RingMemory, memory_add, memory_sample
from anchorlab.nn import Batch


def tagged(task, label, tags):
    """A batch whose first input coordinate encodes an identifying tag."""
    x = np.zeros((len(tags), 4))
    x[:, 0] = tags
    return Batch(x, np.full(len(tags), label, dtype=np.int64),
                 np.full(len(tags), task, dtype=np.int64))


# one ring per (task, class) slot holds the m most recent examples; older
# entries fall out in arrival order
mem = RingMemory(m=3)
memory_add(mem, tagged(0, 0, [10, 11, 12, 13, 14]))
print("slot (0,0) after five arrivals with m=3:",
      [int(v[0]) for v in mem.slots[(0, 0)]])

# memory grows linearly with the number of tasks seen, not with the
# stream length: t tasks of c classes hold at most t*c*m examples
mem = RingMemory(m=2)
for t in range(6):
    for c in range(3):
        memory_add(mem, tagged(t, c, [100 * t + c] * 7))
    print(f"after task {t}: {mem.total_count} stored")

# sampling is uniform over everything stored, without replacement inside
# one draw
rng = np.random.default_rng(0)
counts = {}
for _ in range(30_000):
    got = memory_sample(mem, 1, rng)
    key = (int(got.task_ids[0]), int(got.labels[0]))
    counts[key] = counts.get(key, 0) + 1
values = np.array(sorted(counts.values()))
print(f"{len(counts)} slots hit, counts between {values.min()} and "
      f"{values.max()}, uniform expectation {2 * 30_000 // mem.total_count}")

# replay can exclude the task currently being learned so the learner
# never rehearses what it is already seeing
got = memory_sample(mem, 36, rng, exclude_task=5)
print(f"draw of 36 excluding task 5 returned {len(got)} examples, "
      f"tasks {sorted(set(int(t) for t in got.task_ids))}")

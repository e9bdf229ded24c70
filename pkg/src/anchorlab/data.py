"""Dataset ingestion and seeded construction of continual-learning task streams.

Two data sources: IDX binary files (big-endian, the classic handwritten-digit
distribution format) and a synthetic Gaussian-blob generator for offline work.
A task stream turns one base dataset into an ordered sequence of tasks via a
transform protocol: ``permute`` (fixed random pixel permutation per task),
``rotate`` (fixed random rotation per task), or ``split`` (disjoint class
subsets with head-local labels).

Seeding: the stream seed (an int or a numpy SeedSequence) is split with
SeedSequence.spawn into one child per task plus one stream-global child; each
task child is split again into a transform stream and a data-order stream.
Draw counts in one stream therefore never perturb any other stream.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Batch

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


class DataError(ValueError):
    """Dataset-level failure (bad files, impossible stream parameters)."""


@dataclass
class Dataset:
    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    n_classes: int
    image_shape: tuple[int, int] | None = None

    def __post_init__(self):
        self.train_inputs = np.asarray(self.train_inputs, dtype=np.float64)
        self.test_inputs = np.asarray(self.test_inputs, dtype=np.float64)
        self.train_labels = np.asarray(self.train_labels, dtype=np.int64)
        self.test_labels = np.asarray(self.test_labels, dtype=np.int64)
        for X in (self.train_inputs, self.test_inputs):
            if X.ndim != 2 or X.shape[1] != self.input_dim:
                raise DataError("train and test inputs must share one input dimension")
            if X.size and (X.min() < -1e-9 or X.max() > 1 + 1e-9):
                raise DataError("inputs must lie in [0, 1]")
        for X, y in ((self.train_inputs, self.train_labels),
                     (self.test_inputs, self.test_labels)):
            if len(X) != len(y):
                raise DataError("inputs and labels must have equal length")
            if len(y) and (y.min() < 0 or y.max() >= self.n_classes):
                raise DataError(f"labels must lie in [0, {self.n_classes})")

    @property
    def input_dim(self) -> int:
        return self.train_inputs.shape[1]


# ------------------------------------------------------------------ IDX files

def _read_exact(f, n: int, path, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataError(f"truncated IDX file {path}: expected {n} more bytes for {what}")
    return buf


def _read_be32(f, path, what):
    return int.from_bytes(_read_exact(f, 4, path, what), "big")


def load_idx(images_path, labels_path) -> tuple[np.ndarray, np.ndarray]:
    """Parse an IDX image/label file pair.

    Returns (inputs, labels): inputs are (n, rows*cols) float64 pixel values
    divided by 255, labels are (n,) integers. Wrong magic numbers, truncated
    payloads and image/label count mismatches are reported as distinct
    DataError messages.
    """
    with open(images_path, "rb") as f:
        magic = _read_be32(f, images_path, "magic")
        if magic != IDX_IMAGES_MAGIC:
            raise DataError(f"bad image magic 0x{magic:08x} in {images_path} "
                            f"(expected 0x{IDX_IMAGES_MAGIC:08x})")
        n, rows, cols = (_read_be32(f, images_path, "dimensions") for _ in range(3))
        raw = _read_exact(f, n * rows * cols, images_path, f"{n} images of {rows}x{cols}")
        inputs = np.frombuffer(raw, dtype=np.uint8).reshape(n, rows * cols) / 255.0
    with open(labels_path, "rb") as f:
        magic = _read_be32(f, labels_path, "magic")
        if magic != IDX_LABELS_MAGIC:
            raise DataError(f"bad label magic 0x{magic:08x} in {labels_path} "
                            f"(expected 0x{IDX_LABELS_MAGIC:08x})")
        m = _read_be32(f, labels_path, "count")
        labels = np.frombuffer(_read_exact(f, m, labels_path, f"{m} labels"),
                               dtype=np.uint8).astype(np.int64)
    if n != m:
        raise DataError(f"image/label count mismatch: {n} images vs {m} labels")
    return inputs, labels


def write_idx_images(path, images: np.ndarray) -> None:
    """Write (n, rows, cols) uint8 pixel data in IDX format (inverse of load_idx)."""
    images = np.asarray(images, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(path, "wb") as f:
        for v in (IDX_IMAGES_MAGIC, n, rows, cols):
            f.write(int(v).to_bytes(4, "big"))
        f.write(images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, "wb") as f:
        for v in (IDX_LABELS_MAGIC, len(labels)):
            f.write(int(v).to_bytes(4, "big"))
        f.write(labels.tobytes())


def load_idx_dataset(train_images, train_labels, test_images, test_labels) -> Dataset:
    """Assemble a Dataset from two IDX pairs, recording the image shape."""
    with open(train_images, "rb") as f:
        header = f.read(16)
    if len(header) < 16:
        raise DataError(f"truncated IDX file {train_images}: no header")
    rows = int.from_bytes(header[8:12], "big")
    cols = int.from_bytes(header[12:16], "big")
    tr_x, tr_y = load_idx(train_images, train_labels)
    te_x, te_y = load_idx(test_images, test_labels)
    n_classes = int(max(tr_y.max(), te_y.max())) + 1
    return Dataset(tr_x, tr_y, te_x, te_y, n_classes, image_shape=(rows, cols))


# ------------------------------------------------------------------ synthetic

def make_synthetic(n_classes: int, dim: int, n_train_per_class: int,
                   n_test_per_class: int, seed=0) -> Dataset:
    """Gaussian blobs with unit-separated class means, sigma 0.15, clipped to [0,1].

    Class c's mean sits at 0.15 + e_c / sqrt(2) (a scaled one-hot corner), so
    every pair of means is exactly distance 1 apart; this requires
    n_classes <= dim.
    """
    if n_classes <= 0 or dim <= 0 or n_train_per_class <= 0 or n_test_per_class <= 0:
        raise ValueError("all synthetic dataset counts must be positive")
    if n_classes > dim:
        raise ValueError(f"unit-separated means need n_classes <= dim, "
                         f"got {n_classes} > {dim}")
    rng = np.random.default_rng(seed)
    means = np.full((n_classes, dim), 0.15)
    means[np.arange(n_classes), np.arange(n_classes)] += 1.0 / np.sqrt(2.0)

    def draw(per_class):
        X = np.concatenate([rng.normal(means[c], 0.15, size=(per_class, dim))
                            for c in range(n_classes)])
        y = np.repeat(np.arange(n_classes), per_class)
        order = rng.permutation(len(y))
        return np.clip(X[order], 0.0, 1.0), y[order]

    tr_x, tr_y = draw(n_train_per_class)
    te_x, te_y = draw(n_test_per_class)
    return Dataset(tr_x, tr_y, te_x, te_y, n_classes)


# ------------------------------------------------------------------ transforms

def permute_pixels(input: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """output[..., i] = input[..., perm[i]]; perm must be a bijection."""
    perm = np.asarray(perm, dtype=np.int64)
    x = np.asarray(input)
    if not np.array_equal(np.sort(perm), np.arange(x.shape[-1])):
        raise ValueError("perm is not a bijection on the pixel indices")
    return x[..., perm]


def _rotation_maps(image_shape, angle_degrees):
    """Flat source indices and bilinear weights for one rotation angle.

    Returns (idx, wts), both (4, pixels): destination pixel p is the weighted
    sum over k of wts[k, p] * source_flat[idx[k, p]]. Sources outside the grid
    carry weight 0. Source coordinates within 1e-9 of a grid line are snapped,
    so angle 180 degenerates to the exact map (r, c) -> (h-1-r, w-1-c).
    """
    h, w = image_shape
    th = np.deg2rad(angle_degrees)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    rr, cc = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy, dx = rr - cy, cc - cx
    cos, sin = np.cos(th), np.sin(th)
    sy = (cy + dy * cos - dx * sin).ravel()
    sx = (cx + dy * sin + dx * cos).ravel()

    def split(coord):
        lo = np.floor(coord)
        frac = coord - lo
        snap_low = frac < 1e-9
        frac = np.where(snap_low, 0.0, frac)
        snap_high = frac > 1 - 1e-9
        lo = np.where(snap_high, lo + 1, lo)
        frac = np.where(snap_high, 0.0, frac)
        return lo.astype(np.int64), frac

    r0, fr = split(sy)
    c0, fc = split(sx)
    idx, wts = [], []
    for dr, wr in ((0, 1 - fr), (1, fr)):
        for dc, wc in ((0, 1 - fc), (1, fc)):
            r, c = r0 + dr, c0 + dc
            ok = (r >= 0) & (r < h) & (c >= 0) & (c < w)
            idx.append(np.where(ok, r * w + c, 0))
            wts.append(np.where(ok, wr * wc, 0.0))
    return np.stack(idx), np.stack(wts)


def _apply_rotation(X: np.ndarray, maps) -> np.ndarray:
    idx, wts = maps
    out = np.zeros_like(X)
    for k in range(4):
        out += wts[k] * X[..., idx[k]]
    return out


def rotate_image(input: np.ndarray, image_shape, angle_degrees: float) -> np.ndarray:
    """Rotate a flattened image about its geometric center with bilinear sampling."""
    x = np.asarray(input, dtype=np.float64)
    h, w = image_shape
    if x.shape[-1] != h * w:
        raise ValueError(f"input length {x.shape[-1]} != {h}*{w}")
    return _apply_rotation(x, _rotation_maps(image_shape, angle_degrees))


# ------------------------------------------------------------------ task streams

@dataclass
class TaskData:
    task_id: int
    train_inputs: np.ndarray
    train_labels: np.ndarray
    test_inputs: np.ndarray
    test_labels: np.ndarray
    transform: tuple
    is_cv: bool = False
    consumed: int = field(default=0, compare=False)

    def train_batches(self, batch_size: int):
        """One pass over the task's training triplets, in stream order.

        Non-CV tasks are single-pass: asking for a second pass raises.
        """
        if self.consumed and not self.is_cv:
            raise RuntimeError(f"task {self.task_id} allows a single training pass")
        self.consumed += 1
        n = len(self.train_labels)
        ids = np.full(batch_size, self.task_id, dtype=np.int64)
        for i in range(0, n, batch_size):
            j = min(i + batch_size, n)
            yield Batch(self.train_inputs[i:j], self.train_labels[i:j], ids[:j - i])


@dataclass
class TaskStream:
    tasks: list[TaskData]
    protocol: str
    n_tasks: int
    cv_tasks: int


def build_task_stream(dataset: Dataset, protocol: str, n_tasks: int,
                      samples_per_task: int, classes_per_task: int | None = None,
                      seed=0, cv_tasks: int = 0) -> TaskStream:
    """Ordered tasks derived from one base dataset by a seeded transform protocol.

    permute/rotate: every task sees all classes through its own fixed pixel
    transform; the full transformed test split is attached to each task.
    split: tasks own disjoint class subsets with labels remapped to head-local
    indices; samples_per_task training examples are drawn per task.
    """
    if protocol not in ("permute", "rotate", "split"):
        raise DataError(f"unknown protocol {protocol!r}")
    if n_tasks <= 0 or samples_per_task <= 0:
        raise DataError("n_tasks and samples_per_task must be positive")
    if protocol == "split":
        if not classes_per_task or classes_per_task <= 0:
            raise DataError("split protocol needs classes_per_task")
        if n_tasks * classes_per_task > dataset.n_classes:
            raise DataError(f"split needs {n_tasks}*{classes_per_task} <= "
                            f"{dataset.n_classes} classes")
    elif samples_per_task > len(dataset.train_labels):
        raise DataError(f"samples_per_task {samples_per_task} exceeds the "
                        f"{len(dataset.train_labels)} available training examples")
    if protocol == "rotate" and dataset.image_shape is None:
        raise DataError("rotate protocol needs image-shaped inputs")

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    global_ss, tasks_parent = ss.spawn(2)
    task_seeds = tasks_parent.spawn(n_tasks)
    class_order = np.random.default_rng(global_ss).permutation(dataset.n_classes)

    tasks = []
    for t in range(n_tasks):
        tf_ss, order_ss = task_seeds[t].spawn(2)
        tf_rng = np.random.default_rng(tf_ss)
        order_rng = np.random.default_rng(order_ss)
        if protocol == "split":
            classes = tuple(int(c) for c in class_order[t * classes_per_task:
                                                        (t + 1) * classes_per_task])
            relabel = {c: i for i, c in enumerate(classes)}
            tr_mask = np.isin(dataset.train_labels, classes)
            pool_x = dataset.train_inputs[tr_mask]
            pool_y = dataset.train_labels[tr_mask]
            if samples_per_task > len(pool_y):
                raise DataError(f"task {t}: only {len(pool_y)} examples for "
                                f"classes {classes}")
            pick = order_rng.choice(len(pool_y), size=samples_per_task, replace=False)
            te_mask = np.isin(dataset.test_labels, classes)
            tasks.append(TaskData(
                t, pool_x[pick],
                np.array([relabel[int(c)] for c in pool_y[pick]], dtype=np.int64),
                dataset.test_inputs[te_mask],
                np.array([relabel[int(c)] for c in dataset.test_labels[te_mask]],
                         dtype=np.int64),
                transform=("split", classes), is_cv=t < cv_tasks))
            continue
        if protocol == "permute":
            perm = tf_rng.permutation(dataset.input_dim)
            tf, desc = (lambda X, p=perm: X[:, p]), ("permute", perm)
        else:
            angle = float(tf_rng.uniform(0.0, 180.0))
            maps = _rotation_maps(dataset.image_shape, angle)
            tf, desc = (lambda X, m=maps: _apply_rotation(X, m)), ("rotate", angle)
        pick = order_rng.choice(len(dataset.train_labels), size=samples_per_task,
                                replace=False)
        tasks.append(TaskData(
            t, tf(dataset.train_inputs[pick]), dataset.train_labels[pick].copy(),
            tf(dataset.test_inputs), dataset.test_labels.copy(),
            transform=desc, is_cv=t < cv_tasks))
    return TaskStream(tasks, protocol, n_tasks, cv_tasks)

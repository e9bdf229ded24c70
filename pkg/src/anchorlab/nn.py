"""Dense-network numerical core.

A Network is a plain container of float64 weight matrices and bias vectors.
Hidden layers apply ReLU, the output layer is linear (logits). The feature
extractor is the network up to and including the last hidden activation; the
final linear layer is the classifier.

Multi-head networks carve the output layer into contiguous slices of
``head_size`` logits, one slice per task; ``task_id`` selects the slice.
Single-head networks (``head_size is None``) expose the full output vector to
every task. Labels are always head-local class indices.

Everything here is a pure function: no operation mutates its arguments.
Gradients are exact (hand-derived backpropagation), which the tests pin
against central finite differences.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Network:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]  # weights[l] has shape (layer_sizes[l+1], layer_sizes[l])
    biases: list[np.ndarray]   # biases[l] has shape (layer_sizes[l+1],)
    head_size: int | None = None

    def __post_init__(self):
        ls = tuple(int(s) for s in self.layer_sizes)
        if len(ls) < 2 or any(s <= 0 for s in ls):
            raise ValueError(f"need >= 2 positive layer sizes, got {ls}")
        self.layer_sizes = ls
        if len(self.weights) != len(ls) - 1 or len(self.biases) != len(ls) - 1:
            raise ValueError("one weight matrix and bias vector per layer required")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (ls[l + 1], ls[l]) or b.shape != (ls[l + 1],):
                raise ValueError(f"layer {l}: bad shapes {w.shape}, {b.shape}")
        if self.head_size is not None:
            if self.head_size <= 0 or ls[-1] % self.head_size != 0:
                raise ValueError("head_size must divide the output dimension")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def head_bounds(self, task_id: int) -> tuple[int, int]:
        """(start, stop) of the output slice owned by task_id."""
        if self.head_size is None:
            return 0, self.output_dim
        lo = int(task_id) * self.head_size
        if task_id < 0 or lo + self.head_size > self.output_dim:
            raise ValueError(f"unknown task_id {task_id} for head_size {self.head_size}")
        return lo, lo + self.head_size

    def copy(self) -> "Network":
        return Network(self.layer_sizes, [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases], self.head_size)


@dataclass
class Gradient:
    """Parameter-shaped value supporting elementwise arithmetic and flattening."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def __add__(self, other: "Gradient") -> "Gradient":
        return Gradient([a + b for a, b in zip(self.weights, other.weights)],
                        [a + b for a, b in zip(self.biases, other.biases)])

    def __mul__(self, c: float) -> "Gradient":
        return Gradient([c * w for w in self.weights], [c * b for b in self.biases])

    __rmul__ = __mul__


def zeros_grad(net: Network) -> Gradient:
    return Gradient([np.zeros_like(w) for w in net.weights],
                    [np.zeros_like(b) for b in net.biases])


def params_flat(net: Network) -> np.ndarray:
    return Gradient(net.weights, net.biases).flat()


def with_params_flat(net: Network, vec: np.ndarray) -> Network:
    """Rebuild a network from a flat parameter vector (inverse of params_flat)."""
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (net.n_params,):
        raise ValueError(f"expected {net.n_params} parameters, got {vec.shape}")
    ws, bs, i = [], [], 0
    for w, b in zip(net.weights, net.biases):
        ws.append(vec[i:i + w.size].reshape(w.shape).copy())
        i += w.size
        bs.append(vec[i:i + b.size].copy())
        i += b.size
    return Network(net.layer_sizes, ws, bs, net.head_size)


def grad_from_flat(net: Network, vec: np.ndarray) -> Gradient:
    g = with_params_flat(net, vec)
    return Gradient(g.weights, g.biases)


@dataclass
class Batch:
    """Aligned (inputs, labels, task_ids) triplets. Labels are head-local."""

    inputs: np.ndarray    # (n, input_dim)
    labels: np.ndarray    # (n,)
    task_ids: np.ndarray  # (n,)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.task_ids = np.asarray(self.task_ids, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a (n, d) array")
        n = self.inputs.shape[0]
        if self.labels.shape != (n,) or self.task_ids.shape != (n,):
            raise ValueError("inputs, labels and task_ids must have equal length")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def concat_batches(a: Batch, b: Batch) -> Batch:
    if len(a) == 0:
        return b
    if len(b) == 0:
        return a
    return Batch(np.concatenate([a.inputs, b.inputs]),
                 np.concatenate([a.labels, b.labels]),
                 np.concatenate([a.task_ids, b.task_ids]))


def init_network(layer_sizes, head_size: int | None = None, seed=0) -> Network:
    """Fresh network with uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights.

    Biases start at zero. Weights are drawn layer by layer in order, so the
    result is a deterministic function of the seed (an int or a
    numpy SeedSequence).
    """
    ls = [int(s) for s in layer_sizes]
    if len(ls) < 2 or any(s <= 0 for s in ls):
        raise ValueError(f"need >= 2 positive layer sizes, got {layer_sizes}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(ls[:-1], ls[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return Network(tuple(ls), ws, bs, head_size)


def _trunk(net: Network, X: np.ndarray):
    """Forward pass. Returns (activations, pre-activations); acts[0] is X."""
    acts = [X]
    zs = []
    a = X
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        zs.append(z)
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return acts, zs


def _check_input(net: Network, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != net.input_dim:
        raise ValueError(f"input dim {X.shape[-1]} != {net.input_dim}")
    return X


def forward(net: Network, x: np.ndarray, task_id: int = 0) -> np.ndarray:
    """Logits for one input under the head of task_id."""
    x = _check_input(net, x)
    acts, _ = _trunk(net, x[None, :])
    lo, hi = net.head_bounds(task_id)
    return acts[-1][0, lo:hi]


def forward_batch(net: Network, X: np.ndarray, task_id: int = 0) -> np.ndarray:
    """(n, head) logits for a batch that all belongs to one task."""
    X = _check_input(net, X)
    acts, _ = _trunk(net, X)
    lo, hi = net.head_bounds(task_id)
    return acts[-1][:, lo:hi]


def forward_heads(net: Network, X: np.ndarray, task_ids) -> np.ndarray:
    """(n, head) logits where row i is scored under example i's own task head."""
    X = _check_input(net, X)
    task_ids = np.asarray(task_ids, dtype=np.int64)
    acts, _ = _trunk(net, X)
    cols = _head_cols(net, task_ids)
    return acts[-1][np.arange(X.shape[0])[:, None], cols]


def ce_loss_batch(net: Network, X: np.ndarray, labels, task_ids) -> np.ndarray:
    """Per-example cross-entropy losses under each example's task head."""
    X = _check_input(net, X)
    acts, _ = _trunk(net, X)
    losses, _ = _ce_delta(net, acts[-1], np.asarray(labels, dtype=np.int64),
                          np.asarray(task_ids, dtype=np.int64))
    return losses


def feature_embed(net: Network, x: np.ndarray) -> np.ndarray:
    """Last hidden activation (the feature extractor output), length = last hidden size."""
    x = _check_input(net, x)
    acts, _ = _trunk(net, x[None, :])
    return acts[-2][0]


def feature_embed_batch(net: Network, X: np.ndarray) -> np.ndarray:
    X = _check_input(net, X)
    acts, _ = _trunk(net, X)
    return acts[-2]


def ce_loss(logits: np.ndarray, label: int) -> float:
    """Softmax cross-entropy with max-subtraction stabilization."""
    logits = np.asarray(logits, dtype=np.float64)
    if not 0 <= label < logits.shape[0]:
        raise ValueError(f"label {label} out of range for {logits.shape[0]} logits")
    m = logits.max()
    return float(np.log(np.exp(logits - m).sum()) - (logits[label] - m))


def _head_cols(net: Network, task_ids: np.ndarray) -> np.ndarray:
    """(n, head) column indices of each example's output slice."""
    d_out = net.output_dim
    hs = net.head_size if net.head_size is not None else d_out
    if net.head_size is None:
        offsets = np.zeros(len(task_ids), dtype=np.int64)
    else:
        offsets = task_ids * hs
        if (task_ids < 0).any() or (offsets + hs > d_out).any():
            bad = task_ids[(task_ids < 0) | (offsets + hs > d_out)][0]
            raise ValueError(f"unknown task_id {bad} for head_size {hs}")
    return offsets[:, None] + np.arange(hs)[None, :]


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _backprop(net: Network, acts, zs, delta_out: np.ndarray,
              want_params: bool = True, want_inputs: bool = False):
    """Backpropagate an output-layer delta. Returns (Gradient | None, input grads | None)."""
    gw = [None] * len(net.weights)
    gb = [None] * len(net.biases)
    d = delta_out
    for l in range(len(net.weights) - 1, -1, -1):
        if want_params:
            gw[l] = d.T @ acts[l]
            gb[l] = d.sum(axis=0)
        if l > 0:
            d = (d @ net.weights[l]) * (zs[l - 1] > 0)
    gx = d @ net.weights[0] if want_inputs else None
    grad = Gradient(gw, gb) if want_params else None
    return grad, gx


def _ce_delta(net: Network, logits_full: np.ndarray, labels: np.ndarray,
              task_ids: np.ndarray):
    """Per-example CE losses and the (n, d_out) delta of the summed loss."""
    n = logits_full.shape[0]
    cols = _head_cols(net, task_ids)
    rows = np.arange(n)[:, None]
    sub = logits_full[rows, cols]
    if (labels < 0).any() or (labels >= sub.shape[1]).any():
        raise ValueError("label out of range for its task head")
    p = _softmax_rows(sub)
    m = sub.max(axis=1, keepdims=True)
    losses = np.log(np.exp(sub - m).sum(axis=1)) - (sub[np.arange(n), labels] - m[:, 0])
    dsub = p.copy()
    dsub[np.arange(n), labels] -= 1.0
    delta = np.zeros_like(logits_full)
    delta[rows, cols] = dsub
    return losses, delta


def batch_loss_and_grad(net: Network, batch: Batch) -> tuple[float, Gradient]:
    """Mean cross-entropy over the batch and its exact parameter gradient.

    Each example is scored under its own task head; in multi-head mode the
    gradient touches only the active head slices of the final layer.
    """
    if len(batch) == 0:
        raise ValueError("empty batch")
    X = _check_input(net, batch.inputs)
    acts, zs = _trunk(net, X)
    losses, delta = _ce_delta(net, acts[-1], batch.labels, batch.task_ids)
    grad, _ = _backprop(net, acts, zs, delta / len(batch))
    return float(losses.mean()), grad


def input_grad(net: Network, x: np.ndarray, label: int, task_id: int = 0) -> np.ndarray:
    """Gradient of the cross-entropy loss with respect to the input."""
    return input_grad_batch(net, np.asarray(x, dtype=np.float64)[None, :],
                            np.array([label]), np.array([task_id]))[0]


def input_grad_batch(net: Network, X: np.ndarray, labels, task_ids) -> np.ndarray:
    """Row i is the input gradient of example i's own (unaveraged) CE loss."""
    X = _check_input(net, X)
    labels = np.asarray(labels, dtype=np.int64)
    task_ids = np.asarray(task_ids, dtype=np.int64)
    acts, zs = _trunk(net, X)
    _, delta = _ce_delta(net, acts[-1], labels, task_ids)
    _, gx = _backprop(net, acts, zs, delta, want_params=False, want_inputs=True)
    return gx


def sgd_step(net: Network, grad: Gradient, lr: float) -> Network:
    """New network with every parameter moved to p - lr * g."""
    if lr < 0:
        raise ValueError(f"negative learning rate {lr}")
    for w, gw in zip(net.weights, grad.weights):
        if w.shape != gw.shape:
            raise ValueError(f"gradient shape {gw.shape} != parameter shape {w.shape}")
    return Network(net.layer_sizes,
                   [w - lr * gw for w, gw in zip(net.weights, grad.weights)],
                   [b - lr * gb for b, gb in zip(net.biases, grad.biases)],
                   net.head_size)


def anchor_l2_loss_and_grad(net: Network, inputs: np.ndarray, targets: np.ndarray,
                            task_ids) -> tuple[float, Gradient]:
    """Sum over anchors of the squared distance between head logits and targets.

    Targets are constants (no gradient flows through them). Returns the summed
    loss and its exact parameter gradient.
    """
    X = _check_input(net, inputs)
    targets = np.asarray(targets, dtype=np.float64)
    task_ids = np.asarray(task_ids, dtype=np.int64)
    acts, zs = _trunk(net, X)
    cols = _head_cols(net, task_ids)
    rows = np.arange(X.shape[0])[:, None]
    diff = acts[-1][rows, cols] - targets
    delta = np.zeros_like(acts[-1])
    delta[rows, cols] = 2.0 * diff
    grad, _ = _backprop(net, acts, zs, delta)
    return float((diff ** 2).sum()), grad


def embed_grad_l2(net: Network, anchor_input: np.ndarray, target_logits: np.ndarray,
                  task_id: int = 0) -> Gradient:
    """Parameter gradient of ||forward(net, anchor, task) - target||^2."""
    target_logits = np.asarray(target_logits, dtype=np.float64)
    lo, hi = net.head_bounds(task_id)
    if target_logits.shape != (hi - lo,):
        raise ValueError(f"target length {target_logits.shape} != head size {hi - lo}")
    _, grad = anchor_l2_loss_and_grad(net, np.asarray(anchor_input)[None, :],
                                      target_logits[None, :], np.array([task_id]))
    return grad


def embed_dist_grad_batch(net: Network, X: np.ndarray,
                          target_embed: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Squared feature-space distances to a fixed embedding and their input gradients.

    Returns (dists (n,), grads (n, d)) where dists[i] = ||phi(x_i) - target||^2
    and grads[i] is its gradient with respect to x_i.
    """
    X = _check_input(net, X)
    target = np.asarray(target_embed, dtype=np.float64)
    zs = []
    a = X
    for w, b in zip(net.weights[:-1], net.biases[:-1]):
        z = a @ w.T + b
        zs.append(z)
        a = np.maximum(z, 0.0)
    diff = a - target
    if not zs:  # no hidden layers: phi is the identity
        return (diff ** 2).sum(axis=1), 2.0 * diff
    d = 2.0 * diff
    # walk back through the hidden stack only (the classifier layer is not part of phi)
    for l in range(len(zs) - 1, 0, -1):
        d = (d * (zs[l] > 0)) @ net.weights[l]
    gx = (d * (zs[0] > 0)) @ net.weights[0]
    return (diff ** 2).sum(axis=1), gx

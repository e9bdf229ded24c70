"""Hindsight-anchored learning.

The strategy extends experience replay with a per-update regularizer that
pins the network's predictions at a small set of learned anchor inputs, one
per class per completed task. Each update is two-step: a temporary replay
step produces theta-tilde, whose predictions at the anchors are recorded as
constant targets; the real step then starts again from the pre-update
parameters and descends the replay gradient plus lambda times the gradient of
the summed squared drift between current and target anchor predictions.

At the end of each task the learner fine-tunes a throwaway copy of its
network for one epoch on the episodic memory (the hindsight model), then
builds the task's anchors by gradient ascent in input space: an anchor climbs
the loss gap between the hindsight model and the live model (a proxy for how
badly a point will be forgotten) while being pulled toward the task's mean
feature embedding, a running average maintained during training and discarded
once the anchors are built.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .learners import HyperParams, LearnerState, _replay_sample
from .memory import RingMemory, memory_add, memory_entries
from .nn import (
    Batch,
    Network,
    anchor_l2_loss_and_grad,
    batch_loss_and_grad,
    ce_loss_batch,
    concat_batches,
    embed_dist_grad_batch,
    feature_embed_batch,
    forward_heads,
    input_grad_batch,
    sgd_step,
)


@dataclass
class MeanEmbedding:
    """Running mean of feature embeddings: phi <- beta*phi + (1-beta)*batch mean."""

    phi: np.ndarray
    beta: float


def update_mean_embedding(me: MeanEmbedding, net: Network, batch: Batch) -> MeanEmbedding:
    if len(batch) == 0:
        raise ValueError("empty batch")
    emb = feature_embed_batch(net, batch.inputs).mean(axis=0)
    return MeanEmbedding(me.beta * me.phi + (1.0 - me.beta) * emb, me.beta)


@dataclass
class AnchorSet:
    """Learned anchor inputs with their labels and owning tasks.

    final_embed_dists records each anchor's feature-space distance to its
    task's mean embedding at the end of anchor training.
    """

    inputs: np.ndarray            # (k, input_dim)
    labels: np.ndarray            # (k,)
    task_ids: np.ndarray          # (k,)
    final_embed_dists: np.ndarray  # (k,)

    @staticmethod
    def empty(input_dim: int) -> "AnchorSet":
        return AnchorSet(np.zeros((0, input_dim)), np.zeros(0, dtype=np.int64),
                         np.zeros(0, dtype=np.int64), np.zeros(0))

    @property
    def count(self) -> int:
        return self.inputs.shape[0]

    def extend(self, other: "AnchorSet") -> "AnchorSet":
        return AnchorSet(np.concatenate([self.inputs, other.inputs]),
                         np.concatenate([self.labels, other.labels]),
                         np.concatenate([self.task_ids, other.task_ids]),
                         np.concatenate([self.final_embed_dists,
                                         other.final_embed_dists]))


def hal_step(state: LearnerState, batch: Batch, anchors: AnchorSet) -> LearnerState:
    """The two-step anchored update.

    (1) sample a replay batch and take a temporary step to theta-tilde;
    (2) record theta-tilde's logits at every past anchor as constant targets;
    (3) from the original parameters, step on the replay gradient plus
        lambda times the anchor-drift gradient (one shared replay sample
        serves both steps);
    (4) fold the incoming batch into the running mean embedding;
    (5) append the incoming batch to memory.

    The drift penalty is the MEAN over anchor points of the squared logit
    distance. Averaging keeps lambda's scale independent of how many tasks
    have passed; a raw sum grows with the anchor set (ten per task here)
    until it swamps the data term, which contradicts a single tuned lambda
    staying optimal over a long task sequence.
    """
    if anchors.count and (anchors.task_ids >= state.current_task).any():
        raise ValueError("anchors must belong to tasks before the current one")
    hyper = state.hyper
    replay = _replay_sample(state)
    net = state.net
    loss, g = batch_loss_and_grad(net, concat_batches(batch, replay))
    net_tilde = sgd_step(net, g, hyper.lr)
    targets = None
    anchor_grad = None
    total = g
    if anchors.count and hyper.lam != 0.0:
        targets = forward_heads(net_tilde, anchors.inputs, anchors.task_ids)
        _, anchor_grad = anchor_l2_loss_and_grad(net, anchors.inputs, targets,
                                                 anchors.task_ids)
        anchor_grad = (1.0 / anchors.count) * anchor_grad
        total = g + hyper.lam * anchor_grad
    new_net = sgd_step(net, total, hyper.lr)
    state.last_step_info = {
        "loss": loss, "replay_size": len(replay),
        "net_before": net, "net_tilde": net_tilde, "net_after": new_net,
        "grad": g, "anchor_grad": anchor_grad, "anchor_targets": targets,
    }
    state.net = new_net
    state.mean_embed = update_mean_embedding(state.mean_embed, new_net, batch)
    memory_add(state.mem, batch)
    return state


def finetune_on_memory(net: Network, mem: RingMemory, lr: float,
                       batch_size: int = 10, rng=None) -> Network:
    """One shuffled epoch of plain SGD over the episodic memory, on a copy.

    The caller's network is never touched; an empty memory returns the copy
    unchanged.
    """
    out = net.copy()
    entries = memory_entries(mem)
    if len(entries) == 0:
        return out
    rng = np.random.default_rng(0) if rng is None else rng
    order = rng.permutation(len(entries))
    for i in range(0, len(order), batch_size):
        pick = order[i:i + batch_size]
        sub = Batch(entries.inputs[pick], entries.labels[pick], entries.task_ids[pick])
        _, g = batch_loss_and_grad(out, sub)
        out = sgd_step(out, g, lr)
    return out


def anchor_objective(theta_t: Network, theta_m: Network, phi_t: np.ndarray,
                     inputs: np.ndarray, labels, task_ids,
                     gamma: float) -> np.ndarray:
    """Per-anchor value of the ascent objective: the hindsight-vs-live loss
    gap minus gamma times the squared distance to the mean embedding."""
    gap = (ce_loss_batch(theta_m, inputs, labels, task_ids)
           - ce_loss_batch(theta_t, inputs, labels, task_ids))
    dists, _ = embed_dist_grad_batch(theta_t, inputs, phi_t)
    return gap - gamma * dists


def learn_anchors(theta_t: Network, theta_m: Network, phi_t: np.ndarray,
                  task_id: int, labels, hyper: HyperParams, rng=None,
                  return_trajectory: bool = False):
    """Gradient-ascent construction of one anchor per class label.

    Anchors start from clipped Gaussian noise (mean 0.5, sigma 0.25, clipped
    to [0, 1]) and take hyper.anchor_steps ascent steps at rate hyper.lr on
    the objective above; theta_m may be any hindsight or oracle parameter
    vector sharing theta_t's architecture. The final iterates are stored
    unclipped. Returns an AnchorSet (and the full iterate trajectory when
    return_trajectory is set).
    """
    labels = np.asarray(sorted(int(y) for y in labels), dtype=np.int64)
    ids = np.full(len(labels), int(task_id), dtype=np.int64)
    rng = np.random.default_rng(0) if rng is None else rng
    E = np.clip(rng.normal(0.5, 0.25, size=(len(labels), theta_t.input_dim)), 0.0, 1.0)
    traj = [E.copy()]
    for _ in range(hyper.anchor_steps):
        g_m = input_grad_batch(theta_m, E, labels, ids)
        g_t = input_grad_batch(theta_t, E, labels, ids)
        _, g_e = embed_dist_grad_batch(theta_t, E, phi_t)
        E = E + hyper.lr * (g_m - g_t - hyper.gamma * g_e)
        if return_trajectory:
            traj.append(E.copy())
    dists, _ = embed_dist_grad_batch(theta_t, E, phi_t)
    result = AnchorSet(E, labels, ids, np.sqrt(dists))
    return (result, traj) if return_trajectory else result


def hal_end_task(state: LearnerState, task_id: int) -> LearnerState:
    """End-of-task epilogue: fine-tune a copy on memory, grow the anchor set
    for every class observed in this task, then reset the mean embedding."""
    task_ss = state.hindsight_ss.spawn(1)[0]
    ft_ss, init_ss = task_ss.spawn(2)
    theta_m = finetune_on_memory(state.net, state.mem, state.hyper.lr,
                                 state.hyper.batch_size, np.random.default_rng(ft_ss))
    labels = sorted(y for (t, y) in state.mem.slots if t == task_id)
    if labels:
        new = learn_anchors(state.net, theta_m, state.mean_embed.phi, task_id,
                            labels, state.hyper, np.random.default_rng(init_ss))
        state.anchors = state.anchors.extend(new)
    state.mean_embed = MeanEmbedding(np.zeros_like(state.mean_embed.phi),
                                     state.hyper.beta)
    return state

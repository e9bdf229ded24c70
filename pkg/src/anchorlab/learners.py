"""Learner strategies that consume a task stream one batch at a time.

Every strategy shares the same observe() entry point: exactly one parameter
update per incoming batch, no hidden epochs. Replay-based strategies sample
their replay batch before touching the network and append the incoming batch
to memory afterwards, so within one task the memory already holds earlier
batches of that task.

RNG discipline: a learner owns a dedicated sampling rng, and the hindsight
machinery (fine-tuning shuffles, anchor initialization) draws from a separate
seed sequence. Two learners built from the same seeds therefore make
identical memory-sampling choices regardless of what else they compute, which
is what makes the lambda=0 equivalence between the anchored learner and plain
experience replay exact down to the bit level.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .memory import RingMemory, memory_add, memory_sample
from .nn import Batch, Gradient, Network, batch_loss_and_grad, concat_batches, sgd_step

LEARNER_KINDS = ("finetune", "er", "agem", "hal")


@dataclass
class HyperParams:
    lr: float = 0.1
    batch_size: int = 10
    mem_per_class: int = 1
    lam: float = 0.1
    gamma: float = 0.1
    beta: float = 0.5
    anchor_steps: int = 100

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.mem_per_class < 1:
            raise ValueError("batch_size and mem_per_class must be >= 1")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.anchor_steps < 0 or self.lam < 0 or self.gamma < 0:
            raise ValueError("lam, gamma and anchor_steps must be non-negative")


@dataclass
class LearnerState:
    kind: str
    net: Network
    mem: RingMemory
    hyper: HyperParams
    sample_rng: np.random.Generator
    current_task: int = 0
    exclude_current_task_from_replay: bool = False
    # used by the anchored learner only
    anchors: Optional[object] = None
    mean_embed: Optional[object] = None
    hindsight_ss: Optional[np.random.SeedSequence] = None
    # instrumentation: facts about the most recent update, for tests/debugging
    last_step_info: dict = field(default_factory=dict)


def make_learner(kind: str, net: Network, hyper: HyperParams,
                 sample_rng: np.random.Generator,
                 hindsight_ss: np.random.SeedSequence | None = None,
                 exclude_current_task_from_replay: bool = False) -> LearnerState:
    if kind not in LEARNER_KINDS:
        raise ValueError(f"unknown learner {kind!r}, expected one of {LEARNER_KINDS}")
    state = LearnerState(kind, net, RingMemory(m=hyper.mem_per_class), hyper,
                         sample_rng,
                         exclude_current_task_from_replay=exclude_current_task_from_replay)
    if kind == "hal":
        from .hal import AnchorSet, MeanEmbedding
        state.anchors = AnchorSet.empty(net.input_dim)
        state.mean_embed = MeanEmbedding(np.zeros(net.layer_sizes[-2]), hyper.beta)
        state.hindsight_ss = (hindsight_ss if hindsight_ss is not None
                              else np.random.SeedSequence(0))
    return state


def start_task(state: LearnerState, task_id: int) -> LearnerState:
    state.current_task = int(task_id)
    return state


def observe(state: LearnerState, batch: Batch) -> LearnerState:
    """Apply exactly one strategy-specific update for one incoming batch."""
    if state.kind == "finetune":
        return finetune_step(state, batch)
    if state.kind == "er":
        return er_step(state, batch)
    if state.kind == "agem":
        return agem_step(state, batch)
    from .hal import hal_step
    return hal_step(state, batch, state.anchors)


def end_task(state: LearnerState, task_id: int) -> LearnerState:
    """Per-task epilogue; a no-op for everything except the anchored learner."""
    if state.kind == "hal":
        from .hal import hal_end_task
        return hal_end_task(state, task_id)
    return state


def _replay_sample(state: LearnerState) -> Batch:
    exclude = state.current_task if state.exclude_current_task_from_replay else None
    return memory_sample(state.mem, state.hyper.batch_size, state.sample_rng,
                         exclude_task=exclude)


def finetune_step(state: LearnerState, batch: Batch) -> LearnerState:
    loss, g = batch_loss_and_grad(state.net, batch)
    state.net = sgd_step(state.net, g, state.hyper.lr)
    state.last_step_info = {"loss": loss}
    return state


def er_step(state: LearnerState, batch: Batch) -> LearnerState:
    """One SGD step on the mean loss over the union of the incoming batch and
    a replay batch, then append the incoming batch to memory."""
    replay = _replay_sample(state)
    loss, g = batch_loss_and_grad(state.net, concat_batches(batch, replay))
    state.net = sgd_step(state.net, g, state.hyper.lr)
    memory_add(state.mem, batch)
    state.last_step_info = {"loss": loss, "replay_size": len(replay)}
    return state


def agem_project(g: Gradient, g_ref: Gradient) -> Gradient:
    """Project g onto the half-space of non-negative inner product with g_ref.

    Returns g unchanged when the dot product is already non-negative,
    otherwise g minus its component along g_ref.
    """
    gf, rf = g.flat(), g_ref.flat()
    dot = float(gf @ rf)
    if dot >= 0.0:
        return g
    return g + (-dot / float(rf @ rf)) * g_ref


def agem_step(state: LearnerState, batch: Batch) -> LearnerState:
    """Gradient step with the reference-gradient projection constraint."""
    _, g = batch_loss_and_grad(state.net, batch)
    replay = _replay_sample(state)
    info = {"replay_size": len(replay), "proj_dot": None}
    if len(replay):
        _, g_ref = batch_loss_and_grad(state.net, replay)
        g = agem_project(g, g_ref)
        info["proj_dot"] = float(g.flat() @ g_ref.flat())
    state.net = sgd_step(state.net, g, state.hyper.lr)
    memory_add(state.mem, batch)
    state.last_step_info = info
    return state

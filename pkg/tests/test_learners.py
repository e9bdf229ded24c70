import numpy as np
import pytest

from anchorlab.learners import (
    HyperParams,
    agem_project,
    agem_step,
    er_step,
    finetune_step,
    make_learner,
    observe,
    start_task,
)
from anchorlab.memory import memory_add, memory_sample
from anchorlab.nn import (
    Batch,
    Gradient,
    batch_loss_and_grad,
    concat_batches,
    grad_from_flat,
    init_network,
    sgd_step,
)


def nets_equal(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a.weights, b.weights)) and \
        all(np.array_equal(x, y) for x, y in zip(a.biases, b.biases))


def rand_batch(rng, n=10, d=6, n_classes=3, task=0):
    return Batch(rng.uniform(size=(n, d)), rng.integers(0, n_classes, size=n),
                 np.full(n, task, dtype=np.int64))


def fresh(kind, seed=0, **hp):
    net = init_network([6, 8, 3], seed=seed)
    return make_learner(kind, net, HyperParams(lr=0.1, **hp),
                        np.random.default_rng(seed))


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(lr=0.0)
    with pytest.raises(ValueError):
        HyperParams(lr=0.1, mem_per_class=0)
    with pytest.raises(ValueError):
        HyperParams(lr=0.1, beta=1.5)
    with pytest.raises(ValueError):
        make_learner("sgd", init_network([2, 2], seed=0), HyperParams(lr=0.1),
                     np.random.default_rng(0))


def test_finetune_is_plain_sgd():
    state = fresh("finetune")
    batch = rand_batch(np.random.default_rng(1))
    _, g = batch_loss_and_grad(state.net, batch)
    expected = sgd_step(state.net, g, 0.1)
    observe(state, batch)
    assert nets_equal(state.net, expected)
    assert state.mem.total_count == 0  # finetune never touches memory


def test_er_with_empty_memory_is_finetune():
    er = fresh("er")
    ft = fresh("finetune")
    batch = rand_batch(np.random.default_rng(2))
    observe(er, batch)
    observe(ft, batch)
    assert nets_equal(er.net, ft.net)
    assert er.last_step_info["replay_size"] == 0
    # the batch was added after the update; with m=1 each (task, class) keeps one
    assert er.mem.total_count == len(set(zip(batch.task_ids, batch.labels)))


def test_er_union_mean_over_twenty_triplets():
    state = fresh("er", seed=3, mem_per_class=5)
    rng = np.random.default_rng(3)
    seed_batch = rand_batch(rng, n=10)
    memory_add(state.mem, seed_batch)
    incoming = rand_batch(rng, n=10)
    # replay an identical draw with a cloned generator to predict the update
    shadow = memory_sample(state.mem, 10, np.random.default_rng(3))
    assert len(shadow) == 10
    _, g = batch_loss_and_grad(state.net, concat_batches(incoming, shadow))
    expected = sgd_step(state.net, g, 0.1)
    er_step(state, incoming)
    assert nets_equal(state.net, expected)


def test_er_samples_before_inserting():
    state = fresh("er")
    first = rand_batch(np.random.default_rng(4))
    second = rand_batch(np.random.default_rng(5))
    er_step(state, first)
    assert state.last_step_info["replay_size"] == 0
    er_step(state, second)
    # the first batch was already in memory when the second arrived
    assert state.last_step_info["replay_size"] > 0


def test_agem_project_hand_cases():
    def as_grad(v):
        net = init_network([1, 2], seed=0)
        return grad_from_flat(net, np.asarray(v, dtype=np.float64))

    g = agem_project(as_grad([1.0, 0.0, 0.0, 0.0]), as_grad([0.0, 1.0, 0.0, 0.0]))
    np.testing.assert_array_equal(g.flat(), [1.0, 0.0, 0.0, 0.0])
    g = agem_project(as_grad([-1.0, 1.0, 0.0, 0.0]), as_grad([1.0, 0.0, 0.0, 0.0]))
    np.testing.assert_allclose(g.flat(), [0.0, 1.0, 0.0, 0.0], atol=1e-15)
    ref = as_grad([0.3, -0.7, 0.2, 0.0])
    g = agem_project(as_grad([-0.3, 0.7, -0.2, 0.0]), ref)
    np.testing.assert_allclose(g.flat(), np.zeros(4), atol=1e-15)


def test_agem_empty_memory_is_finetune():
    ag = fresh("agem")
    ft = fresh("finetune")
    batch = rand_batch(np.random.default_rng(6))
    observe(ag, batch)
    observe(ft, batch)
    assert nets_equal(ag.net, ft.net)
    assert ag.last_step_info["proj_dot"] is None


def test_agem_projection_invariant_over_run():
    state = fresh("agem", seed=7)
    rng = np.random.default_rng(7)
    dots = []
    for task in range(3):
        start_task(state, task)
        for _ in range(20):
            agem_step(state, rand_batch(rng, task=0))
            if state.last_step_info["proj_dot"] is not None:
                dots.append(state.last_step_info["proj_dot"])
    assert len(dots) > 0
    assert min(dots) >= -1e-10


def test_observe_counts_one_update_per_batch():
    state = fresh("er", seed=8)
    rng = np.random.default_rng(8)
    seen = []
    for _ in range(5):
        before = state.net
        observe(state, rand_batch(rng))
        seen.append(not nets_equal(before, state.net))
    assert all(seen)

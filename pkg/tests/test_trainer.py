import numpy as np
import pytest

from agglo_mvc.data import synth_blobs
from agglo_mvc.graph import connected_components, laplacian
from agglo_mvc.linalg import sym_eigs_smallest
from agglo_mvc.model import ParameterSet, loss_sc
from agglo_mvc.trainer import (ACCEPT_DOUBLE, RESTORE_HALVE, TERMINATE, AdamState, TrainerConfig, adam_step,
                               initial_state, read_trace, schedule_lambda, train, train_step, update_F,
                               write_trace)
from oracles import block_graph


def scalar(x):
    return ParameterSet(Z={"x": np.array([float(x)])}, W={})


def adam_reference(x, grad, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return x


def test_adam_zero_gradient_is_a_no_op():
    p, state = adam_step(scalar(1.5), scalar(0.0), AdamState(), 0.05)
    assert p.Z["x"][0] == 1.5 and state.t == 1


@pytest.mark.parametrize("g", [3.0, -0.2, 1e-3])
def test_adam_first_step_has_length_lr(g):
    p, _ = adam_step(scalar(0.0), scalar(g), AdamState(), 0.05)
    step = p.Z["x"][0]
    assert np.sign(step) == -np.sign(g)
    assert abs(step) == pytest.approx(0.05 * abs(g) / (abs(g) + 1e-8), rel=1e-12)


def test_adam_quadratic_run():
    p, state = scalar(1.0), AdamState()
    for _ in range(100):
        p, state = adam_step(p, scalar(2.0 * p.Z["x"][0]), state, 0.05)
    assert abs(p.Z["x"][0]) < 0.1
    assert p.Z["x"][0] == pytest.approx(adam_reference(1.0, lambda x: 2 * x, 0.05, 100), abs=1e-12)


def test_adam_does_not_mutate_inputs():
    p, state = scalar(1.0), AdamState()
    adam_step(p, scalar(1.0), state, 0.1)
    assert p.Z["x"][0] == 1.0 and state.t == 0 and not state.m


def test_update_F():
    rng = np.random.default_rng(0)
    S = block_graph(rng, [4, 5, 3])
    F, total = update_F(S, 3)
    assert total < 1e-8
    assert loss_sc(F, S, 1e3) == pytest.approx(0, abs=1e-8)
    np.testing.assert_allclose(F.T @ F, np.eye(3), atol=1e-8)
    ring = np.roll(np.eye(8), 1, axis=1)
    assert update_F(ring, 2)[1] > 1e-3


def test_schedule_examples():
    assert schedule_lambda(15.0, 2, 3, 1e5) == (ACCEPT_DOUBLE, 30.0)
    assert schedule_lambda(8e4, 1, 3, 1e5) == (ACCEPT_DOUBLE, 1e5)
    assert schedule_lambda(64.0, 5, 3, 1e5) == (RESTORE_HALVE, 32.0)
    assert schedule_lambda(64.0, 3, 3, 1e5) == (TERMINATE, 64.0)
    with pytest.raises(ValueError):
        schedule_lambda(1.0, 0, 3, 1e5)


def test_config_defaults_and_validation():
    assert TrainerConfig.for_mode("annld", 3).lr == 0.1
    ann = TrainerConfig.for_mode("ann", 3, lr=None, P=1.2)
    assert (ann.lambda_max, ann.P, ann.lr, ann.r) == (1e5, 1.2, 0.05, 10)
    assert TrainerConfig.from_dict(ann.to_dict()) == ann
    for bad in ({"k": 1}, {"P": 1.0}, {"lambda_init": 2e5}, {"r": 0}, {"lr": 0.0}, {"mode": "x"}):
        with pytest.raises(ValueError):
            TrainerConfig(**{"k": 3, **bad})


def test_initial_components_terminate_immediately():
    ds, st = synth_blobs(20, 3, seed=0)
    res = train(TrainerConfig.for_mode("ann", 3), ds, st)
    assert res.converged and res.iterations == 0 and len(res.trace) == 1
    assert res.trace[0].action == TERMINATE


@pytest.fixture(scope="module")
def touching_blobs():
    """Blobs close enough that the initial kNN graph is one component."""
    ds, st = synth_blobs(30, 3, separation=4.0, seed=0)
    return ds, st


def test_loop_reaches_k_components(touching_blobs):
    ds, st = touching_blobs
    config = TrainerConfig.for_mode("ann", 3, max_iters=300)
    res = train(config, ds, st)
    assert res.trace[0].components < 3
    assert res.converged
    assert connected_components(res.S_c)[0] == 3 == res.components
    eig = sym_eigs_smallest(laplacian(res.S_c), 3)
    assert eig.values.sum() < 1e-6
    actions = [rec.action for rec in res.trace[1:]]
    assert RESTORE_HALVE in actions and actions[-1] == TERMINATE
    for rec in res.trace[1:]:
        assert rec.lam <= config.lambda_max
        if rec.components > 3:
            assert rec.action == RESTORE_HALVE
        elif rec.components < 3:
            assert rec.action == ACCEPT_DOUBLE


def test_training_is_deterministic(touching_blobs):
    ds, st = touching_blobs
    config = TrainerConfig.for_mode("ann", 3, max_iters=40)
    a, b = train(config, ds, st), train(config, ds, st)
    assert [r.row() for r in a.trace] == [r.row() for r in b.trace]
    np.testing.assert_array_equal(a.labels, b.labels)


def test_snapshot_replay_is_exact(touching_blobs):
    ds, st = touching_blobs
    config = TrainerConfig.for_mode("annld", 3)
    state, fixed_D, _ = initial_state(config, ds, st)
    for _ in range(3):
        state, _ = train_step(state, 60.0, config.lr, config, ds, st, fixed_D)
    saved = state.clone()
    a, _ = train_step(state, 60.0, config.lr, config, ds, st, fixed_D)
    b, _ = train_step(saved, 60.0, config.lr, config, ds, st, fixed_D)
    np.testing.assert_array_equal(a.S_c, b.S_c)
    np.testing.assert_array_equal(a.F, b.F)
    for (ref, x), (_, y) in zip(a.params.items(), b.params.items()):
        np.testing.assert_array_equal(x, y, err_msg=str(ref))
    # the step left its starting snapshot untouched
    for (_, x), (_, y) in zip(state.params.items(), saved.params.items()):
        np.testing.assert_array_equal(x, y)


def test_budget_exhaustion_returns_best_state(touching_blobs):
    ds, st = touching_blobs
    res = train(TrainerConfig.for_mode("ann", 3, max_iters=2), ds, st)
    assert not res.converged and res.iterations == 2
    best = min(abs(r.components - 3) for r in res.trace)
    assert abs(res.components - 3) == best


def test_trace_round_trip(tmp_path, touching_blobs):
    ds, st = touching_blobs
    res = train(TrainerConfig.for_mode("ann", 3, max_iters=5), ds, st)
    write_trace(res.trace, tmp_path / "trace.csv")
    back = read_trace(tmp_path / "trace.csv")
    assert [r.row() for r in back] == [r.row() for r in res.trace]


def test_rejects_too_few_samples():
    ds, st = synth_blobs(3, 2, seed=0)
    with pytest.raises(ValueError, match="samples"):
        train(TrainerConfig.for_mode("ann", 2), ds, st)

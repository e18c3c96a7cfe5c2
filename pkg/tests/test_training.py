"""Loop-level behavior: batching, instrumentation, random-drop baseline."""

import numpy as np
import pytest

from epic.data import make_blobs
from epic.defense import DefenseConfig
from epic.errors import InvalidInput
from epic.models import LrSchedule, ToyModel, loss_and_grad
from epic.training import (
    BatchMode,
    Instrumentation,
    run_defense,
    run_random_drop_baseline,
    train,
)


def test_minibatch_visits_every_example():
    ds = make_blobs(16, 2, 2, seed=1)
    m_full = ToyModel.initialize("linear", 2, 2, seed=2)
    m_mini = ToyModel.initialize("linear", 2, 2, seed=2)
    _, t_full = train(m_full, ds.clone(), LrSchedule(0.3), 10)
    _, t_mini = train(m_mini, ds.clone(), LrSchedule(0.3), 10, BatchMode("minibatch", 8, seed=3))
    assert t_mini.losses != t_full.losses  # different step sequences
    assert len(t_mini.losses) == 10


def test_instrumentation_records_summed_objective():
    ds = make_blobs(10, 2, 2, seed=4)
    model = ToyModel.initialize("linear", 2, 2, seed=5)
    inst = Instrumentation(record_full_gradients=True)
    train(model, ds.clone(), LrSchedule(0.2), 3, instrument=inst)
    mean_loss, mean_grad = loss_and_grad(model, ds.features, ds.labels)
    assert inst.full_losses[0] == pytest.approx(mean_loss * 20, rel=1e-12)
    np.testing.assert_allclose(inst.full_grads[0], mean_grad * 20, rtol=1e-12)
    # no drops happened, so full and subset sums agree
    np.testing.assert_allclose(inst.full_grads[0], inst.subset_grads[0], rtol=1e-12)
    assert inst.effective_lr(0.2) == pytest.approx(0.01)


def test_effective_lr_requires_recording():
    with pytest.raises(InvalidInput):
        Instrumentation().effective_lr(0.1)


def test_random_drop_baseline_matches_schedule():
    ds = make_blobs(30, 2, 2, seed=6)
    model = ToyModel.initialize("linear", 2, 2, seed=7)
    schedule = {2: 3, 5: 2}
    _, trace = run_random_drop_baseline(
        model, ds, LrSchedule(0.3), 8, schedule, seed=99
    )
    assert len(ds.dropped) == 5
    assert trace.active_counts == [60, 60, 57, 57, 57, 55, 55, 55]
    for idx, rec in ds.dropped.items():
        assert rec.medoid_rank == -1
        assert rec.epoch in schedule
        assert rec.class_label == ds.labels[idx]


def test_random_drop_baseline_deterministic():
    traces = []
    for _ in range(2):
        ds = make_blobs(30, 2, 2, seed=6)
        model = ToyModel.initialize("linear", 2, 2, seed=7)
        _, trace = run_random_drop_baseline(
            model, ds, LrSchedule(0.3), 8, {2: 3}, seed=42
        )
        traces.append((trace.losses, sorted(ds.dropped)))
    assert traces[0] == traces[1]


def test_random_drop_rejects_overdraw():
    ds = make_blobs(3, 2, 2, seed=8)
    model = ToyModel.initialize("linear", 2, 2, seed=9)
    with pytest.raises(InvalidInput):
        run_random_drop_baseline(model, ds, LrSchedule(0.3), 2, {0: 100}, seed=1)


def test_defense_and_baseline_share_undropped_prefix():
    # before the first drop epoch, both loops take identical steps
    ds1 = make_blobs(25, 2, 2, seed=10)
    ds2 = make_blobs(25, 2, 2, seed=10)
    m1 = ToyModel.initialize("linear", 2, 2, seed=11)
    m2 = ToyModel.initialize("linear", 2, 2, seed=11)
    cfg = DefenseConfig(warmup_epochs=4, interval_epochs=2, medoid_fraction=0.2,
                        min_class_size_guard=5)
    _, t1 = run_defense(m1, ds1, cfg, LrSchedule(0.3), 6)
    _, t2 = run_random_drop_baseline(m2, ds2, LrSchedule(0.3), 6, {4: 1}, seed=3)
    assert t1.losses[:4] == t2.losses[:4]

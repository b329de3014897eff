from fractions import Fraction

import numpy as np
import pytest

from sweepkit import metrics
from sweepkit.attacks import AllToAll, AttackInstance, SingleTarget, SolidSquare, make_perturbation_trigger
from sweepkit.data import LabeledDataset, gen_shapes_dataset
from sweepkit.errors import InvalidArgument
from sweepkit.model import TrainConfig, train
from sweepkit.policy import Policy
from sweepkit.rng import Rng


def labelled(n=100, k=10):
    """Images whose top-left pixel stores the label, so a model can read it back."""
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, (n, 8, 8, 3), dtype=np.uint8)
    labels = np.arange(n) % k
    images[:, 0, 0, 0] = labels
    return LabeledDataset(images, labels, k)


class Oracle:
    def predict_batch(self, images):
        return images[:, 0, 0, 0].astype(np.int64)


class Constant:
    def __init__(self, c):
        self.c = c
        self.seen = []

    def predict_batch(self, images):
        self.seen.append(images.copy())
        return np.full(len(images), self.c)


SQUARE = SolidSquare(2, (255, 255, 255))


def test_oracle_model_acc_one():
    assert metrics.accuracy(Oracle(), labelled()) == 1.0


def test_constant_model_acc_one_over_k():
    assert metrics.accuracy(Constant(3), labelled(100, 10)) == 0.1


def test_target_model_asr_one_and_exclusion():
    ds = labelled()
    model = Constant(4)
    inst = AttackInstance("t", SQUARE, SingleTarget(4), 0.1)
    assert metrics.attack_success_rate(model, ds, inst) == 1.0
    # the 10 samples of class 4 are not evaluated
    (seen,) = model.seen
    assert len(seen) == 90
    assert 4 not in seen[:, 0, 0, 0].tolist()


def test_all_to_all_counts_only_next_class():
    ds = labelled()
    inst = AttackInstance("a", SQUARE, AllToAll(), 0.1)
    # a constant model hits (i + 1) % K only for class K - 1 ... i.e. for one class in ten
    assert metrics.attack_success_rate(Constant(0), ds, inst) == 0.1

    class Shift:
        def predict_batch(self, images):
            return (images[:, 0, 0, 0].astype(np.int64) + 1) % 10

    assert metrics.attack_success_rate(Shift(), ds, inst) == 1.0


def test_identity_policy_matches_no_preprocessing():
    ds = gen_shapes_dataset(60, 6, (16, 16, 3), seed=1)
    model = train(ds, TrainConfig(epochs=2, hidden=(16, 8)))
    ident = Policy.from_json([{"id": "Gamma", "params": {"gamma": 1.0}}])
    inst = AttackInstance("t", SQUARE, SingleTarget(2), 0.1)
    assert metrics.evaluate(model, ds, inst, ident, seed=3).to_json() == metrics.evaluate(model, ds, inst).to_json()


def test_report_counts_are_exact():
    ds = labelled(30, 3)
    rep = metrics.evaluate(Constant(1), ds, AttackInstance("t", SQUARE, SingleTarget(1), 0.1))
    assert (rep.n_clean, rep.n_correct, rep.n_triggered, rep.n_success) == (30, 10, 20, 20)
    assert Fraction(rep.acc).limit_denominator(1000) * rep.n_clean == rep.n_correct
    assert rep.confusion[:, 1].tolist() == [10, 10, 10]
    assert rep.to_json()["asr"] == 1.0


def test_empty_dataset_rejected():
    empty = LabeledDataset(np.zeros((0, 8, 8, 3), np.uint8), np.zeros(0, int), 10)
    with pytest.raises(InvalidArgument):
        metrics.accuracy(Oracle(), empty)


def test_parallel_equals_serial(monkeypatch):
    ds = gen_shapes_dataset(40, 4, (16, 16, 3), seed=2)
    pol = Policy.of("SAT", "GCSM")
    monkeypatch.setenv("SWEEPKIT_THREADS", "1")
    serial = metrics.transform_images(ds.images, pol, 5, "x")
    monkeypatch.setenv("SWEEPKIT_THREADS", "4")
    assert metrics.worker_count() == 4
    assert np.array_equal(metrics.transform_images(ds.images, pol, 5, "x"), serial)
    monkeypatch.setenv("SWEEPKIT_THREADS", "many")
    with pytest.raises(InvalidArgument):
        metrics.worker_count()


def test_per_sample_seeds_ignore_order():
    ds = gen_shapes_dataset(10, 5, (16, 16, 3), seed=3)
    pol = Policy.of("SAT")
    out = metrics.transform_images(ds.images, pol, 9, "t")
    # sample i sees the same draws whatever else is in the batch
    assert np.array_equal(metrics.transform_images(ds.images[:4], pol, 9, "t"), out[:4])


def test_eval_subset_is_seeded():
    ds = labelled(100)
    a = metrics.eval_subset(ds, 20, seed=4)
    b = metrics.eval_subset(ds, 20, seed=4)
    assert len(a) == 20 and np.array_equal(a.labels, b.labels)
    assert metrics.eval_subset(ds, None, 0) is ds


def test_clean_model_ignores_tiny_random_trigger():
    train_ds = gen_shapes_dataset(600, 10, (16, 16, 3), seed=5)
    test_ds = gen_shapes_dataset(200, 10, (16, 16, 3), seed=6)
    model = train(train_ds, TrainConfig(epochs=10, hidden=(64, 32), seed=1))
    trig = make_perturbation_trigger("L2", 20.0, (16, 16, 3), Rng(2))
    asr = metrics.attack_success_rate(model, test_ds, AttackInstance("p", trig, SingleTarget(0), 0.05))
    assert asr <= 0.2

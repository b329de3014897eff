import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sweepkit import metrics
from sweepkit.data import LabeledDataset, gen_shapes_dataset
from sweepkit.errors import ConfigError, FormatError, InvalidArgument
from sweepkit.model import (
    TinyClassifier,
    TrainConfig,
    fine_tune,
    grad_check,
    load,
    model_bytes,
    parse_model,
    save,
    softmax,
    train,
)

SMALL = (8, 8, 3)


def blobs(n=200, seed=0):
    """Two linearly separable classes: dark images vs bright images."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    base = np.where(labels == 0, 60, 190)[:, None, None, None]
    images = np.clip(base + rng.integers(-40, 41, (n, *SMALL)), 0, 255).astype(np.uint8)
    return LabeledDataset(images, labels, 2)


def random_batch(seed, n=8, dims=SMALL, k=4):
    rng = np.random.default_rng(seed)
    return rng.integers(0, 256, (n, *dims), dtype=np.uint8), rng.integers(0, k, n)


class TestNumerics:
    @pytest.mark.parametrize("seed", range(5))
    def test_grad_check(self, seed):
        m = TinyClassifier.init(SMALL, 4, (16, 12), seed=seed)
        x, y = random_batch(seed)
        assert grad_check(m, x, y, seed=seed) <= 1e-4

    def test_grad_check_zero_model(self):
        m = TinyClassifier.zeros(SMALL, 4, (16, 12))
        x, y = random_batch(1)
        err = grad_check(m, x, y)
        assert np.isfinite(err) and err <= 1e-4

    def test_grad_check_deterministic(self):
        m = TinyClassifier.init(SMALL, 4, (16, 12), seed=2)
        x, y = random_batch(2)
        assert grad_check(m, x, y, seed=7) == grad_check(m, x, y, seed=7)

    def test_grad_check_empty(self):
        m = TinyClassifier.init(SMALL, 4, (16, 12))
        with pytest.raises(InvalidArgument):
            grad_check(m, np.zeros((0, *SMALL), np.uint8), np.zeros(0, int))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 30), st.integers(2, 12), st.floats(1e-3, 1e3), st.integers(0, 2**32))
    def test_softmax_rows_sum_to_one(self, n, k, scale, seed):
        z = np.random.default_rng(seed).normal(size=(n, k)) * scale
        p = softmax(z)
        assert np.isfinite(p).all()
        assert np.abs(p.sum(axis=1) - 1.0).max() <= 1e-9


class TestPredict:
    def test_zero_model_ties_to_class_zero(self):
        m = TinyClassifier.zeros(SMALL, 5, (4, 4))
        x, _ = random_batch(3)
        assert (m.predict_batch(x) == 0).all()

    def test_batch_context_invariance(self):
        m = TinyClassifier.init(SMALL, 4, (16, 12), seed=4)
        x, _ = random_batch(4, n=12)
        assert m.predict_batch(x).tolist() == [m.predict(img) for img in x]

    def test_dim_mismatch(self):
        m = TinyClassifier.init(SMALL, 4, (16, 12))
        with pytest.raises(InvalidArgument):
            m.predict(np.zeros((9, 8, 3), np.uint8))


class TestTraining:
    def test_separable_blobs_converge(self):
        ds = blobs()
        m = train(ds, TrainConfig(epochs=30, seed=1))
        assert metrics.accuracy(m, ds) >= 0.95
        assert m.predict(ds.images[0]) == ds.labels[0]

    def test_bit_identical_retrain(self):
        ds = blobs(64)
        cfg = TrainConfig(epochs=3, hidden=(16, 8), seed=9)
        assert model_bytes(train(ds, cfg)) == model_bytes(train(ds, cfg))

    def test_seed_changes_weights(self):
        ds = blobs(64)
        a = train(ds, TrainConfig(epochs=1, hidden=(16, 8), seed=1))
        b = train(ds, TrainConfig(epochs=1, hidden=(16, 8), seed=2))
        assert model_bytes(a) != model_bytes(b)

    def test_empty_dataset(self):
        empty = LabeledDataset(np.zeros((0, *SMALL), np.uint8), np.zeros(0, int), 2)
        with pytest.raises(InvalidArgument):
            train(empty)

    def test_fine_tune_leaves_input_alone(self):
        ds = blobs(64)
        m = train(ds, TrainConfig(epochs=2, hidden=(16, 8)))
        before = model_bytes(m)
        tuned = fine_tune(m, ds, 2, TrainConfig(hidden=(16, 8)))
        assert model_bytes(m) == before
        assert model_bytes(tuned) != before

    def test_fine_tune_rejects_zero_epochs_and_mismatch(self):
        ds = blobs(32)
        m = TinyClassifier.init(SMALL, 2, (16, 8))
        with pytest.raises(InvalidArgument):
            fine_tune(m, ds, 0)
        other = TinyClassifier.init((4, 4, 3), 2, (16, 8))
        with pytest.raises(InvalidArgument):
            fine_tune(other, ds, 1)

    def test_fine_tune_on_own_data_is_stable(self):
        train_ds = gen_shapes_dataset(600, 6, (16, 16, 3), seed=1)
        held = gen_shapes_dataset(300, 6, (16, 16, 3), seed=2)
        cfg = TrainConfig(epochs=20, hidden=(64, 32), seed=3)
        m = train(train_ds, cfg)
        before = metrics.accuracy(m, held)
        after = metrics.accuracy(fine_tune(m, train_ds, 5, cfg), held)
        assert before >= 0.85
        assert abs(after - before) <= 0.05

    def test_config_validation(self):
        with pytest.raises(InvalidArgument):
            TrainConfig(rho=1.0)
        with pytest.raises(InvalidArgument):
            TrainConfig(epochs=0)
        with pytest.raises(ConfigError):
            TrainConfig.from_json({"lr": 0.1})
        cfg = TrainConfig(epochs=4, hidden=(8, 4))
        assert TrainConfig.from_json(cfg.to_json()) == cfg


class TestPersistence:
    def test_save_load_save_identical(self, tmp_path):
        m = TinyClassifier.init(SMALL, 3, (16, 8), seed=5)
        save(m, tmp_path / "a.swkm")
        save(load(tmp_path / "a.swkm"), tmp_path / "b.swkm")
        assert (tmp_path / "a.swkm").read_bytes() == (tmp_path / "b.swkm").read_bytes()

    def test_predictions_survive_roundtrip(self, tmp_path):
        m = TinyClassifier.init(SMALL, 3, (16, 8), seed=6)
        save(m, tmp_path / "m.swkm")
        back = load(tmp_path / "m.swkm")
        x, _ = random_batch(6, n=100)
        assert np.array_equal(m.predict_batch(x), back.predict_batch(x))

    def test_truncated(self):
        raw = model_bytes(TinyClassifier.init(SMALL, 3, (16, 8)))
        for cut in (3, 20, 30, len(raw) - 1):
            with pytest.raises(FormatError):
                parse_model(raw[:cut])

    def test_bad_magic_and_version(self):
        raw = bytearray(model_bytes(TinyClassifier.init(SMALL, 3, (16, 8))))
        with pytest.raises(FormatError):
            parse_model(b"XXXX" + bytes(raw[4:]))
        raw[4] = 99
        with pytest.raises(FormatError):
            parse_model(bytes(raw))

import gzip
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dflsim.errors import BadMagic, CountMismatch, DimensionMismatch, EmptyShard, NotEnoughData, TruncatedFile
from dflsim.learner import (
    Model,
    OptimizerState,
    SoftmaxRegression,
    TrainingConfig,
    adam_step,
    cross_entropy_loss,
    evaluate,
    flatten,
    gradient,
    load_idx,
    local_train,
    param_dim,
    partition,
    predict_logits,
    synth_blobs,
    unflatten,
)
from dflsim.oracles import finite_difference_gradient, relative_error


def idx_images(images, magic=0x803):
    n, r, c = images.shape
    return struct.pack(">IIII", magic, n, r, c) + images.astype(np.uint8).tobytes()


def idx_labels(labels, magic=0x801):
    return struct.pack(">II", magic, len(labels)) + np.asarray(labels, dtype=np.uint8).tobytes()


@pytest.fixture
def idx_pair(rng):
    images = rng.integers(0, 256, size=(10, 28, 28))
    images[0, 0, 0] = 255
    labels = rng.integers(0, 10, size=10)
    return images, labels


class TestIdx:
    def test_shapes(self, idx_pair):
        images, labels = idx_pair
        ds = load_idx(idx_images(images), idx_labels(labels))
        assert ds.features.shape == (10, 784)
        assert ds.labels.shape == (10,)
        np.testing.assert_array_equal(ds.labels, labels)

    def test_scaling(self, idx_pair):
        images, labels = idx_pair
        ds = load_idx(idx_images(images), idx_labels(labels))
        assert ds.features[0, 0] == 1.0
        np.testing.assert_array_equal(ds.features, images.reshape(10, -1) / 255.0)

    def test_files_and_gzip(self, idx_pair, tmp_path):
        images, labels = idx_pair
        (tmp_path / "img").write_bytes(idx_images(images))
        with gzip.open(tmp_path / "lbl.gz", "wb") as fh:
            fh.write(idx_labels(labels))
        ds = load_idx(tmp_path / "img", str(tmp_path / "lbl.gz"))
        assert len(ds) == 10

    def test_bad_magic(self, idx_pair):
        images, labels = idx_pair
        with pytest.raises(BadMagic):
            load_idx(idx_images(images, magic=0x801), idx_labels(labels))

    def test_count_mismatch(self, idx_pair):
        images, labels = idx_pair
        with pytest.raises(CountMismatch):
            load_idx(idx_images(images), idx_labels(labels[:9]))

    def test_truncated(self, idx_pair):
        images, labels = idx_pair
        with pytest.raises(TruncatedFile):
            load_idx(idx_images(images)[:-1], idx_labels(labels))
        with pytest.raises(TruncatedFile):
            load_idx(idx_images(images)[:10], idx_labels(labels))


class TestData:
    def test_blob_shape_and_balance(self):
        ds = synth_blobs(10, 32, 100, 0.3, seed=1)
        assert ds.features.shape == (1000, 32)
        assert np.all(np.bincount(ds.labels) == 100)

    def test_zero_spread_sits_on_centers(self):
        ds = synth_blobs(4, 8, 5, 0.0, seed=2)
        for c in range(4):
            rows = ds.features[ds.labels == c]
            assert np.allclose(rows, rows[0])
            assert np.linalg.norm(rows[0]) == pytest.approx(1.0)

    def test_deterministic(self):
        a, b = synth_blobs(3, 4, 10, 0.5, seed=7), synth_blobs(3, 4, 10, 0.5, seed=7)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_shared_centers(self):
        a = synth_blobs(3, 4, 10, 0.0, seed=1)
        b = synth_blobs(3, 4, 10, 0.0, seed=2, centers_seed=1)
        assert not np.array_equal(a.labels, b.labels)
        for c in range(3):
            np.testing.assert_allclose(a.features[a.labels == c][0], b.features[b.labels == c][0])

    def test_partition_cover(self):
        ds = synth_blobs(10, 2, 100, 0.1, seed=0)
        shards = partition(ds, 4, 250, seed=0)
        assert all(len(s) == 250 for s in shards)
        assert sorted(np.concatenate(shards)) == list(range(1000))

    def test_partition_leftover(self):
        ds = synth_blobs(10, 2, 100, 0.1, seed=0)
        shards = partition(ds, 4, 200, seed=0)
        used = np.concatenate(shards)
        assert len(set(used)) == 800

    def test_not_enough(self):
        with pytest.raises(NotEnoughData):
            partition(synth_blobs(10, 2, 10, 0.1, seed=0), 4, 250, seed=0)


class TestModel:
    def test_flatten_roundtrip(self, rng):
        m = Model(rng.normal(size=(3, 5)), rng.normal(size=3))
        v = flatten(m)
        assert v.size == param_dim(3, 5) == 18
        back = unflatten(v, 3, 5)
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.bias, m.bias)
        np.testing.assert_array_equal(flatten(back), v)

    def test_layout_is_weights_then_bias(self):
        m = unflatten(np.arange(8.0), 2, 3)
        np.testing.assert_array_equal(m.weights, [[0, 1, 2], [3, 4, 5]])
        np.testing.assert_array_equal(m.bias, [6, 7])

    def test_unflatten_wrong_size(self):
        with pytest.raises(DimensionMismatch):
            unflatten(np.zeros(7), 2, 3)

    def test_logits(self, rng):
        X = rng.normal(size=(4, 3))
        assert np.all(predict_logits(Model(np.zeros((2, 3)), np.zeros(2)), X) == 0)
        np.testing.assert_array_equal(predict_logits(Model(np.zeros((2, 3)), np.array([1.0, 2.0])), X), [[1, 2]] * 4)
        W = rng.normal(size=(2, 3))
        np.testing.assert_allclose(
            predict_logits(Model(2 * W, np.zeros(2)), X), 2 * predict_logits(Model(W, np.zeros(2)), X)
        )
        with pytest.raises(DimensionMismatch):
            predict_logits(Model(W, np.zeros(2)), np.zeros((1, 4)))


class TestLoss:
    def test_uniform(self):
        assert cross_entropy_loss([[0.0, 0.0]], [0]) == pytest.approx(np.log(2), abs=1e-12)

    def test_stable(self):
        loss = cross_entropy_loss([[1000.0, 0.0]], [0])
        assert np.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-12)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cross_entropy_loss([[0.0, 1.0]], [0, 1])

    @given(
        st.lists(st.floats(-500, 500), min_size=3, max_size=3),
        st.floats(-1e3, 1e3),
        st.integers(0, 2),
    )
    def test_shift_invariance_and_nonneg(self, logits, c, label):
        a = cross_entropy_loss([logits], [label])
        b = cross_entropy_loss([[v + c for v in logits]], [label])
        assert a >= 0
        assert a == pytest.approx(b, abs=1e-9, rel=1e-9)


class TestGradient:
    @pytest.mark.parametrize("seed", range(10))
    def test_finite_differences(self, seed):
        r = np.random.default_rng(seed)
        C, D, B = int(r.integers(2, 5)), int(r.integers(1, 20)), int(r.integers(1, 9))
        params = r.normal(size=param_dim(C, D))
        X, y = r.normal(size=(B, D)), r.integers(0, C, size=B)
        got = gradient(unflatten(params, C, D), X, y)
        assert relative_error(got, finite_difference_gradient(params, C, D, X, y)) <= 1e-4

    def test_perfect_prediction(self):
        W = np.array([[50.0, 0.0], [0.0, 50.0]])
        g = gradient(Model(W, np.zeros(2)), np.eye(2), [0, 1])
        assert np.linalg.norm(g) < 1e-15

    def test_batch_is_mean_of_samples(self, rng):
        m = Model(rng.normal(size=(3, 4)), rng.normal(size=3))
        X, y = rng.normal(size=(5, 4)), rng.integers(0, 3, size=5)
        per = [gradient(m, X[i : i + 1], y[i : i + 1]) for i in range(5)]
        np.testing.assert_allclose(gradient(m, X, y), np.mean(per, axis=0), atol=1e-14)


class TestAdam:
    cfg = TrainingConfig()

    def test_first_step_is_signed_lr(self):
        g = np.array([0.5, -3.0, 1e-3])
        new, state = adam_step(np.zeros(3), g, OptimizerState.fresh(3), self.cfg)
        # m_hat = g, v_hat = g^2, so the step is -lr * g / (|g| + eps)
        np.testing.assert_allclose(new, -self.cfg.learning_rate * np.sign(g), rtol=1e-4)
        assert state.step_count == 1

    def test_zero_gradient(self):
        p = np.array([1.0, 2.0])
        new, _ = adam_step(p, np.zeros(2), OptimizerState.fresh(2), self.cfg)
        np.testing.assert_array_equal(new, p)

    def test_deterministic_and_pure(self):
        s = OptimizerState.fresh(2)
        a = adam_step(np.ones(2), np.array([1.0, -1.0]), s, self.cfg)
        b = adam_step(np.ones(2), np.array([1.0, -1.0]), s, self.cfg)
        np.testing.assert_array_equal(a[0], b[0])
        assert s.step_count == 0 and not s.first_moment.any()

    def test_second_step_matches_formula(self):
        cfg = self.cfg
        g1, g2 = np.array([1.0]), np.array([-2.0])
        p1, s1 = adam_step(np.zeros(1), g1, OptimizerState.fresh(1), cfg)
        p2, s2 = adam_step(p1, g2, s1, cfg)
        m = 0.9 * 0.1 * g1 + 0.1 * g2
        v = 0.999 * 0.001 * g1**2 + 0.001 * g2**2
        step = cfg.learning_rate * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999**2)) + cfg.adam_eps)
        np.testing.assert_allclose(p2, p1 - step)
        assert s2.step_count == 2 and np.all(s2.second_moment >= 0)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            adam_step(np.zeros(2), np.zeros(3), OptimizerState.fresh(2), self.cfg)


class TestLocalTrain:
    def test_zero_epochs(self, rng):
        ds = synth_blobs(3, 4, 10, 0.1, seed=0)
        p = rng.normal(size=param_dim(3, 4))
        out = local_train(p, ds, np.arange(30), TrainingConfig(epochs=0, batch_size=10, samples_per_node=30), rng)
        np.testing.assert_array_equal(out, p)

    def test_separable_reaches_full_accuracy(self):
        ds = synth_blobs(10, 32, 25, 0.0, seed=3)
        shard = np.arange(250)
        out = local_train(np.zeros(param_dim(10, 32)), ds, shard, TrainingConfig(), np.random.default_rng(0))
        assert evaluate(out, ds) == 1.0

    @pytest.mark.parametrize("seed", range(3))
    def test_loss_decreases(self, seed):
        from dflsim.learner import evaluate_loss

        ds = synth_blobs(5, 16, 50, 0.2, seed=seed)
        p0 = np.random.default_rng(seed).normal(0, 0.01, size=param_dim(5, 16))
        p1 = local_train(p0, ds, np.arange(250), TrainingConfig(), np.random.default_rng(seed))
        assert evaluate_loss(p1, ds) <= evaluate_loss(p0, ds)

    def test_repeatable(self):
        ds = synth_blobs(3, 4, 30, 0.5, seed=1)
        p = np.zeros(param_dim(3, 4))
        cfg = TrainingConfig(batch_size=7, samples_per_node=90)
        a = local_train(p, ds, np.arange(90), cfg, np.random.default_rng(5))
        b = local_train(p, ds, np.arange(90), cfg, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)

    def test_partial_batch_trained(self):
        # 250 samples at batch 32 is 7 full batches plus one of 26: 8 steps per epoch
        ds = synth_blobs(2, 2, 125, 0.5, seed=0)
        calls = []
        import dflsim.learner as learner

        orig = learner.adam_step

        def counting(*a):
            calls.append(a[1].shape)
            return orig(*a)

        learner.adam_step = counting
        try:
            local_train(np.zeros(6), ds, np.arange(250), TrainingConfig(epochs=1), np.random.default_rng(0))
        finally:
            learner.adam_step = orig
        assert len(calls) == 8

    def test_empty_shard(self):
        ds = synth_blobs(2, 2, 5, 0.5, seed=0)
        with pytest.raises(EmptyShard):
            local_train(np.zeros(6), ds, [], TrainingConfig(samples_per_node=32), np.random.default_rng(0))


class TestEvaluate:
    def test_fraction(self):
        from dflsim.learner import Dataset

        X = np.eye(2)[[0] * 8 + [1] * 2]
        y = np.array([0] * 8 + [0] * 2)
        W = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert evaluate(flatten(Model(W, np.zeros(2))), Dataset(X, y, 2)) == pytest.approx(0.8)

    def test_zero_model_predicts_class_zero(self):
        ds = synth_blobs(10, 8, 20, 0.3, seed=4)
        expected = np.mean(ds.labels == 0)
        assert evaluate(np.zeros(param_dim(10, 8)), ds) == pytest.approx(expected) == pytest.approx(0.1)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatch):
            evaluate(np.zeros(5), synth_blobs(2, 2, 5, 0.1, seed=0))


class TestSoftmaxRegression:
    def test_fit_predict(self):
        ds = synth_blobs(4, 6, 60, 0.1, seed=0)
        clf = SoftmaxRegression(epochs=20, random_state=0).fit(ds.features, ds.labels)
        assert clf.score(ds.features, ds.labels) > 0.95
        assert clf.predict_proba(ds.features[:3]).sum(axis=1) == pytest.approx([1, 1, 1])
        assert clf.get_params_vector().size == param_dim(4, 6)

    def test_string_labels(self):
        X = np.array([[0.0, 1.0], [1.0, 0.0]] * 20)
        y = np.array(["a", "b"] * 20)
        clf = SoftmaxRegression(epochs=50, learning_rate=0.05, random_state=1).fit(X, y)
        assert list(clf.predict([[0.0, 1.0], [1.0, 0.0]])) == ["a", "b"]

    def test_clone_roundtrip(self):
        from sklearn.base import clone

        clf = SoftmaxRegression(epochs=3, batch_size=8)
        assert clone(clf).get_params() == clf.get_params()

"""Dataset, MLP, and optimizer tests with closed-form and finite-difference oracles."""
import struct

import numpy as np
import pytest

from garlab import learner
from garlab.errors import (ConfigError, DatasetFormatError,
                           DimensionMismatchError, EmptySetError,
                           InfeasibleError)
from garlab.learner import Dataset, ModelParams, OptimizerState


def write_idx_pair(tmp_path, pixels, labels, *, image_magic=0x00000803,
                   label_magic=0x00000801, label_count=None, drop_bytes=0):
    """Write an IDX image/label file pair; knobs poke specific corruptions."""
    pixels = np.asarray(pixels, dtype=np.uint8)
    count, rows, cols = pixels.shape
    image_path = tmp_path / "images-idx3-ubyte"
    label_path = tmp_path / "labels-idx1-ubyte"
    body = pixels.tobytes()
    if drop_bytes:
        body = body[:-drop_bytes]
    image_path.write_bytes(struct.pack(">iiii", image_magic, count, rows, cols) + body)
    label_path.write_bytes(struct.pack(">ii", label_magic,
                                       count if label_count is None else label_count)
                           + bytes(labels))
    return image_path, label_path


class TestLoadMnist:
    def test_reads_and_scales_pixels(self, tmp_path):
        pixels = np.array([[[0, 51], [102, 255]],
                           [[255, 0], [0, 0]],
                           [[10, 20], [30, 40]]], dtype=np.uint8)
        image_path, label_path = write_idx_pair(tmp_path, pixels, [0, 5, 9])
        ds = learner.load_mnist(image_path, label_path)
        assert ds.features.shape == (3, 4)
        assert ds.features.dtype == np.float64
        assert ds.features[0].tolist() == [0.0, 51 / 255, 102 / 255, 1.0]
        assert ds.labels.tolist() == [0, 5, 9]
        assert ds.labels.dtype == np.int64
        assert ds.num_classes == 10

    def test_bad_image_magic(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0],
                               image_magic=0x00000801)
        with pytest.raises(DatasetFormatError, match="magic"):
            learner.load_mnist(*paths)

    def test_bad_label_magic(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [0],
                               label_magic=0x00000803)
        with pytest.raises(DatasetFormatError, match="magic"):
            learner.load_mnist(*paths)

    def test_count_mismatch(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1, 2],
                               label_count=3)
        with pytest.raises(DatasetFormatError, match="count"):
            learner.load_mnist(*paths)

    def test_truncated_pixels(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((2, 2, 2), np.uint8), [0, 1],
                               drop_bytes=3)
        with pytest.raises(DatasetFormatError, match="truncated"):
            learner.load_mnist(*paths)

    def test_label_out_of_range(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((1, 2, 2), np.uint8), [10])
        with pytest.raises(DatasetFormatError, match="label"):
            learner.load_mnist(*paths)

    def test_header_counts(self, tmp_path):
        paths = write_idx_pair(tmp_path, np.zeros((4, 3, 2), np.uint8), [0, 1, 2, 3])
        assert learner.idx_header_counts(*paths) == (4, 6, 4)


class TestDataset:
    def test_validation(self):
        with pytest.raises(DimensionMismatchError):
            Dataset(np.zeros(3), np.zeros(3, dtype=np.int64), 2)
        with pytest.raises(DimensionMismatchError):
            Dataset(np.zeros((3, 2)), np.zeros(2, dtype=np.int64), 2)
        with pytest.raises(ConfigError, match="num_classes"):
            Dataset(np.zeros((3, 2)), np.zeros(3, dtype=np.int64), 1)
        with pytest.raises(ConfigError, match="labels"):
            Dataset(np.zeros((3, 2)), np.array([0, 1, 2]), 2)

    def test_take_subsets(self):
        ds = Dataset(np.arange(8.0).reshape(4, 2), np.array([0, 1, 0, 1]), 2)
        sub = ds.take([2, 0])
        assert sub.features.tolist() == [[4.0, 5.0], [0.0, 1.0]]
        assert sub.labels.tolist() == [0, 0]
        assert len(sub) == 2 and sub.input_dim == 2


class TestMakeSynthetic:
    def test_deterministic(self):
        a = learner.make_synthetic(3, 5, 4, seed=7)
        b = learner.make_synthetic(3, 5, 4, seed=7)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.labels, b.labels)
        c = learner.make_synthetic(3, 5, 4, seed=8)
        assert not np.array_equal(a.features, c.features)

    def test_shapes_and_label_blocks(self):
        ds = learner.make_synthetic(4, 6, 3, seed=0)
        assert ds.features.shape == (24, 3)
        assert ds.labels.tolist() == sum(([k] * 6 for k in range(4)), [])
        assert ds.num_classes == 4

    def test_blob_centres_alternate_sign_per_axis(self):
        # spread ~ 0 collapses each blob onto its mean.
        ds = learner.make_synthetic(4, 1, 2, seed=0, separation=4.0, spread=1e-12)
        np.testing.assert_allclose(ds.features,
                                   [[4.0, 0.0], [-4.0, 0.0], [0.0, 4.0], [0.0, -4.0]],
                                   atol=1e-9)

    def test_extra_classes_use_unit_directions(self):
        ds = learner.make_synthetic(5, 1, 2, seed=3, separation=4.0, spread=1e-12)
        assert np.linalg.norm(ds.features[4]) == pytest.approx(4.0, abs=1e-9)

    def test_classes_are_separable(self):
        from sklearn.linear_model import LogisticRegression

        ds = learner.make_synthetic(2, 50, 4, seed=1)
        clf = LogisticRegression().fit(ds.features, ds.labels)
        assert clf.score(ds.features, ds.labels) >= 0.99

    def test_validation(self):
        with pytest.raises(ConfigError):
            learner.make_synthetic(1, 5, 4, seed=0)
        with pytest.raises(ConfigError):
            learner.make_synthetic(2, 0, 4, seed=0)
        with pytest.raises(ConfigError):
            learner.make_synthetic(2, 5, 0, seed=0)


class TestPartition:
    def make_dataset(self, count=100):
        return Dataset(np.arange(count, dtype=np.float64).reshape(count, 1),
                       np.arange(count) % 2, 2)

    def test_sizes_differ_by_at_most_one(self):
        shards = learner.partition(self.make_dataset(100), 7, seed=0)
        sizes = sorted(len(s.train) + len(s.test) for s in shards)
        assert sizes == [14, 14, 14, 14, 14, 15, 15]
        assert [s.node_index for s in shards] == list(range(7))

    def test_test_split_is_rounded_tail(self):
        shards = learner.partition(self.make_dataset(100), 7, test_fraction=0.2, seed=0)
        for shard in shards:
            size = len(shard.train) + len(shard.test)
            assert len(shard.test) == int(size * 0.2 + 0.5)

    def test_disjoint_cover(self):
        shards = learner.partition(self.make_dataset(100), 7, seed=3)
        seen = np.concatenate([np.concatenate([s.train.features, s.test.features])
                               for s in shards]).ravel()
        assert sorted(seen.tolist()) == list(range(100))

    def test_deterministic(self):
        a = learner.partition(self.make_dataset(50), 4, seed=5)
        b = learner.partition(self.make_dataset(50), 4, seed=5)
        for x, y in zip(a, b):
            assert np.array_equal(x.train.features, y.train.features)
            assert np.array_equal(x.test.features, y.test.features)
        c = learner.partition(self.make_dataset(50), 4, seed=6)
        assert any(not np.array_equal(x.train.features, y.train.features)
                   for x, y in zip(a, c))

    def test_zero_test_fraction(self):
        shards = learner.partition(self.make_dataset(10), 2, test_fraction=0.0, seed=0)
        assert all(len(s.test) == 0 for s in shards)
        assert sum(len(s.train) for s in shards) == 10

    def test_validation(self):
        with pytest.raises(ConfigError):
            learner.partition(self.make_dataset(10), 0)
        with pytest.raises(ConfigError):
            learner.partition(self.make_dataset(10), 2, test_fraction=1.0)
        with pytest.raises(InfeasibleError):
            learner.partition(self.make_dataset(3), 4)


class TestModelParams:
    def test_param_count(self):
        assert learner.param_count(4, 3, 2) == 4 * 3 + 3 + 3 * 2 + 2

    def test_unpack_views_share_storage(self):
        params = ModelParams(np.zeros(learner.param_count(2, 3, 2)), 2, 3, 2)
        params.flat[0] = 5.0
        params.flat[6] = -1.0  # first b1 slot
        w1, b1, w2, b2 = params.unpack()
        assert w1.shape == (2, 3) and b1.shape == (3,)
        assert w2.shape == (3, 2) and b2.shape == (2,)
        assert w1[0, 0] == 5.0 and b1[0] == -1.0

    def test_size_checked(self):
        with pytest.raises(DimensionMismatchError):
            ModelParams(np.zeros(5), 2, 3, 2)

    def test_with_flat(self):
        params = ModelParams(np.zeros(23), 4, 3, 2)
        other = params.with_flat(np.ones(23))
        assert other.flat.tolist() == [1.0] * 23
        assert params.flat.tolist() == [0.0] * 23
        assert (other.input_dim, other.hidden_dim, other.num_classes) == (4, 3, 2)


class TestInitParams:
    def test_biases_zero_and_weights_bounded(self):
        params = learner.init_params(6, 5, 3, seed=0)
        w1, b1, w2, b2 = params.unpack()
        assert not b1.any() and not b2.any()
        assert np.abs(w1).max() <= np.sqrt(6.0 / (6 + 5))
        assert np.abs(w2).max() <= np.sqrt(6.0 / (5 + 3))
        assert np.abs(w1).max() > 0.0

    def test_seeded(self):
        a = learner.init_params(4, 4, 2, seed=1)
        b = learner.init_params(4, 4, 2, seed=1)
        c = learner.init_params(4, 4, 2, seed=2)
        assert np.array_equal(a.flat, b.flat)
        assert not np.array_equal(a.flat, c.flat)


class TestForwardLoss:
    def test_zero_params_give_uniform_loss(self):
        params = ModelParams(np.zeros(learner.param_count(3, 4, 10)), 3, 4, 10)
        batch = Dataset(np.ones((5, 3)), np.arange(5), 10)
        loss, correct = learner.forward_loss(params, batch)
        assert loss == pytest.approx(np.log(10.0), rel=1e-15)

    def test_two_class_closed_form(self):
        # Hand-set weights produce logits (1, 0); the label-0 loss is
        # ln(1 + e^-1).
        flat = np.array([1.0,  # W1
                         0.0,  # b1
                         1.0, 0.0,  # W2
                         0.0, 0.0])  # b2
        params = ModelParams(flat, 1, 1, 2)
        batch = Dataset(np.array([[1.0]]), np.array([0]), 2)
        loss, correct = learner.forward_loss(params, batch)
        assert loss == pytest.approx(np.log(1.0 + np.exp(-1.0)), rel=1e-12)
        assert correct == 1

    def test_evaluate_returns_accuracy(self):
        flat = np.array([1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
        params = ModelParams(flat, 1, 1, 2)
        ds = Dataset(np.array([[1.0], [1.0]]), np.array([0, 1]), 2)
        loss, acc = learner.evaluate(params, ds)
        assert acc == 0.5

    def test_rejects_bad_batches(self):
        params = ModelParams(np.zeros(learner.param_count(2, 2, 2)), 2, 2, 2)
        with pytest.raises(EmptySetError):
            learner.forward_loss(params, Dataset(np.zeros((0, 2)), np.zeros(0, np.int64), 2))
        with pytest.raises(DimensionMismatchError):
            learner.forward_loss(params, Dataset(np.zeros((1, 3)), np.array([0]), 2))
        with pytest.raises(DimensionMismatchError):
            learner.forward_loss(params, Dataset(np.zeros((1, 2)), np.array([0]), 3))


class TestBackward:
    def test_matches_central_differences(self):
        rng = np.random.default_rng(0)
        params = learner.init_params(3, 4, 3, seed=0)
        batch = Dataset(rng.normal(size=(5, 3)), rng.integers(0, 3, size=5), 3)
        grad = learner.backward(params, batch)
        h = 1e-6
        for j in range(params.flat.size):
            bumped = params.flat.copy()
            bumped[j] += h
            up, _ = learner.forward_loss(params.with_flat(bumped), batch)
            bumped[j] -= 2 * h
            down, _ = learner.forward_loss(params.with_flat(bumped), batch)
            fd = (up - down) / (2 * h)
            assert abs(fd - grad[j]) / (1.0 + abs(grad[j])) < 1e-6

    def test_mean_normalisation(self):
        rng = np.random.default_rng(1)
        params = learner.init_params(2, 3, 2, seed=1)
        features = rng.normal(size=(4, 2))
        labels = rng.integers(0, 2, size=4)
        single = Dataset(features, labels, 2)
        doubled = Dataset(np.vstack([features, features]),
                          np.concatenate([labels, labels]), 2)
        np.testing.assert_allclose(learner.backward(params, single),
                                   learner.backward(params, doubled), rtol=1e-12)

    def test_fused_pass_consistent(self):
        rng = np.random.default_rng(2)
        params = learner.init_params(2, 3, 2, seed=2)
        batch = Dataset(rng.normal(size=(3, 2)), rng.integers(0, 2, size=3), 2)
        loss, correct, grad = learner.loss_and_grad(params, batch)
        only_loss, only_correct = learner.forward_loss(params, batch)
        assert loss == only_loss and correct == only_correct
        assert np.array_equal(grad, learner.backward(params, batch))


class TestOptimizer:
    def test_state_validation(self):
        with pytest.raises(ConfigError, match="variant"):
            OptimizerState(variant="rmsprop")
        with pytest.raises(ConfigError, match="learning_rate"):
            OptimizerState(variant="sgd", learning_rate=0.0)

    def test_sgd_exact(self):
        state = OptimizerState(variant="sgd", learning_rate=0.4)
        new_p, new_state = learner.optimizer_step(state, np.array([1.0]), np.array([0.5]))
        assert new_p.tolist() == [0.8]
        assert new_state.step == 1
        assert new_state.m is None and new_state.v is None

    def test_adam_first_step(self):
        # Bias correction makes step 1 equal -lr * g / (|g| + eps).
        state = OptimizerState(variant="adam", learning_rate=0.001)
        new_p, new_state = learner.optimizer_step(state, np.array([0.0]), np.array([2.0]))
        assert new_p[0] == pytest.approx(-0.001 * 2.0 / (2.0 + 1e-8), rel=1e-15)
        assert new_state.step == 1
        assert new_state.m[0] == pytest.approx(0.2, rel=1e-15)
        assert new_state.v[0] == pytest.approx(0.004, rel=1e-12)

    def test_adam_zero_gradient_is_identity(self):
        state = OptimizerState(variant="adam")
        p = np.array([1.5, -2.5])
        new_p, new_state = learner.optimizer_step(state, p, np.zeros(2))
        assert np.array_equal(new_p, p)
        assert new_state.step == 1

    def test_adam_two_steps_match_reference_loop(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        grads = [np.array([1.0, -3.0]), np.array([0.5, 2.0])]
        p_ref = np.array([0.2, 0.4])
        m = np.zeros(2)
        v = np.zeros(2)
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            p_ref = p_ref - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)

        state = OptimizerState(variant="adam", learning_rate=lr)
        p = np.array([0.2, 0.4])
        for g in grads:
            p, state = learner.optimizer_step(state, p, g)
        np.testing.assert_allclose(p, p_ref, rtol=1e-15)
        assert state.step == 2

    def test_shape_mismatch_rejected(self):
        state = OptimizerState(variant="sgd")
        with pytest.raises(DimensionMismatchError):
            learner.optimizer_step(state, np.zeros(3), np.zeros(2))
        bad = OptimizerState(variant="adam", m=np.zeros(2), v=np.zeros(2))
        with pytest.raises(DimensionMismatchError):
            learner.optimizer_step(bad, np.zeros(3), np.zeros(3))


class TestSingleNodeTraining:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_two_class_blobs_reach_95_percent(self, seed):
        ds = learner.make_synthetic(2, 200, 4, seed)
        shard = learner.partition(ds, 1, test_fraction=0.2, seed=seed)[0]
        params = learner.init_params(4, 32, 2, seed)
        state = OptimizerState(variant="adam")
        flat = params.flat
        for _ in range(200):
            _, _, grad = learner.loss_and_grad(params.with_flat(flat), shard.train)
            flat, state = learner.optimizer_step(state, flat, grad)
        _, accuracy = learner.evaluate(params.with_flat(flat), shard.test)
        assert accuracy >= 0.95

import gzip
import struct

import numpy as np
import pytest

import hingeflow as hf
from hingeflow import exceptions as hx
from hingeflow import losses
from hingeflow.geometry import Dataset
from hingeflow.neural import MiniBatch, MlpParams, class_indices
from hingeflow.neural import test_error as eval_test_error


def tiny_params():
    return MlpParams(
        W1=np.array([[1.0, 0.0], [0.0, 1.0]]),
        b1=np.zeros(2),
        W2=np.array([[1.0, 2.0], [3.0, 4.0]]),
        b2=np.array([0.5, -0.5]),
    )


def blobs(n_per=30, seed=0):
    """Three well-separated clusters in the plane."""
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    pts = np.vstack([c + 0.5 * rng.standard_normal((n_per, 2)) for c in centers])
    labels = np.repeat([0, 1, 2], n_per)
    perm = rng.permutation(len(labels))
    return Dataset(pts[perm], labels[perm], name="blobs", allow_duplicates=True)


class TestParamsAndForward:
    def test_shapes_validated(self):
        with pytest.raises(hx.ShapeMismatch):
            MlpParams(W1=np.zeros((2, 2)), b1=np.zeros(3),
                      W2=np.zeros((2, 2)), b2=np.zeros(2))

    def test_dims_exposed(self):
        p = tiny_params()
        assert (p.d, p.h, p.n_classes) == (2, 2, 2)

    def test_forward_hand_computed(self):
        batch = MiniBatch(np.array([[1.0, -2.0]]), np.array([0]))
        scores = hf.forward(tiny_params(), batch)
        assert np.allclose(scores, [[1.5, 2.5]])

    def test_relu_blocks_negative_units(self):
        batch = MiniBatch(np.array([[-1.0, -1.0]]), np.array([0]))
        scores = hf.forward(tiny_params(), batch)
        assert np.allclose(scores, [[0.5, -0.5]])  # only the biases survive

    def test_init_bounds_and_determinism(self):
        a = hf.init_params(9, 16, 4, np.random.default_rng(5))
        b = hf.init_params(9, 16, 4, np.random.default_rng(5))
        assert np.abs(a.W1).max() <= 1 / np.sqrt(9)
        assert np.abs(a.W2).max() <= 1 / np.sqrt(16)
        assert all(np.array_equal(x, y) for x, y in zip(a.arrays(), b.arrays()))

    def test_copy_is_deep(self):
        p = tiny_params()
        q = p.copy()
        q.W1[0, 0] = 99.0
        assert p.W1[0, 0] == 1.0

    def test_batch_validation(self):
        with pytest.raises(hx.ShapeMismatch):
            MiniBatch(np.zeros((3, 2)), np.zeros(2, dtype=np.int64))


class TestBackward:
    def test_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        params = hf.init_params(4, 6, 3, rng)
        batch = MiniBatch(rng.standard_normal((5, 4)),
                          rng.integers(0, 3, size=5))
        G = rng.standard_normal((5, 3))
        grads = hf.backward(params, batch, G)
        h = 1e-6
        worst = 0.0
        for p_arr, g_arr in zip(params.arrays(), grads.arrays()):
            it = np.nditer(p_arr, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p_arr[idx]
                p_arr[idx] = orig + h
                up = float(np.sum(G * hf.forward(params, batch)))
                p_arr[idx] = orig - h
                dn = float(np.sum(G * hf.forward(params, batch)))
                p_arr[idx] = orig
                num = (up - dn) / (2 * h)
                scale = max(1.0, abs(num), abs(g_arr[idx]))
                worst = max(worst, abs(num - g_arr[idx]) / scale)
        assert worst <= 1e-6

    def test_relu_subgradient_zero_at_kink(self):
        # pre-activations exactly zero: nothing flows into layer one
        params = tiny_params()
        batch = MiniBatch(np.zeros((1, 2)), np.array([0]))
        grads = hf.backward(params, batch, np.array([[1.0, 1.0]]))
        assert np.all(grads.W1 == 0.0) and np.all(grads.b1 == 0.0)
        assert np.all(grads.W2 == 0.0)
        assert np.array_equal(grads.b2, [1.0, 1.0])

    def test_grad_scores_shape_checked(self):
        params = tiny_params()
        batch = MiniBatch(np.zeros((1, 2)), np.array([0]))
        with pytest.raises(hx.ShapeMismatch):
            hf.backward(params, batch, np.zeros((2, 2)))

    def test_two_class_network_matches_binary_path(self):
        # score-difference embedding: same parameter gradients both ways
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((6, 3))
        labels = rng.choice([-1.0, 1.0], size=6)
        data = Dataset(pts, labels)
        params = hf.init_params(3, 5, 2, rng)
        batch = MiniBatch(pts, class_indices(data))
        scores = hf.forward(params, batch)
        beta = 0.4

        mc = hf.multiclass_complete_hinge(scores, batch.labels, beta,
                                          alpha=1.0, eta=0.1)
        g_mc = hf.backward(params, batch, data.n * mc.grad_scores)

        diffs = labels * (scores[:, 1] - scores[:, 0])
        active = diffs <= beta
        g_bin = np.zeros_like(scores)
        g_bin[active, 1] = -labels[active]
        g_bin[active, 0] = labels[active]
        g_direct = hf.backward(params, batch, g_bin)

        for a, b in zip(g_mc.arrays(), g_direct.arrays()):
            assert np.max(np.abs(a - b)) <= 1e-10


class TestTrainMlp:
    def test_blobs_reach_zero_error(self):
        data = blobs()
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=1500,
                           batch_size=30, hidden=16, seed=0)
        trace, params = hf.train_mlp(data, "multiclass_complete_hinge", cfg)
        assert eval_test_error(params, data) == 0.0

    def test_threshold_monotone_and_counted(self):
        data = blobs(n_per=20, seed=1)
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=800,
                           batch_size=20, hidden=12, seed=0)
        trace, _ = hf.train_mlp(data, "multiclass_complete_hinge", cfg)
        betas = [r.beta for r in trace.rows]
        assert all(a <= b for a, b in zip(betas, betas[1:]))
        assert trace.final_beta == 10.0 * len(trace.beta_update_times)
        assert len(trace.beta_update_times) > 0

    def test_test_error_column_present_when_held_out(self):
        train_set = blobs(n_per=20, seed=2)
        held = blobs(n_per=10, seed=3)
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=200,
                           batch_size=20, hidden=8, seed=0, test_data=held)
        trace, _ = hf.train_mlp(train_set, "multiclass_complete_hinge", cfg)
        assert trace.has_column("test_error")
        assert trace.has_column("min_margin")
        header = trace.csv_lines()[0]
        assert header.endswith(",test_error,min_margin")

    def test_cross_entropy_baseline_learns(self):
        data = blobs(n_per=20, seed=4)
        cfg = hf.MlpConfig(eta=0.5, alpha=10.0, zeta=0.0, max_iters=1000,
                           batch_size=20, hidden=12, seed=0)
        trace, params = hf.train_mlp(data, "cross_entropy", cfg)
        assert eval_test_error(params, data) <= 0.05
        assert trace.beta_update_times == []  # no threshold in this loss

    def test_hinge_needs_positive_eta(self):
        data = blobs(n_per=10, seed=5)
        cfg = hf.MlpConfig(eta=0.0, alpha=10.0, zeta=0.0, max_iters=10,
                           batch_size=10, hidden=4, seed=0)
        with pytest.raises(hx.InvalidHyperparameter):
            hf.train_mlp(data, "multiclass_complete_hinge", cfg)

    def test_zero_eta_freezes_cross_entropy(self):
        data = blobs(n_per=10, seed=6)
        cfg = hf.MlpConfig(eta=0.0, alpha=10.0, zeta=0.0, max_iters=20,
                           batch_size=10, hidden=4, seed=9)
        _, params = hf.train_mlp(data, "cross_entropy", cfg)
        fresh = hf.init_params(2, 4, 3, np.random.default_rng(9))
        assert all(np.array_equal(a, b)
                   for a, b in zip(params.arrays(), fresh.arrays()))

    def test_unknown_loss(self):
        data = blobs(n_per=5, seed=7)
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=10,
                           batch_size=5, hidden=4, seed=0)
        with pytest.raises(hx.InvalidHyperparameter):
            hf.train_mlp(data, "hinge_of_unusual_size", cfg)

    def test_divergence_reported(self):
        data = blobs(n_per=10, seed=8)
        cfg = hf.MlpConfig(eta=1e10, alpha=1.0, zeta=0.0, max_iters=50,
                           batch_size=10, hidden=4, seed=0)
        with pytest.raises(hx.NonFinite):
            hf.train_mlp(data, "multiclass_complete_hinge", cfg)

    def test_binary_labels_map_to_classes(self):
        data = Dataset(np.array([[1.0, 0.0], [-1.0, 0.0]]),
                       np.array([1.0, -1.0]))
        assert list(class_indices(data)) == [1, 0]

    def test_deterministic_given_seed(self):
        data = blobs(n_per=10, seed=9)
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=100,
                           batch_size=10, hidden=6, seed=3)
        t1, p1 = hf.train_mlp(data, "multiclass_complete_hinge", cfg)
        t2, p2 = hf.train_mlp(data, "multiclass_complete_hinge", cfg)
        assert t1.csv_lines() == t2.csv_lines()
        assert all(np.array_equal(a, b)
                   for a, b in zip(p1.arrays(), p2.arrays()))


def write_idx(path, images=None, labels=None, magic=None, truncate=0,
              compress=False):
    if images is not None:
        n, r, c = images.shape
        payload = struct.pack(">iiii", magic or 2051, n, r, c)
        payload += images.astype(np.uint8).tobytes()
    else:
        payload = struct.pack(">ii", magic or 2049, labels.size)
        payload += labels.astype(np.uint8).tobytes()
    if truncate:
        payload = payload[:-truncate]
    if compress:
        path.write_bytes(gzip.compress(payload))
    else:
        path.write_bytes(payload)


class TestIdxFiles:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        imgs = rng.integers(0, 256, size=(7, 4, 4)).astype(np.uint8)
        labs = rng.integers(0, 10, size=7).astype(np.uint8)
        write_idx(tmp_path / "imgs.idx", images=imgs)
        write_idx(tmp_path / "labs.idx", labels=labs)
        loaded = hf.read_idx_images(tmp_path / "imgs.idx")
        assert np.array_equal(loaded, imgs.reshape(7, 16))
        assert np.array_equal(hf.read_idx_labels(tmp_path / "labs.idx"), labs)

    def test_gzip_round_trip(self, tmp_path):
        imgs = np.arange(32, dtype=np.uint8).reshape(2, 4, 4)
        write_idx(tmp_path / "imgs.idx.gz", images=imgs, compress=True)
        assert np.array_equal(hf.read_idx_images(tmp_path / "imgs.idx.gz"),
                              imgs.reshape(2, 16))

    def test_bad_magic(self, tmp_path):
        write_idx(tmp_path / "x.idx", images=np.zeros((1, 2, 2)), magic=1234)
        with pytest.raises(hx.ShapeMismatch):
            hf.read_idx_images(tmp_path / "x.idx")

    def test_truncated_payload(self, tmp_path):
        write_idx(tmp_path / "x.idx", images=np.zeros((2, 3, 3)), truncate=4)
        with pytest.raises(hx.ShapeMismatch):
            hf.read_idx_images(tmp_path / "x.idx")

    def test_subset_loader(self, tmp_path):
        rng = np.random.default_rng(1)
        n = 12
        imgs = rng.integers(0, 256, size=(n, 3, 3)).astype(np.uint8)
        labs = (np.arange(n) % 10).astype(np.uint8)
        write_idx(tmp_path / "train-images-idx3-ubyte", images=imgs)
        write_idx(tmp_path / "train-labels-idx1-ubyte", labels=labs)
        write_idx(tmp_path / "t10k-images-idx3-ubyte", images=imgs)
        write_idx(tmp_path / "t10k-labels-idx1-ubyte", labels=labs)
        train, test = hf.load_mnist_subset(tmp_path, n_train=8, n_test=4)
        assert train.n == 8 and test.n == 4
        assert train.d == 9
        assert train.points.min() >= 0.0 and train.points.max() <= 1.0

    def test_missing_directory(self, tmp_path):
        with pytest.raises(hx.UnknownName):
            hf.load_mnist_subset(tmp_path / "nowhere")


class TestDigitsIntegration:
    def test_hinge_competitive_with_cross_entropy(self):
        # offline stand-in for the image benchmark: 8x8 digit scans
        sklearn_datasets = pytest.importorskip("sklearn.datasets")
        digits = sklearn_datasets.load_digits()
        X = digits.data / 16.0
        y = digits.target
        train = Dataset(X[:1400], y[:1400], name="digits-train",
                        allow_duplicates=True)
        test = Dataset(X[1400:], y[1400:], name="digits-test",
                       allow_duplicates=True)
        cfg = hf.MlpConfig(eta=0.1, alpha=10.0, zeta=0.0, max_iters=3000,
                           batch_size=100, hidden=32, seed=0, test_data=test)
        _, p_hinge = hf.train_mlp(train, "multiclass_complete_hinge", cfg)
        _, p_ce = hf.train_mlp(train, "cross_entropy", cfg)
        err_hinge = eval_test_error(p_hinge, test)
        err_ce = eval_test_error(p_ce, test)
        assert err_hinge <= 0.15
        assert err_hinge <= err_ce + 0.02

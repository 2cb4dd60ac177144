import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

import sheaflab as sl
from sheaflab.model import (
    ForwardCache,
    TrainConfig,
    backward,
    build_sheaf_by_kind,
    cross_entropy,
    cross_entropy_grad,
    encode,
    forward,
    grad_arrays,
    init_params,
    param_arrays,
    sheaf_layer,
    train,
)


def small_instance(seed, n=6, p=3, d=2, f=2, layers=2, activation="relu", kind="connection"):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, p))
    raw = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.5]
    labels = rng.integers(0, 2, size=n)
    labels[:2] = [0, 1]  # both classes present
    g = sl.from_edge_list(n, raw, feats, labels)
    sheaf = build_sheaf_by_kind(g, kind, d, seed=seed)
    lap = sl.normalise(sl.sheaf_laplacian(sheaf, g))
    cfg = TrainConfig(d=d, f=f, layers=layers, activation=activation, seed=seed)
    params = init_params(cfg, p, 2, np.random.default_rng(seed + 1))
    return g, lap, params, feats, g.labels


def numeric_grads(params, lap, feats, labels, mask, h=1e-5):
    def loss():
        logits, _ = forward(params, lap, feats)
        return cross_entropy(logits, labels, mask)

    out = []
    for arr in param_arrays(params):
        grad = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + h
            up = loss()
            arr[idx] = orig - h
            down = loss()
            arr[idx] = orig
            grad[idx] = (up - down) / (2 * h)
        out.append(grad)
    return out


def max_rel_err(analytic, numeric):
    worst = 0.0
    for a, b in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
        worst = max(worst, float(np.max(np.abs(a - b) / denom)))
    return worst


class TestEncode:
    def test_zero_encoder(self):
        feats = np.random.default_rng(0).standard_normal((4, 3))
        assert_allclose(encode(feats, np.zeros((6, 3)), 2), np.zeros((8, 3)))

    def test_scalar(self):
        assert_allclose(encode(np.array([[3.0]]), np.array([[2.0]]), 1), [[6.0]])

    def test_linear_composition_oracle(self):
        # decoder applied straight after the encoder is the dense product
        rng = np.random.default_rng(1)
        feats = rng.standard_normal((5, 4))
        w_in = rng.standard_normal((6, 4))   # d=2, f=3
        w_out = rng.standard_normal((2, 6))
        z = encode(feats, w_in, 2).reshape(5, 6)
        assert_allclose(z @ w_out.T, feats @ (w_out @ w_in).T, atol=1e-12)


class TestSheafLayer:
    def setup_method(self):
        self.g, self.lap, self.params, self.feats, self.labels = small_instance(0)
        self.x = encode(self.feats, self.params.w_in, 2)

    @pytest.mark.parametrize("act", ["relu", "tanh", "identity"])
    def test_zero_w1_identity_layer(self, act):
        out = sheaf_layer(self.lap, self.x, np.zeros((2, 2)), np.eye(2), act)
        assert_array_equal(out, self.x)

    def test_identity_weights_euler_step(self):
        out = sheaf_layer(self.lap, self.x, np.eye(2), np.eye(2), "identity")
        assert_allclose(out, sl.euler_diffusion(self.lap, self.x, 1), atol=1e-14)

    def test_dense_kronecker_oracle(self):
        rng = np.random.default_rng(2)
        w1 = rng.standard_normal((2, 2))
        w2 = rng.standard_normal((2, 2))
        got = sheaf_layer(self.lap, self.x, w1, w2, "tanh")
        kron = np.kron(np.eye(self.g.n), w1)
        expected = self.x - np.tanh(self.lap.to_dense() @ kron @ self.x @ w2)
        assert_allclose(got, expected, atol=1e-12)


class TestForward:
    def test_zero_params_uniform_logits(self):
        g, lap, params, feats, labels = small_instance(3)
        for arr in param_arrays(params):
            arr[...] = 0.0
        logits, _ = forward(params, lap, feats)
        assert_array_equal(logits, np.zeros_like(logits))

    def test_single_linear_layer_oracle(self):
        g, lap, params, feats, labels = small_instance(4, layers=1, activation="identity")
        params.layers[0][0][...] = np.eye(2)
        params.layers[0][1][...] = np.eye(2)
        logits, _ = forward(params, lap, feats)
        x0 = encode(feats, params.w_in, 2)
        x1 = (np.eye(lap.dim) - lap.to_dense()) @ x0
        assert_allclose(logits, x1.reshape(g.n, -1) @ params.w_out.T, atol=1e-12)

    def test_permutation_equivariance(self):
        g, lap, params, feats, labels = small_instance(5)
        logits, _ = forward(params, lap, feats)
        rng = np.random.default_rng(5)
        pos = rng.permutation(g.n)  # pos[old] = new index
        new_edges, new_transports = [], []
        sheaf = build_sheaf_by_kind(g, "connection", 2, seed=5)
        for (u, v), o in zip(g.edges, sheaf.transports):
            a, b = int(pos[u]), int(pos[v])
            if a < b:
                new_edges.append((a, b))
                new_transports.append(o)
            else:
                new_edges.append((b, a))
                new_transports.append(o.T)
        order = np.lexsort(
            (np.array(new_edges)[:, 1], np.array(new_edges)[:, 0])
        )
        inv = np.argsort(pos)
        g_perm = sl.from_edge_list(g.n, np.array(new_edges), feats[inv])
        s_perm = sl.Sheaf(
            d=2,
            n=g.n,
            kind="connection",
            edges=np.array(new_edges)[order],
            transports=np.stack(new_transports)[order],
        )
        lap_perm = sl.normalise(sl.sheaf_laplacian(s_perm, g_perm))
        logits_perm, _ = forward(params, lap_perm, feats[inv])
        assert_allclose(logits_perm, logits[inv], atol=1e-10)


class TestCrossEntropy:
    def test_uniform_logits(self):
        logits = np.zeros((4, 5))
        labels = np.array([0, 1, 2, 3])
        got = cross_entropy(logits, labels, np.arange(4))
        assert got == pytest.approx(np.log(5))

    def test_hand_computed(self):
        logits = np.array([[0.0, np.log(3.0)]])
        assert cross_entropy(logits, np.array([0]), [0]) == pytest.approx(np.log(4.0))

    def test_margin_drives_loss_to_zero(self):
        labels = np.array([1])
        losses = [
            cross_entropy(np.array([[0.0, m]]), labels, [0]) for m in (1.0, 10.0, 100.0)
        ]
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-40

    def test_empty_mask(self):
        with pytest.raises(ValueError, match="empty mask"):
            cross_entropy(np.zeros((2, 2)), np.array([0, 1]), [])

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="label"):
            cross_entropy(np.zeros((2, 2)), np.array([0, 7]), [0, 1])


class TestBackward:
    def test_zero_upstream_zero_grads(self):
        g, lap, params, feats, labels = small_instance(6)
        _, cache = forward(params, lap, feats)
        grads = backward(cache, np.zeros((g.n, 2)), lap)
        for arr in grad_arrays(grads):
            assert_array_equal(arr, np.zeros_like(arr))

    @pytest.mark.parametrize("act", ["relu", "tanh", "identity"])
    def test_finite_difference(self, act):
        g, lap, params, feats, labels = small_instance(7, activation=act)
        mask = np.arange(g.n)
        logits, cache = forward(params, lap, feats)
        grads = backward(cache, cross_entropy_grad(logits, labels, mask), lap)
        numeric = numeric_grads(params, lap, feats, labels, mask)
        assert max_rel_err(grad_arrays(grads), numeric) < 1e-5

    def test_finite_difference_tied_weights(self):
        g, lap, _, feats, labels = small_instance(8)
        cfg = TrainConfig(d=2, f=2, layers=3, tied_weights=True)
        params = init_params(cfg, 3, 2, np.random.default_rng(8))
        assert len(params.layers) == 1 and params.steps == 3
        mask = np.arange(g.n)
        logits, cache = forward(params, lap, feats)
        grads = backward(cache, cross_entropy_grad(logits, labels, mask), lap)
        numeric = numeric_grads(params, lap, feats, labels, mask)
        assert max_rel_err(grad_arrays(grads), numeric) < 1e-5

    def test_w2_closed_form_linear_case(self):
        # T=1, identity activation: X1 = X0 - L (I kron W1) X0 W2 is linear
        # in W2, so dW2 = -A^T (L G) with A = (I kron W1) X0
        g, lap, params, feats, labels = small_instance(9, layers=1, activation="identity")
        logits, cache = forward(params, lap, feats)
        dlogits = np.random.default_rng(9).standard_normal(logits.shape)
        grads = backward(cache, dlogits, lap)
        x0 = encode(feats, params.w_in, 2)
        a = np.kron(np.eye(g.n), params.layers[0][0]) @ x0
        gmat = (dlogits @ params.w_out).reshape(lap.dim, -1)
        expected = -a.T @ (lap.to_dense() @ gmat)
        assert_allclose(grads.layers[0][1], expected, atol=1e-10)

    def test_stale_cache_rejected(self):
        g, lap, params, feats, labels = small_instance(10)
        _, cache = forward(params, lap, feats)
        cache.pres.pop()
        with pytest.raises(ValueError, match="stale"):
            backward(cache, np.zeros((g.n, 2)), lap)


class TestAccuracyEvaluate:
    def test_perfect_logits(self):
        labels = np.array([0, 1, 1, 0])
        logits = np.eye(2)[labels] * 5.0
        assert sl.accuracy(logits, labels, np.arange(4)) == 1.0

    def test_exact_fraction(self):
        labels = np.array([0, 1, 1, 1])
        logits = np.tile([5.0, 0.0], (4, 1))  # predicts class 0 everywhere
        assert sl.accuracy(logits, labels, np.arange(4)) == 0.25

    def test_tie_break_lowest_class(self):
        labels = np.array([0, 0, 1, 1])
        logits = np.zeros((4, 2))
        assert sl.accuracy(logits, labels, np.arange(4)) == 0.5

    def test_empty_mask(self):
        with pytest.raises(ValueError, match="empty mask"):
            sl.accuracy(np.zeros((2, 2)), np.array([0, 1]), [])


class TestGcnMlp:
    def test_gcn_single_node(self):
        g = sl.from_edge_list(1, [], np.zeros((1, 2)))
        h = np.array([[2.0, -1.0]])
        w = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert_allclose(sl.gcn_forward(g, h, w, "relu"), np.maximum(h, 0.0))

    def test_gcn_constant_fixed_point_four_cycle(self):
        g = sl.from_edge_list(4, [(0, 1), (1, 2), (2, 3), (0, 3)], np.zeros((4, 2)))
        h = np.full((4, 2), 1.7)
        got = sl.gcn_forward(g, h, np.eye(2), "identity")
        ahat = np.eye(4)
        for u, v in g.edges:
            ahat[u, v] = ahat[v, u] = 1.0
        dense = np.diag(ahat.sum(1) ** -0.5) @ ahat @ np.diag(ahat.sum(1) ** -0.5)
        assert_allclose(got, dense @ h, atol=1e-12)
        assert_allclose(got, h, atol=1e-12)

    def test_gcn_zero_weights(self):
        g = sl.from_edge_list(3, [(0, 1), (1, 2)], np.zeros((3, 2)))
        h = np.random.default_rng(0).standard_normal((3, 4))
        assert_array_equal(sl.gcn_forward(g, h, np.zeros((4, 2))), np.zeros((3, 2)))

    def test_mlp_zero_weights_uniform(self):
        feats = np.random.default_rng(1).standard_normal((5, 3))
        logits = sl.mlp_forward(feats, [np.zeros((3, 4)), np.zeros((4, 2))])
        assert_array_equal(logits, np.zeros((5, 2)))

    def test_mlp_monotone_in_feature(self):
        feats = np.array([[0.5], [1.0], [2.0]])
        logits = sl.mlp_forward(feats, [np.array([[1.0]]), np.array([[1.0]])])
        assert logits[0, 0] < logits[1, 0] < logits[2, 0]

    def test_mlp_dense_oracle(self):
        rng = np.random.default_rng(2)
        feats = rng.standard_normal((6, 3))
        w1 = rng.standard_normal((3, 4))
        w2 = rng.standard_normal((4, 2))
        assert_allclose(
            sl.mlp_forward(feats, [w1, w2], "tanh"), np.tanh(feats @ w1) @ w2
        )


def test_trivial_sheaf_d1_propagation_matches_normalised_graph_laplacian():
    rng = np.random.default_rng(11)
    raw = [(u, v) for u in range(9) for v in range(u + 1, 9) if rng.random() < 0.4]
    g = sl.from_edge_list(9, raw, rng.standard_normal((9, 3)))
    delta = sl.normalise(sl.sheaf_laplacian(sl.trivial_sheaf(g, 1), g)).to_dense()
    deg = np.bincount(g.edges.ravel(), minlength=g.n).astype(float)
    droot = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 1.0)
    expected = droot[:, None] * sl.graph_laplacian(g) * droot[None, :]
    assert_allclose(delta, expected, atol=1e-12)
    assert_allclose(np.eye(g.n) - delta, np.eye(g.n) - expected, atol=1e-12)


def test_multi_step_identity_layers_match_euler():
    g, lap, params, feats, labels = small_instance(12, layers=3, activation="identity")
    for w1, w2 in params.layers:
        w1[...] = np.eye(2)
        w2[...] = np.eye(2)
    x0 = encode(feats, params.w_in, 2)
    x = x0
    for t in range(3):
        x = sheaf_layer(lap, x, *params.layers[t], "identity")
    assert_allclose(x, sl.euler_diffusion(lap, x0, 3), atol=1e-12)


class TestTrain:
    def _dataset(self, seed=0):
        return sl.synth_sbm(60, 2, 0.2, 0.05, 2, 2.0, seed=seed)

    def test_lr_zero_keeps_params(self):
        ds = self._dataset()
        cfg = TrainConfig(lr=0.0, epochs=3, seed=1)
        params, _ = train(ds, "trivial", cfg, 0)
        fresh = init_params(cfg, 2, 2, np.random.default_rng(1))
        for a, b in zip(param_arrays(params), param_arrays(fresh)):
            assert_array_equal(a, b)

    def test_determinism_excluding_timing(self):
        ds = self._dataset(1)
        cfg = TrainConfig(epochs=15, seed=3)
        p1, h1 = train(ds, "connection", cfg, 0)
        p2, h2 = train(ds, "connection", TrainConfig(epochs=15, seed=3), 0)
        for key in ("epoch", "train_loss", "train_acc", "val_acc", "test_acc"):
            assert h1[key] == h2[key]
        assert h1["best_epoch"] == h2["best_epoch"]
        assert h1["test_acc_at_best"] == h2["test_acc_at_best"]
        for a, b in zip(param_arrays(p1), param_arrays(p2)):
            assert np.array_equal(a, b)

    def test_loss_decreases_early(self):
        ds = sl.synth_sbm(200, 2, 0.1, 0.01, 2, 2.0, seed=500)
        _, hist = train(ds, "connection", TrainConfig(seed=0), 0)
        losses = hist["train_loss"][:10]
        assert all(losses[i + 1] < losses[i] for i in range(9))

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown model kind"):
            train(self._dataset(), "nope", TrainConfig(epochs=1), 0)

    def test_split_out_of_range(self):
        with pytest.raises(ValueError, match="split out of range"):
            train(self._dataset(), "trivial", TrainConfig(epochs=1), 99)

    def test_baseline_runs_and_reports(self):
        ds = self._dataset(2)
        for kind in ("gcn", "mlp"):
            _, hist = train(ds, kind, TrainConfig(epochs=10, seed=0), 0)
            assert len(hist["epoch"]) == 10
            assert 0.0 <= hist["test_acc_at_best"] <= 1.0
            assert hist["sheaf_build_seconds"] >= 0.0

    def test_early_stopping_patience(self):
        ds = self._dataset(3)
        cfg = TrainConfig(epochs=300, patience=5, seed=0)
        _, hist = train(ds, "trivial", cfg, 0)
        assert len(hist["epoch"]) < 300

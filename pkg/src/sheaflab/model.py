"""Fixed-sheaf diffusion node classifier with exact reverse-mode gradients.

The network lifts raw node features into stalk space with a linear encoder,
runs T diffusion layers

    X_{t+1} = X_t - act( L (I_n kron W1_t) X_t W2_t )

against a precomputed (constant) sheaf Laplacian L, then reads class logits
out of the flattened stalk state with a linear decoder. Because L never
changes during training, backpropagation only has to traverse the weights;
the layer adjoint reuses L itself through its symmetry.

GCN and MLP baselines train through the same full-batch loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields

import numpy as np

from .graph import Graph
from .laplacian import BlockLaplacian, apply, normalise, sheaf_laplacian
from .sheaf import (
    Sheaf,
    build_connection_sheaf,
    random_edge_sheaf,
    random_node_sheaf,
    trivial_sheaf,
)

SHEAF_KINDS = ("connection", "trivial", "rand-edge", "rand-node")
BASELINE_KINDS = ("gcn", "mlp")
ACTIVATIONS = ("relu", "tanh", "identity")


@dataclass
class TrainConfig:
    """Hyper-parameters for training; every field is addressable from config files."""

    d: int = 2                    # stalk dimension
    f: int = 8                    # feature channels in stalk space
    layers: int = 2               # diffusion steps T
    lr: float = 0.01
    epochs: int = 200
    weight_decay: float = 5e-4
    optimiser: str = "adam"       # adam | sgd
    seed: int = 0
    use_normalised: bool = True
    patience: int = 50            # epochs without val improvement; <= 0 disables
    activation: str = "relu"      # relu | tanh | identity
    tied_weights: bool = False    # share one (W1, W2) pair across layers
    dropout: float = 0.0          # input-feature dropout, train-time only
    hidden: int = 32              # hidden width for the gcn/mlp baselines

    def validate(self) -> None:
        if self.d < 1 or self.f < 1 or self.layers < 1 or self.hidden < 1:
            raise ValueError("d, f, layers and hidden must all be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be >= 0")
        if self.optimiser not in ("adam", "sgd"):
            raise ValueError(f"unknown optimiser {self.optimiser!r}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def config_field_names() -> tuple[str, ...]:
    return tuple(f.name for f in fields(TrainConfig))


@dataclass
class ModelParams:
    """Weights of the diffusion classifier.

    `layers` holds one (W1: d x d, W2: f x f) pair per step, or a single
    shared pair when the weights are tied; `steps` is the number of
    diffusion applications either way.
    """

    w_in: np.ndarray                              # (d*f, p)
    layers: list[tuple[np.ndarray, np.ndarray]]
    w_out: np.ndarray                             # (C, d*f)
    steps: int
    activation: str = "relu"

    def layer_at(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        return self.layers[t % len(self.layers)]


@dataclass
class ParamGradients:
    w_in: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]]
    w_out: np.ndarray


@dataclass
class ForwardCache:
    """Per-layer tensors retained for the backward pass."""

    params: ModelParams
    features: np.ndarray
    xs: list[np.ndarray] = field(default_factory=list)     # T+1 states, (n, d, f)
    lins: list[np.ndarray] = field(default_factory=list)   # (I kron W1) X_t, per layer
    pres: list[np.ndarray] = field(default_factory=list)   # pre-activations, per layer
    z_out: np.ndarray | None = None                        # (n, d*f) decoder input


def _act(y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(y, 0.0)
    if kind == "tanh":
        return np.tanh(y)
    if kind == "identity":
        return y
    raise ValueError(f"unknown activation {kind!r}")


def _act_grad(y: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (y > 0).astype(np.float64)
    if kind == "tanh":
        return 1.0 - np.tanh(y) ** 2
    if kind == "identity":
        return np.ones_like(y)
    raise ValueError(f"unknown activation {kind!r}")


def encode(features: np.ndarray, w_in: np.ndarray, d: int) -> np.ndarray:
    """Lift (n, p) features to the (nd, f) stalk state via the linear encoder."""
    n = features.shape[0]
    df = w_in.shape[0]
    if df % d != 0:
        raise ValueError("encoder row count must be divisible by d")
    f = df // d
    z = features @ w_in.T          # (n, d*f)
    return z.reshape(n * d, f)     # node blocks of d rows, channels as columns


def sheaf_layer(
    lap: BlockLaplacian,
    x: np.ndarray,
    w1: np.ndarray,
    w2: np.ndarray,
    activation: str = "relu",
) -> np.ndarray:
    """One diffusion step X - act( L (I kron W1) X W2 )."""
    x_next, _, _ = _sheaf_layer_cached(lap, x, w1, w2, activation)
    return x_next


def _sheaf_layer_cached(lap, x, w1, w2, activation):
    n, d = lap.n, lap.d
    xb = x.reshape(n, d, -1)
    lin = np.matmul(w1, xb)                       # (I kron W1) X, per-node blocks
    pre = apply(lap, np.matmul(lin, w2).reshape(x.shape))
    x_next = x - _act(pre, activation)
    return x_next, lin, pre


def forward(
    params: ModelParams, lap: BlockLaplacian, features: np.ndarray
) -> tuple[np.ndarray, ForwardCache]:
    """Logits (n, C) plus the cache needed for backward()."""
    n = features.shape[0]
    d = params.layers[0][0].shape[0]
    if lap.n != n or lap.d != d:
        raise ValueError("Laplacian shape does not match features/params")
    x = encode(features, params.w_in, d)
    cache = ForwardCache(params=params, features=features)
    cache.xs.append(x)
    for t in range(params.steps):
        w1, w2 = params.layer_at(t)
        x, lin, pre = _sheaf_layer_cached(lap, x, w1, w2, params.activation)
        cache.lins.append(lin)
        cache.pres.append(pre)
        cache.xs.append(x)
    cache.z_out = x.reshape(n, -1)
    logits = cache.z_out @ params.w_out.T
    return logits, cache


def cross_entropy(logits: np.ndarray, labels: np.ndarray, mask) -> float:
    """Mean negative log-softmax of the true class over `mask` nodes."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    sub = logits[mask]
    lab = np.asarray(labels)[mask]
    if lab.min() < 0 or lab.max() >= logits.shape[1]:
        raise ValueError("label out of range")
    shifted = sub - sub.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(mask.size), lab].mean())


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray, mask) -> np.ndarray:
    """d(loss)/d(logits): (softmax - onehot)/|mask| on masked rows, zero elsewhere."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    sub = logits[mask]
    lab = np.asarray(labels)[mask]
    shifted = sub - sub.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    soft = expz / expz.sum(axis=1, keepdims=True)
    soft[np.arange(mask.size), lab] -= 1.0
    grad = np.zeros_like(logits)
    grad[mask] = soft / mask.size
    return grad


def backward(
    cache: ForwardCache, logits_grad: np.ndarray, lap: BlockLaplacian
) -> ParamGradients:
    """Exact gradients of every weight, treating the Laplacian as a constant.

    The layer adjoint applies L itself in place of L^T (symmetry); the relu
    adjoint uses the cached pre-activation signs.
    """
    params = cache.params
    if len(cache.pres) != params.steps or cache.z_out is None:
        raise ValueError("stale or incomplete forward cache")
    n = cache.features.shape[0]
    d = params.layers[0][0].shape[0]

    dw_out = logits_grad.T @ cache.z_out
    g = (logits_grad @ params.w_out).reshape(n * d, -1)

    dlayers = [
        (np.zeros_like(w1), np.zeros_like(w2)) for (w1, w2) in params.layers
    ]
    for t in reversed(range(params.steps)):
        w1, w2 = params.layer_at(t)
        slot = t % len(params.layers)
        pre = cache.pres[t]
        lin = cache.lins[t]
        xb = cache.xs[t].reshape(n, d, -1)

        d_pre = -g * _act_grad(pre, params.activation)
        d_mid = apply(lap, d_pre)                         # L^T = L
        dw1_acc, dw2_acc = dlayers[slot]
        dw2_acc += lin.reshape(n * d, -1).T @ d_mid
        d_lin = d_mid.reshape(n, d, -1) @ w2.T
        dw1_acc += np.einsum("nif,njf->ij", d_lin, xb)
        g = g + np.matmul(w1.T, d_lin).reshape(n * d, -1)

    dz0 = g.reshape(n, -1)
    dw_in = dz0.T @ cache.features
    return ParamGradients(w_in=dw_in, layers=dlayers, w_out=dw_out)


def param_arrays(params: ModelParams) -> list[np.ndarray]:
    arrs = [params.w_in]
    for w1, w2 in params.layers:
        arrs.extend([w1, w2])
    arrs.append(params.w_out)
    return arrs


def grad_arrays(grads: ParamGradients) -> list[np.ndarray]:
    arrs = [grads.w_in]
    for g1, g2 in grads.layers:
        arrs.extend([g1, g2])
    arrs.append(grads.w_out)
    return arrs


def init_params(
    cfg: TrainConfig, feature_dim: int, n_classes: int, rng: np.random.Generator
) -> ModelParams:
    """Seeded uniform(-a, a) with a = sqrt(1/fan_in), drawn in a fixed order."""

    def u(shape, fan_in):
        a = np.sqrt(1.0 / fan_in)
        return rng.uniform(-a, a, size=shape)

    d, f = cfg.d, cfg.f
    w_in = u((d * f, feature_dim), feature_dim)
    n_pairs = 1 if cfg.tied_weights else cfg.layers
    layer_ws = [(u((d, d), d), u((f, f), f)) for _ in range(n_pairs)]
    w_out = u((n_classes, d * f), d * f)
    return ModelParams(
        w_in=w_in,
        layers=layer_ws,
        w_out=w_out,
        steps=cfg.layers,
        activation=cfg.activation,
    )


def accuracy(logits: np.ndarray, labels: np.ndarray, mask) -> float:
    """Masked argmax accuracy; ties resolve to the lowest class id."""
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("empty mask")
    pred = np.argmax(logits[mask], axis=1)
    return float(np.mean(pred == np.asarray(labels)[mask]))


def evaluate(params: ModelParams, lap: BlockLaplacian, dataset, mask) -> float:
    logits, _ = forward(params, lap, dataset.graph.features)
    return accuracy(logits, dataset.graph.labels, mask)


# ---------------------------------------------------------------------------
# optimisers

class _AdamState:
    def __init__(self, arrays):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0


def _step(arrays, grads, cfg: TrainConfig, adam: _AdamState | None):
    wd = cfg.weight_decay
    if cfg.optimiser == "sgd":
        for a, g in zip(arrays, grads):
            a -= cfg.lr * (g + wd * a)
        return
    adam.t += 1
    b1, b2, eps = 0.9, 0.999, 1e-8
    for i, (a, g) in enumerate(zip(arrays, grads)):
        g = g + wd * a
        adam.m[i] = b1 * adam.m[i] + (1 - b1) * g
        adam.v[i] = b2 * adam.v[i] + (1 - b2) * g * g
        mhat = adam.m[i] / (1 - b1 ** adam.t)
        vhat = adam.v[i] / (1 - b2 ** adam.t)
        a -= cfg.lr * mhat / (np.sqrt(vhat) + eps)


# ---------------------------------------------------------------------------
# GCN / MLP baselines

def gcn_propagation_matrix(g: Graph) -> np.ndarray:
    """Symmetric-normalised adjacency with self-loops, dense."""
    a_hat = np.eye(g.n)
    if g.num_edges:
        us, vs = g.edges[:, 0], g.edges[:, 1]
        a_hat[us, vs] = 1.0
        a_hat[vs, us] = 1.0
    d_inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return d_inv_sqrt[:, None] * a_hat * d_inv_sqrt[None, :]


def gcn_forward(g: Graph, h: np.ndarray, w: np.ndarray, activation: str = "relu") -> np.ndarray:
    """One propagation layer act(P H W) with P the normalised adjacency."""
    return _act(gcn_propagation_matrix(g) @ h @ w, activation)


def mlp_forward(features: np.ndarray, weights, activation: str = "relu") -> np.ndarray:
    """Two-layer perceptron logits; no graph access."""
    w1, w2 = weights
    return _act(features @ w1, activation) @ w2


# ---------------------------------------------------------------------------
# training loops

def build_sheaf_by_kind(g: Graph, kind: str, d: int, seed: int) -> Sheaf:
    if kind == "connection":
        return build_connection_sheaf(g, d)
    if kind == "trivial":
        return trivial_sheaf(g, d)
    if kind == "rand-edge":
        return random_edge_sheaf(g, d, seed)
    if kind == "rand-node":
        return random_node_sheaf(g, d, seed)
    raise ValueError(f"unknown sheaf kind {kind!r}")


def _history_shell():
    return {
        "epoch": [],
        "train_loss": [],
        "train_acc": [],
        "val_acc": [],
        "test_acc": [],
        "epoch_seconds": [],
    }


def _finalise_history(history, best_epoch, best_val, test_at_best, build_seconds):
    history["best_epoch"] = best_epoch
    history["best_val_acc"] = best_val
    history["test_acc_at_best"] = test_at_best
    history["sheaf_build_seconds"] = build_seconds
    history["mean_epoch_seconds"] = float(np.mean(history["epoch_seconds"]))


def train(dataset, kind: str, cfg: TrainConfig, split_index: int = 0):
    """Train one model on one split; returns (best-val params, history).

    `kind` selects the sheaf for the diffusion model (connection, trivial,
    rand-edge, rand-node) or one of the baselines (gcn, mlp). Sheaf or
    propagation-operator construction happens once, before the first epoch,
    and is timed separately from the epochs.
    """
    cfg.validate()
    if kind in BASELINE_KINDS:
        return _train_baseline(dataset, kind, cfg, split_index)
    if kind not in SHEAF_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return _train_diffusion(dataset, kind, cfg, split_index)


def _get_split(dataset, split_index):
    if not 0 <= split_index < len(dataset.splits):
        raise ValueError(
            f"split out of range: {split_index} (dataset has {len(dataset.splits)})"
        )
    return dataset.splits[split_index]


def _train_diffusion(dataset, kind, cfg, split_index):
    g = dataset.graph
    labels = g.labels
    split = _get_split(dataset, split_index)
    n_classes = int(labels.max()) + 1

    t0 = time.perf_counter()
    sheaf = build_sheaf_by_kind(g, kind, cfg.d, cfg.seed)
    lap = sheaf_laplacian(sheaf, g)
    if cfg.use_normalised:
        lap = normalise(lap)
    build_seconds = time.perf_counter() - t0

    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, g.feature_dim, n_classes, rng)
    arrays = param_arrays(params)
    adam = _AdamState(arrays) if cfg.optimiser == "adam" else None

    history = _history_shell()
    best_val, best_epoch, best_arrays, since_best = -1.0, 0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        feats = g.features
        if cfg.dropout > 0.0:
            keep = rng.random(feats.shape) >= cfg.dropout
            feats = feats * keep / (1.0 - cfg.dropout)
        logits, cache = forward(params, lap, feats)
        loss = cross_entropy(logits, labels, split.train)
        grads = backward(cache, cross_entropy_grad(logits, labels, split.train), lap)
        _step(arrays, grad_arrays(grads), cfg, adam)

        eval_logits, _ = forward(params, lap, g.features)
        tr = accuracy(eval_logits, labels, split.train)
        va = accuracy(eval_logits, labels, split.val)
        te = accuracy(eval_logits, labels, split.test)
        history["epoch"].append(epoch)
        history["train_loss"].append(loss)
        history["train_acc"].append(tr)
        history["val_acc"].append(va)
        history["test_acc"].append(te)
        history["epoch_seconds"].append(time.perf_counter() - tic)

        if va > best_val:
            best_val, best_epoch, since_best = va, epoch, 0
            best_arrays = [a.copy() for a in arrays]
        else:
            since_best += 1
            if cfg.patience > 0 and since_best >= cfg.patience:
                break

    for a, b in zip(arrays, best_arrays):
        a[...] = b
    test_at_best = evaluate(params, lap, dataset, split.test)
    _finalise_history(history, best_epoch, best_val, test_at_best, build_seconds)
    return params, history


def _train_baseline(dataset, kind, cfg, split_index):
    g = dataset.graph
    labels = g.labels
    split = _get_split(dataset, split_index)
    n_classes = int(labels.max()) + 1
    x = g.features
    p, h = g.feature_dim, cfg.hidden

    t0 = time.perf_counter()
    prop = gcn_propagation_matrix(g) if kind == "gcn" else None
    build_seconds = time.perf_counter() - t0

    rng = np.random.default_rng(cfg.seed)
    w1 = rng.uniform(-np.sqrt(1 / p), np.sqrt(1 / p), size=(p, h))
    w2 = rng.uniform(-np.sqrt(1 / h), np.sqrt(1 / h), size=(h, n_classes))
    arrays = [w1, w2]
    adam = _AdamState(arrays) if cfg.optimiser == "adam" else None

    def fwd():
        if kind == "gcn":
            px = prop @ x
            z1 = px @ w1
            h1 = _act(z1, cfg.activation)
            return (prop @ h1) @ w2, px, z1, h1
        z1 = x @ w1
        h1 = _act(z1, cfg.activation)
        return h1 @ w2, x, z1, h1

    history = _history_shell()
    best_val, best_epoch, best_arrays, since_best = -1.0, 0, None, 0
    for epoch in range(1, cfg.epochs + 1):
        tic = time.perf_counter()
        logits, inp, z1, h1 = fwd()
        loss = cross_entropy(logits, labels, split.train)
        dlogits = cross_entropy_grad(logits, labels, split.train)
        if kind == "gcn":
            dw2 = (prop @ h1).T @ dlogits
            dh1 = prop @ dlogits @ w2.T
        else:
            dw2 = h1.T @ dlogits
            dh1 = dlogits @ w2.T
        dz1 = dh1 * _act_grad(z1, cfg.activation)
        dw1 = inp.T @ dz1
        _step(arrays, [dw1, dw2], cfg, adam)

        logits, _, _, _ = fwd()
        tr = accuracy(logits, labels, split.train)
        va = accuracy(logits, labels, split.val)
        te = accuracy(logits, labels, split.test)
        history["epoch"].append(epoch)
        history["train_loss"].append(loss)
        history["train_acc"].append(tr)
        history["val_acc"].append(va)
        history["test_acc"].append(te)
        history["epoch_seconds"].append(time.perf_counter() - tic)

        if va > best_val:
            best_val, best_epoch, since_best = va, epoch, 0
            best_arrays = [a.copy() for a in arrays]
        else:
            since_best += 1
            if cfg.patience > 0 and since_best >= cfg.patience:
                break

    for a, b in zip(arrays, best_arrays):
        a[...] = b
    logits, _, _, _ = fwd()
    test_at_best = accuracy(logits, labels, split.test)
    _finalise_history(history, best_epoch, best_val, test_at_best, build_seconds)
    return arrays, history

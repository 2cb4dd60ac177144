import numpy as np

import sheaflab as sl


def random_graph(rng, n=None, p_feat=4, edge_prob=0.3, with_labels=False):
    """Erdos-Renyi-style test graph with Gaussian features."""
    if n is None:
        n = int(rng.integers(5, 25))
    raw = []
    for u in range(n):
        for v in range(u + 1, n):
            if rng.random() < edge_prob:
                raw.append((u, v))
    features = rng.standard_normal((n, p_feat))
    labels = rng.integers(0, 3, size=n) if with_labels else None
    return sl.from_edge_list(n, raw, features, labels)


def random_orthonormal_basis(rng, p, d):
    """Random p x d matrix with orthonormal columns."""
    q, _ = np.linalg.qr(rng.standard_normal((p, d)))
    return q[:, :d]

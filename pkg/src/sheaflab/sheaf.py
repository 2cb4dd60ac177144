"""Discrete O(d)-bundles over attributed graphs.

The connection sheaf is built in two stages. First, every node gets an
orthonormal tangent-space basis from a local PCA of its neighbours'
centred feature vectors, where the neighbourhood is the 1-hop set padded
with feature-space nearest non-neighbours whenever it is smaller than the
stalk dimension. Second, each edge gets the orthogonal map that best
aligns the two endpoint bases in Frobenius norm (the orthogonal Procrustes
solution, the polar factor of the basis cross-Gram).

Trivial and Haar-random bundles are provided as baselines. All
constructions are deterministic functions of their inputs and seeds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError
from .graph import Graph, one_hop_neighbourhood

# Reproducibility thresholds. Left singular vectors are defined only up to
# sign (and up to rotation inside a tied singular block), so builds pin a
# canonical gauge; these tolerances decide when the degenerate branches fire.
_TIE_TOL = 1e-10       # singular values closer than this are one tied group
_RANK_TOL = 1e-10      # relative cutoff below which a singular value is zero
_GS_TOL = 1e-8         # Gram-Schmidt residual below this is near-dependent
_SINGULAR_TOL = 1e-10  # cross-Gram smallest singular value: alignment flagged


@dataclass(frozen=True, eq=False)
class TangentBasis:
    """Orthonormal basis of the estimated tangent space at one node."""

    node: int
    basis: np.ndarray  # (p, d), orthonormal columns, sign-canonical


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Orthogonal map carrying stalk vectors from u to v for edge (u, v), u < v.

    Transport in the reverse direction is the transpose.
    """

    edge: tuple[int, int]
    matrix: np.ndarray  # (d, d)


@dataclass(frozen=True)
class BuildDiagnostics:
    """Counters for the degenerate branches hit during a connection build."""

    padded_nodes: int = 0
    rank_completed_bases: int = 0
    singular_alignments: int = 0


@dataclass(eq=False)
class Sheaf:
    """A discrete O(d)-bundle: one orthogonal transport per canonical edge."""

    d: int
    n: int
    kind: str                   # connection | trivial | rand-edge | rand-node
    edges: np.ndarray           # (m, 2), copied from the graph
    transports: np.ndarray      # (m, d, d); transports[e] maps u-stalk to v-stalk
    bases: list[TangentBasis] | None = None
    diagnostics: BuildDiagnostics | None = None

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def transport_maps(self) -> list[TransportMap]:
        return [
            TransportMap(edge=(int(u), int(v)), matrix=o)
            for (u, v), o in zip(self.edges, self.transports)
        ]

    def __repr__(self) -> str:
        return f"Sheaf(kind={self.kind!r}, n={self.n}, d={self.d}, m={self.num_edges})"


def _sign_canonical(cols: np.ndarray) -> np.ndarray:
    """Flip column signs so the largest-|entry| coordinate (first on ties) is >= 0."""
    if cols.size == 0:
        return cols
    idx = np.argmax(np.abs(cols), axis=0)
    signs = np.sign(cols[idx, np.arange(cols.shape[1])])
    signs[signs == 0] = 1.0
    return cols * signs


def _reorder_ties(u: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort columns inside tied singular-value groups lexicographically."""
    if s.size < 2:
        return u, s
    tol = _TIE_TOL * max(1.0, float(s[0]))
    order = list(range(s.size))
    start = 0
    while start < s.size:
        stop = start + 1
        while stop < s.size and s[stop - 1] - s[stop] <= tol:
            stop += 1
        if stop - start > 1:
            order[start:stop] = sorted(order[start:stop], key=lambda k: tuple(u[:, k]))
        start = stop
    return u[:, order], s[order]


def _complete_basis(cols: list[np.ndarray], p: int, d: int) -> list[np.ndarray]:
    """Extend orthonormal columns to d of them by Gram-Schmidt on e_1, e_2, ..."""
    for k in range(p):
        if len(cols) == d:
            break
        cand = np.zeros(p)
        cand[k] = 1.0
        for c in cols:
            cand = cand - (c @ cand) * c
        nrm = float(np.linalg.norm(cand))
        if nrm > _GS_TOL:
            cols.append(cand / nrm)
    return cols


def _pca_basis(xhat: np.ndarray, d: int) -> tuple[np.ndarray, bool]:
    """Top-d left singular basis of xhat (p x N), rank-completed and canonical."""
    p = xhat.shape[0]
    u, s, _ = np.linalg.svd(xhat, full_matrices=False)
    u = _sign_canonical(u)
    u, s = _reorder_ties(u, s)
    rank_tol = _RANK_TOL * max(1.0, float(s[0]) if s.size else 0.0)
    rank = int(np.sum(s > rank_tol))
    cols = [u[:, k] for k in range(min(d, rank))]
    completed = rank < d
    if completed:
        cols = _complete_basis(cols, p, d)
    basis = _sign_canonical(np.column_stack(cols))
    return basis, completed


def neighbourhood_with_padding(g: Graph, features, i: int, d: int) -> np.ndarray:
    """1-hop neighbours of i, padded up to length d with nearest non-neighbours.

    Padding candidates are every node other than i and its neighbours, taken
    in ascending order of Euclidean feature distance to node i, ties broken
    by lower node id.
    """
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    if g.n <= d:
        raise GuardError(f"cannot pad neighbourhoods: need n > d, got n={g.n}, d={d}")
    features = np.asarray(features, dtype=np.float64)
    hop = one_hop_neighbourhood(g, i)
    if hop.size >= d:
        return hop
    mask = np.ones(g.n, dtype=bool)
    mask[i] = False
    mask[hop] = False
    cand = np.flatnonzero(mask)
    dists = np.linalg.norm(features[cand] - features[i], axis=1)
    order = np.lexsort((cand, dists))  # distance first, node id on ties
    pad = cand[order[: d - hop.size]]
    return np.concatenate([hop, pad])


def local_pca(features, centre: int, neighbours, d: int) -> TangentBasis:
    """Estimate a tangent basis at `centre` from centred neighbour features.

    Columns of the neighbour matrix are x_j - x_centre with identity
    weighting; the basis is the top-d left singular vectors, sign-canonical.
    If the centred matrix has rank below d the basis is completed
    deterministically from standard basis vectors.
    """
    tb, _ = _local_pca(features, centre, neighbours, d)
    return tb


def _local_pca(features, centre, neighbours, d):
    features = np.asarray(features, dtype=np.float64)
    p = features.shape[1]
    if d > p:
        raise GuardError("stalk dimension exceeds feature dimension")
    neighbours = np.asarray(neighbours, dtype=np.int64)
    if neighbours.size == 0:
        raise ValueError("empty neighbour list")
    if neighbours.size < d:
        raise ValueError(f"need at least d={d} neighbours, got {neighbours.size}")
    xhat = (features[neighbours] - features[centre]).T  # (p, N)
    basis, completed = _pca_basis(xhat, d)
    return TangentBasis(node=int(centre), basis=basis), completed


def _polar(m: np.ndarray) -> tuple[np.ndarray, float]:
    """Orthogonal polar factor U V^T of m, plus its smallest singular value."""
    u, s, vt = np.linalg.svd(m)
    smin = float(s[-1]) if s.size else 0.0
    return u @ vt, smin


def align(bi: TangentBasis, bj: TangentBasis) -> np.ndarray:
    """Orthogonal map O minimising ||Bi O - Bj||_F (Procrustes polar factor)."""
    if bi.basis.shape != bj.basis.shape:
        raise ValueError(
            f"dimension mismatch: {bi.basis.shape} vs {bj.basis.shape}"
        )
    o, _ = _polar(bi.basis.T @ bj.basis)
    return o


def transports_from_bases(edges: np.ndarray, bases: list[TangentBasis]):
    """Per-edge u-to-v transport maps from per-node bases, plus a singular count.

    The transport stored for canonical edge (u, v) is the polar factor of
    B_v^T B_u. This orientation makes a change of basis B_i -> B_i Q_i act
    on every transport as Q_v^T O Q_u, i.e. as a block-diagonal orthogonal
    conjugation of the assembled Laplacian, which keeps the spectrum
    gauge-invariant.
    """
    m = edges.shape[0]
    d = bases[0].basis.shape[1]
    transports = np.empty((m, d, d), dtype=np.float64)
    singular = 0
    for e, (u, v) in enumerate(edges):
        o, smin = _polar(bases[v].basis.T @ bases[u].basis)
        singular += int(smin < _SINGULAR_TOL)
        transports[e] = o
    return transports, singular


def build_connection_sheaf(g: Graph, d: int) -> Sheaf:
    """Local PCA bases at every node, Procrustes transport on every edge.

    Pure function of (graph, features, d): identical inputs give
    bit-identical sheaves. Diagnostics count padded neighbourhoods,
    rank-completed bases and near-singular alignments.
    """
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    p = g.feature_dim
    if d > p:
        raise GuardError("stalk dimension exceeds feature dimension")
    if g.n <= d:
        raise GuardError(f"cannot pad neighbourhoods: need n > d, got n={g.n}, d={d}")

    padded = 0
    completed_count = 0
    bases: list[TangentBasis] = []
    for i in range(g.n):
        nbrs = neighbourhood_with_padding(g, g.features, i, d)
        if one_hop_neighbourhood(g, i).size < d:
            padded += 1
        tb, completed = _local_pca(g.features, i, nbrs, d)
        completed_count += int(completed)
        bases.append(tb)

    transports, singular = transports_from_bases(g.edges, bases)
    return Sheaf(
        d=d,
        n=g.n,
        kind="connection",
        edges=g.edges.copy(),
        transports=transports,
        bases=bases,
        diagnostics=BuildDiagnostics(padded, completed_count, singular),
    )


def trivial_sheaf(g: Graph, d: int) -> Sheaf:
    """Identity transport on every edge; recovers the graph Laplacian at d=1."""
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    transports = np.tile(np.eye(d), (g.num_edges, 1, 1))
    return Sheaf(d=d, n=g.n, kind="trivial", edges=g.edges.copy(), transports=transports)


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal d x d matrix.

    QR of a standard Gaussian matrix with the R-diagonal sign correction
    (each Q column scaled by sign(R_kk)), which makes the distribution
    exactly Haar rather than QR-convention dependent.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def _edge_seed_streams(seed: int, count: int) -> list[np.random.Generator]:
    # Counter-based sub-seed per item: draw order is independent of any
    # parallel execution order.
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.default_rng(c) for c in children]


def random_edge_sheaf(g: Graph, d: int, seed: int) -> Sheaf:
    """Independent Haar transport per edge, in canonical edge order."""
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    m = g.num_edges
    transports = np.empty((m, d, d), dtype=np.float64)
    for e, rng in enumerate(_edge_seed_streams(seed, m)):
        transports[e] = haar_orthogonal(d, rng)
    return Sheaf(d=d, n=g.n, kind="rand-edge", edges=g.edges.copy(), transports=transports)


def node_sheaf_from_matrices(g: Graph, matrices: np.ndarray) -> Sheaf:
    """Flat bundle from per-node orthogonal matrices Q_i: edge (u, v) gets Q_u^T Q_v."""
    matrices = np.asarray(matrices, dtype=np.float64)
    if matrices.shape[0] != g.n:
        raise ValueError("need one matrix per node")
    d = matrices.shape[1]
    m = g.num_edges
    transports = np.empty((m, d, d), dtype=np.float64)
    for e, (u, v) in enumerate(g.edges):
        transports[e] = matrices[u].T @ matrices[v]
    return Sheaf(d=d, n=g.n, kind="rand-node", edges=g.edges.copy(), transports=transports)


def random_node_sheaf(g: Graph, d: int, seed: int) -> Sheaf:
    """Haar matrix per node, transports composed from endpoint pairs."""
    if d < 1:
        raise ValueError("stalk dimension must be >= 1")
    qs = np.empty((g.n, d, d), dtype=np.float64)
    for i, rng in enumerate(_edge_seed_streams(seed, g.n)):
        qs[i] = haar_orthogonal(d, rng)
    return node_sheaf_from_matrices(g, qs)


def write_sheaf_csv(s: Sheaf, path) -> None:
    """One record per edge: u, v, then d*d row-major transport entries."""
    lines = [f"n={s.n},d={s.d},kind={s.kind}"]
    for (u, v), o in zip(s.edges, s.transports):
        entries = [repr(float(x)) for x in o.ravel()]
        lines.append(",".join([str(int(u)), str(int(v))] + entries))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_sheaf_csv(path) -> Sheaf:
    with open(path) as fh:
        header = fh.readline().strip()
        meta = dict(item.split("=", 1) for item in header.split(","))
        n, d, kind = int(meta["n"]), int(meta["d"]), meta["kind"]
        edges = []
        blocks = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            edges.append((int(parts[0]), int(parts[1])))
            blocks.append(np.array([float(x) for x in parts[2:]]).reshape(d, d))
    edges_arr = (
        np.asarray(edges, dtype=np.int64) if edges else np.zeros((0, 2), dtype=np.int64)
    )
    transports = (
        np.stack(blocks) if blocks else np.zeros((0, d, d), dtype=np.float64)
    )
    return Sheaf(d=d, n=n, kind=kind, edges=edges_arr, transports=transports)

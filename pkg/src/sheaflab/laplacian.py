"""Coboundary and Laplacian operators over a sheaf.

The Laplacian is stored block-sparse: n diagonal d x d blocks plus one
off-diagonal block per canonical edge (u, v), holding the block at
block-row v / block-column u; the mirrored block is its transpose. For an
orthogonal sheaf the diagonal block at v is deg(v) * I and the stored
off-diagonal block is minus the u-to-v transport. Matrix-vector products
run block-sparse; spectra fall back to a dense symmetric eigensolver
behind a size guard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GuardError
from .graph import Graph
from .sheaf import Sheaf

DENSE_EIG_LIMIT = 5000  # nd beyond this refuses the dense eigensolver


@dataclass(eq=False)
class Coboundary:
    """Block-sparse edge-disagreement operator.

    Block row e for edge (u, v) holds the identity at the head column and
    minus the transport at the tail column; `orientations[e]` = +1 means
    the canonical orientation u -> v, -1 the reverse.
    """

    n: int
    d: int
    edges: np.ndarray        # (m, 2) canonical
    transports: np.ndarray   # (m, d, d), u-stalk to v-stalk
    orientations: np.ndarray  # (m,) values in {+1, -1}

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Per-edge disagreements of a 0-cochain; x is (nd,) or (nd, f)."""
        vec = x.ndim == 1
        xb = (x[:, None] if vec else x).reshape(self.n, self.d, -1)
        m, d = self.num_edges, self.d
        out = np.empty((m, d, xb.shape[2]), dtype=np.float64)
        for e, (u, v) in enumerate(self.edges):
            if self.orientations[e] > 0:
                out[e] = xb[v] - self.transports[e] @ xb[u]
            else:
                out[e] = xb[u] - self.transports[e].T @ xb[v]
        out = out.reshape(m * d, -1)
        return out[:, 0] if vec else out

    def to_dense(self) -> np.ndarray:
        m, n, d = self.num_edges, self.n, self.d
        delta = np.zeros((m * d, n * d), dtype=np.float64)
        eye = np.eye(d)
        for e, (u, v) in enumerate(self.edges):
            rows = slice(e * d, (e + 1) * d)
            if self.orientations[e] > 0:
                delta[rows, v * d:(v + 1) * d] = eye
                delta[rows, u * d:(u + 1) * d] = -self.transports[e]
            else:
                delta[rows, u * d:(u + 1) * d] = eye
                delta[rows, v * d:(v + 1) * d] = -self.transports[e].T
        return delta


@dataclass(eq=False)
class BlockLaplacian:
    """Symmetric nd x nd operator stored as d x d blocks.

    `off[e]` is the block at (block-row v, block-column u) for canonical
    edge (u, v); the (u, v) block is implied as its transpose.
    """

    n: int
    d: int
    edges: np.ndarray       # (m, 2) canonical
    diag: np.ndarray        # (n, d, d)
    off: np.ndarray         # (m, d, d)
    normalised: bool = False

    @property
    def dim(self) -> int:
        return self.n * self.d

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    def to_dense(self) -> np.ndarray:
        n, d = self.n, self.d
        dense = np.zeros((n * d, n * d), dtype=np.float64)
        for v in range(n):
            dense[v * d:(v + 1) * d, v * d:(v + 1) * d] = self.diag[v]
        for e, (u, v) in enumerate(self.edges):
            dense[v * d:(v + 1) * d, u * d:(u + 1) * d] = self.off[e]
            dense[u * d:(u + 1) * d, v * d:(v + 1) * d] = self.off[e].T
        return dense

    def __repr__(self) -> str:
        return (
            f"BlockLaplacian(n={self.n}, d={self.d}, m={self.num_edges}, "
            f"normalised={self.normalised})"
        )


def _check_match(s: Sheaf, g: Graph) -> None:
    if s.n != g.n or not np.array_equal(s.edges, g.edges):
        raise ValueError("sheaf does not match graph (node count or edge list differ)")


def coboundary(s: Sheaf, g: Graph, orientations=None) -> Coboundary:
    """Coboundary operator of the sheaf over g.

    `orientations` overrides the per-edge orientation (+1 canonical u -> v);
    the induced Laplacian is orientation-independent.
    """
    _check_match(s, g)
    m = s.num_edges
    if orientations is None:
        orientations = np.ones(m, dtype=np.int64)
    else:
        orientations = np.asarray(orientations, dtype=np.int64)
        if orientations.shape != (m,) or not np.all(np.abs(orientations) == 1):
            raise ValueError("orientations must be one of +1/-1 per edge")
    return Coboundary(
        n=g.n,
        d=s.d,
        edges=s.edges.copy(),
        transports=s.transports.copy(),
        orientations=orientations,
    )


def sheaf_laplacian(s: Sheaf, g: Graph) -> BlockLaplacian:
    """Direct block assembly: deg(v) * I diagonal, minus-transport off-diagonal."""
    _check_match(s, g)
    n, d, m = g.n, s.d, s.num_edges
    deg = np.bincount(g.edges.ravel(), minlength=n).astype(np.float64)
    diag = deg[:, None, None] * np.eye(d)[None, :, :]
    off = -s.transports.copy()
    return BlockLaplacian(n=n, d=d, edges=s.edges.copy(), diag=diag, off=off)


def laplacian_from_coboundary(c: Coboundary) -> BlockLaplacian:
    """Oracle path: dense delta^T delta, re-blocked on the edge pattern."""
    delta = c.to_dense()
    dense = delta.T @ delta
    n, d = c.n, c.d
    diag = np.empty((n, d, d), dtype=np.float64)
    for v in range(n):
        diag[v] = dense[v * d:(v + 1) * d, v * d:(v + 1) * d]
    off = np.empty((c.num_edges, d, d), dtype=np.float64)
    for e, (u, v) in enumerate(c.edges):
        off[e] = dense[v * d:(v + 1) * d, u * d:(u + 1) * d]
    return BlockLaplacian(n=n, d=d, edges=c.edges.copy(), diag=diag, off=off)


def normalise(lap: BlockLaplacian) -> BlockLaplacian:
    """Symmetric degree normalisation D^{-1/2} L D^{-1/2}.

    D is the block diagonal of L (deg(v) * I for orthogonal sheaves).
    Isolated nodes keep their zero rows: their D block is treated as the
    identity instead of inverting zero.
    """
    if lap.normalised:
        raise ValueError("Laplacian is already normalised")
    deg = np.trace(lap.diag, axis1=1, axis2=2) / lap.d
    scale = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 1.0)
    diag = lap.diag * (scale ** 2)[:, None, None]
    us, vs = lap.edges[:, 0], lap.edges[:, 1]
    off = lap.off * (scale[us] * scale[vs])[:, None, None]
    return BlockLaplacian(
        n=lap.n, d=lap.d, edges=lap.edges.copy(), diag=diag, off=off, normalised=True
    )


def apply(lap: BlockLaplacian, x: np.ndarray) -> np.ndarray:
    """Block-sparse product L x for x of shape (nd,) or (nd, f)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != lap.dim:
        raise ValueError(f"row count {x.shape[0]} does not match nd={lap.dim}")
    vec = x.ndim == 1
    xb = (x[:, None] if vec else x).reshape(lap.n, lap.d, -1)
    out = np.matmul(lap.diag, xb)
    if lap.num_edges:
        us, vs = lap.edges[:, 0], lap.edges[:, 1]
        np.add.at(out, vs, np.matmul(lap.off, xb[us]))
        np.add.at(out, us, np.matmul(np.transpose(lap.off, (0, 2, 1)), xb[vs]))
    out = out.reshape(lap.dim, -1)
    return out[:, 0] if vec else out


def dirichlet_energy(lap: BlockLaplacian, x: np.ndarray) -> float:
    """x^T L x, the squared coboundary norm for the unnormalised Laplacian."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != lap.dim:
        raise ValueError(f"expected a vector of length nd={lap.dim}")
    return float(x @ apply(lap, x))


def spectrum(lap: BlockLaplacian, max_dim: int = DENSE_EIG_LIMIT) -> np.ndarray:
    """Ascending eigenvalues via a dense symmetric solve, size-guarded."""
    if lap.dim > max_dim:
        raise GuardError(
            f"dense eigensolver guard: nd={lap.dim} exceeds limit {max_dim}"
        )
    dense = lap.to_dense()
    return np.linalg.eigvalsh(0.5 * (dense + dense.T))


def euler_diffusion(lap: BlockLaplacian, x0: np.ndarray, steps: int) -> np.ndarray:
    """`steps` unit-step explicit Euler applications of (I - L)."""
    if steps < 0:
        raise ValueError("step count must be >= 0")
    x = np.array(x0, dtype=np.float64)
    for _ in range(steps):
        x = x - apply(lap, x)
    return x


def write_laplacian_coo(lap: BlockLaplacian, path) -> None:
    """Sorted 'i j value' triplets of the nonzero entries, with a size header."""
    entries: list[tuple[int, int, float]] = []
    d = lap.d
    for v in range(lap.n):
        block = lap.diag[v]
        for a in range(d):
            for b in range(d):
                val = float(block[a, b])
                if val != 0.0:
                    entries.append((v * d + a, v * d + b, val))
    for e, (u, v) in enumerate(lap.edges):
        block = lap.off[e]
        for a in range(d):
            for b in range(d):
                val = float(block[a, b])
                if val != 0.0:
                    entries.append((v * d + a, u * d + b, val))
                    entries.append((u * d + b, v * d + a, val))
    entries.sort()
    flag = "true" if lap.normalised else "false"
    with open(path, "w") as fh:
        fh.write(f"nd={lap.dim} d={lap.d} normalised={flag}\n")
        for i, j, val in entries:
            fh.write(f"{i} {j} {repr(val)}\n")


def read_laplacian_coo(path) -> tuple[np.ndarray, int, bool]:
    """Dense matrix, block size and normalised flag from a triplet file."""
    with open(path) as fh:
        header = fh.readline().strip()
        meta = dict(item.split("=", 1) for item in header.split())
        nd = int(meta["nd"])
        d = int(meta["d"])
        normalised = meta["normalised"] == "true"
        dense = np.zeros((nd, nd), dtype=np.float64)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            i_s, j_s, v_s = line.split()
            dense[int(i_s), int(j_s)] = float(v_s)
    return dense, d, normalised

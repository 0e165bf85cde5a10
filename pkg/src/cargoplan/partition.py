"""Spectral partitioning of the abstract graph into delivery regions.

The abstract travel times t_ij become transition rates q_ij = 1/t_ij
(trips per hour). The rate matrix is symmetrized, turned into the
random-walk Laplacian L = I - D^-1 Qs, and the embedding built from the
eigenvectors of the k smallest eigenvalues (the constant one dropped).
Row-normalized embedding coordinates are clustered with k-means.

The eigenproblem is solved on the similar symmetric form
L_sym = I - D^-1/2 Qs D^-1/2 and mapped back via v = D^-1/2 u, which keeps
the eigenpairs real and the numerics stable.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .abstraction import AbstractGraph

DENSE_EIG_LIMIT = 2000


class IsolatedNodeError(ValueError):
    def __init__(self, sites: list[int]):
        super().__init__(f"zero-rate rows for sites {sites}; split isolated sites first")
        self.sites = sites


class EigensolverError(RuntimeError):
    pass


@dataclass
class RateMatrix:
    site_ids: list[int]
    Q: sp.csr_matrix  # q_ij = 1/t_ij on the abstract graph's sparsity pattern


@dataclass
class SpectralEmbedding:
    k: int
    eigenvalues: np.ndarray  # ascending, length k
    V: np.ndarray  # n x (k-1), rows unit-norm
    zero_rows_fixed: int = 0


@dataclass
class PartitionResult:
    assignment: dict[int, int]  # site id -> region id
    region_sizes: list[int]
    embedding: SpectralEmbedding | None
    isolated_singletons: list[int] = field(default_factory=list)


def rate_matrix(g: AbstractGraph) -> RateMatrix:
    """Inverse travel times as trips-per-hour rates, same sparsity as g."""
    if g.n_sites == 0:
        raise ValueError("empty abstract graph")
    idx = {s: i for i, s in enumerate(g.site_ids)}
    rows, cols, vals = [], [], []
    for src, row in g.rows.items():
        for dst, (t, _d) in row.items():
            rows.append(idx[src])
            cols.append(idx[dst])
            vals.append(1.0 / t)
    n = g.n_sites
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return RateMatrix(site_ids=list(g.site_ids), Q=Q)


def symmetrize(q: RateMatrix) -> RateMatrix:
    """Qs = (Q + Q^T)/2 with missing entries treated as zero."""
    Qs = (q.Q + q.Q.T) * 0.5
    return RateMatrix(site_ids=list(q.site_ids), Q=Qs.tocsr())


@dataclass
class Laplacian:
    L: sp.csr_matrix       # I - D^-1 Qs (random walk)
    L_sym: sp.csr_matrix   # I - D^-1/2 Qs D^-1/2
    d_isqrt: np.ndarray    # diagonal of D^-1/2


def laplacian(qs: RateMatrix) -> Laplacian:
    """Random-walk Laplacian plus its symmetric similar form."""
    Qs = qs.Q
    n = Qs.shape[0]
    d = np.asarray(Qs.sum(axis=1)).ravel()
    dead = np.where(d <= 0)[0]
    if dead.size:
        raise IsolatedNodeError([qs.site_ids[i] for i in dead])
    I = sp.identity(n, format="csr")
    Dinv = sp.diags(1.0 / d)
    d_isqrt = 1.0 / np.sqrt(d)
    Disqrt = sp.diags(d_isqrt)
    L = (I - Dinv @ Qs).tocsr()
    L_sym = (I - Disqrt @ Qs @ Disqrt).tocsr()
    return Laplacian(L=L, L_sym=L_sym, d_isqrt=d_isqrt)


def smallest_eigenpairs(lap: Laplacian, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k smallest eigenpairs of L_sym, mapped back to eigenvectors of L."""
    n = lap.L_sym.shape[0]
    if n <= DENSE_EIG_LIMIT or k >= n - 1:
        w, U = np.linalg.eigh(lap.L_sym.toarray())
        w, U = w[:k], U[:, :k]
    else:
        try:
            # spectrum lies in [0, 2]; shift-invert around -1 targets the bottom
            w, U = spla.eigsh(lap.L_sym, k=k, sigma=-1.0, which="LM")
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise EigensolverError(f"eigensolver failed for k={k}, n={n}: {exc}") from exc
        order = np.argsort(w)
        w, U = w[order], U[:, order]
    V = lap.d_isqrt[:, None] * U
    return w, V


def spectral_embed(lap: Laplacian, k: int) -> SpectralEmbedding:
    """Embedding from eigenvectors 2..k of L, rows normalized to unit length."""
    n = lap.L_sym.shape[0]
    if not (2 <= k <= n):
        raise ValueError(f"need 2 <= k <= {n}, got {k}")
    w, vecs = smallest_eigenpairs(lap, k)
    V = vecs[:, 1:].copy()
    norms = np.linalg.norm(V, axis=1)
    zero_rows = norms < 1e-12
    fixed = int(zero_rows.sum())
    if fixed:
        V[zero_rows] = 0.0
        V[zero_rows, 0] = 1.0
        norms = np.linalg.norm(V, axis=1)
    V /= norms[:, None]
    return SpectralEmbedding(k=k, eigenvalues=w, V=V, zero_rows_fixed=fixed)


def kmeans(V: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding.

    Distance ties go to the lowest-index centroid; an emptied cluster is
    re-seeded with the point farthest from its current centroid. Stops when
    assignments stabilize or after 100 iterations.
    """
    n = V.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(V, k, rng)
    labels = np.full(n, -1)
    for _ in range(100):
        dist2 = ((V[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = np.argmin(dist2, axis=1)
        for c in range(k):
            if not np.any(new_labels == c):
                worst = int(np.argmax(dist2[np.arange(n), new_labels]))
                new_labels[worst] = c
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            centroids[c] = V[labels == c].mean(axis=0)
    return labels


def _kmeanspp_init(V: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = V.shape[0]
    centroids = np.empty((k, V.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = V[first]
    closest = ((V - centroids[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=closest / total))
        centroids[c] = V[pick]
        closest = np.minimum(closest, ((V - centroids[c]) ** 2).sum(axis=1))
    return centroids


def partition_graph(g: AbstractGraph, k: int, seed: int) -> PartitionResult:
    """Full partitioning chain: rates, symmetrize, Laplacian, embed, k-means.

    Sites with no abstract-graph connections are split off into singleton
    regions before the spectral step, and k is reduced accordingly.
    """
    if not (1 <= k <= g.n_sites):
        raise ValueError(f"need 1 <= k <= {g.n_sites}, got {k}")

    # splitting an isolated site can strand its sole neighbor, so iterate
    isolated: list[int] = []
    connected = list(g.site_ids)
    while connected:
        q = symmetrize(rate_matrix(_subgraph(g, connected)))
        d = np.asarray(q.Q.sum(axis=1)).ravel()
        newly = [q.site_ids[i] for i in np.where(d <= 0)[0]]
        if not newly:
            break
        isolated.extend(newly)
        dead = set(newly)
        connected = [s for s in connected if s not in dead]

    k_spectral = max(1, min(k - len(isolated), len(connected)))
    assignment: dict[int, int] = {}

    if connected:
        if k_spectral == 1:
            for s in connected:
                assignment[s] = 0
            embedding = None
        else:
            sub = _subgraph(g, connected)
            lap = laplacian(symmetrize(rate_matrix(sub)))
            embedding = spectral_embed(lap, k_spectral)
            labels = kmeans(embedding.V, k_spectral, seed)
            for s, lab in zip(connected, labels):
                assignment[s] = int(lab)
        next_region = max(assignment.values()) + 1 if assignment else 0
    else:
        embedding = None
        next_region = 0

    for s in isolated:
        assignment[s] = next_region
        next_region += 1

    sizes = [0] * next_region
    for r in assignment.values():
        sizes[r] += 1
    return PartitionResult(assignment=assignment, region_sizes=sizes,
                           embedding=embedding, isolated_singletons=isolated)


def _subgraph(g: AbstractGraph, keep: list[int]) -> AbstractGraph:
    keep_set = set(keep)
    rows = {s: {d: td for d, td in g.rows[s].items() if d in keep_set} for s in keep}
    return AbstractGraph(site_ids=list(keep),
                         coords={s: g.coords[s] for s in keep},
                         rows=rows, neighbors_per_row=g.neighbors_per_row)


def region_members(result: PartitionResult) -> dict[int, list[int]]:
    """Region id -> sorted member site ids."""
    out: dict[int, list[int]] = {}
    for s, r in result.assignment.items():
        out.setdefault(r, []).append(s)
    return {r: sorted(m) for r, m in sorted(out.items())}


def serialize_partition(result: PartitionResult) -> str:
    lines = [f"P {s} {r}" for s, r in sorted(result.assignment.items())]
    return "\n".join(lines) + "\n"

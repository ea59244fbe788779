"""Linear networks of line segments and their sparse weight matrices.

A :class:`LinearNetwork` is a collection of straight segments. Two segments
are neighbours when they share an endpoint (within a snapping tolerance), or
when an explicit adjacency list says so. Contribution weights between
neighbours live in a :class:`WeightMatrix`, a thin immutable wrapper around a
CSR matrix whose row ``i`` holds the weights ``w[i, i']`` that segment ``i``
receives from each neighbour ``i'``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

logger = logging.getLogger(__name__)

__all__ = [
    "Segment",
    "NeighborConfig",
    "LinearNetwork",
    "WeightMatrix",
    "build_network",
    "generation_neighbors",
    "build_weights",
    "enumerate_walks",
    "matrix_power_apply",
]

WEIGHT_SCHEMES = ("equal", "exponential", "user")

# Hard limits for the brute-force walk oracle.
MAX_WALK_STEPS = 6
MAX_WALK_NODES = 64


@dataclass(frozen=True)
class Segment:
    """A straight line segment between two planar points."""

    id: int
    start: tuple[float, float]
    end: tuple[float, float]
    length: float | None = None

    def __post_init__(self):
        start = (float(self.start[0]), float(self.start[1]))
        end = (float(self.end[0]), float(self.end[1]))
        if not np.all(np.isfinite(start + end)):
            raise ValueError(f"segment {self.id}: non-finite coordinates")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)
        if self.length is None:
            object.__setattr__(self, "length", float(np.hypot(end[0] - start[0], end[1] - start[1])))
        elif self.length < 0:
            raise ValueError(f"segment {self.id}: negative length")

    @property
    def midpoint(self) -> tuple[float, float]:
        return (0.5 * (self.start[0] + self.end[0]), 0.5 * (self.start[1] + self.end[1]))


@dataclass(frozen=True)
class NeighborConfig:
    """How neighbour sets and weights are derived from a network.

    Parameters
    ----------
    snap_tolerance : float
        Two endpoints closer than this (coordinate units) are the same node.
    include_self : bool
        Whether segment ``i`` belongs to its own neighbour set.
    scheme : {"equal", "exponential", "user"}
        ``equal`` gives ``1/|Omega_i|``; ``exponential`` gives
        ``exp(-d)/|Omega_i|`` with ``d`` the midpoint distance; ``user``
        takes weights supplied to :func:`build_weights`.
    renormalize : bool
        Rescale every non-empty row to sum to one (exponential scheme only).
    """

    snap_tolerance: float = 1e-6
    include_self: bool = True
    scheme: str = "equal"
    renormalize: bool = False

    def __post_init__(self):
        if not self.snap_tolerance >= 0:
            raise ValueError("snap_tolerance must be >= 0")
        if self.scheme not in WEIGHT_SCHEMES:
            raise ValueError(f"unknown weight scheme {self.scheme!r}; expected one of {WEIGHT_SCHEMES}")


@dataclass(frozen=True)
class LinearNetwork:
    """Segments plus a symmetric adjacency structure (self excluded)."""

    segments: tuple[Segment, ...]
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        n = len(self.segments)
        if n == 0:
            raise ValueError("a network needs at least one segment")
        if len(self.adjacency) != n:
            raise ValueError("adjacency must have one entry per segment")
        for k, seg in enumerate(self.segments):
            if seg.id != k:
                raise ValueError(f"segment ids must be dense 0..N-1; position {k} holds id {seg.id}")
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if not 0 <= j < n:
                    raise ValueError(f"segment {i}: neighbour id {j} out of range")
                if j == i:
                    raise ValueError(f"segment {i}: adjacency must not contain self")
                if i not in self.adjacency[j]:
                    raise ValueError(f"adjacency not symmetric: {j} in adj({i}) but {i} not in adj({j})")

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def neighbors(self, i: int, include_self: bool = False) -> tuple[int, ...]:
        """Sorted neighbour set of segment ``i``."""
        nbrs = self.adjacency[i]
        if include_self:
            return tuple(sorted(set(nbrs) | {i}))
        return nbrs

    def midpoints(self) -> np.ndarray:
        return np.array([s.midpoint for s in self.segments], dtype=float)

    def n_edges(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Sparse ``N x N`` contribution weights; row ``i`` feeds segment ``i``."""

    matrix: sparse.csr_matrix
    n: int = field(init=False)

    def __post_init__(self):
        m = sparse.csr_matrix(self.matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"weight matrix must be square, got {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        m.data.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "n", m.shape[0])

    @classmethod
    def identity(cls, n: int) -> "WeightMatrix":
        return cls(sparse.identity(n, format="csr"))

    @classmethod
    def zeros(cls, n: int) -> "WeightMatrix":
        return cls(sparse.csr_matrix((n, n)))

    @classmethod
    def from_dense(cls, a) -> "WeightMatrix":
        return cls(sparse.csr_matrix(np.asarray(a, dtype=float)))

    @property
    def rows(self) -> list[list[tuple[int, float]]]:
        m = self.matrix
        return [
            [(int(j), float(w)) for j, w in zip(m.indices[m.indptr[i]:m.indptr[i + 1]], m.data[m.indptr[i]:m.indptr[i + 1]])]
            for i in range(self.n)
        ]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def __matmul__(self, other):
        return self.matrix @ other


def _as_segment(k: int, geom) -> Segment:
    if isinstance(geom, Segment):
        return Segment(k, geom.start, geom.end, geom.length)
    arr = np.asarray(geom, dtype=float).ravel()
    if arr.size != 4:
        raise ValueError(f"segment {k}: expected two 2-D endpoints, got {geom!r}")
    return Segment(k, (arr[0], arr[1]), (arr[2], arr[3]))


def build_network(
    segments: Iterable,
    cfg: NeighborConfig | None = None,
    adjacency: Mapping[int, Iterable[int]] | Sequence[tuple[int, int]] | None = None,
) -> LinearNetwork:
    """Build a network from segment geometries.

    Parameters
    ----------
    segments : iterable
        Each item is a :class:`Segment` or anything reshapeable to
        ``(x1, y1, x2, y2)``. Ids are reassigned densely in input order.
    cfg : NeighborConfig, optional
        Only ``snap_tolerance`` is used here.
    adjacency : mapping or list of pairs, optional
        Explicit adjacency that replaces geometric snapping. Symmetrised.

    Raises
    ------
    ValueError
        On an empty input, or when two segments have the same pair of
        endpoints (within tolerance).
    """
    cfg = cfg or NeighborConfig()
    segs = tuple(_as_segment(k, g) for k, g in enumerate(segments))
    n = len(segs)
    if n == 0:
        raise ValueError("a network needs at least one segment")

    ends = np.array([s.start for s in segs] + [s.end for s in segs], dtype=float)
    tree = cKDTree(ends)
    pairs = tree.query_pairs(r=cfg.snap_tolerance)

    # endpoint p belongs to segment p % n
    touching: dict[tuple[int, int], int] = {}
    for p, r in pairs:
        a, b = p % n, r % n
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        touching[key] = touching.get(key, 0) + 1
    dupes = []
    for (a, b), _ in touching.items():
        sa, sb = segs[a], segs[b]
        same = _close(sa.start, sb.start, cfg) and _close(sa.end, sb.end, cfg)
        flip = _close(sa.start, sb.end, cfg) and _close(sa.end, sb.start, cfg)
        if same or flip:
            dupes.append((a, b))
    if dupes:
        listing = ", ".join(f"({a}, {b})" for a, b in sorted(dupes))
        raise ValueError(f"duplicate segment geometry for pairs {listing}")

    nbr_sets: list[set[int]] = [set() for _ in range(n)]
    if adjacency is None:
        for a, b in touching:
            nbr_sets[a].add(b)
            nbr_sets[b].add(a)
    else:
        items = adjacency.items() if isinstance(adjacency, Mapping) else ((a, [b]) for a, b in adjacency)
        for a, bs in items:
            for b in bs:
                a_, b_ = int(a), int(b)
                if not (0 <= a_ < n and 0 <= b_ < n):
                    raise ValueError(f"adjacency pair ({a_}, {b_}) refers to an unknown segment")
                if a_ != b_:
                    nbr_sets[a_].add(b_)
                    nbr_sets[b_].add(a_)
    return LinearNetwork(segs, tuple(tuple(sorted(s)) for s in nbr_sets))


def _close(p, q, cfg: NeighborConfig) -> bool:
    return float(np.hypot(p[0] - q[0], p[1] - q[1])) <= cfg.snap_tolerance


def generation_neighbors(
    net: LinearNetwork,
    i: int,
    m: int,
    cfg: NeighborConfig | None = None,
    multiplicity: bool = False,
):
    """The ``m``-th generation neighbours of segment ``i``.

    ``Omega_i^(0) = {i}`` and each further generation is the union of the
    neighbour sets of the previous one, so the result is exactly the set of
    segments reachable from ``i`` by an ``m``-step walk. With
    ``multiplicity=True`` a dict ``{j: number of m-step walks i -> j}`` is
    returned instead of a set.
    """
    cfg = cfg or NeighborConfig()
    if not 0 <= i < net.n_segments:
        raise IndexError(f"segment {i} not in network of size {net.n_segments}")
    if m < 0:
        raise ValueError("generation must be nonnegative")
    counts = {i: 1}
    for _ in range(m):
        nxt: dict[int, int] = {}
        for j, c in counts.items():
            for k in net.neighbors(j, cfg.include_self):
                nxt[k] = nxt.get(k, 0) + c
        counts = nxt
    if multiplicity:
        return dict(sorted(counts.items()))
    return set(counts)


def build_weights(
    net: LinearNetwork,
    cfg: NeighborConfig | None = None,
    user_weights=None,
) -> WeightMatrix:
    """Weight matrix for ``net`` under ``cfg.scheme``.

    A row with an empty neighbour set (isolated segment with
    ``include_self=False``) stays all zero.
    """
    cfg = cfg or NeighborConfig()
    n = net.n_segments
    if cfg.scheme == "user":
        if user_weights is None:
            raise ValueError("scheme 'user' needs user_weights")
        W = WeightMatrix(sparse.csr_matrix(user_weights))
        if W.n != n:
            raise ValueError(f"user weights are {W.n}x{W.n}, network has {n} segments")
        coo = W.matrix.tocoo()
        for r, c, v in zip(coo.row, coo.col, coo.data):
            if v != 0 and c not in net.neighbors(int(r), cfg.include_self):
                raise ValueError(f"user weight w[{r},{c}] = {v} outside the neighbour set of segment {r}")
        return W

    mids = net.midpoints() if cfg.scheme == "exponential" else None
    if mids is not None and not np.all(np.isfinite(mids)):
        raise ValueError("exponential weights need finite midpoints")
    rows, cols, vals = [], [], []
    for i in range(n):
        nbrs = net.neighbors(i, cfg.include_self)
        if not nbrs:
            logger.info("segment %d has no neighbours; its weight row is zero", i)
            continue
        nbrs = np.asarray(nbrs)
        if cfg.scheme == "equal":
            w = np.full(len(nbrs), 1.0 / len(nbrs))
        else:
            d = np.hypot(*(mids[nbrs] - mids[i]).T)
            w = np.exp(-d) / len(nbrs)
            if cfg.renormalize:
                w = w / w.sum()
        rows.extend([i] * len(nbrs))
        cols.extend(nbrs.tolist())
        vals.extend(w.tolist())
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return WeightMatrix(m)


def enumerate_walks(net: LinearNetwork, W: WeightMatrix, j: int, i: int, k: int) -> float:
    """Sum over all ``k``-step walks from ``j`` to ``i`` of the weight products.

    ``k = 0`` counts the empty walk, so the result is 1 when ``i == j``.

    A step ``a -> b`` is allowed when ``w[b, a]`` is stored and carries that
    weight. The walks are enumerated explicitly, so this is exponential in
    ``k`` and is meant as a test oracle for :func:`matrix_power_apply`.
    """
    n = W.n
    if n != net.n_segments:
        raise ValueError("weight matrix and network disagree on N")
    if k > MAX_WALK_STEPS or n > MAX_WALK_NODES:
        raise ValueError(
            f"walk enumeration limited to k <= {MAX_WALK_STEPS} and N <= {MAX_WALK_NODES} (got k={k}, N={n})"
        )
    if k < 0:
        raise ValueError("k must be nonnegative")
    # successors[a] = [(b, w[b, a]), ...]
    csc = W.matrix.tocsc()
    successors = [
        [(int(b), float(w)) for b, w in zip(csc.indices[csc.indptr[a]:csc.indptr[a + 1]], csc.data[csc.indptr[a]:csc.indptr[a + 1]]) if w != 0.0]
        for a in range(n)
    ]

    total = 0.0

    def walk(node, steps_left, prod):
        nonlocal total
        if steps_left == 0:
            if node == i:
                total += prod
            return
        for nxt, w in successors[node]:
            walk(nxt, steps_left - 1, prod * w)

    walk(j, k, 1.0)
    return total


def matrix_power_apply(W: WeightMatrix, k: int, M) -> np.ndarray:
    """Return ``W^k @ M`` by ``k`` successive sparse products."""
    if k < 0:
        raise ValueError("power must be nonnegative")
    out = np.array(M, dtype=float, copy=True)
    if out.shape[0] != W.n:
        raise ValueError(f"dimension mismatch: W is {W.n}x{W.n}, M has {out.shape[0]} rows")
    for _ in range(k):
        out = W.matrix @ out
    return np.asarray(out)

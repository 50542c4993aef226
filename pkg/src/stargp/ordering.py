"""Orderings and sparse conditioning sets over scaled space-time coordinates.

Two orderings are supported:

* ``maximin`` — greedy max-min ordering of the scaled coordinates: after a
  deterministic first pick (nearest the centroid, ties to the lowest
  original index), each step selects the point maximizing the minimum
  distance to everything already ordered.  Visits the domain coarse to
  fine, so the nearest-predecessor distance l_i is non-increasing.
* ``time`` — primary sort on the time coordinate; points sharing a time
  frame are sub-ordered by a spatial maximin ordering of that frame.
  Predecessors then never lie in the future, which is what makes
  chronological forecasting possible.

Conditioning sets c_m(i) are the up-to-m nearest previously ordered points
in the scaled metric, sorted ascending by distance (ties broken by lowest
original index).  Both an exhaustive O(N^2) construction and a KD-tree
accelerated one are provided; they must agree exactly.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

__all__ = [
    "Ordering",
    "maximin_order",
    "time_order",
    "neighbor_sets",
    "nn_accelerated",
    "build_ordering",
    "max_pairwise_distance",
]

# Above this size the exhaustive neighbor scan and exact diameter switch to
# the accelerated / heuristic paths.
_EXHAUSTIVE_LIMIT = 1500
_EXACT_DIAMETER_LIMIT = 32768


@dataclass(frozen=True)
class Ordering:
    """A permutation of the input points plus conditioning-set geometry.

    Attributes
    ----------
    perm : ndarray, shape (N,)
        ``perm[pos]`` is the original index of the point at position pos.
    kind : {"maximin", "time"}
    l : ndarray, shape (N,)
        Scaled distance from each position to its nearest predecessor.
        ``l[0]`` holds the domain diameter (maximum pairwise scaled
        distance): the first conditional is the marginal at the coarsest
        scale and its prior variance needs a finite, large scale.
    neighbors : ndarray, shape (N, m), int64
        ``neighbors[pos, :]`` are predecessor *positions* sorted ascending
        by scaled distance, padded with -1.
    m : int
        Maximum conditioning-set size.
    """

    perm: np.ndarray
    kind: str
    l: np.ndarray
    neighbors: np.ndarray
    m: int

    @property
    def n_points(self) -> int:
        return self.perm.shape[0]

    def neighbor_list(self, pos: int) -> np.ndarray:
        """Conditioning set of the point at position ``pos`` (trimmed)."""
        row = self.neighbors[pos]
        return row[row >= 0]

    def neighbor_counts(self) -> np.ndarray:
        return (self.neighbors >= 0).sum(axis=1)

    def truncated(self, m_new: int) -> "Ordering":
        """Restrict conditioning sets to the ``m_new`` nearest predecessors.

        Valid because neighbors are stored ascending by distance; perm and
        l are unchanged.
        """
        if m_new > self.m:
            raise ValueError(f"cannot grow m from {self.m} to {m_new}")
        return Ordering(
            perm=self.perm,
            kind=self.kind,
            l=self.l,
            neighbors=self.neighbors[:, :m_new].copy(),
            m=m_new,
        )

    def validate(self):
        """Check structural invariants; raises AssertionError on violation."""
        N = self.n_points
        assert np.array_equal(np.sort(self.perm), np.arange(N)), "perm not a bijection"
        counts = self.neighbor_counts()
        expected = np.minimum(self.m, np.arange(N))
        assert np.array_equal(counts, expected), "conditioning-set sizes wrong"
        for pos in range(min(N, 64)):  # spot-check predecessor property
            nb = self.neighbor_list(pos)
            assert np.all(nb < pos), "neighbor is not a predecessor"
        assert np.all(self.l > 0), "nonpositive nearest-predecessor distance"


@njit(cache=True, fastmath=True)
def _fps_core(X, first):
    """Greedy max-min ordering by incremental min-distance updates.

    Works on compacted copies of the still-unordered points so the hot
    loop streams contiguous memory.  Ties in the arg-max are broken toward
    the lowest original index (the comparison is order-independent, so the
    compaction does not affect it).  Returns (perm, lmin) where lmin[i] is
    the selection-time min distance (lmin[0] = 0, filled by the caller
    with the domain diameter).
    """
    N, D = X.shape
    perm = np.empty(N, dtype=np.int64)
    lmin = np.zeros(N)
    ids = np.empty(N, dtype=np.int64)
    Xa = np.empty((N, D))
    d2 = np.empty(N)
    xsel = np.empty(D)

    perm[0] = first
    na = 0
    best = -1.0
    bpos = -1
    for j in range(N):
        if j == first:
            continue
        acc = 0.0
        for c in range(D):
            diff = X[j, c] - X[first, c]
            Xa[na, c] = X[j, c]
            acc += diff * diff
        d2[na] = acc
        ids[na] = j
        if acc > best or (acc == best and j < ids[bpos]):
            best = acc
            bpos = na
        na += 1

    for i in range(1, N):
        perm[i] = ids[bpos]
        lmin[i] = np.sqrt(best)
        for c in range(D):
            xsel[c] = Xa[bpos, c]
        # swap-pop the selected point out of the compacted arrays
        na -= 1
        ids[bpos] = ids[na]
        d2[bpos] = d2[na]
        for c in range(D):
            Xa[bpos, c] = Xa[na, c]
        best = -1.0
        bpos = 0
        for k in range(na):
            acc = 0.0
            for c in range(D):
                diff = Xa[k, c] - xsel[c]
                acc += diff * diff
            if acc < d2[k]:
                d2[k] = acc
            v = d2[k]
            if v > best or (v == best and ids[k] < ids[bpos]):
                best = v
                bpos = k
    return perm, lmin


def maximin_order(X_tilde):
    """Greedy max-min ordering of scaled coordinates.

    The first point is the one nearest the centroid (ties to the lowest
    original index); every subsequent point maximizes the minimum distance
    to the already-ordered set.

    Parameters
    ----------
    X_tilde : ndarray, shape (N, k)
        Scaled coordinates (any k >= 1; time ordering reuses this on the
        spatial block alone).

    Returns
    -------
    perm : ndarray, shape (N,), int64
        Position -> original index.
    lmin : ndarray, shape (N,)
        Min distance to predecessors at selection time; lmin[0] = 0.
    """
    X = np.ascontiguousarray(X_tilde, dtype=float)
    if X.ndim != 2:
        raise ValueError("X_tilde must be 2-D")
    N = X.shape[0]
    if N == 1:
        return np.zeros(1, dtype=np.int64), np.zeros(1)
    centroid = X.mean(axis=0)
    first = int(np.argmin(((X - centroid) ** 2).sum(axis=1)))
    return _fps_core(X, first)


def time_order(X_tilde):
    """Chronological ordering with spatial maximin inside each time frame.

    Points are grouped by unique time value (last column, ascending); each
    frame is ordered by a maximin ordering of its spatial coordinates, and
    the per-frame orders are concatenated.  With all-distinct times this
    degenerates to a plain time sort.

    Returns
    -------
    perm : ndarray, shape (N,), int64
    """
    X = np.ascontiguousarray(X_tilde, dtype=float)
    t = X[:, -1]
    parts = []
    for tv in np.unique(t):
        idx = np.nonzero(t == tv)[0]
        if idx.size == 1:
            parts.append(idx)
        else:
            sub, _ = maximin_order(X[idx, :-1])
            parts.append(idx[sub])
    return np.concatenate(parts)


def max_pairwise_distance(X, exact_limit=_EXACT_DIAMETER_LIMIT):
    """Maximum pairwise Euclidean distance (domain diameter).

    Exact via blocked pairwise evaluation up to ``exact_limit`` points;
    beyond that, an iterated farthest-point sweep from several deterministic
    starts (exact on typical data, a lower bound in adversarial cases).
    """
    X = np.ascontiguousarray(X, dtype=float)
    N = X.shape[0]
    if N <= exact_limit:
        best = 0.0
        block = 2048
        for s in range(0, N, block):
            chunk = X[s : s + block]
            d2 = ((chunk[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
            best = max(best, float(d2.max()))
        return float(np.sqrt(best))

    def farthest_from(i):
        d2 = ((X - X[i]) ** 2).sum(axis=1)
        j = int(np.argmax(d2))
        return j, float(d2[j])

    centroid = X.mean(axis=0)
    starts = [int(np.argmin(((X - centroid) ** 2).sum(axis=1)))]
    starts += [int(np.argmax(X[:, c])) for c in range(X.shape[1])]
    best = 0.0
    for s0 in starts:
        i = s0
        for _ in range(8):  # converges in a couple of sweeps
            j, d2 = farthest_from(i)
            if d2 <= best:
                break
            best = d2
            i = j
    return float(np.sqrt(best))


def _select_m_smallest(d, cand_pos, orig_of_pos, m):
    """Indices of the m smallest by (distance, original index)."""
    if d.size <= m:
        order = np.lexsort((orig_of_pos[cand_pos], d))
        return cand_pos[order]
    part = np.argpartition(d, m - 1)[:m]
    dmax = d[part].max()
    sel = np.nonzero(d <= dmax)[0]
    order = np.lexsort((orig_of_pos[cand_pos[sel]], d[sel]))
    return cand_pos[sel[order][:m]]


def _dists_to_predecessors(Xo, i):
    """Distances from Xo[i] to Xo[:i], accumulated dimension by dimension.

    The accumulation order matches the KD tree's, so distances agree bit
    for bit between the exhaustive and accelerated paths.
    """
    d2 = np.zeros(i)
    for c in range(Xo.shape[1]):
        d2 += (Xo[:i, c] - Xo[i, c]) ** 2
    return np.sqrt(d2)


def neighbor_sets(X_tilde, perm, m):
    """Exhaustive conditioning sets: m nearest predecessors per position.

    Parameters
    ----------
    X_tilde : ndarray, shape (N, k)
        Scaled coordinates.
    perm : ndarray, shape (N,)
        Ordering (position -> original index).
    m : int

    Returns
    -------
    neighbors : ndarray, shape (N, m), int64
        Predecessor positions sorted ascending by scaled distance, -1 pad.
    l : ndarray, shape (N,)
        Distance to the nearest predecessor; l[0] is the domain diameter.
    """
    X = np.ascontiguousarray(X_tilde, dtype=float)
    perm = np.asarray(perm, dtype=np.int64)
    N = perm.shape[0]
    if m < 1:
        raise ValueError("m must be >= 1")
    Xo = X[perm]
    neighbors = np.full((N, m), -1, dtype=np.int64)
    l = np.zeros(N)
    l[0] = max_pairwise_distance(X)
    for i in range(1, N):
        d = _dists_to_predecessors(Xo, i)
        sel = _select_m_smallest(d, np.arange(i), perm, m)
        neighbors[i, : sel.size] = sel
        l[i] = d[sel[0]]
    return neighbors, l


def nn_accelerated(X_tilde, perm, m, chunk=2048, workers=-1):
    """KD-tree accelerated conditioning sets; contract identical to
    :func:`neighbor_sets`.

    Positions are processed in chunks; predecessors split into the prefix
    before the chunk (queried against a KD tree built once per chunk) and
    the in-chunk predecessors (dense scan).  A candidate pool of the m+pad
    tree hits plus all in-chunk predecessors provably contains the true m
    nearest.  Selection is vectorized per chunk; rows with distance ties at
    the selection boundary (where the tree's arbitrary tie resolution or
    the in-row ordering could diverge from the exhaustive scan) take a
    per-row exact path, so results match :func:`neighbor_sets` bit for bit.
    """
    X = np.ascontiguousarray(X_tilde, dtype=float)
    perm = np.asarray(perm, dtype=np.int64)
    N = perm.shape[0]
    if m < 1:
        raise ValueError("m must be >= 1")
    Xo = X[perm]
    neighbors = np.full((N, m), -1, dtype=np.int64)
    l = np.zeros(N)
    l[0] = max_pairwise_distance(X)
    pad = 8

    def exact_row(i):
        d = _dists_to_predecessors(Xo, i)
        sel = _select_m_smallest(d, np.arange(i), perm, m)
        neighbors[i, : sel.size] = sel
        l[i] = d[sel[0]]

    for s in range(0, N, chunk):
        e = min(s + chunk, N)
        B = e - s
        if s > 0:
            tree = cKDTree(Xo[:s])
            k = min(m + pad, s)
            td, ti = tree.query(Xo[s:e], k=k, workers=workers)
            td = td.reshape(B, -1)
            ti = ti.reshape(B, -1).astype(np.int64)
        else:
            k = 0
            td = np.empty((B, 0))
            ti = np.empty((B, 0), dtype=np.int64)

        # dense in-chunk predecessor distances (masked above the diagonal);
        # accumulate per dimension so values bit-match the exhaustive scan
        G = Xo[s:e]
        local_d2 = np.zeros((B, B))
        for c in range(G.shape[1]):
            local_d2 += (G[:, c][:, None] - G[:, c][None, :]) ** 2
        local_d = np.sqrt(local_d2)
        local_d[np.triu_indices(B)] = np.inf

        cand_d = np.concatenate([td, local_d], axis=1)  # (B, k+B)
        cand_p = np.concatenate(
            [ti, np.broadcast_to(s + np.arange(B), (B, B))], axis=1
        )
        n_cand = cand_d.shape[1]
        if n_cand > m:
            part = np.argpartition(cand_d, m, axis=1)
            top = np.take_along_axis(cand_d, part[:, : m + 1], axis=1)
            order = np.argsort(top[:, :m], axis=1, kind="stable")
            sel_cols = np.take_along_axis(part[:, :m], order, axis=1)
            sel_d = np.take_along_axis(top[:, :m], order, axis=1)
            boundary = top[:, m]  # (m+1)-th smallest candidate distance
        else:
            order = np.argsort(cand_d, axis=1, kind="stable")
            sel_cols = order[:, :m]
            sel_d = np.take_along_axis(cand_d, sel_cols, axis=1)
            boundary = np.full(B, np.inf)
        sel_p = np.take_along_axis(cand_p, sel_cols, axis=1)

        n_pred = s + np.arange(B)  # predecessors per row
        take = np.minimum(n_pred, m)
        last = np.where(take > 0, sel_d[np.arange(B), np.maximum(take - 1, 0)], -np.inf)
        # rows whose selection is provably tie-free and pool-complete
        tie_inside = np.zeros(B, dtype=bool)
        if m > 1:
            with np.errstate(invalid="ignore"):  # inf slots in short rows
                tie_inside = (np.diff(sel_d, axis=1) == 0.0).any(axis=1)
        tie_at_edge = boundary <= last
        tree_edge = (k < s) & (k > 0) & (td[:, -1] <= last) if k else np.zeros(B, bool)
        needs_exact = tie_inside | tie_at_edge | tree_edge

        for bi in range(B):
            i = s + bi
            if i == 0:
                continue
            if needs_exact[bi]:
                exact_row(i)
                continue
            t = take[bi]
            neighbors[i, :t] = sel_p[bi, :t]
            l[i] = sel_d[bi, 0]
    return neighbors, l


def build_ordering(X_tilde, kind="maximin", m=30, engine="auto", workers=-1):
    """Construct an :class:`Ordering` over scaled coordinates.

    Parameters
    ----------
    X_tilde : ndarray, shape (N, d+1)
        Scaled coordinates, time in the last column.
    kind : {"maximin", "time"}
    m : int
        Maximum conditioning-set size.
    engine : {"auto", "exhaustive", "kdtree"}
        Neighbor-search backend; "auto" switches to the KD tree above
        ~1500 points.  Both backends return identical sets.
    workers : int
        Thread count for KD-tree queries (-1 = all cores); queries are
        pure selections, so results are thread-count invariant.
    """
    X = np.ascontiguousarray(X_tilde, dtype=float)
    N = X.shape[0]
    if N < 2:
        raise ValueError("need at least two points")
    if kind == "maximin":
        perm, _ = maximin_order(X)
    elif kind == "time":
        perm = time_order(X)
    else:
        raise ValueError(f"unknown ordering kind {kind!r}")

    if engine == "auto":
        engine = "exhaustive" if N <= _EXHAUSTIVE_LIMIT else "kdtree"
    if engine == "exhaustive":
        neighbors, l = neighbor_sets(X, perm, m)
    elif engine == "kdtree":
        neighbors, l = nn_accelerated(X, perm, m, workers=workers)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return Ordering(perm=perm, kind=kind, l=l, neighbors=neighbors, m=m)

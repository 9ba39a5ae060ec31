"""Rank / nearest-neighbour estimate of the conditional dependence coefficient.

For an ordered pair ``(i, j)`` the estimate compares, for every sample ``k``,
the rank of ``x_i`` at ``k`` with its rank at the nearest neighbour of ``k``
in two spaces: all columns except ``i`` and ``j`` (neighbour ``N(k)``) and
all columns except ``i`` (neighbour ``M(k)``)::

    sum_k min(R_k, R_M(k)) - min(R_k, R_N(k))
    -----------------------------------------
         sum_k R_k - min(R_k, R_N(k))

Squared Euclidean distances have one canonical definition here: the running
sum of ``(a_c - b_c) * (a_c - b_c)`` over the kept columns in ascending
order, starting from ``0.0``. Every backend either computes exactly that or
screens candidates cheaply and then recomputes exactly that, so exact
distance ties are identified identically everywhere.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy.spatial import cKDTree

from .core import CondGraphError, DataMatrix, DepMatrix, ValidationError, validate_data

RANK_CONVENTIONS = ("ge", "le")
KDTREE_MAX_DIM = 10
# batched all-pairs path is used up to this many samples
BATCH_MAX_N = 1500

_TAG_N = 1
_TAG_M = 2
_EPS = np.finfo(float).eps
_CHUNK_ELEMS = 2_000_000


class DegenerateDimError(CondGraphError, ValueError):
    pass


class DegenerateDenominatorError(CondGraphError, ArithmeticError):
    """The rank denominator is zero: ``x_i`` is empirically a function of the
    conditioning columns, so the coefficient is undefined for this pair."""

    def __init__(self, i: int, j: int):
        self.i = i
        self.j = j
        super().__init__(f"zero denominator for pair ({i}, {j})")


@dataclass(frozen=True)
class TieStream:
    """Keyed, counter-based source of tie-breaking uniforms.

    The same ``(seed, key)`` always yields the same uniforms, independent of
    how many other streams were used before or on which thread.
    """

    seed: int
    key: tuple[int, int, int] = (0, 0, 0)

    def generator(self) -> np.random.Generator:
        s = int(self.seed)
        words = [s & 0xFFFFFFFF, s >> 32, *self.key]
        return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))

    def uniforms(self, n: int) -> np.ndarray:
        return self.generator().random(n)


def neighbor_stream(seed: int, i: int, j: int | None = None) -> TieStream:
    """Stream for the neighbours over all columns but ``i`` (and ``j``).

    The space without ``{i, j}`` is the same for ``(i, j)`` and ``(j, i)``,
    so that key is unordered. The space without ``i`` does not involve ``j``.
    """
    if j is None:
        return TieStream(seed, (_TAG_M, i, 0))
    a, b = (i, j) if i < j else (j, i)
    return TieStream(seed, (_TAG_N, a, b))


@dataclass(frozen=True)
class NeighborAssignment:
    indices: np.ndarray
    tie_count: np.ndarray


def ranks_desc(column) -> np.ndarray:
    """``ranks[k] = #{l : x_l >= x_k}``; the largest value gets rank 1."""
    x = np.asarray(column, dtype=float)
    s = np.sort(x)
    return len(x) - np.searchsorted(s, x, side="left")


def ranks_asc(column) -> np.ndarray:
    """``ranks[k] = #{l : x_l <= x_k}``."""
    x = np.asarray(column, dtype=float)
    return np.searchsorted(np.sort(x), x, side="right")


def ranks(column, convention: str = "ge") -> np.ndarray:
    if convention == "ge":
        return ranks_desc(column)
    if convention == "le":
        return ranks_asc(column)
    raise ValidationError(f"unknown rank convention {convention!r}")


def _resolve_ties(owner, cols, dist, n_groups: int,
                  uniforms: Callable[[np.ndarray], np.ndarray]):
    """Pick one minimiser per group.

    ``owner`` is sorted and covers every group ``0..n_groups-1``; within a
    group candidates appear in ascending index order. Among ``c`` tied
    minimisers the one at position ``floor(u * c)`` is chosen, with ``u``
    supplied per tied group by ``uniforms``.
    """
    starts = np.flatnonzero(np.r_[True, owner[1:] != owner[:-1]])
    if len(starts) != n_groups:
        raise AssertionError("every point needs at least one candidate")
    sizes = np.diff(np.r_[starts, len(owner)])
    best = np.minimum.reduceat(dist, starts)
    is_min = dist == np.repeat(best, sizes)
    counts = np.add.reduceat(is_min.astype(np.int64), starts)
    min_pos = np.flatnonzero(is_min)
    first = np.r_[0, np.cumsum(counts)[:-1]]
    offset = np.zeros(n_groups, dtype=np.int64)
    tied = np.flatnonzero(counts > 1)
    if len(tied):
        u = uniforms(tied)
        offset[tied] = np.minimum((u * counts[tied]).astype(np.int64), counts[tied] - 1)
    return cols[min_pos[first + offset]], counts


def _row_chunk(n: int) -> int:
    return max(1, _CHUNK_ELEMS // max(n, 1))


def _brute_candidates(P: np.ndarray):
    n, d = P.shape
    rows_out, cols_out, dist_out = [], [], []
    step = _row_chunk(n)
    for r0 in range(0, n, step):
        r1 = min(n, r0 + step)
        acc = np.zeros((r1 - r0, n))
        for c in range(d):
            diff = P[r0:r1, c, None] - P[None, :, c]
            acc += diff * diff
        acc[np.arange(r1 - r0), np.arange(r0, r1)] = np.inf
        mask = acc == acc.min(axis=1, keepdims=True)
        rr, cc = np.nonzero(mask)
        rows_out.append(rr + r0)
        cols_out.append(cc)
        dist_out.append(acc[rr, cc])
    return np.concatenate(rows_out), np.concatenate(cols_out), np.concatenate(dist_out)


def _exact_sq(P: np.ndarray, rows, cols) -> np.ndarray:
    diff = P[rows] - P[cols]
    return np.cumsum(diff * diff, axis=1)[:, -1]


def _kdtree_candidates(P: np.ndarray):
    n = P.shape[0]
    tree = cKDTree(P)
    dd, _ = tree.query(P, k=2)
    radius = dd[:, 1] * (1.0 + 1e-7) + 1e-300
    lists = tree.query_ball_point(P, radius, return_sorted=True)
    lengths = np.fromiter((len(x) for x in lists), dtype=np.int64, count=n)
    rows = np.repeat(np.arange(n), lengths)
    cols = np.fromiter((v for x in lists for v in x), dtype=np.int64, count=int(lengths.sum()))
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    return rows, cols, _exact_sq(P, rows, cols)


def nearest_neighbors(points, stream: TieStream | None = None,
                      backend: str = "auto") -> NeighborAssignment:
    """Exact Euclidean nearest neighbour of every point, self excluded.

    Ties (exactly equal squared distances) are broken uniformly at random
    using ``stream``. ``backend`` is ``"brute"`` (the reference O(n^2 d)
    scan), ``"kdtree"``, or ``"auto"`` (k-d tree when ``d <= 10``).
    """
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    n, d = P.shape
    if d == 0:
        raise DegenerateDimError("nearest neighbours requested in a 0-dimensional space")
    if n < 2:
        raise ValidationError("need at least 2 points")
    if stream is None:
        stream = TieStream(0)
    if backend == "auto":
        backend = "kdtree" if d <= KDTREE_MAX_DIM else "brute"
    if backend == "brute":
        rows, cols, dist = _brute_candidates(P)
    elif backend == "kdtree":
        rows, cols, dist = _kdtree_candidates(P)
    else:
        raise ValidationError(f"unknown backend {backend!r}")
    cache: list[np.ndarray] = []

    def uniforms(tied):
        if not cache:
            cache.append(stream.uniforms(n))
        return cache[0][tied]

    idx, counts = _resolve_ties(rows, cols, dist, n, uniforms)
    return NeighborAssignment(idx, counts)


def _statistic(r: np.ndarray, nn_n: np.ndarray, nn_m: np.ndarray):
    """Integer numerator and denominator of the estimate."""
    low_n = np.minimum(r, r[nn_n])
    num = int(np.sum(np.minimum(r, r[nn_m]) - low_n))
    den = int(np.sum(r - low_n))
    return num, den


def _as_matrix(data) -> DataMatrix:
    return data if isinstance(data, DataMatrix) else validate_data(data)


def codec_tn(data, i: int, j: int, seed: int = 0, *, rank_convention: str = "ge",
             backend: str = "auto") -> float:
    """Estimate the dependence of column ``i`` on column ``j`` given the rest.

    Raises :class:`DegenerateDenominatorError` when the estimate is undefined.
    """
    dm = _as_matrix(data)
    p = dm.p
    if i == j:
        raise ValidationError("i and j must differ")
    if not (0 <= i < p and 0 <= j < p):
        raise ValidationError(f"column index out of range for p={p}")
    X = dm.values
    r = ranks(X[:, i], rank_convention)
    rest = [c for c in range(p) if c != i and c != j]
    without_i = [c for c in range(p) if c != i]
    nn_n = nearest_neighbors(X[:, rest], neighbor_stream(seed, i, j), backend).indices
    nn_m = nearest_neighbors(X[:, without_i], neighbor_stream(seed, i), backend).indices
    num, den = _statistic(r, nn_n, nn_m)
    if den == 0:
        raise DegenerateDenominatorError(i, j)
    return num / den


# --- all-pairs path -------------------------------------------------------


def _full_sq(X: np.ndarray) -> np.ndarray:
    n, p = X.shape
    acc = np.zeros((n, n))
    for c in range(p):
        diff = X[:, c, None] - X[None, :, c]
        acc += diff * diff
    return acc


@numba.njit(cache=True, nogil=True)
def _screen(XT, dfull, margin, drops, g0, g1):
    """Candidate neighbours for deleted-column spaces ``drops[g0:g1]``.

    ``XT`` is the transposed data (one contiguous row per column). Returns
    CSR arrays ``(ptr, cand)`` over rows ``(g, k)``. Screened distances are
    ``dfull - S_a - S_b``; a candidate is any point within ``margin[k]`` of
    the screened row minimum, a superset of the exact minimisers.
    """
    n = XT.shape[1]
    rows = (g1 - g0) * n
    ptr = np.zeros(rows + 1, dtype=np.int64)
    cand = np.empty(rows + 16, dtype=np.int64)
    buf = np.empty(n)
    zero = np.zeros(n)
    used = 0
    for g in range(g0, g1):
        xa = XT[drops[g, 0]]
        xb = XT[drops[g, 1]] if drops[g, 1] >= 0 else zero
        for k in range(n):
            dk = dfull[k]
            ak = xa[k]
            bk = xb[k]
            for l in range(n):
                da = ak - xa[l]
                db = bk - xb[l]
                buf[l] = dk[l] - da * da - db * db
            buf[k] = np.inf
            best = np.inf
            for l in range(n):
                best = min(best, buf[l])
            cut = best + margin[k]
            hits = 0
            for l in range(n):
                hits += buf[l] <= cut
            if used + hits > cand.shape[0]:
                grown = np.empty(2 * (used + hits), dtype=np.int64)
                grown[:used] = cand[:used]
                cand = grown
            for l in range(n):
                if buf[l] <= cut:
                    cand[used] = l
                    used += 1
            ptr[(g - g0) * n + k + 1] = used
    return ptr, cand[:used]


def _batched_neighbors(X, dfull, margin, drops, seed, threads):
    """Neighbours for many column-deleted spaces at once.

    ``drops`` is an ``(m, 2)`` array of deleted columns; a second entry of
    ``-1`` means a single deleted column. Rows with several screened
    candidates are rescored with the canonical distance.
    """
    n, p = X.shape
    m = len(drops)
    out = np.empty((m, n), dtype=np.int64)
    ties = np.ones((m, n), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // (n * n))
    XT = np.ascontiguousarray(X.T)

    def run(g0):
        g1 = min(m, g0 + step)
        ptr, cand = _screen(XT, dfull, margin, drops, g0, g1)
        sizes = np.diff(ptr)
        flat_out = out[g0:g1].reshape(-1)
        single = sizes == 1
        flat_out[single] = cand[ptr[:-1][single]]
        multi = np.flatnonzero(~single)
        if not len(multi):
            return
        owner = np.repeat(multi, sizes[multi])
        pos = np.concatenate([np.arange(ptr[r], ptr[r + 1]) for r in multi])
        g, k = np.divmod(owner, n)
        l = cand[pos]
        diff = X[k] - X[l]
        a = drops[g0 + g, 0]
        b = drops[g0 + g, 1]
        diff[np.arange(len(g)), a] = 0.0
        hit = np.flatnonzero(b >= 0)
        diff[hit, b[hit]] = 0.0
        d2 = np.cumsum(diff * diff, axis=1)[:, -1]
        group = np.searchsorted(multi, owner)

        def uniforms(tied):
            rows = multi[tied]
            local, kk = np.divmod(rows, n)
            u = np.empty(len(tied))
            for gl in np.unique(local):
                ai, bi = drops[g0 + gl]
                st = neighbor_stream(seed, int(ai)) if bi < 0 else neighbor_stream(seed, int(ai), int(bi))
                sel = local == gl
                u[sel] = st.uniforms(n)[kk[sel]]
            return u

        idx, counts = _resolve_ties(group, l, d2, len(multi), uniforms)
        flat_out[multi] = idx
        ties[g0:g1].reshape(-1)[multi] = counts

    starts = range(0, m, step)
    if threads > 1 and m > step:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(run, starts))
    else:
        for g0 in starts:
            run(g0)
    return out, ties


@dataclass(frozen=True)
class NeighborTable:
    """All neighbour assignments used by an all-pairs estimate.

    ``m[i]`` is the assignment over all columns but ``i`` (shared by every
    ``j``); ``n_pairs[(a, b)]`` with ``a < b`` the one over all columns but
    ``a`` and ``b`` (shared by ``(a, b)`` and ``(b, a)``).
    """

    m: np.ndarray
    n_pairs: dict[tuple[int, int], np.ndarray]


def _resolve_threads(threads: int | None) -> int:
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def neighbor_table(data, seed: int = 0, *, method: str = "auto",
                   threads: int | None = None) -> NeighborTable:
    dm = _as_matrix(data)
    X = np.ascontiguousarray(dm.values)
    n, p = X.shape
    pairs = [(a, b) for a in range(p) for b in range(a + 1, p)]
    if method == "auto":
        method = "batched" if n <= BATCH_MAX_N else "pairwise"
    if method == "pairwise":
        m = np.stack([
            nearest_neighbors(np.delete(X, i, axis=1), neighbor_stream(seed, i)).indices
            for i in range(p)
        ])
        n_pairs = {
            (a, b): nearest_neighbors(np.delete(X, [a, b], axis=1),
                                      neighbor_stream(seed, a, b)).indices
            for a, b in pairs
        }
        return NeighborTable(m, n_pairs)
    if method != "batched":
        raise ValidationError(f"unknown method {method!r}")
    threads = _resolve_threads(threads)
    dfull = _full_sq(X)
    margin = 4.0 * (p + 4) * _EPS * dfull.max(axis=1)
    drops_m = np.column_stack([np.arange(p), np.full(p, -1)]).astype(np.int64)
    m, _ = _batched_neighbors(X, dfull, margin, drops_m, seed, threads)
    drops_n = np.array(pairs, dtype=np.int64).reshape(-1, 2)
    nn, _ = _batched_neighbors(X, dfull, margin, drops_n, seed, threads)
    return NeighborTable(m, {pr: nn[t] for t, pr in enumerate(pairs)})


def codec_matrix(data, seed: int = 0, *, rank_convention: str = "ge",
                 method: str = "auto", threads: int | None = None) -> DepMatrix:
    """Estimate the coefficient for every ordered pair of columns.

    Entry ``(i, j)`` equals ``codec_tn(data, i, j, seed)``. Pairs with a zero
    denominator are listed in ``excluded`` and stored as 0. The result is a
    pure function of ``(data, seed, rank_convention)``.
    """
    dm = _as_matrix(data)
    X = dm.values
    p = dm.p
    table = neighbor_table(dm, seed, method=method, threads=threads)
    R = np.stack([ranks(X[:, c], rank_convention) for c in range(p)])
    values = np.eye(p)
    excluded = []
    if table.n_pairs:
        pairs = np.array(list(table.n_pairs), dtype=np.int64)
        nn_n = np.stack(list(table.n_pairs.values()))
        for src_col, dst_col in ((0, 1), (1, 0)):
            i = pairs[:, src_col]
            j = pairs[:, dst_col]
            r = R[i]
            low_n = np.minimum(r, np.take_along_axis(r, nn_n, axis=1))
            low_m = np.minimum(r, np.take_along_axis(r, table.m[i], axis=1))
            num = (low_m - low_n).sum(axis=1)
            den = (r - low_n).sum(axis=1)
            for t in range(len(pairs)):
                if den[t] == 0:
                    excluded.append((int(i[t]), int(j[t])))
                    values[i[t], j[t]] = 0.0
                else:
                    values[i[t], j[t]] = int(num[t]) / int(den[t])
    values.setflags(write=False)
    return DepMatrix(values, dm.names, tuple(sorted(excluded)))

"""Left/right pairing of 3D curves across a mirror plane.

Two skeletons ``s`` and ``t`` are compared by the dynamic time warping cost
between ``s`` and the reflection of ``t``; an optimal assignment on the
resulting cost matrix yields the pairing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DimensionError, MsrError
from .geometry import Hyperplane, reflect_points


@dataclass(frozen=True, eq=False)
class Skeleton:
    points: np.ndarray
    id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or len(pts) < 2:
            raise DimensionError(f"skeleton {self.id!r} needs at least 2 points")
        if np.any(np.all(pts[1:] == pts[:-1], axis=1)):
            raise DimensionError(f"skeleton {self.id!r} repeats a point consecutively")
        object.__setattr__(self, "points", pts)


@dataclass
class Assignment:
    """Permutation ``pairs = [(row, col), ...]`` and the sum of its entries."""

    pairs: list
    total_cost: float


def _as_sequence(seq) -> np.ndarray:
    pts = seq.points if isinstance(seq, Skeleton) else seq
    arr = np.asarray(pts, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or len(arr) == 0:
        raise DimensionError("empty skeleton")
    return arr


def _dtw_table(dist: np.ndarray) -> np.ndarray:
    """Accumulated cost table, filled one anti-diagonal at a time."""
    n, m = dist.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for s in range(n + m - 1):
        i = np.arange(max(0, s - m + 1), min(n - 1, s) + 1)
        j = s - i
        prev = np.minimum(np.minimum(acc[i, j], acc[i, j + 1]), acc[i + 1, j])
        acc[i + 1, j + 1] = dist[i, j] + prev
    return acc


def _path_length(acc: np.ndarray) -> int:
    i, j = acc.shape[0] - 1, acc.shape[1] - 1
    length = 1
    while (i, j) != (1, 1):
        steps = ((acc[i - 1, j - 1], i - 1, j - 1), (acc[i - 1, j], i - 1, j), (acc[i, j - 1], i, j - 1))
        _, i, j = min(steps, key=lambda t: t[0])
        length += 1
    return length


def dtw_cost(a, b, normalize: bool = False, allow_reverse: bool = True) -> float:
    """Dynamic time warping cost between two point sequences.

    Steps are ``(i+1, j)``, ``(i, j+1)`` and ``(i+1, j+1)``; the path is
    anchored at both ends and costs the sum of Euclidean distances along it.
    With ``allow_reverse`` the smaller of the costs against ``b`` and against
    ``b`` reversed is returned. ``normalize`` divides by the length of the
    optimal path.
    """
    x = _as_sequence(a)
    y = _as_sequence(b)
    if x.shape[1] != y.shape[1]:
        raise DimensionError("sequences have different dimensions")
    candidates = [y, y[::-1]] if allow_reverse and len(y) > 1 else [y]
    best = np.inf
    for cand in candidates:
        acc = _dtw_table(cdist(x, cand))
        cost = float(acc[-1, -1])
        if normalize:
            cost /= _path_length(acc)
        best = min(best, cost)
    return best


def symmetry_cost_matrix(skeletons, plane: Hyperplane, normalize: bool = False) -> np.ndarray:
    """``C[i, j]`` = DTW cost between skeleton ``i`` and the mirror image of skeleton ``j``.

    The matrix is symmetrized with ``min(C[i, j], C[j, i])``.
    """
    if len(skeletons) < 2:
        raise MsrError("need at least 2 skeletons")
    seqs = [_as_sequence(s) for s in skeletons]
    mirrored = [reflect_points(s, plane) for s in seqs]
    n = len(seqs)
    costs = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            costs[i, j] = dtw_cost(seqs[i], mirrored[j], normalize=normalize)
    return np.minimum(costs, costs.T)


def _hungarian(costs: np.ndarray):
    """Shortest augmenting path Hungarian method. Returns ``(col_of_row, u, v)``."""
    n = costs.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    row_of = np.zeros(n + 1, dtype=int)  # 1-based; row_of[0] is the working row
    way = np.zeros(n + 1, dtype=int)
    c = np.zeros((n + 1, n + 1))
    c[1:, 1:] = costs
    for i in range(1, n + 1):
        row_of[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = row_of[j0]
            free = ~used
            free[0] = False
            cur = c[i0] - u[i0] - v
            better = free & (cur < minv)
            minv[better] = cur[better]
            way[better] = j0
            cand = np.where(free, minv, np.inf)
            j1 = int(np.argmin(cand))
            delta = cand[j1]
            u[row_of[used]] += delta
            v[used] -= delta
            minv[free] -= delta
            j0 = j1
            if row_of[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            row_of[j0] = row_of[j1]
            j0 = j1
    col_of = np.empty(n, dtype=int)
    col_of[row_of[1:] - 1] = np.arange(n)
    return col_of, u[1:], v[1:]


def _lexicographic_optimum(costs, col_of, u, v):
    """Smallest optimal permutation in row-major lexicographic order.

    Any optimal assignment uses only edges that are tight for the optimal
    duals, so it suffices to search perfect matchings of the tight graph.
    """
    n = len(col_of)
    tol = 1e-9 * max(1.0, float(np.max(np.abs(costs))))
    tight = [np.flatnonzero(costs[i] - u[i] - v <= tol) for i in range(n)]
    col_of = col_of.copy()
    row_of = np.empty(n, dtype=int)
    row_of[col_of] = np.arange(n)
    fixed_cols = np.zeros(n, dtype=bool)

    for i in range(n):
        for j in tight[i]:
            if j >= col_of[i]:
                break
            if fixed_cols[j]:
                continue
            # rematch the current owner of j so that col_of[i] becomes its sink
            target = col_of[i]
            trial_col, trial_row = col_of.copy(), row_of.copy()
            seen = {j}

            def augment(r):
                for cc in tight[r]:
                    if fixed_cols[cc] or cc in seen:
                        continue
                    seen.add(cc)
                    if cc == target or augment(trial_row[cc]):
                        trial_col[r] = cc
                        trial_row[cc] = r
                        return True
                return False

            if augment(row_of[j]):
                trial_col[i] = j
                trial_row[j] = i
                col_of, row_of = trial_col, trial_row
                break
        fixed_cols[col_of[i]] = True
    return col_of


def munkres(costs) -> Assignment:
    """Minimum-cost perfect matching of a square cost matrix.

    Among equal-cost optima the lexicographically smallest pair list wins.
    """
    c = np.asarray(costs, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise DimensionError(f"cost matrix must be square, got shape {c.shape}")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost matrix has non-finite entries")
    n = c.shape[0]
    if n == 0:
        return Assignment([], 0.0)
    col_of, u, v = _hungarian(c)
    col_of = _lexicographic_optimum(c, col_of, u, v)
    pairs = [(i, int(col_of[i])) for i in range(n)]
    return Assignment(pairs, float(sum(c[i, j] for i, j in pairs)))


@dataclass
class SkeletonPairing:
    """Result of :func:`pair_skeletons`.

    ``pairs`` holds mutual matches ``(id_a, id_b, cost)``; ``non_mutual``
    holds one-directional mappings ``(id_from, id_to, cost)`` that the
    assignment produced without reciprocation; ``unmatched`` lists ids left
    without a partner (odd counts).
    """

    assignment: Assignment
    pairs: list
    non_mutual: list = field(default_factory=list)
    unmatched: list = field(default_factory=list)
    costs: np.ndarray | None = None

    @property
    def total_cost(self) -> float:
        return self.assignment.total_cost


def pair_skeletons(skeletons, plane: Hyperplane, normalize: bool = False) -> SkeletonPairing:
    """Globally optimal left/right pairing of skeletons about ``plane``."""
    skeletons = list(skeletons)
    if len(skeletons) < 2:
        raise MsrError("need at least 2 skeletons to pair")
    ids = [s.id if isinstance(s, Skeleton) and s.id else str(i) for i, s in enumerate(skeletons)]
    costs = symmetry_cost_matrix(skeletons, plane, normalize=normalize)
    n = len(skeletons)
    top = float(costs.max()) if costs.size else 0.0
    pad = 2.0 * top + 1.0           # virtual partner for odd counts
    forbid = 4.0 * (n + 1) * pad    # self pairing
    size = n + (n % 2)
    work = np.full((size, size), pad)
    work[:n, :n] = costs
    np.fill_diagonal(work, forbid)
    raw = munkres(work)
    col_of = dict(raw.pairs)

    real_pairs = [(i, j) for i, j in raw.pairs if i < n and j < n]
    assignment = Assignment(real_pairs, float(sum(costs[i, j] for i, j in real_pairs)))
    pairs, non_mutual, unmatched = [], [], []
    for i in range(n):
        j = col_of[i]
        if j >= n:
            unmatched.append(ids[i])
        elif col_of.get(j) == i:
            if i < j:
                pairs.append((ids[i], ids[j], float(costs[i, j])))
        else:
            non_mutual.append((ids[i], ids[j], float(costs[i, j])))
    return SkeletonPairing(assignment, pairs, non_mutual, unmatched, costs)

"""Point-to-point iterative closest point registration in R^n."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionError
from .geometry import RigidTransform, as_cloud, bbox_diagonal


@dataclass(frozen=True)
class IcpConfig:
    max_iterations: int = 100
    convergence_threshold: float = 1e-6
    trim_fraction: float = 0.1
    seed: int = 0
    # randomly subsample the moving cloud to at most this many points
    max_points: int | None = None

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 <= self.trim_fraction <= 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5]")
        if self.max_points is not None and self.max_points < 1:
            raise ValueError("max_points must be positive")


@dataclass
class RegistrationResult:
    """Output contract shared by the registration back-ends.

    ``transform`` maps the moving data onto the target. ``confidence`` lies in
    ``[0, 1]``; higher is better and results from the same back-end are
    comparable.
    """

    transform: RigidTransform
    confidence: float
    rms_error: float = 0.0
    iterations_used: int = 0
    history: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)


def brute_force_neighbors(query, reference):
    """Exhaustive nearest-neighbour search; reference oracle for the k-d tree path."""
    q = as_cloud(query, min_points=0)
    r = as_cloud(reference)
    if q.shape[1] != r.shape[1]:
        raise DimensionError("query and reference dimensions differ")
    idx = np.empty(len(q), dtype=np.intp)
    dist = np.empty(len(q))
    for i, p in enumerate(q):
        d = np.sqrt(((r - p) ** 2).sum(axis=1))
        j = int(np.argmin(d))  # first minimum == lowest index on ties
        idx[i] = j
        dist[i] = d[j]
    return idx, dist


def nearest_neighbors(query, reference, tree: cKDTree | None = None):
    """Index of and distance to the closest reference point for each query point.

    Exact ties go to the lowest reference index. Pass a prebuilt ``tree`` over
    ``reference`` to reuse it across calls.
    """
    r = as_cloud(reference)
    q = as_cloud(query, min_points=0)
    if q.shape[1] != r.shape[1]:
        raise DimensionError("query and reference dimensions differ")
    if tree is None:
        tree = cKDTree(r)
    if len(q) == 0:
        return np.empty(0, dtype=np.intp), np.empty(0)
    k = 2 if len(r) > 1 else 1
    dist, idx = tree.query(q, k=k)
    if k == 1:
        return np.asarray(idx, dtype=np.intp), np.asarray(dist, dtype=float)
    best_d = dist[:, 0].copy()
    best_i = idx[:, 0].astype(np.intp)
    # near-ties: resolve exhaustively so the lowest index wins deterministically
    tied = np.flatnonzero(dist[:, 1] <= dist[:, 0] * (1.0 + 1e-12) + 1e-300)
    if tied.size:
        ti, td = brute_force_neighbors(q[tied], r)
        best_i[tied] = ti
        best_d[tied] = td
    return best_i, best_d


def best_rigid_transform(source, target, weights=None) -> RigidTransform:
    """Least-squares proper rigid motion mapping ``source[i]`` onto ``target[i]``."""
    src = as_cloud(source)
    dst = as_cloud(target)
    if src.shape != dst.shape:
        raise DimensionError(f"source {src.shape} and target {dst.shape} must match")
    if weights is None:
        w = np.full(len(src), 1.0 / len(src))
    else:
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.shape[0] != len(src) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative with positive sum")
        w = w / w.sum()
    mu_s = w @ src
    mu_t = w @ dst
    cov = (dst - mu_t).T @ ((src - mu_s) * w[:, None])
    u, _, vt = np.linalg.svd(cov)
    d = np.ones(src.shape[1])
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        d[-1] = -1.0
    rot = (u * d) @ vt
    return RigidTransform(rot, mu_t - rot @ mu_s)


def _confidence(rms: float, scale: float) -> float:
    if scale <= 0.0:
        return 1.0 if rms == 0.0 else 0.0
    return math.exp(-rms / (0.1 * scale))


def icp_register(moving, target, config: IcpConfig | None = None, tree: cKDTree | None = None):
    """Register ``moving`` onto ``target`` with trimmed point-to-point ICP.

    Each iteration matches every moving point to its nearest target point,
    drops the worst ``trim_fraction`` of matches, and solves for the best
    rigid motion on the rest. The trimmed RMS is non-increasing.
    """
    config = config or IcpConfig()
    src = as_cloud(moving)
    dst = as_cloud(target)
    if src.shape[1] != dst.shape[1]:
        raise DimensionError("moving and target dimensions differ")
    if config.max_points is not None and len(src) > config.max_points:
        rng = np.random.default_rng(config.seed)
        src = src[np.sort(rng.choice(len(src), config.max_points, replace=False))]
    if tree is None:
        tree = cKDTree(dst)

    n_keep = max(1, len(src) - int(math.floor(config.trim_fraction * len(src))))
    transform = RigidTransform.identity(src.shape[1])
    history = []
    prev = None
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        idx, dist = nearest_neighbors(transform.apply(src), dst, tree=tree)
        keep = np.sort(np.argsort(dist, kind="stable")[:n_keep])
        rms = math.sqrt(float(np.mean(dist[keep] ** 2)))
        history.append(rms)
        if rms == 0.0 or (prev is not None and prev - rms <= config.convergence_threshold * prev):
            converged = True
            break
        transform = best_rigid_transform(src[keep], dst[idx[keep]])
        prev = rms
    if not converged:
        _, dist = nearest_neighbors(transform.apply(src), dst, tree=tree)
        rms = math.sqrt(float(np.mean(np.sort(dist)[:n_keep] ** 2)))
        history.append(rms)

    return RegistrationResult(
        transform=transform,
        confidence=_confidence(rms, bbox_diagonal(dst)),
        rms_error=rms,
        iterations_used=iterations,
        history=history,
    )

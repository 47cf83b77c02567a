"""Reflections, rigid transforms and extraction of the mirror plane.

Points are stored as ``(N, n)`` float arrays, one point per row. A plane is
described by a unit normal ``v`` and an anchor ``p`` lying on it; the
reflection about it is ``x -> S_v x + 2 d v`` with ``S_v = I - 2 v v^T`` and
``d = <p, v>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    NonReflectionError,
    NormalizationError,
    UnderdeterminedPlaneError,
)

EIGEN_TOLERANCE = 0.5


def as_cloud(points, min_points: int = 1) -> np.ndarray:
    """Validate and return ``points`` as a float ``(N, n)`` array."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"point cloud must be 2-D (N, n), got shape {arr.shape}")
    if arr.shape[0] < min_points:
        raise DimensionError(f"need at least {min_points} point(s), got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError("point cloud contains non-finite coordinates")
    return arr


def bbox_diagonal(points) -> float:
    """Length of the bounding-box diagonal; the reference scale for tolerances."""
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return 0.0
    return float(np.linalg.norm(arr.max(axis=0) - arr.min(axis=0)))


def canonical_sign(vector: np.ndarray) -> np.ndarray:
    """Flip ``vector`` so that its first nonzero coordinate is positive."""
    vec = np.asarray(vector, dtype=float)
    scale = np.max(np.abs(vec)) if vec.size else 0.0
    for c in vec:
        # ignore round-off sized leading entries
        if abs(c) > 1e-12 * scale:
            return -vec if c < 0 else vec.copy()
    return vec.copy()


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """Affine hyperplane ``{x : <x - anchor, normal> = 0}``."""

    normal: np.ndarray
    anchor: np.ndarray

    def __post_init__(self):
        normal = np.array(self.normal, dtype=float).reshape(-1)
        anchor = np.array(self.anchor, dtype=float).reshape(-1)
        if normal.shape != anchor.shape:
            raise DimensionError(
                f"normal has dimension {normal.size}, anchor has {anchor.size}"
            )
        norm = np.linalg.norm(normal)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
            raise NormalizationError(f"plane normal must be a unit vector (norm {norm})")
        normal = normal / norm
        normal.setflags(write=False)
        anchor.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "anchor", anchor)

    @classmethod
    def from_normal(cls, normal, anchor) -> "Hyperplane":
        """Build a plane from an arbitrary nonzero normal, normalizing it."""
        normal = np.asarray(normal, dtype=float)
        norm = np.linalg.norm(normal)
        if not np.isfinite(norm) or norm == 0.0:
            raise NormalizationError("plane normal must be nonzero")
        return cls(normal / norm, anchor)

    @classmethod
    def from_offset(cls, normal, signed_distance: float) -> "Hyperplane":
        normal = np.asarray(normal, dtype=float)
        normal = normal / np.linalg.norm(normal)
        return cls(normal, signed_distance * normal)

    @property
    def dim(self) -> int:
        return self.normal.size

    @property
    def signed_distance(self) -> float:
        return float(self.anchor @ self.normal)

    def canonical(self) -> "Hyperplane":
        """Same plane with the normal's first nonzero coordinate positive."""
        return Hyperplane(canonical_sign(self.normal), self.anchor)

    def distance(self, points) -> np.ndarray:
        """Signed distance of each point to the plane."""
        pts = np.asarray(points, dtype=float)
        return (pts - self.anchor) @ self.normal

    def project(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        return point - ((point - self.anchor) @ self.normal) * self.normal

    def __repr__(self):
        return f"Hyperplane(normal={self.normal.tolist()}, anchor={self.anchor.tolist()})"


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rigid motion ``x -> rotation @ x + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        trans = np.array(self.translation, dtype=float).reshape(-1)
        n = trans.size
        if rot.shape != (n, n):
            raise DimensionError(f"rotation shape {rot.shape} does not match translation size {n}")
        if not np.allclose(rot.T @ rot, np.eye(n), rtol=0.0, atol=1e-9):
            raise ValueError("rotation is not orthogonal")
        if abs(np.linalg.det(rot) - 1.0) > 1e-9:
            raise ValueError("rotation has determinant != +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls, dim: int) -> "RigidTransform":
        return cls(np.eye(dim), np.zeros(dim))

    @classmethod
    def from_approximate(cls, rotation, translation) -> "RigidTransform":
        """Build a transform after projecting ``rotation`` onto SO(n)."""
        return cls(nearest_rotation(rotation), translation)

    @property
    def dim(self) -> int:
        return self.translation.size

    def apply(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation.T + self.translation

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """Return ``self o inner`` (``inner`` applied first)."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))

    def __repr__(self):
        return (
            f"RigidTransform(rotation={self.rotation.tolist()}, "
            f"translation={self.translation.tolist()})"
        )


def nearest_rotation(matrix) -> np.ndarray:
    """Closest proper rotation to ``matrix`` in Frobenius norm (polar factor)."""
    m = np.asarray(matrix, dtype=float)
    u, _, vt = np.linalg.svd(m)
    d = np.ones(m.shape[0])
    d[-1] = np.sign(np.linalg.det(u @ vt)) or 1.0
    return (u * d) @ vt


def rotation_2d(degrees: float) -> np.ndarray:
    theta = np.deg2rad(degrees)
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def reflection_matrix(normal) -> np.ndarray:
    """Householder matrix ``I - 2 v v^T`` for a unit normal ``v``."""
    v = np.asarray(normal, dtype=float).reshape(-1)
    norm = np.linalg.norm(v)
    if not np.isfinite(norm) or abs(norm - 1.0) > 1e-9:
        raise NormalizationError(f"reflection normal must be a unit vector (norm {norm})")
    return np.eye(v.size) - 2.0 * np.outer(v, v)


def reflect_points(cloud, plane: Hyperplane) -> np.ndarray:
    """Mirror every point about ``plane``. Row order is preserved."""
    pts = as_cloud(cloud, min_points=0)
    if pts.shape[1] != plane.dim:
        raise DimensionError(
            f"cloud dimension {pts.shape[1]} does not match plane dimension {plane.dim}"
        )
    v = plane.normal
    # S_v x + 2 d v, written as x - 2 (<x, v> - d) v
    return pts - 2.0 * np.outer(pts @ v - plane.signed_distance, v)


def eigenvector_minus_one(matrix):
    """Real eigenvector of ``matrix`` whose eigenvalue is closest to -1.

    Returns ``(w, lam)`` with ``w`` unit length and sign-normalized.
    Raises :class:`NonReflectionError` if no real eigenvalue lies within
    ``EIGEN_TOLERANCE`` of -1.
    """
    t = np.asarray(matrix, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {t.shape}")
    vals, vecs = np.linalg.eig(t)
    scale = max(1.0, float(np.max(np.abs(vals))))
    real = np.abs(vals.imag) <= 1e-9 * scale
    if not np.any(real):
        raise NonReflectionError(None, "matrix has no real eigenvalue")
    idx = np.flatnonzero(real)
    best = idx[np.argmin(np.abs(vals.real[idx] + 1.0))]
    lam = float(vals.real[best])
    if abs(lam + 1.0) > EIGEN_TOLERANCE:
        raise NonReflectionError(lam)
    w = np.real(vecs[:, best])
    w = w / np.linalg.norm(w)
    return canonical_sign(w), lam


def symmetry_plane_from_registration(initial: Hyperplane, reg: RigidTransform) -> Hyperplane:
    """Mirror plane implied by reflecting about ``initial`` and then applying ``reg``.

    The normal is the -1 eigenvector of ``S_v R0^T``; the anchor is
    ``(R0 (2 d v) + t) / 2``.
    """
    if initial.dim != reg.dim:
        raise DimensionError("plane and transform dimensions differ")
    rot = nearest_rotation(reg.rotation)
    sv = reflection_matrix(initial.normal)
    normal, _ = eigenvector_minus_one(sv @ rot.T)
    anchor = 0.5 * (rot @ (2.0 * initial.signed_distance * initial.normal) + reg.translation)
    return Hyperplane(normal, anchor)


def midpoints(original, transformed) -> np.ndarray:
    a = as_cloud(original, min_points=0)
    b = as_cloud(transformed, min_points=0)
    if a.shape != b.shape:
        raise DimensionError(f"cardinality/dimension mismatch: {a.shape} vs {b.shape}")
    return 0.5 * (a + b)


def fit_plane_to_midpoints(mids) -> Hyperplane:
    """Total-least-squares plane through a midpoint set.

    The anchor is the centroid, the normal the direction of least variance.
    """
    pts = as_cloud(mids, min_points=0)
    n_pts, dim = pts.shape
    if n_pts < dim:
        raise UnderdeterminedPlaneError(
            f"underdetermined plane: {n_pts} midpoints in R^{dim}"
        )
    centroid = pts.mean(axis=0)
    _, s, vt = np.linalg.svd(pts - centroid, full_matrices=True)
    # rank n-1 is required: the (n-1)-th singular value must be significant
    spread = s[0] if s.size else 0.0
    if spread == 0.0 or s[dim - 2] <= 1e-9 * spread:
        raise UnderdeterminedPlaneError("underdetermined plane: midpoints are rank deficient")
    return Hyperplane(canonical_sign(vt[-1]), centroid)


def plane_angle_distance(a: Hyperplane, b: Hyperplane):
    """Angle between normals (folded to [0, pi/2]) and distance of ``a.anchor`` to ``b``."""
    if a.dim != b.dim:
        raise DimensionError("planes have different dimensions")
    dot = float(a.normal @ b.normal)
    # atan2 form keeps precision for nearly parallel normals
    residual = np.linalg.norm(a.normal - dot * b.normal)
    angle = float(np.arctan2(residual, abs(dot)))
    offset = abs(float((a.anchor - b.anchor) @ b.normal))
    return angle, offset

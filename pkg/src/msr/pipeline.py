"""Mirror symmetry via registration: reflect, register, read off the plane.

The data is mirrored about an initial plane, the mirrored copy is registered
back onto the original, and the symmetry plane follows in closed form from
the reflection and the registration (see
:func:`msr.geometry.symmetry_plane_from_registration`). Several initial
planes may be tried; the most confident registration wins.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import DetectionFailure, DimensionError, MsrError, NonReflectionError
from .geometry import (
    Hyperplane, RigidTransform, as_cloud, canonical_sign, reflect_points,
    symmetry_plane_from_registration,
)
from .icp import IcpConfig, icp_register
from .nxc import NxcConfig, as_image, gradient_magnitude, image_center, nxc_register

PLANE_PRESETS = ("canonical", "extended")


@dataclass
class MsrConfig:
    """Run configuration.

    ``initial_planes`` is a list of :class:`Hyperplane`, or one of the preset
    names: ``"canonical"`` (coordinate-axis normals through the data centroid,
    or the vertical centre line for images) and ``"extended"`` (axis, face
    diagonal and body diagonal normals: 13 planes in 3D).
    """

    initial_planes: list | str = "canonical"
    backend: str = "icp"
    backend_config: IcpConfig | NxcConfig | None = None

    def __post_init__(self):
        if self.backend not in ("icp", "nxc"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if isinstance(self.initial_planes, str):
            if self.initial_planes not in PLANE_PRESETS:
                raise ValueError(f"unknown plane preset {self.initial_planes!r}")
        elif len(self.initial_planes) == 0:
            raise ValueError("at least one initial plane is required")

    def registration_config(self):
        if self.backend_config is not None:
            return self.backend_config
        return IcpConfig() if self.backend == "icp" else NxcConfig()


@dataclass
class SymmetryDetection:
    plane: Hyperplane
    confidence: float
    initial_plane_index: int
    ranked_alternatives: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    # winning registration, mapping the reflected data onto the original
    transform: RigidTransform | None = None


@dataclass
class SymmetrySegment:
    endpoints: np.ndarray  # (2, 2), lexicographically ordered (x, y) rows

    def __post_init__(self):
        pts = np.asarray(self.endpoints, dtype=float).reshape(2, 2)
        if tuple(pts[1]) < tuple(pts[0]):
            pts = pts[::-1].copy()
        self.endpoints = pts

    @property
    def center(self) -> np.ndarray:
        return self.endpoints.mean(axis=0)

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.endpoints[1] - self.endpoints[0]))


def preset_normals(dim: int, preset: str = "canonical") -> list[np.ndarray]:
    if preset == "canonical":
        return [np.eye(dim)[i] for i in range(dim)]
    if preset == "extended":
        out = []
        for combo in itertools.product((-1.0, 0.0, 1.0), repeat=dim):
            vec = np.array(combo)
            if not vec.any():
                continue
            vec = canonical_sign(vec / np.linalg.norm(vec))
            if not any(np.allclose(vec, u) for u in out):
                out.append(vec)
        # keep the coordinate axes first so they win confidence ties
        out.sort(key=lambda v: (np.count_nonzero(v), [-abs(c) for c in v]))
        return out
    raise ValueError(f"unknown plane preset {preset!r}")


def initial_planes(config: MsrConfig, dim: int, anchor) -> list[Hyperplane]:
    """Explicit start planes, or the preset normals through ``anchor``."""
    if isinstance(config.initial_planes, str):
        return [Hyperplane(v, anchor) for v in preset_normals(dim, config.initial_planes)]
    planes = list(config.initial_planes)
    for plane in planes:
        if plane.dim != dim:
            raise DimensionError(f"initial plane has dimension {plane.dim}, data has {dim}")
    return planes


def _select(candidates, diagnostics) -> SymmetryDetection:
    """Highest confidence wins; ties keep the earlier start."""
    if not candidates:
        raise DetectionFailure("no run produced a symmetry plane", diagnostics)
    ranked = sorted(candidates, key=lambda c: (-c[1], c[2]))
    plane, conf, index, transform = ranked[0]
    return SymmetryDetection(
        plane=plane,
        confidence=conf,
        initial_plane_index=index,
        ranked_alternatives=[(c[0], c[1]) for c in ranked],
        diagnostics=diagnostics,
        transform=transform,
    )


def detect_symmetry_points(cloud, config: MsrConfig | None = None) -> SymmetryDetection:
    """Mirror plane of a point cloud in R^n using ICP registration."""
    config = config or MsrConfig()
    pts = as_cloud(cloud)
    n_pts, dim = pts.shape
    if dim < 2:
        raise DimensionError("points must live in R^n with n >= 2")
    if n_pts < dim + 1 or np.linalg.matrix_rank(pts - pts.mean(axis=0)) < dim:
        raise DimensionError(f"degenerate cloud: need {dim + 1} points spanning R^{dim}")
    if config.backend != "icp":
        raise ValueError("point clouds are registered with the icp backend")
    reg_config = config.registration_config()
    starts = initial_planes(config, dim, pts.mean(axis=0))
    tree = cKDTree(pts)

    candidates, diagnostics = [], []
    for index, start in enumerate(starts):
        reflected = reflect_points(pts, start)
        reg = icp_register(reflected, pts, reg_config, tree=tree)
        entry = {"initial_plane": index, "confidence": reg.confidence,
                 "rms_error": reg.rms_error, "iterations": reg.iterations_used}
        try:
            plane = symmetry_plane_from_registration(start, reg.transform)
        except NonReflectionError as exc:
            entry["error"] = str(exc)
            diagnostics.append(entry)
            continue
        diagnostics.append(entry)
        candidates.append((plane, reg.confidence, index, reg.transform))
    return _select(candidates, diagnostics)


def reflect_image(image, line: Hyperplane) -> np.ndarray:
    """Mirror an image about a line given in ``(x, y)`` pixel coordinates."""
    img = as_image(image)
    if line.dim != 2:
        raise DimensionError("image reflection needs a 2D line")
    v = line.normal
    sv = np.eye(2) - 2.0 * np.outer(v, v)
    shift = 2.0 * line.signed_distance * v
    # output pixel y samples the input at S(y); convert (x, y) to (row, col)
    matrix = sv[::-1, ::-1]
    return ndimage.affine_transform(img, matrix, offset=shift[::-1], order=1,
                                    mode="constant", cval=0.0)


def detect_symmetry_2d(image, config: MsrConfig | None = None) -> SymmetryDetection:
    """Symmetry axis of an image with the NXC consensus registration.

    ``ranked_alternatives`` holds up to ``top_k`` lines per initial line,
    ordered by registration confidence.
    """
    config = config or MsrConfig(backend="nxc")
    img = as_image(image)
    if config.backend != "nxc":
        raise ValueError("images are registered with the nxc backend")
    reg_config = config.registration_config()
    if isinstance(config.initial_planes, str):
        starts = [Hyperplane(np.array([1.0, 0.0]), image_center(img.shape))]
    else:
        starts = initial_planes(config, 2, None)

    candidates, diagnostics = [], []
    for index, start in enumerate(starts):
        results = nxc_register(reflect_image(img, start), img, reg_config)
        diagnostics.append({"initial_plane": index, "candidates": len(results),
                            "votes": results[0].diagnostics.get("votes", 0) if results else 0})
        for reg in results:
            try:
                plane = symmetry_plane_from_registration(start, reg.transform)
            except NonReflectionError:
                continue
            candidates.append((plane, reg.confidence, index, reg.transform))
    if not candidates:
        raise DetectionFailure("registration produced no candidate transforms", diagnostics)
    detection = _select(candidates, diagnostics)
    detection.ranked_alternatives = detection.ranked_alternatives[: reg_config.top_k * len(starts)]
    return detection


def clip_line(line: Hyperplane, width: int, height: int):
    """Endpoints of ``line`` inside the pixel rectangle, or ``None`` if it misses."""
    n = line.normal
    direction = np.array([-n[1], n[0]])
    p = line.anchor
    lo, hi = -np.inf, np.inf
    for axis, upper in ((0, width - 1.0), (1, height - 1.0)):
        if abs(direction[axis]) < 1e-15:
            if not 0.0 <= p[axis] <= upper:
                return None
            continue
        a = -p[axis] / direction[axis]
        b = (upper - p[axis]) / direction[axis]
        lo, hi = max(lo, min(a, b)), min(hi, max(a, b))
    if hi < lo:
        return None
    return p + lo * direction, p + hi * direction


def line_to_segment(line: Hyperplane, image, window: int = 21, fraction: float = 0.5) -> SymmetrySegment:
    """Restrict a symmetry line to the stretch supported by symmetric image structure.

    Every pixel step along the line is scored by the mean gradient magnitude
    inside a ``window`` square, taken separately on each side of the line;
    the smaller side mean is the score. The segment is the longest run of
    steps scoring above ``fraction`` times the median step score.
    """
    img = as_image(image)
    h, w = img.shape
    ends = clip_line(line, w, h)
    if ends is None:
        raise MsrError("symmetry line does not intersect the image")
    start, stop = ends
    length = float(np.linalg.norm(stop - start))
    direction = (stop - start) / length if length > 0 else np.array([-line.normal[1], line.normal[0]])
    n_steps = int(np.floor(length)) + 1
    steps = start + np.arange(n_steps)[:, None] * direction

    grad = gradient_magnitude(img)
    half = window // 2
    off = np.arange(-half, half + 1)
    ox, oy = np.meshgrid(off, off)
    ox, oy = ox.ravel(), oy.ravel()
    cx = np.rint(steps[:, 0]).astype(int)[:, None] + ox
    cy = np.rint(steps[:, 1]).astype(int)[:, None] + oy
    inside = (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
    vals = grad[np.clip(cy, 0, h - 1), np.clip(cx, 0, w - 1)]
    side = (np.stack([cx, cy], axis=-1) - line.anchor) @ line.normal
    side_means = []
    for on_side in (side < 0, side > 0):
        m = inside & on_side
        count = m.sum(axis=1)
        side_means.append(np.where(count > 0, (vals * m).sum(axis=1) / np.maximum(count, 1), 0.0))
    scores = np.minimum(*side_means)

    above = scores > fraction * float(np.median(scores))
    best_len, best_start, run = 0, 0, 0
    for k, flag in enumerate(above):
        run = run + 1 if flag else 0
        if run > best_len:
            best_len, best_start = run, k - run + 1
    if best_len == 0:
        k = int(np.argmax(scores))
        a = steps[k]
        b = a + direction if k + 1 < n_steps or n_steps == 1 else a - direction
        return SymmetrySegment(np.array([a, b]))
    return SymmetrySegment(np.array([steps[best_start], steps[best_start + best_len - 1]]))

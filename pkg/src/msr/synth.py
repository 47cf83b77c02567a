"""Deterministic synthetic data with exact ground truth.

Used by the ``synth`` subcommand and by the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .geometry import Hyperplane, bbox_diagonal, reflect_points
from .pairing import Skeleton
from .pipeline import clip_line


def axis_plane(angle_deg: float, point) -> Hyperplane:
    """2D line through ``point`` whose direction makes ``angle_deg`` with +x.

    ``90`` is a vertical axis in image coordinates.
    """
    theta = np.deg2rad(angle_deg)
    direction = np.array([np.cos(theta), np.sin(theta)])
    # exact zeros for axis-aligned angles (cos 90 deg is 6e-17 in floating point)
    direction[np.abs(direction) < 1e-15] = 0.0
    normal = np.array([-direction[1], direction[0]])
    return Hyperplane.from_normal(normal, point).canonical()


def natural_texture(shape, rng, exponent: float = 2.0, cutoff: float = 1.5) -> np.ndarray:
    """Random field with a power-law spectrum (``1/f**exponent`` power).

    Frequencies below ``cutoff`` cycles per image are suppressed so the field
    has no dominant global gradient.
    """
    h, w = shape
    fy = np.fft.fftfreq(h)[:, None] * h
    fx = np.fft.rfftfreq(w)[None, :] * w
    f = np.hypot(fx * h / max(h, w), fy * w / max(h, w))
    amp = np.where(f >= cutoff, 1.0 / np.maximum(f, 1e-9) ** (exponent / 2.0), 0.0)
    phase = rng.uniform(0, 2 * np.pi, size=amp.shape)
    mag = rng.rayleigh(size=amp.shape)
    field = np.fft.irfft2(amp * mag * np.exp(1j * phase), s=shape)
    field -= field.mean()
    return field / (field.std() or 1.0)


@dataclass
class MirroredImage:
    image: np.ndarray
    axis: Hyperplane
    segment: tuple  # endpoints of the axis inside the image


def mirrored_image(width: int = 200, height: int = 200, axis_angle: float = 90.0,
                   axis_point=None, seed: int = 0, noise: float = 0.02,
                   exponent: float = 2.0) -> MirroredImage:
    """Textured image that is mirror symmetric about a known axis.

    The picture is ``f(x) + f(S x)`` for a random field ``f`` and the axis
    reflection ``S``, rescaled to ``[0, 1]`` with optional additive noise.
    """
    rng = np.random.default_rng(seed)
    if axis_point is None:
        axis_point = ((width - 1) / 2.0, (height - 1) / 2.0)
    axis = axis_plane(axis_angle, axis_point)
    pad = max(width, height)
    field = natural_texture((height + 2 * pad, width + 2 * pad), rng, exponent=exponent)
    ys, xs = np.mgrid[0:height, 0:width]
    pts = np.column_stack([xs.ravel(), ys.ravel()]).astype(float)
    mirrored = reflect_points(pts, axis)

    def sample(p):
        coords = np.vstack([p[:, 1] + pad, p[:, 0] + pad])
        return ndimage.map_coordinates(field, coords, order=3, mode="mirror")

    img = (sample(pts) + sample(mirrored)).reshape(height, width)
    img = (img - img.min()) / (np.ptp(img) or 1.0)
    if noise > 0:
        img = np.clip(img + rng.normal(scale=noise, size=img.shape), 0.0, 1.0)
    segment = clip_line(axis, width, height)
    return MirroredImage(image=img, axis=axis, segment=segment)


@dataclass
class PlantedCloud:
    points: np.ndarray
    plane: Hyperplane  # anchored at the projection of the cloud centroid


def random_shape(n_points: int, rng, dim: int = 3, clusters: int = 6) -> np.ndarray:
    """Irregular blob made of anisotropic Gaussian clusters."""
    centers = rng.normal(size=(clusters, dim)) * 2.0
    scales = rng.uniform(0.2, 0.8, size=(clusters, dim))
    labels = rng.integers(0, clusters, n_points)
    return centers[labels] + rng.normal(size=(n_points, dim)) * scales[labels]


def planted_plane_cloud(n_points: int = 500, noise: float = 0.0, seed: int = 0,
                        dim: int = 3, plane: Hyperplane | None = None) -> PlantedCloud:
    """``n_points`` random points plus their mirror image about a random plane.

    ``noise`` is the Gaussian standard deviation as a fraction of the bounding
    box diagonal, applied to all points after mirroring.
    """
    rng = np.random.default_rng(seed)
    half = random_shape(n_points, rng, dim=dim)
    if plane is None:
        normal = rng.normal(size=dim)
        anchor = half.mean(axis=0) + 0.5 * rng.normal(size=dim)
        plane = Hyperplane.from_normal(normal, anchor)
    cloud = np.vstack([half, reflect_points(half, plane)])
    if noise > 0:
        cloud = cloud + rng.normal(scale=noise * bbox_diagonal(cloud), size=cloud.shape)
    truth = Hyperplane(plane.normal, plane.project(cloud.mean(axis=0))).canonical()
    return PlantedCloud(points=cloud, plane=truth)


def random_curve(rng, n_points: int = 30, start=None, step: float = 1.0) -> np.ndarray:
    """Smooth random 3D polyline (integrated correlated random walk)."""
    start = np.zeros(3) if start is None else np.asarray(start, dtype=float)
    heading = rng.normal(size=3)
    heading /= np.linalg.norm(heading)
    pts = [start]
    for _ in range(n_points - 1):
        heading = heading + 0.3 * rng.normal(size=3)
        heading /= np.linalg.norm(heading)
        pts.append(pts[-1] + step * heading)
    return np.asarray(pts)


@dataclass
class MirroredSkeletons:
    skeletons: list
    plane: Hyperplane
    pairs: list  # true (id, id) pairs


def mirrored_skeletons(n_pairs: int = 3, jitter: float = 0.0, seed: int = 0,
                       n_points: int = 30) -> MirroredSkeletons:
    """``n_pairs`` random curves on one side of the plane ``x = 0`` and their mirrors.

    ``jitter`` is the per-coordinate Gaussian noise as a fraction of the
    population's bounding box diagonal.
    """
    rng = np.random.default_rng(seed)
    plane = Hyperplane(np.array([1.0, 0.0, 0.0]), np.zeros(3))
    left = []
    for _ in range(n_pairs):
        start = np.array([rng.uniform(2.0, 10.0), rng.uniform(-10, 10), rng.uniform(-10, 10)])
        left.append(random_curve(rng, n_points=n_points, start=start))
    right = [reflect_points(c, plane) for c in left]
    curves = left + right
    if jitter > 0:
        scale = jitter * bbox_diagonal(np.vstack(curves))
        curves = [c + rng.normal(scale=scale, size=c.shape) for c in curves]
    skeletons = [Skeleton(points=c, id=f"s{i}") for i, c in enumerate(curves)]
    pairs = [(f"s{i}", f"s{i + n_pairs}") for i in range(n_pairs)]
    return MirroredSkeletons(skeletons=skeletons, plane=plane, pairs=pairs)


def mirrored_corpus(count: int = 100, seed: int = 0, width: int = 200, height: int = 200,
                    max_offset: float = 30.0, noise: float = 0.02, exponent: float = 2.0):
    """``count`` mirrored images with uniformly random axis angle and offset.

    Returns ``[(image_id, MirroredImage), ...]``; the axis passes within
    ``max_offset`` pixels (per coordinate) of the image centre.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    centre = np.array([(width - 1) / 2.0, (height - 1) / 2.0])
    out = []
    for k in range(count):
        angle = float(rng.uniform(0.0, 180.0))
        point = centre + rng.uniform(-max_offset, max_offset, size=2)
        image_seed = int(rng.integers(0, 2**31 - 1))
        item = mirrored_image(width, height, angle, point, seed=image_seed,
                              noise=noise, exponent=exponent)
        out.append((f"img{k:03d}", item))
    return out

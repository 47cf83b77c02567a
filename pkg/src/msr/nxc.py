"""2D rigid registration by consensus over patch-to-image NXC matches.

Square patches are cut from rotated copies of the moving image (one copy per
angle of a coarse grid) and located in the target by normalized
cross-correlation. Every confident match votes for a rotation/translation;
peaks of the vote histogram are the registration hypotheses.

Coordinates are ``(x, y) = (column, row)``. A positive angle turns the +x
axis towards +y, which is clockwise on screen. If ``moving`` is
``rotate_image(target, a)`` the recovered angle is ``-a`` (mod 360).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import fft, ndimage

from .errors import DegeneratePatchError, DimensionError
from .geometry import RigidTransform, rotation_2d
from .icp import RegistrationResult, best_rigid_transform

TRANSLATION_BIN = 4.0
_FLAT_STD = 1e-5  # windows with a smaller standard deviation correlate as 0


@dataclass(frozen=True)
class NxcConfig:
    num_angles: int = 6
    patch_size: int = 40
    max_side: int = 200
    correlation_threshold: float = 0.25
    patches_per_angle: int = 300
    top_k: int = 10
    use_gradient: bool = True
    seed: int = 0
    # rigid least-squares polish of each peak from its inlier correspondences
    refine: bool = False
    inlier_radius: float = 6.0
    workers: int = 1

    def __post_init__(self):
        if self.num_angles < 1:
            raise ValueError("num_angles must be >= 1")
        if self.patch_size < 3:
            raise ValueError("patch_size must be >= 3")
        if not 0.0 < self.correlation_threshold < 1.0:
            raise ValueError("correlation_threshold must lie in (0, 1)")
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")
        if self.max_side < self.patch_size:
            raise ValueError("max_side must be at least patch_size")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class TransformVote:
    """One patch match.

    ``translation`` is the peak location in the target minus the patch
    location in the rotated moving image. ``source`` and ``target`` are the
    patch centre in unrotated moving coordinates and its matched position in
    the target.
    """

    angle: float
    translation: tuple
    score: float
    source: tuple = (0.0, 0.0)
    target: tuple = (0.0, 0.0)


def as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] < 1:
        raise DimensionError(f"image must be a non-empty 2-D grid, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise DimensionError("image contains non-finite intensities")
    return img


def image_center(shape) -> np.ndarray:
    h, w = shape[:2]
    return np.array([(w - 1) / 2.0, (h - 1) / 2.0])


def downscale_factor(shape, max_side: int) -> float:
    side = max(shape[:2])
    return 1.0 if side <= max_side else max_side / side


def _resample(image, scale: float) -> np.ndarray:
    """Uniform bilinear rescale; output pixel ``x`` samples ``(x + 0.5) / scale - 0.5``."""
    h, w = image.shape
    out_shape = (max(1, int(round(h * scale))), max(1, int(round(w * scale))))
    src = image
    if scale < 1.0:
        src = ndimage.gaussian_filter(image, sigma=(1.0 / scale - 1.0) / 2.0, mode="nearest")
    offset = 0.5 / scale - 0.5
    return ndimage.affine_transform(
        src, np.eye(2) / scale, offset=offset, output_shape=out_shape,
        order=1, mode="nearest",
    )


def gradient_magnitude(image) -> np.ndarray:
    gy, gx = np.gradient(np.asarray(image, dtype=float))
    return np.hypot(gx, gy)


def preprocess(image, config: NxcConfig | None = None) -> np.ndarray:
    """Downscale to ``max_side`` and optionally replace by normalized gradient magnitude."""
    config = config or NxcConfig()
    img = as_image(image)
    return _prepare(img, downscale_factor(img.shape, config.max_side), config.use_gradient)


def rotate_image(image, angle: float, order: int = 1) -> np.ndarray:
    """Rotate about the image centre; content at ``z`` moves to ``R(angle)(z - c) + c``.

    Samples outside the source are zero.
    """
    img = np.asarray(image, dtype=float)
    if angle % 360.0 == 0.0:
        return img.copy()
    rot = rotation_2d(angle)
    # (row, col) index frame: swap axes of the (x, y) inverse rotation
    inv = rot.T[::-1, ::-1]
    c = image_center(img.shape)[::-1]
    return ndimage.affine_transform(
        img, inv, offset=c - inv @ c, output_shape=img.shape, order=order,
        mode="constant", cval=0.0,
    )


class _Correlator:
    """FFT correlation of many equally sized patches against one target."""

    def __init__(self, target, patch_shape):
        self.target = as_image(target)
        th, tw = self.target.shape
        ph, pw = patch_shape
        if ph > th or pw > tw:
            raise DimensionError("patch does not fit inside the target")
        self.patch_shape = (ph, pw)
        # circular correlation: valid placements never wrap around
        self.fshape = (fft.next_fast_len(th, real=True), fft.next_fast_len(tw, real=True))
        self.target_fft = fft.rfft2(self.target, s=self.fshape)
        self.valid = (th - ph + 1, tw - pw + 1)
        n = ph * pw
        centred = self.target - self.target.mean()
        s1 = _box_sum(centred, ph, pw)
        s2 = _box_sum(centred * centred, ph, pw)
        var = np.maximum(s2 - s1 * s1 / n, 0.0)
        flat = var <= n * _FLAT_STD ** 2
        self.window_norm = np.where(flat, np.inf, np.sqrt(var))

    def correlate(self, patches) -> np.ndarray:
        """Correlation surfaces for a ``(B, ph, pw)`` stack of zero-mean, non-flat patches."""
        norms = np.sqrt(np.einsum("bij,bij->b", patches, patches))
        spectra = fft.rfft2(patches, s=self.fshape, axes=(-2, -1))
        full = fft.irfft2(np.conj(spectra) * self.target_fft, s=self.fshape, axes=(-2, -1))
        num = full[:, :self.valid[0], :self.valid[1]]
        out = num / (norms[:, None, None] * self.window_norm[None])
        return np.clip(out, -1.0, 1.0)


def _box_sum(arr, ph, pw) -> np.ndarray:
    """Sum over every ``ph x pw`` window (valid placements only)."""
    ii = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    ii[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    return ii[ph:, pw:] - ii[:-ph, pw:] - ii[ph:, :-pw] + ii[:-ph, :-pw]


def _zero_mean(patch):
    centred = patch - patch.mean()
    if float(np.sqrt((centred * centred).sum())) <= math.sqrt(patch.size) * _FLAT_STD:
        return None
    return centred


def nxc_correlate(patch, target) -> np.ndarray:
    """Normalized cross-correlation of ``patch`` at every valid placement in ``target``.

    Entry ``[r, c]`` compares the patch with ``target[r:r+h, c:c+w]``. Flat
    windows score 0; a flat patch raises :class:`DegeneratePatchError`.
    """
    p = as_image(patch)
    centred = _zero_mean(p)
    if centred is None:
        raise DegeneratePatchError("degenerate patch: zero intensity variance")
    return _Correlator(target, p.shape).correlate(centred[None])[0]


def patch_votes(moving, target, config: NxcConfig | None = None) -> list[TransformVote]:
    """Collect patch-to-image votes over the angle grid. Inputs must be preprocessed."""
    config = config or NxcConfig()
    mov = as_image(moving)
    tgt = as_image(target)
    s = config.patch_size
    if min(mov.shape) < s or min(tgt.shape) < s:
        raise DimensionError(f"images must be at least {s}x{s} pixels")
    rng = np.random.default_rng(config.seed)
    corr = _Correlator(tgt, (s, s))
    centre = image_center(mov.shape)
    half = (s - 1) / 2.0
    angles = [k * 360.0 / config.num_angles for k in range(config.num_angles)]
    # positions are drawn up front so results never depend on scheduling
    positions = [
        np.column_stack([
            rng.integers(0, mov.shape[0] - s + 1, config.patches_per_angle),
            rng.integers(0, mov.shape[1] - s + 1, config.patches_per_angle),
        ])
        for _ in angles
    ]

    def work(k):
        angle = angles[k]
        rotated = rotate_image(mov, angle)
        coverage = rotate_image(np.ones_like(mov), angle)
        rot = rotation_2d(angle)
        kept, stack = [], []
        for r, c in positions[k]:
            if coverage[r:r + s, c:c + s].mean() < 0.5:
                continue
            centred = _zero_mean(rotated[r:r + s, c:c + s])
            if centred is None:
                continue
            kept.append((r, c))
            stack.append(centred)
        votes = []
        for start in range(0, len(stack), 64):
            surfaces = corr.correlate(np.asarray(stack[start:start + 64]))
            flat = surfaces.reshape(len(surfaces), -1)
            best = np.argmax(flat, axis=1)
            for (r, c), idx, surf in zip(kept[start:start + 64], best, flat):
                score = float(surf[idx])
                if score < config.correlation_threshold:
                    continue
                pr, pc = divmod(int(idx), corr.valid[1])
                tx, ty = float(pc - c), float(pr - r)
                centre_rot = np.array([c + half, r + half])
                src = rot.T @ (centre_rot - centre) + centre
                votes.append(TransformVote(
                    angle=angle, translation=(tx, ty), score=score,
                    source=(float(src[0]), float(src[1])),
                    target=(float(centre_rot[0] + tx), float(centre_rot[1] + ty)),
                ))
        return votes

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chunks = list(pool.map(work, range(len(angles))))
    else:
        chunks = [work(k) for k in range(len(angles))]
    votes = [v for chunk in chunks for v in chunk]
    votes.sort(key=lambda v: (v.angle, v.translation, -v.score, v.source, v.target))
    return votes


def vote_transform(angle: float, translation, center) -> RigidTransform:
    """Rigid map of a vote: rotate about ``center`` by ``angle``, then translate."""
    rot = rotation_2d(angle)
    c = np.asarray(center, dtype=float)
    return RigidTransform(rot, c - rot @ c + np.asarray(translation, dtype=float))


def consensus_peaks(votes, config: NxcConfig | None = None, center=(0.0, 0.0)):
    """Best local maxima of the score-weighted (angle, tx, ty) vote histogram.

    Returns up to ``top_k`` ``(RigidTransform, confidence)`` pairs ranked by bin
    mass; confidence is the bin's share of the total vote mass. Each peak's
    translation is the score-weighted centroid of the votes in its 3x3
    translation neighbourhood at the same angle.
    """
    config = config or NxcConfig()
    if not votes:
        return []
    step = 360.0 / config.num_angles
    n_ang = config.num_angles
    a_idx = np.array([int(round(v.angle / step)) % n_ang for v in votes])
    trans = np.array([v.translation for v in votes], dtype=float)
    scores = np.array([v.score for v in votes], dtype=float)
    t_idx = np.floor(trans / TRANSLATION_BIN).astype(int)

    mass = {}
    for a, (bx, by), w in zip(a_idx, t_idx, scores):
        key = (int(a), int(bx), int(by))
        mass[key] = mass.get(key, 0.0) + w
    total = float(scores.sum())
    keys = sorted(mass)
    order = {key: i for i, key in enumerate(keys)}

    def neighbours(key):
        a, bx, by = key
        angs = {(a + da) % n_ang for da in (-1, 0, 1)}
        for na in sorted(angs):
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nb = (na, bx + dx, by + dy)
                    if nb != key:
                        yield nb

    peaks = []
    for key in keys:
        m = mass[key]
        is_peak = True
        for nb in neighbours(key):
            other = mass.get(nb)
            if other is None:
                continue
            # ties go to the bin that sorts first
            if other > m or (other == m and order[nb] < order[key]):
                is_peak = False
                break
        if is_peak:
            peaks.append(key)
    peaks.sort(key=lambda k: (-mass[k], order[k]))

    out = []
    for key in peaks[: config.top_k]:
        a, bx, by = key
        sel = (a_idx == a) & (np.abs(t_idx[:, 0] - bx) <= 1) & (np.abs(t_idx[:, 1] - by) <= 1)
        w = scores[sel]
        t = (trans[sel] * w[:, None]).sum(axis=0) / w.sum()
        out.append((vote_transform(a * step, t, center), mass[key] / total))
    return out


def _refine(transform, votes_src, votes_dst, scores, seed_mask, radius, max_iter=20):
    """Polish a hypothesis by alternating inlier selection and weighted rigid fits."""
    inliers = seed_mask
    for it in range(1, max_iter + 1):
        if inliers.sum() >= 3:
            transform = best_rigid_transform(votes_src[inliers], votes_dst[inliers], scores[inliers])
        resid = np.linalg.norm(transform.apply(votes_src) - votes_dst, axis=1)
        new = resid <= radius
        if not new.any() or np.array_equal(new, inliers):
            break
        inliers = new
    resid = np.linalg.norm(transform.apply(votes_src) - votes_dst, axis=1)
    inliers = resid <= radius
    return transform, inliers, resid, it


def _same_transform(a: RigidTransform, b: RigidTransform, radius: float, center) -> bool:
    ang = math.degrees(abs(math.atan2(
        a.rotation[1, 0] * b.rotation[0, 0] - a.rotation[0, 0] * b.rotation[1, 0],
        a.rotation[0, 0] * b.rotation[0, 0] + a.rotation[1, 0] * b.rotation[1, 0],
    )))
    c = np.asarray(center, dtype=float)
    return ang < 2.0 and np.linalg.norm(a.apply(c) - b.apply(c)) < radius


def nxc_register(moving, target, config: NxcConfig | None = None) -> list[RegistrationResult]:
    """Rank rigid transforms mapping ``moving`` onto ``target``.

    Transforms are expressed in the input pixel frame, whatever the internal
    downscaling. An empty list means no patch correlated above threshold.
    """
    config = config or NxcConfig()
    mov_raw = as_image(moving)
    tgt_raw = as_image(target)
    # one common scale keeps the two frames related by a rigid motion
    scale = min(downscale_factor(mov_raw.shape, config.max_side),
                downscale_factor(tgt_raw.shape, config.max_side))
    mov = _prepare(mov_raw, scale, config.use_gradient)
    tgt = _prepare(tgt_raw, scale, config.use_gradient)
    if min(mov.shape) < config.patch_size or min(tgt.shape) < config.patch_size:
        return []
    votes = patch_votes(mov, tgt, config)
    if not votes:
        return []
    centre = image_center(mov.shape)
    peaks = consensus_peaks(votes, config, center=centre)

    src = np.array([v.source for v in votes])
    dst = np.array([v.target for v in votes])
    scores = np.array([v.score for v in votes])
    step = 360.0 / config.num_angles
    vote_bins = np.array([int(round(v.angle / step)) % config.num_angles for v in votes])
    found = []
    for transform, conf in peaks:
        rms, iterations, n_inliers = 0.0, 0, 0
        if config.refine:
            ang = math.degrees(math.atan2(transform.rotation[1, 0], transform.rotation[0, 0]))
            a_bin = int(round(ang / step)) % config.num_angles
            near = np.linalg.norm(transform.apply(src) - dst, axis=1) <= 2.0 * TRANSLATION_BIN
            transform, inliers, resid, iterations = _refine(
                transform, src, dst, scores, near & (vote_bins == a_bin), config.inlier_radius)
            n_inliers = int(inliers.sum())
            if n_inliers:
                conf = float(scores[inliers].sum() / scores.sum())
                rms = float(np.sqrt(np.mean(resid[inliers] ** 2)))
        if any(_same_transform(transform, f[0], config.inlier_radius, centre) for f in found):
            continue
        found.append((transform, conf, rms, iterations, n_inliers))

    # stable sort: equal confidences keep histogram rank
    found.sort(key=lambda f: -f[1])
    o = np.full(2, scale / 2.0 - 0.5)
    results = []
    for transform, conf, rms, iterations, n_inliers in found[: config.top_k]:
        # preprocessed frame is x' = s x + o; conjugate back to input pixels
        rot = transform.rotation
        t = (rot @ o + transform.translation - o) / scale
        results.append(RegistrationResult(
            transform=RigidTransform(rot, t),
            confidence=min(1.0, conf),
            rms_error=rms / scale,
            iterations_used=iterations,
            diagnostics={"votes": len(votes), "inliers": n_inliers, "scale": scale},
        ))
    return results


def _prepare(image, scale, use_gradient):
    img = _resample(image, scale) if scale < 1.0 else image
    if use_gradient:
        img = gradient_magnitude(img)
        top = img.max()
        img = img / top if top > 0 else np.zeros_like(img)
    return img

"""Static figures: point-cloud projections, image overlays and PR curves.

Figures are built on the Agg canvas without pyplot, and SVG output uses a
fixed hash salt and no date stamp so repeated runs write identical bytes.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .geometry import Hyperplane
from .pipeline import clip_line

matplotlib.rcParams["svg.hashsalt"] = "msr"
matplotlib.rcParams["svg.fonttype"] = "none"

LINE_COLORS = ["#ffd400", "#ff3b30", "#34c759", "#0a84ff", "#af52de",
               "#ff9500", "#5ac8fa", "#ff2d55", "#a2845e", "#8e8e93"]


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    FigureCanvasAgg(fig)
    fmt = path.suffix.lstrip(".").lower()
    metadata = {"Date": None} if fmt == "svg" else {"Software": None}
    fig.savefig(path, format=fmt, metadata=metadata)
    return path


def plane_basis(normal) -> np.ndarray:
    """Orthonormal basis whose first row is ``normal``."""
    v = np.asarray(normal, dtype=float)
    n = v.size
    # Householder map with row k equal to v (up to sign), k = largest component
    k = int(np.argmax(np.abs(v)))
    sign = 1.0 if v[k] >= 0 else -1.0
    w = v.copy()
    w[k] += sign
    basis = -sign * (np.eye(n) - 2.0 * np.outer(w, w) / (w @ w))
    rows = [basis[k]] + [basis[i] for i in range(n) if i != k]
    return np.asarray(rows)


def projection_views(points, plane: Hyperplane, out_dir, prefix: str = "projection",
                     midpoints=None) -> list[Path]:
    """Three orthographic scatter views in the plane's frame, saved as SVG.

    The first view looks along the plane normal, so mirrored halves overlap;
    the other two look along in-plane axes, where the plane shows as a line.
    """
    pts = np.asarray(points, dtype=float)
    basis = plane_basis(plane.normal)
    coords = (pts - plane.anchor) @ basis.T
    if coords.shape[1] < 3:
        coords = np.hstack([coords, np.zeros((len(coords), 3 - coords.shape[1]))])
    mids = None
    if midpoints is not None:
        mids = (np.asarray(midpoints, dtype=float) - plane.anchor) @ basis.T
        if mids.shape[1] < 3:
            mids = np.hstack([mids, np.zeros((len(mids), 3 - mids.shape[1]))])
    views = [
        ("normal", (1, 2), "in-plane u", "in-plane w"),
        ("side-u", (0, 2), "normal", "in-plane w"),
        ("side-w", (0, 1), "normal", "in-plane u"),
    ]
    paths = []
    for name, (i, j), xl, yl in views:
        fig = Figure(figsize=(4, 4))
        ax = fig.add_subplot(1, 1, 1)
        side = np.sign(coords[:, 0])
        ax.scatter(coords[side < 0, i], coords[side < 0, j], s=3, c="#0a84ff", linewidths=0)
        ax.scatter(coords[side >= 0, i], coords[side >= 0, j], s=3, c="#ff9500", linewidths=0)
        if mids is not None:
            ax.scatter(mids[:, i], mids[:, j], s=2, c="k", linewidths=0)
        if i == 0:
            ax.axvline(0.0, color="k", lw=0.8)
        ax.set_aspect("equal", adjustable="datalim")
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
        ax.set_title(name)
        fig.tight_layout()
        paths.append(_save(fig, Path(out_dir) / f"{prefix}-{name}.svg"))
    return paths


def overlay_lines(image, lines, path, segments=None) -> Path:
    """Draw ranked symmetry lines (and optional segments) over a grayscale image as PNG."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    dpi = 100
    fig = Figure(figsize=(w / dpi, h / dpi), dpi=dpi)
    ax = fig.add_axes([0, 0, 1, 1])
    ax.imshow(img, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
    for rank in reversed(range(len(lines))):
        ends = clip_line(lines[rank], w, h)
        if ends is None:
            continue
        (x1, y1), (x2, y2) = ends
        lw = 2.0 if rank == 0 else 1.0
        ax.plot([x1, x2], [y1, y2], color=LINE_COLORS[rank % len(LINE_COLORS)], lw=lw)
    for seg in segments or []:
        (x1, y1), (x2, y2) = seg.endpoints
        ax.plot([x1, x2], [y1, y2], color="#34c759", lw=3.0, solid_capstyle="butt")
    ax.set_xlim(-0.5, w - 0.5)
    ax.set_ylim(h - 0.5, -0.5)
    ax.axis("off")
    return _save(fig, path)


def pr_curve_plot(curve, path, label: str | None = None) -> Path:
    fig = Figure(figsize=(4, 4))
    ax = fig.add_subplot(1, 1, 1)
    rec = [p.recall for p in curve]
    prec = [p.precision for p in curve]
    ax.plot(rec, prec, "o-", ms=3, label=label)
    for p in curve:
        ax.annotate(str(p.k), (p.recall, p.precision), fontsize=6,
                    xytext=(2, 2), textcoords="offset points")
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    if label:
        ax.legend(loc="lower left")
    fig.tight_layout()
    return _save(fig, path)

"""Correctness of detected symmetry lines/segments and precision-recall curves.

A detection is correct when its direction is within ``angle_threshold``
degrees of the ground truth and it passes close to the ground-truth centre:
for segments the two centres must be closer than ``center_distance_fraction``
of the ground-truth length; for lines the distance from the ground-truth
centre to the line is used instead.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MsrError, ParseError
from .geometry import Hyperplane
from .pipeline import SymmetrySegment

GT_HEADER = ["image_id", "x1", "y1", "x2", "y2"]
DETECTION_HEADER = ["image_id", "rank", "x1", "y1", "x2", "y2", "confidence"]
CURVE_HEADER = ["k", "precision", "recall"]


@dataclass(frozen=True)
class GroundTruthSegment:
    endpoints: tuple
    image_id: str

    def __post_init__(self):
        pts = np.asarray(self.endpoints, dtype=float).reshape(2, 2)
        if np.allclose(pts[0], pts[1], rtol=0.0, atol=0.0):
            raise ValueError(f"ground truth for {self.image_id!r} has identical endpoints")
        object.__setattr__(self, "endpoints", (tuple(pts[0].tolist()), tuple(pts[1].tolist())))

    @property
    def center(self) -> np.ndarray:
        return np.mean(self.endpoints, axis=0)

    @property
    def length(self) -> float:
        a, b = np.asarray(self.endpoints)
        return float(np.linalg.norm(b - a))

    @property
    def direction(self) -> np.ndarray:
        a, b = np.asarray(self.endpoints)
        return b - a


@dataclass(frozen=True)
class MetricConfig:
    angle_threshold: float = 10.0
    center_distance_fraction: float = 0.2
    max_rank: int = 10

    def __post_init__(self):
        if self.angle_threshold <= 0 or self.center_distance_fraction <= 0 or self.max_rank < 1:
            raise ValueError("metric thresholds must be positive")


@dataclass(frozen=True)
class CurvePoint:
    k: int
    precision: float
    recall: float


def _fold_angle(u, v) -> float:
    """Angle between two undirected directions, in degrees within [0, 90]."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    cos = abs(float(u @ v)) / (np.linalg.norm(u) * np.linalg.norm(v))
    return math.degrees(math.acos(min(1.0, cos)))


def line_direction(line: Hyperplane) -> np.ndarray:
    return np.array([-line.normal[1], line.normal[0]])


def segment_line(segment) -> Hyperplane:
    """Infinite line through a segment's endpoints."""
    a, b = np.asarray(_endpoints(segment), dtype=float)
    d = b - a
    return Hyperplane.from_normal([-d[1], d[0]], a)


def _endpoints(segment):
    if isinstance(segment, (SymmetrySegment, GroundTruthSegment)):
        return segment.endpoints
    return segment


def segment_correct(pred, gt: GroundTruthSegment, cfg: MetricConfig | None = None) -> bool:
    cfg = cfg or MetricConfig()
    a, b = np.asarray(_endpoints(pred), dtype=float)
    if np.allclose(a, b, rtol=0.0, atol=0.0):
        return False
    angle = _fold_angle(b - a, gt.direction)
    dist = float(np.linalg.norm((a + b) / 2.0 - gt.center))
    return angle < cfg.angle_threshold and dist < cfg.center_distance_fraction * gt.length


def line_correct(pred_line: Hyperplane, gt: GroundTruthSegment, cfg: MetricConfig | None = None) -> bool:
    cfg = cfg or MetricConfig()
    angle = _fold_angle(line_direction(pred_line), gt.direction)
    dist = abs(float(pred_line.distance(gt.center[None])[0]))
    return angle < cfg.angle_threshold and dist < cfg.center_distance_fraction * gt.length


def _is_correct(pred, gt, cfg, mode):
    if mode == "line":
        line = pred if isinstance(pred, Hyperplane) else segment_line(pred)
        return line_correct(line, gt, cfg)
    if mode == "segment":
        if isinstance(pred, Hyperplane):
            raise MsrError("segment mode needs segment detections")
        return segment_correct(pred, gt, cfg)
    raise ValueError(f"unknown mode {mode!r}")


def precision_recall(detections: dict, gts: dict, cfg: MetricConfig | None = None,
                     mode: str = "line") -> list[CurvePoint]:
    """Precision/recall over the top ``k = 1..max_rank`` detections of every image.

    ``detections`` maps image id to a rank-ordered list; ``gts`` maps image
    id to its ground-truth segments. Each ground truth is matched by at most
    one detection (greedily, in rank order). With no detections taken,
    precision is reported as 0.
    """
    cfg = cfg or MetricConfig()
    unknown = sorted(set(detections) - set(gts))
    if unknown:
        raise MsrError(f"detections for images without ground truth: {', '.join(map(str, unknown))}")
    total_gt = sum(len(v) for v in gts.values())
    # correctness table computed once per image
    tables = {}
    for image_id, truth in gts.items():
        preds = list(detections.get(image_id, []))[: cfg.max_rank]
        tables[image_id] = [[_is_correct(p, g, cfg, mode) for g in truth] for p in preds]

    curve = []
    for k in range(1, cfg.max_rank + 1):
        taken = tp = 0
        for table in tables.values():
            matched = set()
            for row in table[:k]:
                taken += 1
                for gi, ok in enumerate(row):
                    if ok and gi not in matched:
                        matched.add(gi)
                        break
            tp += len(matched)
        precision = tp / taken if taken else 0.0
        recall = tp / total_gt if total_gt else 0.0
        curve.append(CurvePoint(k, precision, recall))
    return curve


def top1_accuracy(detections: dict, gts: dict, cfg: MetricConfig | None = None, mode: str = "line") -> float:
    """Share of ground-truth images whose first detection is correct."""
    cfg = cfg or MetricConfig()
    if not gts:
        return 0.0
    hits = 0
    for image_id, truth in gts.items():
        preds = detections.get(image_id, [])
        if preds and any(_is_correct(preds[0], g, cfg, mode) for g in truth):
            hits += 1
    return hits / len(gts)


def _data_rows(path):
    """Yield ``(line_number, fields)`` for non-comment, non-blank CSV rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [(i, ln) for i, ln in enumerate(fh, start=1)
                 if ln.strip() and not ln.lstrip().startswith("#")]
    for (number, _), row in zip(lines, csv.reader(ln for _, ln in lines)):
        yield number, [f.strip() for f in row]


def load_ground_truth(path) -> list[GroundTruthSegment]:
    """Read ``image_id,x1,y1,x2,y2`` rows (header optional, ``#`` comments skipped)."""
    out = []
    for number, row in _data_rows(path):
        if row == GT_HEADER:
            continue
        if len(row) != 5:
            raise ParseError(f"{path}:{number}: expected 5 fields, got {len(row)}")
        try:
            coords = [float(x) for x in row[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{number}: bad coordinate ({exc})") from None
        if not all(math.isfinite(c) for c in coords):
            raise ParseError(f"{path}:{number}: non-finite coordinate")
        try:
            out.append(GroundTruthSegment(((coords[0], coords[1]), (coords[2], coords[3])), row[0]))
        except ValueError as exc:
            raise ParseError(f"{path}:{number}: {exc}") from None
    return out


def group_by_image(segments) -> dict:
    grouped = {}
    for seg in segments:
        grouped.setdefault(seg.image_id, []).append(seg)
    return grouped


def load_detections(path) -> dict:
    """Read ``image_id,rank,x1,y1,x2,y2[,confidence]`` rows into rank-ordered segments."""
    rows = {}
    for number, row in _data_rows(path):
        if row[: len(DETECTION_HEADER) - 1] == DETECTION_HEADER[:-1]:
            continue
        if len(row) not in (6, 7):
            raise ParseError(f"{path}:{number}: expected 6 or 7 fields, got {len(row)}")
        try:
            rank = int(row[1])
            coords = [float(x) for x in row[2:6]]
        except ValueError as exc:
            raise ParseError(f"{path}:{number}: {exc}") from None
        rows.setdefault(row[0], []).append((rank, number, coords))
    out = {}
    for image_id, items in rows.items():
        items.sort()
        out[image_id] = [SymmetrySegment(np.array(c).reshape(2, 2)) for _, _, c in items]
    return out


def write_detections(path, detections: dict) -> None:
    """Write ``image_id -> [(segment, confidence), ...]`` in the detections CSV schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DETECTION_HEADER)
        for image_id in sorted(detections):
            for rank, (seg, conf) in enumerate(detections[image_id], start=1):
                (x1, y1), (x2, y2) = np.asarray(_endpoints(seg), dtype=float).tolist()
                writer.writerow([image_id, rank, repr(x1), repr(y1), repr(x2), repr(y2), repr(float(conf))])


def write_ground_truth(path, segments) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(GT_HEADER)
        for seg in segments:
            (x1, y1), (x2, y2) = np.asarray(seg.endpoints, dtype=float).tolist()
            writer.writerow([seg.image_id, repr(x1), repr(y1), repr(x2), repr(y2)])


def write_curve(path, curve) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for point in curve:
            writer.writerow([point.k, repr(float(point.precision)), repr(float(point.recall))])

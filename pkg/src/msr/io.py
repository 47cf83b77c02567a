"""File formats: point clouds, skeletons, images and JSON result documents."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ParseError
from .geometry import Hyperplane
from .pairing import Skeleton

RESULT_SCHEMA = "msr.result/1"
SYNTH_SCHEMA = "msr.synth/1"


def _numeric_lines(path):
    with open(path, encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            yield number, line


def _parse_row(path, number, line, dim):
    try:
        row = [float(x) for x in line.split()]
    except ValueError as exc:
        raise ParseError(f"{path}:{number}: {exc}") from None
    if dim is not None and len(row) != dim:
        raise ParseError(f"{path}:{number}: expected {dim} coordinates, got {len(row)}")
    if not all(np.isfinite(row)):
        raise ParseError(f"{path}:{number}: non-finite coordinate")
    return row


def load_points(path) -> np.ndarray:
    """Whitespace separated coordinates, one point per line; dimension from the first point."""
    rows, dim = [], None
    for number, line in _numeric_lines(path):
        if not line:
            continue
        row = _parse_row(path, number, line, dim)
        dim = len(row)
        rows.append(row)
    if not rows:
        raise ParseError(f"{path}: no points")
    return np.asarray(rows, dtype=float)


def save_points(path, points) -> None:
    pts = np.asarray(points, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        for p in pts:
            fh.write(" ".join(repr(float(x)) for x in p) + "\n")


def load_skeletons(path) -> list[Skeleton]:
    """Blank-line separated blocks of points, each optionally headed by ``> id``."""
    blocks, current, name, dim = [], [], None, None

    def flush():
        nonlocal current, name
        if current:
            ident = name if name is not None else f"s{len(blocks)}"
            try:
                blocks.append(Skeleton(np.asarray(current, dtype=float), ident))
            except ValueError as exc:
                raise ParseError(f"{path}: {exc}") from None
        elif name is not None:
            raise ParseError(f"{path}: skeleton {name!r} has no points")
        current, name = [], None

    with open(path, encoding="utf-8") as fh:
        for number, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if stripped.startswith(">"):
                flush()
                name = stripped[1:].strip() or f"s{len(blocks)}"
                continue
            line = raw.split("#", 1)[0].strip()
            if not line:
                if not stripped.startswith("#"):
                    flush()
                continue
            row = _parse_row(path, number, line, dim)
            dim = len(row)
            current.append(row)
    flush()
    ids = [s.id for s in blocks]
    if len(set(ids)) != len(ids):
        raise ParseError(f"{path}: duplicate skeleton ids")
    return blocks


def save_skeletons(path, skeletons) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for k, skel in enumerate(skeletons):
            if k:
                fh.write("\n")
            fh.write(f"> {skel.id}\n")
            for p in skel.points:
                fh.write(" ".join(repr(float(x)) for x in p) + "\n")


def _read_plain_pgm(path) -> np.ndarray:
    tokens = []
    with open(path, encoding="ascii") as fh:
        for line in fh:
            tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise ParseError(f"{path}: not a plain PGM file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        data = np.array([int(t) for t in tokens[4:4 + w * h]], dtype=float)
    except (IndexError, ValueError) as exc:
        raise ParseError(f"{path}: malformed PGM header ({exc})") from None
    if data.size != w * h or maxval <= 0:
        raise ParseError(f"{path}: PGM expects {w * h} samples, found {data.size}")
    return data.reshape(h, w) / maxval


def load_image(path) -> np.ndarray:
    """Grayscale image in ``[0, 1]``; colour is converted to luminance."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P2":
        return _read_plain_pgm(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(im, dtype=float)
                return arr / (arr.max() or 1.0) if im.mode == "I" else arr / 65535.0
            if im.mode not in ("L", "1"):
                im = im.convert("RGB").convert("L")
            return np.asarray(im.convert("L"), dtype=float) / 255.0
    except (OSError, ValueError) as exc:
        raise ParseError(f"{path}: unreadable image ({exc})") from None


def save_image(path, image) -> None:
    arr = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def plane_record(plane: Hyperplane) -> dict:
    return {
        "normal": [float(x) for x in plane.normal],
        "anchor": [float(x) for x in plane.anchor],
        "offset": float(plane.signed_distance),
    }


def plane_from_record(record) -> Hyperplane:
    return Hyperplane(np.asarray(record["normal"], dtype=float), np.asarray(record["anchor"], dtype=float))


def parse_plane(text: str, dim: int | None = None) -> Hyperplane:
    """``n1,...,nd,p1,...,pd`` (normal then a point on the plane)."""
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise ParseError(f"bad plane {text!r}") from None
    if len(vals) % 2 or len(vals) < 4:
        raise ParseError(f"plane needs a normal and a point of equal dimension, got {len(vals)} numbers")
    d = len(vals) // 2
    if dim is not None and d != dim:
        raise ParseError(f"plane has dimension {d}, data has {dim}")
    try:
        return Hyperplane.from_normal(vals[:d], vals[d:])
    except ValueError as exc:
        raise ParseError(f"bad plane {text!r}: {exc}") from None


def write_json(path, doc) -> None:
    """Stable JSON: sorted keys, fixed indentation, trailing newline."""
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from None

"""``msr`` command line: detect2d, detect3d, eval, pair, synth.

Every command writes its machine-readable outputs into ``--out-dir`` and
prints tab-separated rows on stdout. ``result.json`` depends only on the
inputs and flags; ``report.json`` adds the wall-clock time.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io as msr_io
from . import plotting
from .errors import DetectionFailure, MsrError
from .evaluation import (
    GroundTruthSegment, MetricConfig, group_by_image, load_detections, load_ground_truth,
    precision_recall, top1_accuracy, write_curve, write_detections, write_ground_truth,
)
from .geometry import midpoints, reflect_points
from .icp import IcpConfig
from .nxc import NxcConfig
from .pairing import pair_skeletons
from .pipeline import (
    MsrConfig, SymmetrySegment, clip_line, detect_symmetry_2d, detect_symmetry_points,
    initial_planes, line_to_segment,
)
from .synth import mirrored_corpus, mirrored_image, mirrored_skeletons, planted_plane_cloud

REPORT_SCHEMA = "msr.report/1"


@dataclass
class RunReport:
    command: str
    inputs: dict
    config: dict
    seed: int
    results: dict
    status: str = "ok"
    duration_seconds: float = 0.0
    outputs: list = field(default_factory=list)

    def to_dict(self, timing: bool = True) -> dict:
        doc = {
            "schema": REPORT_SCHEMA if timing else msr_io.RESULT_SCHEMA,
            "command": self.command,
            "inputs": self.inputs,
            "config": self.config,
            "seed": self.seed,
            "results": self.results,
            "status": self.status,
            "outputs": self.outputs,
        }
        if timing:
            doc["duration_seconds"] = self.duration_seconds
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunReport":
        if doc.get("schema") not in (REPORT_SCHEMA, msr_io.RESULT_SCHEMA):
            raise MsrError(f"unknown schema {doc.get('schema')!r}")
        return cls(
            command=doc["command"], inputs=doc["inputs"], config=doc["config"],
            seed=doc["seed"], results=doc["results"], status=doc["status"],
            duration_seconds=doc.get("duration_seconds", 0.0), outputs=doc.get("outputs", []),
        )


def load_report(path) -> RunReport:
    return RunReport.from_dict(msr_io.read_json(path))


def _write_report(report: RunReport, out_dir: Path, started: float) -> None:
    report.duration_seconds = time.perf_counter() - started
    report.outputs = sorted(set(report.outputs) | {"result.json", "report.json"})
    msr_io.write_json(out_dir / "result.json", report.to_dict(timing=False))
    msr_io.write_json(out_dir / "report.json", report.to_dict(timing=True))


def _emit(rows) -> None:
    for row in rows:
        print("\t".join(str(x) for x in row))


def _nxc_config(args) -> NxcConfig:
    return NxcConfig(
        num_angles=args.angles, patch_size=args.patch_size, max_side=args.max_side,
        correlation_threshold=args.threshold, patches_per_angle=args.patches,
        top_k=args.k, seed=args.seed, workers=args.workers,
    )


def _config_echo(cfg) -> dict:
    # thread count never changes results, and result.json must not depend on it
    return {k: v for k, v in vars(cfg).items() if k != "workers"}


def _segment_record(seg) -> list:
    return [[float(x) for x in p] for p in np.asarray(seg.endpoints)]


def cmd_detect2d(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    nxc = _nxc_config(args)
    starts = "canonical"
    if args.initial_plane:
        starts = [msr_io.parse_plane(p, dim=2) for p in args.initial_plane]
    config = MsrConfig(initial_planes=starts, backend="nxc", backend_config=nxc)

    images, detections, outputs, failed = {}, {}, [], []
    rows = [("image_id", "rank", "nx", "ny", "offset", "confidence", "x1", "y1", "x2", "y2")]
    ids = [Path(p).stem for p in args.images]
    if len(set(ids)) != len(ids):
        raise MsrError("input images must have distinct file names")
    for path, image_id in zip(args.images, ids):
        img = msr_io.load_image(path)
        entry = {"path": str(path), "shape": list(img.shape)}
        try:
            det = detect_symmetry_2d(img, config)
        except DetectionFailure as exc:
            entry.update(status="failed", error=str(exc), diagnostics=exc.diagnostics)
            images[image_id] = entry
            failed.append(image_id)
            print(f"{image_id}: {exc}", file=sys.stderr)
            continue
        lines = [(p, c) for p, c in det.ranked_alternatives[: args.k]]
        ranked, segs, for_csv = [], [], []
        for rank, (plane, conf) in enumerate(lines, start=1):
            ends = clip_line(plane, img.shape[1], img.shape[0])
            record = {"rank": rank, "line": msr_io.plane_record(plane), "confidence": float(conf)}
            seg = None
            if args.segments:
                seg = line_to_segment(plane, img)
                segs.append(seg)
            elif ends is not None:
                seg = SymmetrySegment(np.array(ends))
            if seg is not None:
                record["segment"] = _segment_record(seg)
                for_csv.append((seg, conf))
                (x1, y1), (x2, y2) = seg.endpoints
            else:
                x1 = y1 = x2 = y2 = float("nan")
            ranked.append(record)
            rows.append((image_id, rank, plane.normal[0], plane.normal[1], plane.signed_distance,
                         conf, x1, y1, x2, y2))
        entry.update(status="ok", detections=ranked)
        images[image_id] = entry
        detections[image_id] = for_csv
        overlay = f"overlay-{image_id}.png"
        plotting.overlay_lines(img, [p for p, _ in lines], out_dir / overlay, segments=segs or None)
        outputs.append(overlay)

    write_detections(out_dir / "detections.csv", detections)
    outputs.append("detections.csv")
    report = RunReport(
        command="detect2d",
        inputs={"images": [str(p) for p in args.images]},
        config={"nxc": _config_echo(nxc), "segments": args.segments,
                "initial_planes": ([msr_io.plane_record(p) for p in starts]
                                   if args.initial_plane else "canonical")},
        seed=args.seed,
        results={"images": images, "failed": failed},
        status="ok" if not failed else "failed",
        outputs=outputs,
    )
    _write_report(report, out_dir, started)
    _emit(rows)
    return 0 if not failed else 1


def cmd_detect3d(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    pts = msr_io.load_points(args.cloud)
    dim = pts.shape[1]
    icp = IcpConfig(max_iterations=args.max_iterations, convergence_threshold=args.convergence,
                    trim_fraction=args.trim, seed=args.seed)
    if args.initial_plane:
        starts = [msr_io.parse_plane(p, dim=dim) for p in args.initial_plane]
    else:
        starts = args.plane_preset
    config = MsrConfig(initial_planes=starts, backend="icp", backend_config=icp)
    det = detect_symmetry_points(pts, config)

    outputs = [p.name for p in plotting.projection_views(pts, det.plane, out_dir)]
    mids = None
    if args.midpoints:
        start = initial_planes(config, dim, pts.mean(axis=0))[det.initial_plane_index]
        mids = midpoints(pts, det.transform.apply(reflect_points(pts, start)))
        msr_io.save_points(out_dir / "midpoints.txt", mids)
        outputs.append("midpoints.txt")
        outputs += [p.name for p in plotting.projection_views(mids, det.plane, out_dir, prefix="midpoints")]

    results = {
        "plane": msr_io.plane_record(det.plane),
        "confidence": float(det.confidence),
        "initial_plane_index": det.initial_plane_index,
        "alternatives": [{"plane": msr_io.plane_record(p), "confidence": float(c)}
                         for p, c in det.ranked_alternatives],
        "runs": det.diagnostics,
    }
    report = RunReport(
        command="detect3d",
        inputs={"cloud": str(args.cloud), "points": int(len(pts)), "dim": int(dim)},
        config={"icp": _config_echo(icp),
                "initial_planes": ([msr_io.plane_record(p) for p in starts]
                                   if not isinstance(starts, str) else starts)},
        seed=args.seed, results=results, outputs=outputs,
    )
    _write_report(report, out_dir, started)
    _emit([("rank", *[f"n{i}" for i in range(dim)], "offset", "confidence")])
    _emit((rank, *det_plane.normal, det_plane.signed_distance, conf)
          for rank, (det_plane, conf) in enumerate(det.ranked_alternatives, start=1))
    return 0


def cmd_eval(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = MetricConfig(angle_threshold=args.angle_thresh, center_distance_fraction=args.center_frac,
                       max_rank=args.k)
    gts = group_by_image(load_ground_truth(args.ground_truth))
    dets = load_detections(args.detections)
    curve = precision_recall(dets, gts, cfg, mode=args.mode)
    top1 = top1_accuracy(dets, gts, cfg, mode=args.mode)
    write_curve(out_dir / "curve.csv", curve)
    plotting.pr_curve_plot(curve, out_dir / "pr_curve.png", label=args.mode)
    report = RunReport(
        command="eval",
        inputs={"detections": str(args.detections), "ground_truth": str(args.ground_truth),
                "images": len(gts)},
        config={"angle_threshold": cfg.angle_threshold,
                "center_distance_fraction": cfg.center_distance_fraction,
                "max_rank": cfg.max_rank, "mode": args.mode},
        seed=args.seed,
        results={"curve": [{"k": p.k, "precision": p.precision, "recall": p.recall} for p in curve],
                 "top1_accuracy": top1},
        outputs=["curve.csv", "pr_curve.png"],
    )
    _write_report(report, out_dir, started)
    _emit([("k", "precision", "recall")])
    _emit((p.k, p.precision, p.recall) for p in curve)
    _emit([("top1_accuracy", top1)])
    return 0


def cmd_pair(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    skeletons = msr_io.load_skeletons(args.skeletons)
    if len(skeletons) < 2:
        raise MsrError(f"need at least 2 skeletons, found {len(skeletons)}")
    dim = skeletons[0].points.shape[1]
    plane_source = "given"
    if args.plane:
        plane = msr_io.parse_plane(args.plane, dim=dim)
    else:
        pooled = np.vstack([s.points for s in skeletons])
        starts = ([msr_io.parse_plane(p, dim=dim) for p in args.initial_plane]
                  if args.initial_plane else args.plane_preset)
        plane = detect_symmetry_points(pooled, MsrConfig(initial_planes=starts,
                                                          backend_config=IcpConfig(seed=args.seed))).plane
        plane_source = "detected"
    result = pair_skeletons(skeletons, plane, normalize=args.normalize)
    pairs = [{"a": a, "b": b, "cost": c, "mutual": True} for a, b, c in result.pairs]
    pairs += [{"a": a, "b": b, "cost": c, "mutual": False} for a, b, c in result.non_mutual]
    report = RunReport(
        command="pair",
        inputs={"skeletons": str(args.skeletons), "count": len(skeletons)},
        config={"normalize": args.normalize, "plane_source": plane_source},
        seed=args.seed,
        results={"plane": msr_io.plane_record(plane), "pairs": pairs, "unmatched": result.unmatched,
                 "total_cost": result.total_cost,
                 "ids": [s.id for s in skeletons], "costs": result.costs.tolist()},
    )
    _write_report(report, out_dir, started)
    _emit([("a", "b", "cost", "mutual")])
    _emit((p["a"], p["b"], p["cost"], "mutual" if p["mutual"] else "non-mutual") for p in pairs)
    _emit(("unmatched", u) for u in result.unmatched)
    return 0


def cmd_synth(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kind = args.kind
    params, outputs = {}, []
    if kind == "mirrored-image":
        if args.axis_column is not None:
            angle, point = 90.0, (args.axis_column, (args.height - 1) / 2.0)
        else:
            angle = args.axis_angle
            point = tuple(float(x) for x in args.axis_point.split(",")) if args.axis_point else None
            if point is not None and len(point) != 2:
                raise MsrError("--axis-point expects x,y")
        m = mirrored_image(args.width, args.height, angle, point, seed=args.seed,
                           noise=args.noise, exponent=args.exponent)
        msr_io.save_image(out_dir / "image.png", m.image)
        if m.segment is None:
            raise MsrError("axis does not cross the image")
        write_ground_truth(out_dir / "gt.csv", [GroundTruthSegment(m.segment, "image")])
        params = {"width": args.width, "height": args.height, "axis_angle": angle,
                  "noise": args.noise, "exponent": args.exponent}
        truth = {"axis": msr_io.plane_record(m.axis),
                 "segment": [[float(x) for x in p] for p in m.segment]}
        outputs = ["image.png", "gt.csv"]
        rows = [("axis_angle", angle), ("axis_point", *m.axis.anchor)]
    elif kind == "mirrored-corpus":
        corpus = mirrored_corpus(args.count, seed=args.seed, width=args.width, height=args.height,
                                 noise=args.noise, exponent=args.exponent)
        (out_dir / "images").mkdir(exist_ok=True)
        gts = []
        for image_id, m in corpus:
            msr_io.save_image(out_dir / "images" / f"{image_id}.png", m.image)
            gts.append(GroundTruthSegment(m.segment, image_id))
        write_ground_truth(out_dir / "gt.csv", gts)
        params = {"count": args.count, "width": args.width, "height": args.height,
                  "noise": args.noise, "exponent": args.exponent}
        truth = {image_id: msr_io.plane_record(m.axis) for image_id, m in corpus}
        outputs = ["images/", "gt.csv"]
        rows = [("images", args.count)]
    elif kind == "planted-plane-cloud":
        c = planted_plane_cloud(args.n, noise=args.noise, seed=args.seed, dim=args.dim)
        msr_io.save_points(out_dir / "cloud.txt", c.points)
        params = {"n": args.n, "noise": args.noise, "dim": args.dim}
        truth = {"plane": msr_io.plane_record(c.plane)}
        outputs = ["cloud.txt"]
        rows = [("normal", *c.plane.normal), ("anchor", *c.plane.anchor)]
    elif kind == "mirrored-skeletons":
        s = mirrored_skeletons(args.pairs, jitter=args.jitter, seed=args.seed, n_points=args.points)
        msr_io.save_skeletons(out_dir / "skeletons.txt", s.skeletons)
        params = {"pairs": args.pairs, "jitter": args.jitter, "points": args.points}
        truth = {"plane": msr_io.plane_record(s.plane), "pairs": [list(p) for p in s.pairs]}
        outputs = ["skeletons.txt"]
        rows = [("pair", a, b) for a, b in s.pairs]
    else:  # argparse restricts the choices
        raise MsrError(f"unknown kind {kind!r}")
    msr_io.write_json(out_dir / "truth.json", {"schema": msr_io.SYNTH_SCHEMA, "kind": kind,
                                               "seed": args.seed, "params": params, "truth": truth})
    outputs.append("truth.json")
    report = RunReport(command="synth", inputs={"kind": kind}, config=params, seed=args.seed,
                       results={"truth": truth}, outputs=outputs)
    _write_report(report, out_dir, started)
    _emit(rows)
    return 0


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out-dir", default=".", help="directory for output files")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msr", description="Mirror symmetry detection by registration.")
    sub = parser.add_subparsers(dest="command", required=True)

    nxc = NxcConfig()
    p = sub.add_parser("detect2d", help="symmetry lines of images")
    p.add_argument("images", nargs="+", help="PNG or plain PGM files")
    p.add_argument("--backend", choices=["nxc"], default="nxc")
    p.add_argument("--k", type=int, default=nxc.top_k, help="lines kept per image")
    p.add_argument("--initial-plane", action="append", metavar="NX,NY,PX,PY",
                   help="initial reflection line (normal, point); repeatable")
    p.add_argument("--patch-size", type=int, default=nxc.patch_size)
    p.add_argument("--angles", type=int, default=nxc.num_angles, help="rotation grid size N")
    p.add_argument("--patches", type=int, default=nxc.patches_per_angle, help="patches per angle")
    p.add_argument("--threshold", type=float, default=nxc.correlation_threshold)
    p.add_argument("--max-side", type=int, default=nxc.max_side)
    p.add_argument("--workers", type=int, default=1, help="threads for the angle loop")
    p.add_argument("--segments", action="store_true", help="also reduce lines to segments")
    _add_common(p)
    p.set_defaults(func=cmd_detect2d)

    icp = IcpConfig()
    p = sub.add_parser("detect3d", help="symmetry plane of a point cloud")
    p.add_argument("cloud", help="whitespace separated point file")
    p.add_argument("--backend", choices=["icp"], default="icp")
    p.add_argument("--initial-plane", action="append", metavar="N1,..,Nd,P1,..,Pd",
                   help="initial reflection plane (normal, point); repeatable")
    p.add_argument("--plane-preset", choices=["canonical", "extended"], default="canonical")
    p.add_argument("--trim", type=float, default=icp.trim_fraction)
    p.add_argument("--max-iterations", type=int, default=icp.max_iterations)
    p.add_argument("--convergence", type=float, default=icp.convergence_threshold)
    p.add_argument("--midpoints", action="store_true", help="dump the registration midpoints")
    _add_common(p)
    p.set_defaults(func=cmd_detect3d)

    metric = MetricConfig()
    p = sub.add_parser("eval", help="precision/recall of ranked detections")
    p.add_argument("detections", help="CSV image_id,rank,x1,y1,x2,y2[,confidence]")
    p.add_argument("ground_truth", help="CSV image_id,x1,y1,x2,y2")
    p.add_argument("--mode", choices=["line", "segment"], default="line")
    p.add_argument("--k", type=int, default=metric.max_rank, help="largest rank K")
    p.add_argument("--angle-thresh", type=float, default=metric.angle_threshold)
    p.add_argument("--center-frac", type=float, default=metric.center_distance_fraction)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pair", help="left/right pairing of skeletons")
    p.add_argument("skeletons", help="skeleton file")
    p.add_argument("--plane", metavar="N1,..,Nd,P1,..,Pd", help="symmetry plane; detected if omitted")
    p.add_argument("--initial-plane", action="append", help="initial plane when detecting")
    p.add_argument("--plane-preset", choices=["canonical", "extended"], default="canonical")
    p.add_argument("--normalize", action="store_true", help="divide DTW costs by path length")
    _add_common(p)
    p.set_defaults(func=cmd_pair)

    p = sub.add_parser("synth", help="synthetic data with ground truth")
    p.add_argument("kind", choices=["mirrored-image", "mirrored-corpus", "planted-plane-cloud",
                                    "mirrored-skeletons"])
    p.add_argument("--width", type=int, default=200)
    p.add_argument("--height", type=int, default=200)
    p.add_argument("--axis-angle", type=float, default=90.0, help="degrees from +x; 90 is vertical")
    p.add_argument("--axis-point", help="x,y on the axis (default image centre)")
    p.add_argument("--axis-column", type=float, help="vertical axis at this x")
    p.add_argument("--exponent", type=float, default=2.0, help="texture spectral exponent")
    p.add_argument("--count", type=int, default=100, help="corpus size")
    p.add_argument("--n", type=int, default=500, help="points before mirroring")
    p.add_argument("--dim", type=int, default=3)
    p.add_argument("--noise", type=float, default=None,
                   help="image noise std, or cloud noise as a bbox fraction")
    p.add_argument("--pairs", type=int, default=3)
    p.add_argument("--jitter", type=float, default=0.0)
    p.add_argument("--points", type=int, default=30, help="points per skeleton")
    _add_common(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "synth" and args.noise is None:
        args.noise = 0.02 if args.kind in ("mirrored-image", "mirrored-corpus") else 0.0
    try:
        return args.func(args)
    except DetectionFailure as exc:
        print(f"msr: detection failed: {exc}", file=sys.stderr)
        for entry in exc.diagnostics:
            print(f"msr:   {entry}", file=sys.stderr)
        return 1
    except (MsrError, ValueError, OSError) as exc:
        print(f"msr: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

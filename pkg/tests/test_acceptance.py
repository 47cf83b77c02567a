"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

Also runnable directly: ``python tests/test_acceptance.py``.
"""

import contextlib
import io
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import random_rotation, random_unit, record_acceptance  # noqa: E402
from test_nxc import direct_nxc  # noqa: E402
from test_pairing import brute_assignment, brute_dtw  # noqa: E402

from msr.cli import main  # noqa: E402
from msr.evaluation import group_by_image, line_correct, load_ground_truth  # noqa: E402
from msr.geometry import (  # noqa: E402
    Hyperplane, RigidTransform, bbox_diagonal, eigenvector_minus_one, fit_plane_to_midpoints,
    midpoints, plane_angle_distance, reflect_points, reflection_matrix,
    symmetry_plane_from_registration,
)
from msr.icp import brute_force_neighbors, nearest_neighbors  # noqa: E402
from msr.io import plane_from_record, read_json  # noqa: E402
from msr.nxc import nxc_correlate  # noqa: E402
from msr.pairing import dtw_cost, munkres, pair_skeletons  # noqa: E402
from msr.pipeline import MsrConfig, detect_symmetry_points  # noqa: E402
from msr.synth import mirrored_skeletons, planted_plane_cloud  # noqa: E402

# registration settings for the 2D corpus: 40x40 patches, max side 200,
# and an angle grid fine enough that every axis direction is reachable
CORPUS_SIZE = 100
CORPUS_FLAGS = ["--patch-size", "40", "--max-side", "200", "--angles", "36", "--patches", "150"]


def cli(argv):
    """Run the command line in-process; returns (exit code, stdout)."""
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main([str(a) for a in argv])
    return code, buf.getvalue()


def exact_registration(start, truth):
    """Rigid map taking the reflection about ``start`` to the reflection about ``truth``."""
    rot = reflection_matrix(truth.normal) @ reflection_matrix(start.normal)
    trans = 2.0 * truth.signed_distance * truth.normal - rot @ (2.0 * start.signed_distance * start.normal)
    return RigidTransform(rot, trans)


def random_plane(rng, dim, spread=3.0):
    return Hyperplane(random_unit(rng, dim), rng.normal(size=dim) * spread)


# ---------------------------------------------------------------- criteria

def property_suite():
    started = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {"involution": 0.0, "coplanar": 0.0, "eigenvalue": 0.0, "routes": 0.0}
    for k in range(1000):
        dim = 2 + k % 4
        cloud = rng.normal(size=(40, dim)) * rng.uniform(0.5, 5.0)
        truth = random_plane(rng, dim)
        start = random_plane(rng, dim)
        scale = bbox_diagonal(cloud)

        back = reflect_points(reflect_points(cloud, truth), truth)
        worst["involution"] = max(worst["involution"], float(np.max(np.abs(back - cloud))) / max(1.0, scale))

        mids = midpoints(cloud, reflect_points(cloud, truth))
        worst["coplanar"] = max(worst["coplanar"], float(np.max(np.abs(truth.distance(mids)))) / scale)

        rot = random_rotation(rng, dim)
        _, lam = eigenvector_minus_one(reflection_matrix(start.normal) @ rot.T)
        worst["eigenvalue"] = max(worst["eigenvalue"], abs(lam + 1.0))

        reg = exact_registration(start, truth)
        eigen_plane = symmetry_plane_from_registration(start, reg)
        fit_plane = fit_plane_to_midpoints(midpoints(cloud, reg.apply(reflect_points(cloud, start))))
        worst["routes"] = max(worst["routes"], plane_angle_distance(eigen_plane, fit_plane)[0])
    elapsed = time.perf_counter() - started
    passed = (worst["involution"] <= 1e-12 and worst["coplanar"] <= 1e-12 and worst["eigenvalue"] <= 1e-9
              and worst["routes"] < 1e-6 and elapsed < 10.0)
    detail = (f"1000 draws in R^2..R^5; worst involution {worst['involution']:.1e}, coplanarity "
              f"{worst['coplanar']:.1e}*scale, |lambda+1| {worst['eigenvalue']:.1e}, route angle "
              f"{worst['routes']:.1e} rad; {elapsed:.1f}s (limit 10s)")
    return passed, detail


def oracle_equivalence():
    started = time.perf_counter()
    rng = np.random.default_rng(99)
    dtw_ok = 0
    for _ in range(200):
        a = rng.normal(size=(int(rng.integers(1, 7)), 3))
        b = rng.normal(size=(int(rng.integers(1, 7)), 3))
        dtw_ok += dtw_cost(a, b) == brute_dtw(a, b)
    munkres_ok = 0
    for k in range(100):
        n = 1 + k % 7
        c = rng.integers(0, 6, size=(n, n)).astype(float) if k % 2 else rng.random((n, n))
        munkres_ok += munkres(c).total_cost == brute_assignment(c)
    nn_ok = 0
    for _ in range(20):
        q = np.round(rng.normal(size=(300, 3)), 1)
        r = np.round(rng.normal(size=(300, 3)), 1)
        idx, dist = nearest_neighbors(q, r)
        bidx, bdist = brute_force_neighbors(q, r)
        nn_ok += bool(np.array_equal(idx, bidx) and np.array_equal(dist, bdist))
    nxc_err = 0.0
    for _ in range(100):
        target = rng.random((8, 8))
        patch = rng.random((5, 5))
        nxc_err = max(nxc_err, float(np.max(np.abs(nxc_correlate(patch, target) - direct_nxc(patch, target)))))
    elapsed = time.perf_counter() - started
    passed = dtw_ok == 200 and munkres_ok == 100 and nn_ok == 20 and nxc_err <= 1e-10 and elapsed < 60.0
    detail = (f"DTW {dtw_ok}/200 exact, Munkres {munkres_ok}/100 exact, NN {nn_ok}/20 exact, "
              f"NXC max error {nxc_err:.1e}; {elapsed:.1f}s (limit 60s)")
    return passed, detail


def planted_plane_recovery(preset="canonical"):
    started = time.perf_counter()
    hits = 0
    for seed in range(50):
        case = planted_plane_cloud(500, noise=0.01, seed=1000 + seed)
        det = detect_symmetry_points(case.points, MsrConfig(initial_planes=preset))
        angle, offset = plane_angle_distance(det.plane, case.plane)
        hits += math.degrees(angle) < 2.0 and offset < 0.02 * bbox_diagonal(case.points)
    elapsed = time.perf_counter() - started
    passed = hits >= 45 and elapsed < 300.0
    detail = f"{preset} starts: {hits}/50 within 2 deg and 2% bbox (need 45); {elapsed:.1f}s (limit 300s)"
    return passed, detail


_CORPUS_RUN = {}


def corpus_run(workdir):
    """Generate the synthetic corpus and detect on it through the command line (cached)."""
    if "accuracy" in _CORPUS_RUN:
        return _CORPUS_RUN
    workdir = Path(workdir)
    started = time.perf_counter()
    code, _ = cli(["synth", "mirrored-corpus", "--count", CORPUS_SIZE, "--seed", 7, "--out-dir", workdir / "corpus"])
    assert code == 0
    images = sorted((workdir / "corpus" / "images").glob("*.png"))
    code, _ = cli(["detect2d", *images, *CORPUS_FLAGS, "--out-dir", workdir / "detect"])
    elapsed = time.perf_counter() - started
    gts = group_by_image(load_ground_truth(workdir / "corpus" / "gt.csv"))
    results = read_json(workdir / "detect" / "result.json")["results"]["images"]
    hits = 0
    for image_id, truth in gts.items():
        dets = results[image_id].get("detections", [])
        hits += bool(dets) and line_correct(plane_from_record(dets[0]["line"]), truth[0])
    _CORPUS_RUN.update(accuracy=hits / len(gts), hits=hits, elapsed=elapsed, code=code, workdir=workdir,
                       count=len(gts))
    return _CORPUS_RUN


def one_shot_2d(workdir):
    run = corpus_run(workdir)
    passed = run["accuracy"] >= 0.95 and run["elapsed"] < 1200.0
    detail = (f"{run['hits']}/{run['count']} top-1 lines correct ({100 * run['accuracy']:.0f}%, need 95%); "
              f"{' '.join(CORPUS_FLAGS)}; {run['elapsed']:.0f}s (limit 1200s)")
    return passed, detail


def pr_curve(workdir):
    run = corpus_run(workdir)
    workdir = Path(workdir)
    code, out = cli(["eval", workdir / "detect" / "detections.csv", workdir / "corpus" / "gt.csv",
                     "--out-dir", workdir / "eval"])
    rows = (workdir / "eval" / "curve.csv").read_text().splitlines()[1:]
    curve = [tuple(float(x) for x in r.split(",")) for r in rows]
    recall = [r for _, _, r in curve]
    monotone = all(b >= a for a, b in zip(recall, recall[1:]))
    k1 = curve[0][2] if curve else float("nan")
    passed = code == 0 and len(curve) == 10 and monotone and k1 == run["accuracy"]
    detail = (f"K=1..{len(curve)}, recall non-decreasing: {monotone}; recall@1 {k1} vs one-shot accuracy "
              f"{run['accuracy']}; recall@10 {recall[-1] if recall else float('nan')}")
    return passed, detail


def skeleton_pairing():
    fractions = []
    for seed in range(20):
        pop = mirrored_skeletons(3, jitter=0.01, seed=seed)
        res = pair_skeletons(pop.skeletons, pop.plane)
        found = {frozenset((a, b)) for a, b, _ in res.pairs}
        fractions.append(len(found & {frozenset(p) for p in pop.pairs}) / 3.0)
    exact_ok = True
    worst_cost = 0.0
    for seed in range(20):
        pop = mirrored_skeletons(3, seed=seed)
        res = pair_skeletons(pop.skeletons, pop.plane)
        worst_cost = max(worst_cost, res.total_cost)
        exact_ok &= {frozenset((a, b)) for a, b, _ in res.pairs} == {frozenset(p) for p in pop.pairs}
    mean = float(np.mean(fractions))
    passed = mean >= 2.0 / 3.0 and exact_ok and worst_cost < 1e-9
    detail = (f"jitter 1%: mean {mean:.3f} of true pairs per seed (need 0.667); exact mirrors all pairs: "
              f"{exact_ok}, worst total cost {worst_cost:.1e}")
    return passed, detail


def _outputs(directory):
    """Every output file except the timing report, as bytes."""
    directory = Path(directory)
    return {str(p.relative_to(directory)): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file() and p.name != "report.json"}


def determinism(workdir):
    workdir = Path(workdir)
    commands = {}
    for kind in ("mirrored-image", "mirrored-corpus", "planted-plane-cloud", "mirrored-skeletons"):
        extra = ["--count", 3, "--width", 96, "--height", 80] if kind == "mirrored-corpus" else []
        commands[f"synth {kind}"] = (["synth", kind, "--seed", 11, *extra], None)
    # axes at 90 and 120 degrees are reachable on the default 60 degree rotation grid
    for name, angle in (("vert", 90), ("tilt", 120)):
        cli(["synth", "mirrored-image", "--seed", 12, "--axis-angle", angle, "--out-dir", workdir / "in" / name])
    cli(["synth", "planted-plane-cloud", "--seed", 12, "--noise", 0.01, "--out-dir", workdir / "in" / "cloud"])
    cli(["synth", "mirrored-skeletons", "--seed", 12, "--jitter", 0.01, "--out-dir", workdir / "in" / "skel"])
    images = []
    for name in ("vert", "tilt"):
        images.append(workdir / "in" / f"{name}.png")
        images[-1].write_bytes((workdir / "in" / name / "image.png").read_bytes())
    commands["detect2d"] = (["detect2d", *images, "--k", 5, "--segments", "--seed", 3], [1, 3])
    commands["detect3d"] = (["detect3d", workdir / "in" / "cloud" / "cloud.txt", "--midpoints", "--seed", 3], None)
    commands["pair"] = (["pair", workdir / "in" / "skel" / "skeletons.txt", "--seed", 3], None)

    failures = []
    for name, (argv, worker_counts) in commands.items():
        variants = [[]] * 2 if worker_counts is None else [["--workers", w] for w in worker_counts] + [[]]
        outs = []
        for v, extra in enumerate(variants):
            out_dir = workdir / "runs" / name.replace(" ", "-") / str(v)
            code, stdout = cli([*argv, *extra, "--out-dir", out_dir])
            outs.append((code, stdout, _outputs(out_dir)))
        if any(o != outs[0] for o in outs[1:]) or outs[0][0] != 0:
            failures.append(name)
    # eval consumes the detections just produced
    det_dir = workdir / "runs" / "detect2d" / "0"
    write_gt = workdir / "in" / "gt.csv"
    gt_rows = ["image_id,x1,y1,x2,y2"]
    for name in ("vert", "tilt"):
        row = (workdir / "in" / name / "gt.csv").read_text().splitlines()[1]
        gt_rows.append(name + row[row.index(","):])
    write_gt.write_text("\n".join(gt_rows) + "\n")
    eval_outs = []
    for v in range(2):
        out_dir = workdir / "runs" / "eval" / str(v)
        code, stdout = cli(["eval", det_dir / "detections.csv", write_gt, "--seed", 3, "--out-dir", out_dir])
        eval_outs.append((code, stdout, _outputs(out_dir)))
    if eval_outs[0] != eval_outs[1] or eval_outs[0][0] != 0:
        failures.append("eval")
    total = len(commands) + 1
    passed = not failures
    detail = (f"{total - len(failures)}/{total} commands byte-identical across two runs"
              f" (detect2d also across --workers 1/3)" + (f"; differing: {', '.join(failures)}" if failures else ""))
    return passed, detail


# ---------------------------------------------------------------- pytest

@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("corpus")


def check(name, result):
    passed, detail = result
    record_acceptance(name, passed, detail)
    assert passed, detail


def test_property_suite():
    check("geometric property suite", property_suite())


def test_oracle_equivalence():
    check("oracle equivalence", oracle_equivalence())


def test_planted_plane_3d():
    # supplementary figure, printed but not part of the criterion
    _, extended = planted_plane_recovery("extended")
    print(f"INFO planted-plane 3D with 13 extended starts: {extended}")
    check("planted-plane 3D recovery", planted_plane_recovery("canonical"))


def test_one_shot_2d(corpus_dir):
    check("synthetic 2D one-shot accuracy", one_shot_2d(corpus_dir))


def test_pr_curve(corpus_dir):
    check("PR curve (K=1 equals one-shot accuracy)", pr_curve(corpus_dir))


def test_skeleton_pairing():
    check("mirrored-skeleton pairing", skeleton_pairing())


def test_determinism(tmp_path):
    check("determinism", determinism(tmp_path))


if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        results = [
            ("geometric property suite", property_suite()),
            ("oracle equivalence", oracle_equivalence()),
            ("planted-plane 3D recovery", planted_plane_recovery("canonical")),
            ("synthetic 2D one-shot accuracy", one_shot_2d(tmp / "corpus")),
            ("PR curve (K=1 equals one-shot accuracy)", pr_curve(tmp / "corpus")),
            ("mirrored-skeleton pairing", skeleton_pairing()),
            ("determinism", determinism(tmp / "det")),
        ]
        for name, (passed, detail) in results:
            record_acceptance(name, passed, detail)
        print(f"INFO planted-plane 3D with 13 extended starts: {planted_plane_recovery('extended')[1]}")
        sys.exit(0 if all(p for _, (p, _) in results) else 1)

import math

import numpy as np
import pytest
from scipy.linalg import expm
from hypothesis import given, settings
from hypothesis import strategies as st

from msr.errors import DimensionError
from msr.geometry import RigidTransform, bbox_diagonal
from msr.icp import IcpConfig, best_rigid_transform, brute_force_neighbors, icp_register, nearest_neighbors

from conftest import random_rotation


def rot3_z(deg):
    t = math.radians(deg)
    return np.array([[math.cos(t), -math.sin(t), 0.0], [math.sin(t), math.cos(t), 0.0], [0.0, 0.0, 1.0]])


def rotation_angle_deg(rot):
    return math.degrees(math.acos(np.clip((np.trace(rot) - 1.0) / 2.0, -1.0, 1.0)))


def small_rotation(rng, n, size):
    """exp of a random skew-symmetric matrix with entries of order ``size``."""
    a = rng.normal(scale=size, size=(n, n))
    return expm(a - a.T)


def blob(rng, n=300):
    """Anisotropic cloud without symmetries that would make ICP ambiguous."""
    pts = rng.normal(size=(n, 3)) * [3.0, 2.0, 1.0]
    return pts + 0.3 * pts[:, [1, 2, 0]] ** 2


class TestNearestNeighbors:
    def test_self_match(self, rng):
        pts = rng.normal(size=(50, 3))
        idx, dist = nearest_neighbors(pts, pts)
        assert np.array_equal(idx, np.arange(50)) and np.all(dist == 0.0)

    def test_simple(self):
        idx, dist = nearest_neighbors([[0.9, 0.0]], [[0.0, 0.0], [1.0, 0.0]])
        assert idx[0] == 1 and dist[0] == pytest.approx(0.1)

    def test_matches_exhaustive_search(self, rng):
        q = rng.normal(size=(200, 3))
        r = rng.normal(size=(200, 3))
        idx, dist = nearest_neighbors(q, r)
        bidx, bdist = brute_force_neighbors(q, r)
        assert np.array_equal(idx, bidx) and np.array_equal(dist, bdist)

    def test_ties_go_to_lowest_index(self):
        ref = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        idx, dist = nearest_neighbors([[0.0, 0.0], [1.0, 0.0]], ref)
        assert list(idx) == [0, 0] and dist[0] == 1.0

    def test_integer_grid_ties(self):
        # many exact ties on a lattice; shuffled so index order matters
        grid = np.array([[x, y] for x in range(6) for y in range(6)], dtype=float)
        perm = np.random.default_rng(1).permutation(len(grid))
        ref = grid[perm]
        q = grid[:, :] + 0.5
        assert np.array_equal(nearest_neighbors(q, ref)[0], brute_force_neighbors(q, ref)[0])

    def test_empty_reference(self):
        with pytest.raises(DimensionError):
            nearest_neighbors([[0.0, 0.0]], np.empty((0, 2)))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            nearest_neighbors([[0.0, 0.0]], [[0.0, 0.0, 0.0]])

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5))
    @settings(max_examples=30)
    def test_oracle_property(self, seed, n):
        rng = np.random.default_rng(seed)
        # rounded coordinates produce plenty of exact ties
        q = np.round(rng.normal(size=(40, n)), 1)
        r = np.round(rng.normal(size=(40, n)), 1)
        idx, dist = nearest_neighbors(q, r)
        bidx, bdist = brute_force_neighbors(q, r)
        assert np.array_equal(idx, bidx) and np.array_equal(dist, bdist)


class TestBestRigidTransform:
    def test_pure_translation(self, rng):
        src = rng.normal(size=(10, 2))
        t = best_rigid_transform(src, src + [5.0, -2.0])
        assert np.allclose(t.rotation, np.eye(2), atol=1e-12)
        assert np.allclose(t.translation, [5.0, -2.0], atol=1e-12)

    def test_quarter_turn(self):
        src = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        t = best_rigid_transform(src, src @ rot.T)
        assert np.allclose(t.rotation, rot, atol=1e-12)
        assert np.allclose(t.translation, 0.0, atol=1e-12)
        assert np.allclose(t.apply(src), src @ rot.T, atol=1e-12)

    def test_random_3d(self, rng):
        rot = random_rotation(rng, 3)
        trans = rng.normal(size=3)
        src = rng.normal(size=(50, 3))
        t = best_rigid_transform(src, src @ rot.T + trans)
        assert np.allclose(t.rotation, rot, atol=1e-9)
        assert np.allclose(t.translation, trans, atol=1e-9)

    def test_reflection_is_not_returned(self, rng):
        src = rng.normal(size=(30, 3))
        mirrored = src * [-1.0, 1.0, 1.0]
        t = best_rigid_transform(src, mirrored)
        assert np.linalg.det(t.rotation) == pytest.approx(1.0, abs=1e-9)

    def test_weights_ignore_zero_weight_outlier(self, rng):
        src = rng.normal(size=(20, 2))
        dst = src + [1.0, 2.0]
        dst[0] += 50.0
        w = np.ones(20)
        w[0] = 0.0
        t = best_rigid_transform(src, dst, weights=w)
        assert np.allclose(t.translation, [1.0, 2.0], atol=1e-9)

    def test_empty_input(self):
        with pytest.raises(DimensionError):
            best_rigid_transform(np.empty((0, 3)), np.empty((0, 3)))

    @given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(1, 30))
    @settings(max_examples=50)
    def test_always_proper(self, seed, n, count):
        rng = np.random.default_rng(seed)
        t = best_rigid_transform(rng.normal(size=(count, n)), rng.normal(size=(count, n)))
        assert np.allclose(t.rotation.T @ t.rotation, np.eye(n), atol=1e-9)
        assert abs(np.linalg.det(t.rotation) - 1.0) <= 1e-9


class TestIcp:
    def test_identity(self, rng):
        pts = blob(rng)
        res = icp_register(pts, pts)
        assert np.allclose(res.transform.rotation, np.eye(3), atol=1e-12)
        assert np.allclose(res.transform.translation, 0.0, atol=1e-12)
        assert res.rms_error == 0.0 and res.confidence == pytest.approx(1.0, abs=1e-12)

    def test_known_transform(self, rng):
        moving = blob(rng)
        truth = RigidTransform(rot3_z(10.0), [0.1, 0.2, 0.0])
        res = icp_register(moving, truth.apply(moving), IcpConfig(trim_fraction=0.0))
        assert np.allclose(res.transform.rotation, truth.rotation, atol=1e-6)
        assert np.allclose(res.transform.translation, truth.translation, atol=1e-6)

    def test_noisy_rotation(self):
        errors = []
        for seed in range(20):
            rng = np.random.default_rng(seed)
            moving = blob(rng)
            target = moving @ rot3_z(10.0).T
            target = target + rng.normal(scale=0.005 * bbox_diagonal(target), size=target.shape)
            res = icp_register(moving, target)
            errors.append(rotation_angle_deg(res.transform.rotation @ rot3_z(10.0).T))
        assert max(errors) < 1.0, errors

    def test_trimmed_rms_non_increasing(self, rng):
        moving = blob(rng)
        target = RigidTransform(rot3_z(25.0), [1.0, -0.5, 0.2]).apply(moving)
        target = target + rng.normal(scale=0.05, size=target.shape)
        for trim in (0.0, 0.1, 0.3):
            res = icp_register(moving, target, IcpConfig(trim_fraction=trim))
            hist = np.array(res.history)
            assert np.all(np.diff(hist) <= 1e-12 * hist[:-1]), (trim, hist)

    def test_deterministic(self, rng):
        moving = blob(rng)
        target = moving @ rot3_z(15.0).T + rng.normal(scale=0.05, size=moving.shape)
        cfg = IcpConfig(max_points=150, seed=4)
        a = icp_register(moving, target, cfg)
        b = icp_register(moving, target, cfg)
        assert np.array_equal(a.transform.rotation, b.transform.rotation)
        assert a.history == b.history

    def test_confidence_formula(self, rng):
        moving = blob(rng)
        target = moving + rng.normal(scale=0.1, size=moving.shape)
        res = icp_register(moving, target)
        expected = math.exp(-res.rms_error / (0.1 * bbox_diagonal(target)))
        assert res.confidence == pytest.approx(expected, rel=1e-12)
        assert 0.0 < res.confidence <= 1.0

    def test_confidence_decreases_with_rms(self, rng):
        moving = blob(rng)
        confs = []
        for noise in (0.0, 0.05, 0.2):
            target = moving + np.random.default_rng(0).normal(scale=noise, size=moving.shape)
            confs.append(icp_register(moving, target).confidence)
        assert confs[0] > confs[1] > confs[2]

    def test_equivariance(self, rng):
        a = blob(rng)
        b = RigidTransform(rot3_z(8.0), [0.3, 0.0, -0.2]).apply(a) + rng.normal(scale=0.02, size=a.shape)
        g = RigidTransform(random_rotation(rng, 3), rng.normal(size=3) * 5)
        r1 = icp_register(a, b).transform
        r2 = icp_register(g.apply(a), g.apply(b)).transform
        conj = g.compose(r1).compose(g.inverse())
        assert np.allclose(r2.rotation, conj.rotation, atol=1e-6)
        assert np.allclose(r2.translation, conj.translation, atol=1e-6)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            icp_register(np.zeros((4, 2)), np.zeros((4, 3)))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IcpConfig(trim_fraction=0.6)
        with pytest.raises(ValueError):
            IcpConfig(max_iterations=0)

    @pytest.mark.parametrize("n", [2, 4, 5])
    def test_higher_and_lower_dimensions(self, n):
        rng = np.random.default_rng(n)
        pts = rng.normal(size=(200, n)) * np.arange(1, n + 1)
        small = small_rotation(rng, n, 0.05)
        res = icp_register(pts, pts @ small.T, IcpConfig(trim_fraction=0.0))
        assert np.allclose(res.transform.rotation, small, atol=1e-6)

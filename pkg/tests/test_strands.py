import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from hairprism.strands import (DegenerateSegmentError, Hairstyle, Strand, build_neighbors, curvatures,
                               frame_field, orientations, resample_strand, synth_hairstyle)
from hairprism.losses import c_mean

from conftest import arc_points, brute_neighbors, loop_curvatures, loop_orientations, random_rotation

# smooth-ish random polylines with segments well above the degeneracy threshold
polylines = st.integers(2, 30).flatmap(
    lambda n: arrays(np.float64, (n, 3), elements=st.floats(-1, 1)).map(
        lambda steps: np.cumsum(steps + np.array([0.0, 0.0, 3.0]), axis=0)))


class TestOrientations:
    def test_straight_z(self):
        pts = np.zeros((7, 3))
        pts[:, 2] = np.linspace(0, 2, 7)
        np.testing.assert_array_equal(orientations(pts), np.tile([0.0, 0.0, 1.0], (6, 1)))

    def test_axis_turn(self):
        o = orientations(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float))
        np.testing.assert_array_equal(o, [[1, 0, 0], [0, 1, 0]])

    def test_arc_rotation_angle(self):
        # brute force: angle between consecutive orientations via atan2
        o = orientations(arc_points(50, 0.1))
        for a, b in zip(o[:-1], o[1:]):
            angle = math.atan2(np.linalg.norm(np.cross(a, b)), np.dot(a, b))
            assert angle == pytest.approx(0.1, abs=1e-12)

    def test_degenerate_segment_names_index(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        with pytest.raises(DegenerateSegmentError) as exc:
            orientations(pts)
        assert exc.value.segment == 1

    @given(polylines)
    def test_matches_loop_oracle_and_reversal(self, pts):
        o = orientations(pts)
        np.testing.assert_allclose(o, loop_orientations(pts.tolist()), atol=1e-12)
        np.testing.assert_allclose(np.linalg.norm(o, axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(orientations(pts[::-1]), -o[::-1], atol=1e-12)


class TestCurvatures:
    def test_straight_zero(self):
        pts = np.zeros((5, 3))
        pts[:, 0] = np.arange(5)
        np.testing.assert_array_equal(curvatures(pts), np.zeros(5))

    def test_right_angle(self):
        c = curvatures(np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float))
        np.testing.assert_allclose(c, [0.0, math.sqrt(2), 0.0])

    @pytest.mark.parametrize("step", [0.05, 0.1, 0.2])
    def test_arc_closed_form(self, step):
        c = curvatures(arc_points(40, step))
        assert c[0] == 0.0 and c[-1] == 0.0
        np.testing.assert_allclose(c[1:-1], 2 * math.sin(step / 2), atol=1e-12)

    @given(polylines)
    def test_loop_oracle_and_bounds(self, pts):
        c = curvatures(pts)
        assert c.shape == (pts.shape[0],)
        np.testing.assert_allclose(c, loop_curvatures(pts.tolist()), atol=1e-12)
        assert np.all((c >= 0) & (c <= 2))

    @given(polylines, st.integers(0, 2 ** 31 - 1), st.floats(0.1, 10))
    def test_rigid_and_scale_invariance(self, pts, seed, scale):
        rng = np.random.default_rng(seed)
        rot = random_rotation(rng)
        moved = scale * pts @ rot.T + rng.normal(size=3)
        np.testing.assert_allclose(curvatures(moved), curvatures(pts), atol=1e-9)
        np.testing.assert_allclose(orientations(moved), orientations(pts) @ rot.T, atol=1e-9)


class TestNeighbors:
    def test_collinear_ties(self):
        roots = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], dtype=float)
        assert build_neighbors(roots, 1) == ((1,), (0,), (1,))

    def test_square_grid(self):
        roots = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
        nb = build_neighbors(roots, 2)
        assert [set(r) for r in nb] == [{1, 2}, {0, 3}, {0, 3}, {1, 2}]

    def test_random_matches_oracle(self, rng):
        roots = rng.normal(size=(100, 3))
        assert list(build_neighbors(roots, 4)) == brute_neighbors(roots, 4)

    def test_large_blocked_matches_oracle(self, rng):
        roots = rng.integers(0, 6, size=(500, 3)).astype(float)  # many exact ties
        assert list(build_neighbors(roots, 4)) == brute_neighbors(roots, 4)

    def test_too_few_roots(self):
        with pytest.raises(ValueError):
            build_neighbors(np.zeros((2, 3)), 2)

    def test_hairstyle_rejects_reflexive_neighbors(self):
        with pytest.raises(ValueError):
            Hairstyle(np.zeros((2, 3, 3)) + np.arange(3)[None, :, None], neighbors=((0,), (0,)))


class TestResample:
    def test_uniform_straight(self):
        out = resample_strand(np.array([[0, 0, 0], [0.2, 0, 0], [1, 0, 0]], dtype=float), 3)
        np.testing.assert_allclose(out.points, [[0, 0, 0], [0.5, 0, 0], [1, 0, 0]], atol=1e-15)

    def test_idempotent_on_uniform(self):
        pts = arc_points(30, 0.1)
        np.testing.assert_allclose(resample_strand(pts, 30).points, pts, atol=1e-9)

    def test_l_shape_arc_lengths(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0]], dtype=float)
        out = resample_strand(pts, 5).points
        expected = [[0, 0, 0], [0.5, 0, 0], [1, 0, 0], [1, 0.5, 0], [1, 1, 0]]
        np.testing.assert_allclose(out, expected, atol=1e-15)

    @given(polylines, st.integers(2, 40))
    def test_endpoints_exact(self, pts, n):
        out = resample_strand(pts, n).points
        assert out.shape == (n, 3)
        np.testing.assert_array_equal(out[0], pts[0])
        np.testing.assert_array_equal(out[-1], pts[-1])

    def test_zero_length(self):
        with pytest.raises(ValueError):
            resample_strand(np.zeros((4, 3)), 3)


class TestSynth:
    def test_straight_low_curvature(self):
        assert c_mean(synth_hairstyle("straight", 10, 100, 0)) < 0.01

    def test_ordering(self):
        cm = [c_mean(synth_hairstyle(k, 10, 100, 0)) for k in ("straight", "wavy", "curly")]
        assert cm[0] < cm[1] < cm[2]

    def test_deterministic(self):
        a, b = synth_hairstyle("curly", 20, 50, 7), synth_hairstyle("curly", 20, 50, 7)
        np.testing.assert_array_equal(a.points, b.points)
        assert a.neighbors == b.neighbors

    def test_roots_on_cap(self):
        h = synth_hairstyle("wavy", 200, 20, 3)
        np.testing.assert_allclose(np.linalg.norm(h.roots, axis=1), 1.0, atol=1e-12)
        polar = np.degrees(np.arccos(h.roots[:, 2]))
        assert polar.max() <= 70.0 + 1e-9

    def test_strands_stay_outside_unit_head(self):
        h = synth_hairstyle("curly", 100, 100, 1)
        assert np.linalg.norm(h.points, axis=-1).min() >= 1.0 - 1e-12

    def test_invalid(self):
        with pytest.raises(ValueError):
            synth_hairstyle("frizzy", 1, 10)
        with pytest.raises(ValueError):
            synth_hairstyle("wavy", 1, 2)


def test_frame_field_invariants():
    f = frame_field(synth_hairstyle("curly", 5, 30, 0))
    assert f.orientations.shape == (5, 29, 3) and f.curvatures.shape == (5, 30)
    np.testing.assert_allclose(np.linalg.norm(f.orientations, axis=-1), 1.0, atol=1e-6)
    assert np.all((f.curvatures >= 0) & (f.curvatures <= 2))


def test_strand_immutable():
    s = Strand(np.zeros((3, 3)) + np.arange(3)[:, None])
    with pytest.raises(ValueError):
        s.points[0, 0] = 5.0

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from npnp.errors import DegenerateConfigurationError
from npnp.geometry import (
    Alignment,
    Correspondences,
    build_M,
    cost,
    pixel_to_bearing,
    pixels_to_bearings,
    point_line_dist2,
    polish_quaternion,
    quat_to_r9,
    r9_to_rotation,
    recover_translation,
    rotation_angle,
    rotation_to_quat,
)

from conftest import make_scene

unit_quats = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.1).map(
    lambda q: q / np.linalg.norm(q))


def random_corr(rng, n=8, anchors=False):
    p = rng.uniform(-2, 2, (n, 3))
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    a = rng.uniform(-1, 1, (n, 3)) if anchors else None
    return Correspondences(p, v, a)


def random_rotation(rng):
    q = rng.standard_normal(4)
    return r9_to_rotation(quat_to_r9(q / np.linalg.norm(q)))


def min_over_t_cost(corr, R):
    """Independent oracle: stacked least squares over t."""
    rows, rhs = [], []
    for p, v, a in zip(corr.points, corr.directions, corr.anchors):
        Q = np.eye(3) - np.outer(v, v)
        rows.append(Q)
        rhs.append(-Q @ (R @ p - a))
    t, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return sum(point_line_dist2(R @ p + t, a, v) for p, v, a in zip(corr.points, corr.directions, corr.anchors)), t


@pytest.mark.parametrize("q, r", [
    ((1, 0, 0, 0), (1, 0, 0, 0, 1, 0, 0, 0, 1)),
    ((0, 1, 0, 0), (1, 0, 0, 0, -1, 0, 0, 0, -1)),
    ((0, 0, 1, 0), (-1, 0, 0, 0, 1, 0, 0, 0, -1)),
])
def test_quat_to_r9_examples(q, r):
    np.testing.assert_array_equal(quat_to_r9(q), r)


def test_quat_to_r9_rejects_non_unit():
    with pytest.raises(ValueError):
        quat_to_r9([1.0, 1.0, 0.0, 0.0])


def test_quat_to_r9_entry_order():
    # R[0, 1] = 2 q2 q3 - 2 q1 q4 for a quarter turn about z
    q = np.array([np.cos(np.pi / 4), 0, 0, np.sin(np.pi / 4)])
    R = r9_to_rotation(quat_to_r9(q))
    np.testing.assert_allclose(R, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


def test_r9_to_rotation_examples():
    np.testing.assert_array_equal(r9_to_rotation([1, 0, 0, 0, 1, 0, 0, 0, 1]), np.eye(3))
    np.testing.assert_array_equal(r9_to_rotation(np.zeros(9)), np.zeros((3, 3)))
    np.testing.assert_array_equal(r9_to_rotation(np.arange(9.0)), np.arange(9.0).reshape(3, 3))


@settings(max_examples=200, deadline=None)
@given(unit_quats)
def test_quaternion_map_lands_in_so3(q):
    R = r9_to_rotation(quat_to_r9(q))
    assert np.abs(R.T @ R - np.eye(3)).max() <= 1e-12
    assert abs(np.linalg.det(R) - 1.0) <= 1e-12
    assert Alignment(R, np.zeros(3)).is_rotation()


@settings(max_examples=200, deadline=None)
@given(unit_quats)
def test_double_cover_is_exact(q):
    np.testing.assert_array_equal(quat_to_r9(q), quat_to_r9(-q))


@settings(max_examples=100, deadline=None)
@given(unit_quats)
def test_rotation_to_quat_inverts(q):
    q2 = rotation_to_quat(r9_to_rotation(quat_to_r9(q)))
    assert q2[0] >= 0
    assert min(np.abs(q2 - q).max(), np.abs(q2 + q).max()) <= 1e-12


def test_rotation_angle_small_and_large():
    c, s = np.cos(1e-9), np.sin(1e-9)
    Rz = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    assert rotation_angle(np.eye(3), Rz) == pytest.approx(1e-9, rel=1e-6)
    assert rotation_angle(np.eye(3), np.diag([1.0, -1, -1])) == pytest.approx(np.pi)


@pytest.mark.parametrize("x, expected", [((0, 0, 5), 0.0), ((1, 0, 5), 1.0), ((3, 4, 0), 25.0)])
def test_point_line_dist2_examples(x, expected):
    assert point_line_dist2(x, (0, 0, 0), (0, 0, 1)) == expected


def test_cost_examples():
    corr = Correspondences([[0, 0, 1], [0, 0, 2], [1, 0, 3]], [[0, 0, 1]] * 3)
    assert cost(corr, Alignment(np.eye(3), [1, 0, 0])) == pytest.approx(1.0 + 1.0 + 4.0)
    corr_data, data = make_scene(noise=0.0, seed=4)
    assert cost(corr_data, data.ground_truth) <= 1e-12


def test_cost_is_sum_of_pair_distances(rng):
    corr = random_corr(rng, anchors=True)
    al = Alignment(random_rotation(rng), rng.standard_normal(3))
    direct = sum(point_line_dist2(al.rotation @ p + al.translation, a, v)
                 for p, v, a in zip(corr.points, corr.directions, corr.anchors))
    assert cost(corr, al) == pytest.approx(direct, rel=1e-13)


def test_cost_permutation_invariant(rng):
    corr = random_corr(rng, n=10)
    al = Alignment(random_rotation(rng), rng.standard_normal(3))
    for _ in range(10):
        perm = rng.permutation(10)
        corr2 = Correspondences(corr.points[perm], corr.directions[perm])
        assert cost(corr2, al) == cost(corr, al)


def test_correspondence_validation():
    with pytest.raises(ValueError):
        Correspondences([[0, 0, 1]] * 2, [[0, 0, 1]] * 2)
    with pytest.raises(ValueError):
        Correspondences([[0, 0, 1]] * 3, [[0, 0, 2]] * 3)
    with pytest.raises(ValueError):
        Correspondences([[0, 0, np.nan]] * 3, [[0, 0, 1]] * 3)
    corr = Correspondences.from_lines([[0, 0, 1]] * 3, [[0, 0, 2], [0, 1, 0], [3, 0, 0]])
    assert np.allclose(np.linalg.norm(corr.directions, axis=1), 1.0)
    with pytest.raises(ValueError):
        corr.points[0, 0] = 1.0


@pytest.mark.parametrize("anchors", [False, True])
def test_build_M_matches_min_over_t(rng, anchors):
    corr = random_corr(rng, anchors=anchors)
    coeffs = build_M(corr)
    for _ in range(100):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        r = quat_to_r9(q)
        R = r9_to_rotation(r)
        oracle, t_oracle = min_over_t_cost(corr, R)
        value = r @ coeffs.m @ r
        assert value == pytest.approx(oracle, rel=1e-9, abs=1e-12)
        t = recover_translation(R, coeffs)
        np.testing.assert_allclose(t, t_oracle, rtol=1e-9, atol=1e-12)
        assert cost(corr, Alignment(R, t)) == pytest.approx(value, rel=1e-9, abs=1e-12)


def test_build_M_symmetric_psd(rng):
    for _ in range(20):
        m = build_M(random_corr(rng)).m
        assert np.abs(m - m.T).max() <= 1e-12 * np.abs(m).max()
        assert np.linalg.eigvalsh(m)[0] >= -1e-9 * np.linalg.norm(m)


def test_build_M_orthogonal_directions():
    corr = Correspondences(np.eye(3) * 2, np.eye(3))
    coeffs = build_M(corr)
    W = 3 * np.eye(3) - sum(np.outer(v, v) for v in np.eye(3))
    np.testing.assert_allclose(np.linalg.inv(coeffs.w_inv), W, atol=1e-14)
    assert np.linalg.eigvalsh(coeffs.m)[0] >= -1e-12


def test_build_M_noise_free_scene_is_zero_at_truth():
    corr, data = make_scene(seed=7)
    coeffs = build_M(corr)
    r = data.ground_truth.rotation.ravel()
    assert r @ coeffs.m @ r <= 1e-9 * np.trace(coeffs.m)
    np.testing.assert_allclose(recover_translation(data.ground_truth.rotation, coeffs),
                               data.ground_truth.translation, atol=1e-9)


def test_build_M_parallel_bearings_degenerate():
    corr = Correspondences(np.arange(12.0).reshape(4, 3), np.tile([0.0, 0.0, 1.0], (4, 1)))
    with pytest.raises(DegenerateConfigurationError):
        build_M(corr)


def test_recover_translation_zero_when_on_lines():
    p = np.array([[0, 0, 4.0], [1, 0, 5], [0, 2, 6], [-1, -1, 3]])
    corr = Correspondences.from_lines(p, p)
    np.testing.assert_allclose(recover_translation(np.eye(3), build_M(corr)), 0.0, atol=1e-14)


def test_recover_translation_is_minimizer(rng):
    corr = random_corr(rng, anchors=True)
    coeffs = build_M(corr)
    R = random_rotation(rng)
    t = recover_translation(R, coeffs)
    c0 = cost(corr, Alignment(R, t))
    for _ in range(20):
        assert c0 <= cost(corr, Alignment(R, t + 1e-3 * rng.standard_normal(3)))


def test_pixel_to_bearing_examples():
    np.testing.assert_allclose(pixel_to_bearing(np.eye(3), (0, 0)), [0, 0, 1])
    f = 500.0
    np.testing.assert_allclose(pixel_to_bearing(np.diag([f, f, 1]), (f, 0)), np.array([1, 0, 1]) / np.sqrt(2))
    with pytest.raises(ValueError):
        pixel_to_bearing(np.zeros((3, 3)), (0, 0))


def test_pixel_to_bearing_reprojects(rng):
    K = np.array([[700.0, 0.5, 300], [0, 710, 250], [0, 0, 1]])
    px = rng.uniform(0, 600, (20, 2))
    v = pixels_to_bearings(K, px)
    for pix, d in zip(px, v):
        np.testing.assert_allclose(pixel_to_bearing(K, pix), d, atol=1e-15)
        x = 3.7 * d
        h = K @ x
        np.testing.assert_allclose(h[:2] / h[2], pix, atol=1e-9)


def test_polish_never_worsens(rng):
    corr, _ = make_scene(noise=3.0, seed=2)
    m = build_M(corr).m
    for _ in range(10):
        q = rng.standard_normal(4)
        q /= np.linalg.norm(q)
        r0 = quat_to_r9(q)
        q2 = polish_quaternion(q, m)
        r2 = quat_to_r9(q2)
        assert r2 @ m @ r2 <= r0 @ m @ r0 + 1e-13

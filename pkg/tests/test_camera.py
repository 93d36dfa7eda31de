import numpy as np
import pytest

from minwm.camera import (Camera, CameraError, cameras_from_json, cameras_to_json,
                          lift_projective, relative_projective, se3_compose,
                          se3_inverse, so3_exp)


def random_camera(rng):
    fx, fy = rng.uniform(0.5, 2.5, size=2)
    cx, cy = rng.uniform(-0.2, 0.2, size=2)
    K = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    R = so3_exp(rng.normal(size=3))
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = rng.normal(size=3)
    return Camera(K, T)


def random_rigid(rng):
    W = np.eye(4)
    W[:3, :3] = so3_exp(rng.normal(size=3))
    W[:3, 3] = rng.normal(size=3) * 2
    return W


def test_identity_camera_lifts_to_identity():
    P = lift_projective(Camera.identity())
    assert np.array_equal(P, np.eye(4))


def test_last_row_is_e4():
    rng = np.random.default_rng(1)
    for _ in range(10):
        P = lift_projective(random_camera(rng))
        assert np.array_equal(P[3], [0, 0, 0, 1])
        assert abs(np.linalg.det(P)) > 1e-8


def test_lift_matches_explicit_product():
    K = np.diag([2.0, 2.0, 1.0])
    T = np.eye(4)
    T[:3, 3] = [0, 0, -5]
    P = lift_projective(Camera(K, T))
    K34 = np.hstack([K, np.zeros((3, 1))])
    expect = np.vstack([K34 @ T, [0, 0, 0, 1]])
    assert np.allclose(P, expect)


def test_relative_self_is_identity():
    rng = np.random.default_rng(2)
    P = lift_projective(random_camera(rng))
    assert np.abs(relative_projective(P, P) - np.eye(4)).max() < 1e-6


def test_relative_expanded_form():
    rng = np.random.default_rng(3)
    a, b = random_camera(rng), random_camera(rng)
    got = relative_projective(lift_projective(a), lift_projective(b))
    Ka = np.eye(4)
    Ka[:3, :3] = a.K
    Kb_inv = np.eye(4)
    Kb_inv[:3, :3] = np.linalg.inv(b.K)
    expect = Ka @ a.T_cw @ np.linalg.inv(b.T_cw) @ Kb_inv
    assert np.abs(got - expect).max() < 1e-5


def test_identity_intrinsics_gives_relative_extrinsic():
    rng = np.random.default_rng(4)
    Ta, Tb = random_rigid(rng), random_rigid(rng)
    got = relative_projective(lift_projective(Camera(np.eye(3), Ta)),
                              lift_projective(Camera(np.eye(3), Tb)))
    assert np.abs(got - Ta @ np.linalg.inv(Tb)).max() < 1e-5


def test_world_frame_invariance():
    rng = np.random.default_rng(5)
    for _ in range(10):
        a, b = random_camera(rng), random_camera(rng)
        W = random_rigid(rng)
        base = relative_projective(lift_projective(a), lift_projective(b))
        aw = Camera(a.K, a.T_cw @ W)
        bw = Camera(b.K, b.T_cw @ W)
        moved = relative_projective(lift_projective(aw), lift_projective(bw))
        assert np.abs(base - moved).max() < 1e-5


def test_se3_group_laws():
    rng = np.random.default_rng(6)
    T = random_rigid(rng)
    assert np.array_equal(se3_inverse(np.eye(4)), np.eye(4))
    assert np.abs(se3_compose(T, se3_inverse(T)) - np.eye(4)).max() < 1e-5
    trans = np.eye(4)
    trans[:3, 3] = [1, 2, 3]
    assert np.abs(se3_compose(trans, se3_inverse(trans)) - np.eye(4)).max() < 1e-12


def test_invalid_inputs_rejected():
    with pytest.raises(CameraError):
        Camera(np.diag([1.0, -1.0, 1.0]), np.eye(4))
    bad = np.eye(4)
    bad[:3, :3] *= 2.0
    with pytest.raises(CameraError):
        Camera(np.eye(3), bad)
    K = np.eye(3)
    K[1, 0] = 0.5
    with pytest.raises(CameraError):
        Camera(K, np.eye(4))


def test_json_roundtrip():
    rng = np.random.default_rng(7)
    cams = [random_camera(rng) for _ in range(3)]
    back = cameras_from_json(cameras_to_json(cams))
    for a, b in zip(cams, back):
        assert np.allclose(a.K, b.K)
        assert np.allclose(a.T_cw, b.T_cw)

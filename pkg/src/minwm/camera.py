"""Pinhole cameras, SE(3) helpers and lifted projective matrices.

Intrinsics are expressed in normalized image coordinates (focal length in
units of the image half-width), extrinsics are world-to-camera 4x4 rigid
transforms. The lifted projective matrix stacks [K 0] @ T_cw over e4^T.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_E4 = np.array([0.0, 0.0, 0.0, 1.0])


class CameraError(ValueError):
    pass


def _check_rotation(R: np.ndarray, tol: float = 1e-5) -> None:
    if np.abs(R.T @ R - np.eye(3)).max() > tol:
        raise CameraError("rotation block is not orthogonal")
    if abs(np.linalg.det(R) - 1.0) > tol:
        raise CameraError("rotation block determinant != +1")


def check_se3(T: np.ndarray, tol: float = 1e-5) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        raise CameraError(f"SE(3) matrix must be 4x4, got {T.shape}")
    if np.abs(T[3] - _E4).max() > tol:
        raise CameraError("SE(3) bottom row must be (0,0,0,1)")
    _check_rotation(T[:3, :3], tol)
    return T


def se3_compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return check_se3(a) @ check_se3(b)


def se3_inverse(T: np.ndarray) -> np.ndarray:
    T = check_se3(T)
    R, t = T[:3, :3], T[:3, 3]
    out = np.eye(4)
    out[:3, :3] = R.T
    out[:3, 3] = -R.T @ t
    return out


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential map from an axis-angle vector to a rotation."""
    w = np.asarray(w, dtype=np.float64)
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3)
    k = w / theta
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * K + (1 - np.cos(theta)) * (K @ K)


@dataclass
class Camera:
    K: np.ndarray      # 3x3 intrinsics, normalized image units
    T_cw: np.ndarray   # 4x4 world-to-camera

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=np.float64)
        if self.K.shape != (3, 3):
            raise CameraError(f"K must be 3x3, got {self.K.shape}")
        if np.abs(np.tril(self.K, -1)).max() > 1e-9:
            raise CameraError("K must be upper triangular")
        if np.any(np.diag(self.K) <= 0):
            raise CameraError("K diagonal must be positive")
        self.T_cw = check_se3(self.T_cw)

    @classmethod
    def identity(cls) -> "Camera":
        return cls(np.eye(3), np.eye(4))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 1.0, 0.0), fx=1.0, fy=1.0) -> "Camera":
        """Camera at `eye` with +z toward `target` (right-handed, y down in image)."""
        eye = np.asarray(eye, dtype=np.float64)
        fwd = np.asarray(target, dtype=np.float64) - eye
        fwd = fwd / np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(up, dtype=np.float64))
        right = right / np.linalg.norm(right)
        down = np.cross(fwd, right)
        R_wc = np.stack([right, down, fwd], axis=1)  # camera axes in world frame
        T = np.eye(4)
        T[:3, :3] = R_wc.T
        T[:3, 3] = -R_wc.T @ eye
        K = np.diag([fx, fy, 1.0])
        return cls(K, T)

    def to_json_dict(self) -> dict:
        return {"K": self.K.reshape(-1).tolist(), "T_cw": self.T_cw.reshape(-1).tolist()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Camera":
        return cls(np.array(d["K"]).reshape(3, 3), np.array(d["T_cw"]).reshape(4, 4))


def lift_projective(cam: Camera) -> np.ndarray:
    """P = stack([K 0] @ T_cw ; e4^T), a 4x4 invertible matrix."""
    if abs(np.linalg.det(cam.K)) < 1e-12:
        raise CameraError("singular intrinsic matrix")
    K34 = np.zeros((3, 4))
    K34[:, :3] = cam.K
    P = np.vstack([K34 @ cam.T_cw, _E4])
    return P


def relative_projective(Pa: np.ndarray, Pb: np.ndarray) -> np.ndarray:
    """Pa @ Pb^-1, encoding relative intrinsics and pose of the two frames."""
    if abs(np.linalg.det(Pb)) < 1e-12 or abs(np.linalg.det(Pa)) < 1e-12:
        raise CameraError("singular lifted projective matrix")
    return Pa @ np.linalg.inv(Pb)


def cameras_to_json(cams: list[Camera]) -> str:
    return json.dumps([c.to_json_dict() for c in cams])


def cameras_from_json(text: str) -> list[Camera]:
    return [Camera.from_json_dict(d) for d in json.loads(text)]

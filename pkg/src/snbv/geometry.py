"""Camera and Gaussian geometry: rotations, 3D covariance, perspective projection.

Conventions (fixed for the whole package):
  - camera pose is camera-to-world, right-handed, +z forward (OpenCV style);
  - pixel origin at the top-left corner, pixel (i, j) has its center at
    continuous image coordinates (j + 0.5, i + 0.5);
  - Gaussian scales are stored as log-scale, opacity as a logit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NEAR_PLANE = 0.01
BLUR_2D = 0.3  # isotropic px^2 floor added to every projected covariance


class BehindCamera(Exception):
    """Gaussian center is behind (or too close to) the camera; cull it."""


def _as_f64(a, shape=None):
    a = np.asarray(a, dtype=np.float64)
    if shape is not None and a.shape != shape:
        raise ValueError(f"expected shape {shape}, got {a.shape}")
    return a


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics in pixels plus a camera-to-world pose."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    pose: np.ndarray  # 4x4 camera-to-world

    def __post_init__(self):
        object.__setattr__(self, "pose", _as_f64(self.pose, (4, 4)))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        R = self.pose[:3, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ValueError("pose rotation block is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-9:
            raise ValueError("pose rotation block must have determinant +1")
        if not np.allclose(self.pose[3], [0, 0, 0, 1], atol=1e-12):
            raise ValueError("pose last row must be [0, 0, 0, 1]")

    @property
    def rotation(self) -> np.ndarray:
        """3x3 camera-to-world rotation."""
        return self.pose[:3, :3]

    @property
    def position(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return self.pose[:3, 3]

    @property
    def world_to_cam(self) -> np.ndarray:
        """Inverse pose as a 4x4 rigid transform."""
        R = self.rotation.T
        w2c = np.eye(4)
        w2c[:3, :3] = R
        w2c[:3, 3] = -R @ self.position
        return w2c


@dataclass
class Gaussian:
    """One splatting primitive in unconstrained parameterization."""

    mu: np.ndarray            # (3,) world-space center
    log_scale: np.ndarray     # (3,) log of per-axis scale
    rot: np.ndarray           # (4,) quaternion (w, x, y, z), kept near unit norm
    opacity_logit: float
    color: np.ndarray         # ((d+1)^2, 3) SH coefficients
    obj_logits: np.ndarray    # (n+1,) object logits, channel 0 = background

    def __post_init__(self):
        self.mu = _as_f64(self.mu, (3,))
        self.log_scale = _as_f64(self.log_scale, (3,))
        self.rot = _as_f64(self.rot, (4,))
        if np.linalg.norm(self.rot) < 1e-12:
            raise ValueError("zero quaternion")
        self.color = np.atleast_2d(_as_f64(self.color))
        self.obj_logits = _as_f64(self.obj_logits)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    @property
    def opacity(self) -> float:
        return float(1.0 / (1.0 + np.exp(-self.opacity_logit)))


def quat_to_rotmat(q) -> np.ndarray:
    """Convert quaternion (w, x, y, z) to a 3x3 rotation matrix.

    The quaternion is normalized internally, so any nonzero q is accepted.
    """
    q = _as_f64(q, (4,))
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("zero quaternion")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def covariance3d(scale, rot) -> np.ndarray:
    """3D covariance Sigma = R S S^T R^T from linear scales and a quaternion."""
    scale = _as_f64(scale, (3,))
    if np.any(scale <= 0):
        raise ValueError("scale components must be positive")
    R = quat_to_rotmat(rot)
    M = R * scale[None, :]
    return M @ M.T


@dataclass(frozen=True)
class ProjectedGaussian:
    mean2d: np.ndarray    # (2,) pixel coordinates
    cov2d: np.ndarray     # (2, 2) SPD, includes the blur floor
    depth_cam: float      # z in camera frame


def perspective_jacobian(p_cam, fx: float, fy: float) -> np.ndarray:
    """2x3 Jacobian of the pinhole map at a camera-space point."""
    x, y, z = p_cam
    return np.array([
        [fx / z, 0.0, -fx * x / (z * z)],
        [0.0, fy / z, -fy * y / (z * z)],
    ])


def project_gaussian(cam: Camera, g: Gaussian, near: float = NEAR_PLANE) -> ProjectedGaussian:
    """Project one Gaussian: pinhole mean, local-affine covariance, camera depth.

    Raises BehindCamera when the center is at or behind the near plane.
    """
    W = cam.rotation.T
    p_cam = W @ (g.mu - cam.position)
    z = p_cam[2]
    if z <= near:
        raise BehindCamera(f"depth {z:.4g} <= near plane {near}")
    mean2d = np.array([cam.fx * p_cam[0] / z + cam.cx,
                       cam.fy * p_cam[1] / z + cam.cy])
    J = perspective_jacobian(p_cam, cam.fx, cam.fy)
    sigma_cam = W @ covariance3d(g.scale, g.rot) @ W.T
    cov2d = J @ sigma_cam @ J.T + BLUR_2D * np.eye(2)
    cov2d = 0.5 * (cov2d + cov2d.T)
    return ProjectedGaussian(mean2d=mean2d, cov2d=cov2d, depth_cam=float(z))


def look_at_pose(position, target, up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world pose looking from position toward target.

    +z forward, +y down in the image (OpenCV); `up` sets the world direction
    that maps to "up" on the image. Degenerate when forward is parallel to up.
    """
    position = _as_f64(position, (3,))
    target = _as_f64(target, (3,))
    up = _as_f64(up, (3,))
    fwd = target - position
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("position and target coincide")
    z_axis = fwd / n
    y0 = -up
    x_axis = np.cross(y0, z_axis)
    n = np.linalg.norm(x_axis)
    if n < 1e-9:
        raise ValueError("viewing direction parallel to up vector")
    x_axis /= n
    y_axis = np.cross(z_axis, x_axis)
    pose = np.eye(4)
    pose[:3, 0] = x_axis
    pose[:3, 1] = y_axis
    pose[:3, 2] = z_axis
    pose[:3, 3] = position
    return pose

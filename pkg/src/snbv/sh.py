"""Real spherical harmonics basis up to degree 3, with direction gradients.

Basis ordering and constants follow the usual splatting convention; degree 0
is a constant, so a d=0 color has no view dependence.
"""

from __future__ import annotations

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)


def n_coeffs(degree: int) -> int:
    return (degree + 1) ** 2


def sh_basis(degree: int, dirs: np.ndarray, with_grad: bool = False):
    """Evaluate the SH basis at unit directions.

    dirs: (M, 3) unit vectors. Returns B of shape (M, K); with with_grad also
    returns dB/d(dir) of shape (M, K, 3), the derivative with respect to the
    (unnormalized-agnostic) unit direction components.
    """
    if degree not in (0, 1, 2, 3):
        raise ValueError("degree must be in 0..3")
    dirs = np.asarray(dirs, dtype=np.float64)
    M = dirs.shape[0]
    K = n_coeffs(degree)
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    B = np.empty((M, K))
    B[:, 0] = C0
    dB = np.zeros((M, K, 3)) if with_grad else None
    if degree >= 1:
        B[:, 1] = -C1 * y
        B[:, 2] = C1 * z
        B[:, 3] = -C1 * x
        if with_grad:
            dB[:, 1, 1] = -C1
            dB[:, 2, 2] = C1
            dB[:, 3, 0] = -C1
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        B[:, 4] = C2[0] * x * y
        B[:, 5] = C2[1] * y * z
        B[:, 6] = C2[2] * (2 * zz - xx - yy)
        B[:, 7] = C2[3] * x * z
        B[:, 8] = C2[4] * (xx - yy)
        if with_grad:
            dB[:, 4, 0] = C2[0] * y
            dB[:, 4, 1] = C2[0] * x
            dB[:, 5, 1] = C2[1] * z
            dB[:, 5, 2] = C2[1] * y
            dB[:, 6, 0] = C2[2] * (-2 * x)
            dB[:, 6, 1] = C2[2] * (-2 * y)
            dB[:, 6, 2] = C2[2] * (4 * z)
            dB[:, 7, 0] = C2[3] * z
            dB[:, 7, 2] = C2[3] * x
            dB[:, 8, 0] = C2[4] * (2 * x)
            dB[:, 8, 1] = C2[4] * (-2 * y)
    if degree >= 3:
        xx, yy, zz = x * x, y * y, z * z
        B[:, 9] = C3[0] * y * (3 * xx - yy)
        B[:, 10] = C3[1] * x * y * z
        B[:, 11] = C3[2] * y * (4 * zz - xx - yy)
        B[:, 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
        B[:, 13] = C3[4] * x * (4 * zz - xx - yy)
        B[:, 14] = C3[5] * z * (xx - yy)
        B[:, 15] = C3[6] * x * (xx - 3 * yy)
        if with_grad:
            dB[:, 9, 0] = C3[0] * 6 * x * y
            dB[:, 9, 1] = C3[0] * (3 * xx - 3 * yy)
            dB[:, 10, 0] = C3[1] * y * z
            dB[:, 10, 1] = C3[1] * x * z
            dB[:, 10, 2] = C3[1] * x * y
            dB[:, 11, 0] = C3[2] * (-2 * x * y)
            dB[:, 11, 1] = C3[2] * (4 * zz - xx - 3 * yy)
            dB[:, 11, 2] = C3[2] * (8 * y * z)
            dB[:, 12, 0] = C3[3] * (-6 * x * z)
            dB[:, 12, 1] = C3[3] * (-6 * y * z)
            dB[:, 12, 2] = C3[3] * (6 * zz - 3 * xx - 3 * yy)
            dB[:, 13, 0] = C3[4] * (4 * zz - 3 * xx - yy)
            dB[:, 13, 1] = C3[4] * (-2 * x * y)
            dB[:, 13, 2] = C3[4] * (8 * x * z)
            dB[:, 14, 0] = C3[5] * (2 * x * z)
            dB[:, 14, 1] = C3[5] * (-2 * y * z)
            dB[:, 14, 2] = C3[5] * (xx - yy)
            dB[:, 15, 0] = C3[6] * (3 * xx - 3 * yy)
            dB[:, 15, 1] = C3[6] * (-6 * x * y)
    if with_grad:
        return B, dB
    return B

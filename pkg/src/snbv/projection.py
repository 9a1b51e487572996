"""Batched per-view Gaussian projection with analytic chain Jacobians.

For every Gaussian visible from a camera this computes the projected mean,
2D covariance and camera depth, plus (optionally) the derivatives of those
quantities with respect to the unconstrained parameters. The derivative
layout used everywhere downstream is the 10-vector

    [mu(3), log_scale(3), quat(4)]

with opacity handled separately by the compositor (it only enters through
the alpha term). Quaternion derivatives include the internal normalization,
so finite differences on the raw 4-vector agree with them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import BLUR_2D, NEAR_PLANE, Camera
from .sh import sh_basis

ALPHA_SKIP = 1.0 / 255.0  # contributions below this alpha are skipped


def sigmoid(x):
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(logits, axis=-1):
    m = np.max(logits, axis=axis, keepdims=True)
    e = np.exp(logits - m)
    return e / np.sum(e, axis=axis, keepdims=True)


def quat_rotmats(quats: np.ndarray, with_grad: bool = False):
    """Batched quaternion -> rotation matrices, normalizing internally.

    With with_grad, also returns dR/dq with respect to the raw (unnormalized)
    quaternion components, shape (M, 4, 3, 3).
    """
    norms = np.linalg.norm(quats, axis=1)
    qn = quats / norms[:, None]
    w, x, y, z = qn[:, 0], qn[:, 1], qn[:, 2], qn[:, 3]
    M = quats.shape[0]
    R = np.empty((M, 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    if not with_grad:
        return R, None

    zero = np.zeros(M)
    dRn = np.empty((M, 4, 3, 3))
    dRn[:, 0] = 2 * np.stack([
        np.stack([zero, -z, y], axis=1),
        np.stack([z, zero, -x], axis=1),
        np.stack([-y, x, zero], axis=1),
    ], axis=1)
    dRn[:, 1] = 2 * np.stack([
        np.stack([zero, y, z], axis=1),
        np.stack([y, -2 * x, -w], axis=1),
        np.stack([z, w, -2 * x], axis=1),
    ], axis=1)
    dRn[:, 2] = 2 * np.stack([
        np.stack([-2 * y, x, w], axis=1),
        np.stack([x, zero, z], axis=1),
        np.stack([-w, z, -2 * y], axis=1),
    ], axis=1)
    dRn[:, 3] = 2 * np.stack([
        np.stack([-2 * z, -w, x], axis=1),
        np.stack([w, -2 * z, y], axis=1),
        np.stack([x, y, zero], axis=1),
    ], axis=1)
    # chain through q -> q/|q|: dqn_j/dq_i = (delta_ij - qn_i qn_j) / |q|
    chain = (np.eye(4)[None] - qn[:, :, None] * qn[:, None, :]) / norms[:, None, None]
    dR = np.einsum("mij,mjab->miab", chain, dRn)
    return R, dR


@dataclass
class ViewProjection:
    """Depth-sorted visible Gaussians projected into one camera."""

    cam: Camera
    n_total: int
    idx: np.ndarray        # (M,) original indices, ascending camera depth
    z: np.ndarray          # (M,)
    mean2d: np.ndarray     # (M, 2)
    cov2d: np.ndarray      # (M, 3) packed [c00, c01, c11]
    icov: np.ndarray       # (M, 3) packed inverse
    radius: np.ndarray     # (M,) conservative px radius of the alpha>=1/255 set
    sigma: np.ndarray      # (M,) opacity in (0, 1)
    color: np.ndarray      # (M, 3) view-dependent color in (0, 1)
    prob: np.ndarray       # (M, n+1) per-Gaussian object probabilities
    # chain data, present when built with with_chain=True
    A: Optional[np.ndarray] = None          # (M, 2, 10) d(mean2d)/d(geo10)
    B: Optional[np.ndarray] = None          # (M, 3, 10) d(cov packed)/d(geo10)
    dz_dmu: Optional[np.ndarray] = None     # (3,) same for every Gaussian
    sh_B: Optional[np.ndarray] = None       # (M, K) SH basis at view directions
    sig_prime: Optional[np.ndarray] = None  # (M, 3) sigmoid' of the SH value
    dcolor_dmu: Optional[np.ndarray] = None  # (M, 3, 3) [channel, mu]

    @property
    def count(self) -> int:
        return len(self.idx)


def project_view(gmap, cam: Camera, with_chain: bool = False,
                 near: float = NEAR_PLANE) -> ViewProjection:
    """Project all map Gaussians into a camera; cull behind/invisible ones."""
    mu = gmap.mu
    N = mu.shape[0]
    Wr = cam.rotation.T  # world -> camera rotation
    t = cam.position
    pc = (mu - t[None, :]) @ Wr.T
    sigma_all = sigmoid(gmap.opacity_logit)
    vis = (pc[:, 2] > near) & (sigma_all > ALPHA_SKIP)
    idx = np.flatnonzero(vis)

    if idx.size:
        order = np.argsort(pc[idx, 2], kind="stable")
        idx = idx[order]
    pc = pc[idx]
    z = pc[:, 2]
    M = idx.size

    fx, fy = cam.fx, cam.fy
    x, y = pc[:, 0], pc[:, 1]
    inv_z = 1.0 / z if M else np.empty(0)
    mean2d = np.stack([fx * x * inv_z + cam.cx, fy * y * inv_z + cam.cy], axis=1) \
        if M else np.empty((0, 2))

    scales = np.exp(gmap.log_scale[idx])
    R3, dR = quat_rotmats(gmap.rot[idx], with_grad=with_chain) if M else (np.empty((0, 3, 3)), None)
    M3 = R3 * scales[:, None, :]

    # J is the 2x3 pinhole Jacobian; U = J @ W maps world offsets to pixels
    J = np.zeros((M, 2, 3))
    if M:
        J[:, 0, 0] = fx * inv_z
        J[:, 0, 2] = -fx * x * inv_z * inv_z
        J[:, 1, 1] = fy * inv_z
        J[:, 1, 2] = -fy * y * inv_z * inv_z
    U = J @ Wr
    V = U @ M3  # (M, 2, 3); cov2d = V V^T + blur
    c00 = np.einsum("mk,mk->m", V[:, 0], V[:, 0]) + BLUR_2D
    c01 = np.einsum("mk,mk->m", V[:, 0], V[:, 1])
    c11 = np.einsum("mk,mk->m", V[:, 1], V[:, 1]) + BLUR_2D
    cov2d = np.stack([c00, c01, c11], axis=1)
    det = c00 * c11 - c01 * c01
    icov = np.stack([c11 / det, -c01 / det, c00 / det], axis=1)

    sigma = sigma_all[idx]
    mid = 0.5 * (c00 + c11)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
    # conservative radius of the region where alpha can reach 1/255
    radius = np.sqrt(2.0 * np.log(sigma * 255.0) * lam_max) + 0.71

    # view-dependent color from SH at the center direction, squashed by sigmoid
    u_dir = mu[idx] - t[None, :]
    nu = np.linalg.norm(u_dir, axis=1)
    dirs = u_dir / nu[:, None] if M else np.empty((0, 3))
    degree = gmap.sh_degree
    if with_chain:
        shB, dshB = sh_basis(degree, dirs, with_grad=True)
    else:
        shB = sh_basis(degree, dirs)
        dshB = None
    coeffs = gmap.color[idx]  # (M, K, 3)
    val = np.einsum("mk,mkc->mc", shB, coeffs)
    color = sigmoid(val)
    prob = softmax(gmap.obj_logits[idx], axis=1)

    vp = ViewProjection(cam=cam, n_total=N, idx=idx, z=z, mean2d=mean2d,
                        cov2d=cov2d, icov=icov, radius=radius, sigma=sigma,
                        color=color, prob=prob)
    if not with_chain:
        return vp

    # --- chain Jacobians over geo10 = [mu, log_scale, quat] ---
    A = np.zeros((M, 2, 10))
    A[:, :, 0:3] = U
    B = np.zeros((M, 3, 10))

    # d(cov2d)/d(log_scale_k) = 2 v_k v_k^T with v_k the k-th column of V
    B[:, 0, 3:6] = 2.0 * V[:, 0, :] * V[:, 0, :]
    B[:, 1, 3:6] = 2.0 * V[:, 0, :] * V[:, 1, :]
    B[:, 2, 3:6] = 2.0 * V[:, 1, :] * V[:, 1, :]

    # d(cov2d)/d(quat): dM = dR @ diag(s); dcov = (U dM) V^T + V (U dM)^T
    dM = dR * scales[:, None, None, :]          # (M, 4, 3, 3)
    Wq = np.einsum("mab,mibc->miac", U, dM)     # (M, 4, 2, 3)
    B[:, 0, 6:10] = 2.0 * np.einsum("mik,mk->mi", Wq[:, :, 0, :], V[:, 0, :])
    B[:, 1, 6:10] = (np.einsum("mik,mk->mi", Wq[:, :, 0, :], V[:, 1, :])
                     + np.einsum("mik,mk->mi", Wq[:, :, 1, :], V[:, 0, :]))
    B[:, 2, 6:10] = 2.0 * np.einsum("mik,mk->mi", Wq[:, :, 1, :], V[:, 1, :])

    # d(cov2d)/d(mu) through the pinhole Jacobian J(pc)
    sigma_world = np.einsum("mak,mbk->mab", M3, M3)
    sigma_cam = np.einsum("ab,mbc,dc->mad", Wr, sigma_world, Wr)
    Q = np.einsum("mab,mcb->mac", sigma_cam, J)  # (M, 3, 2) = Sigma_c J^T
    g2 = inv_z * inv_z
    g3 = g2 * inv_z
    # E_k = (dJ/dpc_k) @ Q; D_k = E_k + E_k^T, packed
    Ex0 = -fx * g2 * Q[:, 2, 0]
    Ex1 = -fx * g2 * Q[:, 2, 1]
    Ey0 = -fy * g2 * Q[:, 2, 0]
    Ey1 = -fy * g2 * Q[:, 2, 1]
    Ez00 = -fx * g2 * Q[:, 0, 0] + 2 * fx * x * g3 * Q[:, 2, 0]
    Ez01 = -fx * g2 * Q[:, 0, 1] + 2 * fx * x * g3 * Q[:, 2, 1]
    Ez10 = -fy * g2 * Q[:, 1, 0] + 2 * fy * y * g3 * Q[:, 2, 0]
    Ez11 = -fy * g2 * Q[:, 1, 1] + 2 * fy * y * g3 * Q[:, 2, 1]
    Dpc = np.empty((M, 3, 3))  # [packed, pc-axis]
    Dpc[:, 0, 0] = 2 * Ex0
    Dpc[:, 1, 0] = Ex1
    Dpc[:, 2, 0] = 0.0
    Dpc[:, 0, 1] = 0.0
    Dpc[:, 1, 1] = Ey0
    Dpc[:, 2, 1] = 2 * Ey1
    Dpc[:, 0, 2] = 2 * Ez00
    Dpc[:, 1, 2] = Ez01 + Ez10
    Dpc[:, 2, 2] = 2 * Ez11
    B[:, :, 0:3] = np.einsum("mpk,kj->mpj", Dpc, Wr)

    sp = color * (1.0 - color)
    # d(color)/d(mu) through the view direction (vanishes at degree 0)
    if degree > 0:
        dir_chain = (np.eye(3)[None] - dirs[:, :, None] * dirs[:, None, :]) / nu[:, None, None]
        dval_ddir = np.einsum("mkc,mkj->mcj", coeffs, dshB)
        dcolor_dmu = sp[:, :, None] * np.einsum("mcj,mji->mci", dval_ddir, dir_chain)
    else:
        dcolor_dmu = np.zeros((M, 3, 3))

    vp.A = A
    vp.B = B
    vp.dz_dmu = Wr[2].copy()
    vp.sh_B = shB
    vp.sig_prime = sp
    vp.dcolor_dmu = dcolor_dmu
    return vp

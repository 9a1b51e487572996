"""Image losses: L1, SSIM, soft multi-class Dice, and the overall objective.

SSIM uses an 11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03, unit dynamic
range) over valid window positions, averaged per channel. All losses come
with closed-form gradients with respect to the prediction so the renderer
backward pass can consume them directly.
"""

from __future__ import annotations

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DICE_EPS = 1e-6


class ShapeMismatch(Exception):
    pass


class TooSmall(Exception):
    """Image smaller than the SSIM window."""


def _check_shapes(pred, gt):
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"{pred.shape} vs {gt.shape}")


def loss_l1(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute difference over all pixels and channels."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def l1_with_grad(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    diff = pred - gt
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def _gauss_kernel(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _corr_valid(img: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Separable valid-mode correlation of a 2D image with kernel k (1D)."""
    from numpy.lib.stride_tricks import sliding_window_view

    t = sliding_window_view(img, len(k), axis=0) @ k
    return sliding_window_view(t, len(k), axis=1) @ k


def _conv_full(field: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Full-mode convolution; adjoint of _corr_valid for symmetric kernels."""
    p = len(k) - 1
    padded = np.pad(field, ((p, p), (p, p)))
    return _corr_valid(padded, k)


def _ssim_channel(x: np.ndarray, y: np.ndarray, k: np.ndarray, with_grad: bool):
    mu_x = _corr_valid(x, k)
    mu_y = _corr_valid(y, k)
    sig_x = _corr_valid(x * x, k) - mu_x * mu_x
    sig_y = _corr_valid(y * y, k) - mu_y * mu_y
    sig_xy = _corr_valid(x * y, k) - mu_x * mu_y
    a1 = 2 * mu_x * mu_y + SSIM_C1
    a2 = 2 * sig_xy + SSIM_C2
    b1 = mu_x * mu_x + mu_y * mu_y + SSIM_C1
    b2 = sig_x + sig_y + SSIM_C2
    s = (a1 * a2) / (b1 * b2)
    if not with_grad:
        return float(np.mean(s)), None
    # partials of S with mu_x, sigma_x^2, sigma_xy treated as independent
    s_mu = 2 * mu_y * a2 / (b1 * b2) - 2 * mu_x * a1 * a2 / (b1 * b1 * b2)
    s_sig = -a1 * a2 / (b1 * b2 * b2)
    s_xy = 2 * a1 / (b1 * b2)
    g = (_conv_full(s_mu - 2 * mu_x * s_sig - mu_y * s_xy, k)
         + 2 * x * _conv_full(s_sig, k)
         + y * _conv_full(s_xy, k))
    return float(np.mean(s)), g / s.size


def ssim_value(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean SSIM similarity (1 = identical), averaged over channels."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise TooSmall(f"need at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {pred.shape}")
    if pred.ndim == 2:
        pred = pred[:, :, None]
        gt = gt[:, :, None]
    k = _gauss_kernel()
    vals = [_ssim_channel(pred[:, :, c], gt[:, :, c], k, False)[0]
            for c in range(pred.shape[2])]
    return float(np.mean(vals))


def loss_ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    """1 - mean SSIM."""
    return 1.0 - ssim_value(pred, gt)


def ssim_with_grad(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    if pred.shape[0] < SSIM_WINDOW or pred.shape[1] < SSIM_WINDOW:
        raise TooSmall(f"need at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {pred.shape}")
    squeeze = pred.ndim == 2
    if squeeze:
        pred = pred[:, :, None]
        gt = gt[:, :, None]
    k = _gauss_kernel()
    C = pred.shape[2]
    vals = np.empty(C)
    grad = np.empty_like(pred)
    for c in range(C):
        vals[c], g = _ssim_channel(pred[:, :, c], gt[:, :, c], k, True)
        grad[:, :, c] = -g / C
    loss = 1.0 - float(np.mean(vals))
    return loss, (grad[:, :, 0] if squeeze else grad)


def loss_dice(pred_prob: np.ndarray, gt_onehot: np.ndarray) -> float:
    """Soft multi-class Dice loss averaged over the n+1 classes."""
    return dice_with_grad(pred_prob, gt_onehot)[0]


def dice_with_grad(pred_prob, gt_onehot):
    p = np.asarray(pred_prob, dtype=np.float64)
    g = np.asarray(gt_onehot, dtype=np.float64)
    _check_shapes(p, g)
    axes = tuple(range(p.ndim - 1))
    num = 2.0 * np.sum(p * g, axis=axes) + DICE_EPS
    den = np.sum(p * p, axis=axes) + np.sum(g * g, axis=axes) + DICE_EPS
    C = p.shape[-1]
    loss = 1.0 - float(np.sum(num / den)) / C
    grad = -(2.0 * g * den - num * 2.0 * p) / (den * den) / C
    return loss, grad


def loss_overall_with_grads(render, obs, cfg):
    """Eq.-style combined objective on a render against an observation.

    (1 - lam) L1(rgb) + lam SSIM(rgb) + lam_obj [(1 - lam_dice) L1(obj) +
    lam_dice Dice(obj)]. Depth never enters the training loss. Returns the
    scalar plus gradient images for rgb and the completed object probabilities.
    """
    lam = cfg.lambda_ssim
    lam_obj = cfg.lambda_obj if getattr(cfg, "object_supervision", True) else 0.0
    lam_dice = cfg.lambda_dice
    l1, g_l1 = l1_with_grad(render.rgb, obs.rgb)
    d_rgb = (1.0 - lam) * g_l1
    loss = (1.0 - lam) * l1
    if lam != 0.0:
        s, g_s = ssim_with_grad(render.rgb, obs.rgb)
        loss += lam * s
        d_rgb = d_rgb + lam * g_s
    d_obj = None
    if lam_obj != 0.0:
        l1o, g_l1o = l1_with_grad(render.obj_prob, obs.mask_onehot)
        dce, g_dce = dice_with_grad(render.obj_prob, obs.mask_onehot)
        loss += lam_obj * ((1.0 - lam_dice) * l1o + lam_dice * dce)
        d_obj = lam_obj * ((1.0 - lam_dice) * g_l1o + lam_dice * g_dce)
    return float(loss), d_rgb, d_obj


def loss_overall(render, obs, cfg):
    """Scalar objective plus gradient images (rgb, object probabilities)."""
    return loss_overall_with_grads(render, obs, cfg)

"""Forward rasterization and exact reverse-mode gradients.

The compositor works on a flat list of (gaussian, pixel) pairs: every visible
Gaussian contributes one pair per pixel inside a conservative bounding box of
its projected footprint. Pairs are generated grouped by Gaussian (in camera
depth order) and re-sorted to (pixel, depth) order for front-to-back alpha
blending, so results are independent of the order Gaussians are stored in.

Blending rules (fixed conventions):
  - alpha_i = sigmoid(opacity) * exp(-0.5 d^T cov2d^-1 d), clamped to 0.99;
  - contributions with alpha < 1/255 are skipped;
  - traversal stops once transmittance drops below 1e-4;
  - rgb and object probabilities are completed with the remaining
    transmittance (background color / background class respectively);
  - depth is unnormalized expected depth, sum of z_i alpha_i T_i.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .geometry import Camera, Gaussian
from .projection import ALPHA_SKIP, ViewProjection, project_view, sigmoid, softmax
from .sh import n_coeffs

ALPHA_CLAMP = 0.99
T_STOP = 1e-4


class ShapeMismatch(Exception):
    """Observation dimensions do not match the camera / map."""


@dataclass
class GaussianMap:
    """Trainable scene: arrays over N Gaussians plus scene metadata."""

    mu: np.ndarray             # (N, 3)
    log_scale: np.ndarray      # (N, 3)
    rot: np.ndarray            # (N, 4)
    opacity_logit: np.ndarray  # (N,)
    color: np.ndarray          # (N, (d+1)^2, 3)
    obj_logits: np.ndarray     # (N, n+1)
    n_objects: int
    sh_degree: int
    background_color: np.ndarray = field(default_factory=lambda: np.full(3, 0.25))

    def __post_init__(self):
        for name in ("mu", "log_scale", "rot", "opacity_logit", "color", "obj_logits"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        self.background_color = np.asarray(self.background_color, dtype=np.float64)
        N = self.mu.shape[0]
        if self.obj_logits.shape != (N, self.n_objects + 1):
            raise ValueError("obj_logits must have shape (N, n_objects + 1)")
        if self.color.shape != (N, n_coeffs(self.sh_degree), 3):
            raise ValueError("color must have shape (N, (d+1)^2, 3)")
        if self.rot.shape != (N, 4) or self.mu.shape != (N, 3) \
                or self.log_scale.shape != (N, 3) or self.opacity_logit.shape != (N,):
            raise ValueError("inconsistent parameter array shapes")

    def __len__(self) -> int:
        return self.mu.shape[0]

    def gaussian(self, i: int) -> Gaussian:
        return Gaussian(mu=self.mu[i], log_scale=self.log_scale[i], rot=self.rot[i],
                        opacity_logit=float(self.opacity_logit[i]),
                        color=self.color[i], obj_logits=self.obj_logits[i])

    def __iter__(self) -> Iterator[Gaussian]:
        return (self.gaussian(i) for i in range(len(self)))

    def copy(self) -> "GaussianMap":
        return GaussianMap(mu=self.mu.copy(), log_scale=self.log_scale.copy(),
                           rot=self.rot.copy(), opacity_logit=self.opacity_logit.copy(),
                           color=self.color.copy(), obj_logits=self.obj_logits.copy(),
                           n_objects=self.n_objects, sh_degree=self.sh_degree,
                           background_color=self.background_color.copy())

    def take(self, indices) -> "GaussianMap":
        """Sub-map with the selected Gaussians, order preserved."""
        return GaussianMap(mu=self.mu[indices], log_scale=self.log_scale[indices],
                           rot=self.rot[indices], opacity_logit=self.opacity_logit[indices],
                           color=self.color[indices], obj_logits=self.obj_logits[indices],
                           n_objects=self.n_objects, sh_degree=self.sh_degree,
                           background_color=self.background_color.copy())

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[Gaussian], n_objects: int,
                       sh_degree: int, background_color=(0.25, 0.25, 0.25)) -> "GaussianMap":
        return cls(mu=np.array([g.mu for g in gaussians]).reshape(-1, 3),
                   log_scale=np.array([g.log_scale for g in gaussians]).reshape(-1, 3),
                   rot=np.array([g.rot for g in gaussians]).reshape(-1, 4),
                   opacity_logit=np.array([g.opacity_logit for g in gaussians]),
                   color=np.array([g.color for g in gaussians]).reshape(
                       len(gaussians), n_coeffs(sh_degree), 3),
                   obj_logits=np.array([g.obj_logits for g in gaussians]).reshape(
                       len(gaussians), n_objects + 1),
                   n_objects=n_objects, sh_degree=sh_degree,
                   background_color=np.asarray(background_color, dtype=np.float64))


@dataclass
class RenderOutput:
    rgb: np.ndarray       # (H, W, 3) in [0, 1]
    depth: np.ndarray     # (H, W) expected depth
    alpha: np.ndarray     # (H, W) accumulated opacity
    obj_prob: np.ndarray  # (H, W, n+1), rows sum to 1
    contrib: np.ndarray   # (N,) peak blending weight per Gaussian


@dataclass
class Observation:
    """Ground-truth images used for supervision and evaluation."""

    rgb: np.ndarray                      # (H, W, 3)
    mask_onehot: np.ndarray              # (H, W, n+1)
    depth: Optional[np.ndarray] = None   # (H, W), evaluation only


@dataclass
class ParamGrads:
    """Gradients in the unconstrained parameterization, aligned with the map."""

    mu: np.ndarray
    log_scale: np.ndarray
    rot: np.ndarray
    opacity_logit: np.ndarray
    color: np.ndarray
    obj_logits: np.ndarray
    mean2d_norm: np.ndarray  # (N,) |dL/d mean2d|, used by densification
    visible: np.ndarray      # (N,) bool


@dataclass
class SplatContext:
    """Everything the compositor knows about one (map, camera) pair."""

    vp: ViewProjection
    height: int
    width: int
    n_objects: int
    sh_degree: int
    background_color: np.ndarray
    # pair arrays in pixel-major, depth-minor order
    pix: np.ndarray        # (P,) flat pixel index
    gi: np.ndarray         # (P,) index into vp arrays (= depth rank)
    alpha: np.ndarray      # (P,)
    live: np.ndarray       # (P,) alpha gradient gate (0 where clamped/stopped)
    g0: np.ndarray         # (P,) (cov2d^-1 d)_x
    g1: np.ndarray         # (P,)
    T: np.ndarray          # (P,) transmittance before the contribution
    w: np.ndarray          # (P,) alpha * T, zero where stopped
    seg_id: np.ndarray     # (P,) pixel-segment index
    seg_end_idx: np.ndarray   # (S,) inclusive index of segment end
    group_start: np.ndarray   # (M+1,) pair offsets per Gaussian in gauss-major order
    order_gauss: np.ndarray   # (P,) permutation: pixel-major -> gauss-major
    T_final: np.ndarray       # (H*W,)


def _empty_context(gmap: GaussianMap, cam: Camera, vp: ViewProjection) -> SplatContext:
    hw = cam.height * cam.width
    e = np.empty(0)
    ei = np.empty(0, dtype=np.int64)
    return SplatContext(vp=vp, height=cam.height, width=cam.width,
                        n_objects=gmap.n_objects, sh_degree=gmap.sh_degree,
                        background_color=gmap.background_color,
                        pix=ei, gi=ei, alpha=e, live=e, g0=e, g1=e, T=e, w=e,
                        seg_id=ei, seg_end_idx=ei,
                        group_start=np.zeros(vp.count + 1, dtype=np.int64),
                        order_gauss=ei, T_final=np.ones(hw))


def build_splat_context(gmap: GaussianMap, cam: Camera,
                        with_chain: bool = False) -> SplatContext:
    vp = project_view(gmap, cam, with_chain=with_chain)
    H, W = cam.height, cam.width
    M = vp.count
    if M == 0:
        return _empty_context(gmap, cam, vp)

    # integer bounding boxes, clipped to the image
    r = vp.radius
    mx, my = vp.mean2d[:, 0], vp.mean2d[:, 1]
    x0 = np.clip(np.floor(mx - r), 0, W - 1).astype(np.int32)
    x1 = np.clip(np.ceil(mx + r), 0, W - 1).astype(np.int32)
    y0 = np.clip(np.floor(my - r), 0, H - 1).astype(np.int32)
    y1 = np.clip(np.ceil(my + r), 0, H - 1).astype(np.int32)
    on_screen = (mx + r >= 0) & (mx - r <= W - 1) & (my + r >= 0) & (my - r <= H - 1)
    wpx = np.where(on_screen, x1 - x0 + 1, 0).astype(np.int32)
    hpx = np.where(on_screen, y1 - y0 + 1, 0).astype(np.int32)
    counts = wpx * hpx
    start = np.zeros(M + 1, dtype=np.int64)
    np.cumsum(counts, out=start[1:])
    P = int(start[-1])
    if P == 0:
        return _empty_context(gmap, cam, vp)

    gi = np.repeat(np.arange(M, dtype=np.int32), counts)
    local = np.arange(P, dtype=np.int64)
    local -= start[gi]
    w_g = wpx.take(gi)
    q = local // w_g
    local -= q * w_g  # remainder: column offset within the box
    row = y0.take(gi) + q.astype(np.int32)
    col = x0.take(gi) + local.astype(np.int32)

    dx = col - mx.take(gi) + 0.5
    dy = row - my.take(gi) + 0.5
    ic0 = vp.icov[:, 0].take(gi)
    ic1 = vp.icov[:, 1].take(gi)
    ic2 = vp.icov[:, 2].take(gi)
    g0 = ic0 * dx
    g0 += ic1 * dy
    g1 = ic1 * dx
    g1 += ic2 * dy
    power = dx * g0
    power += dy * g1
    power *= -0.5
    alpha_raw = np.exp(power, out=power)
    alpha_raw *= vp.sigma.take(gi)

    sel = np.flatnonzero(alpha_raw >= ALPHA_SKIP)
    gi = gi.take(sel)
    g0 = g0.take(sel)
    g1 = g1.take(sel)
    alpha_raw = alpha_raw.take(sel)
    pix = (row.take(sel).astype(np.int64) * W + col.take(sel))
    unclamped = alpha_raw <= ALPHA_CLAMP
    alpha = np.minimum(alpha_raw, ALPHA_CLAMP)
    P = alpha.size
    if P == 0:
        return _empty_context(gmap, cam, vp)

    # gauss-major group offsets (gi is nondecreasing after the mask)
    group_start = np.zeros(M + 1, dtype=np.int64)
    np.cumsum(np.bincount(gi, minlength=M), out=group_start[1:])

    # pixel-major, depth-minor order; keys are unique so the sort is total
    order = np.argsort(pix * np.int64(M) + gi)
    inv_order = np.empty(P, dtype=np.int64)
    inv_order[order] = np.arange(P)

    pix_s = pix.take(order)
    alpha_s = alpha.take(order)
    new_seg = np.empty(P, dtype=bool)
    new_seg[0] = True
    np.not_equal(pix_s[1:], pix_s[:-1], out=new_seg[1:])
    seg_id = np.cumsum(new_seg) - 1
    seg_start_idx = np.flatnonzero(new_seg)
    seg_end_idx = np.concatenate([seg_start_idx[1:] - 1, [P - 1]])

    lp = np.log1p(-alpha_s)
    cs = np.cumsum(lp)
    excl = cs - lp
    logT = excl - excl.take(seg_start_idx.take(seg_id))
    T = np.exp(logT, out=logT)
    keep = T >= T_STOP
    w = np.where(keep, alpha_s * T, 0.0)

    # transmittance left after the last kept contribution of each pixel
    pos = np.where(keep, np.arange(P), -1)
    last = np.maximum.reduceat(pos, seg_start_idx)
    T_final = np.ones(H * W)
    has = last >= 0
    T_final[pix_s[seg_start_idx[has]]] = T[last[has]] * (1.0 - alpha_s[last[has]])

    return SplatContext(vp=vp, height=H, width=W, n_objects=gmap.n_objects,
                        sh_degree=gmap.sh_degree,
                        background_color=gmap.background_color,
                        pix=pix_s, gi=gi.take(order),
                        alpha=alpha_s,
                        live=(keep & unclamped.take(order)).astype(np.float64),
                        g0=g0.take(order), g1=g1.take(order), T=T, w=w,
                        seg_id=seg_id, seg_end_idx=seg_end_idx,
                        group_start=group_start, order_gauss=inv_order,
                        T_final=T_final)


def _group_reduce(ctx: SplatContext, values: np.ndarray) -> np.ndarray:
    """Sum per-pair values (pixel-major order) into per-Gaussian totals."""
    M = ctx.vp.count
    out_shape = (M,) + values.shape[1:]
    if ctx.pix.size == 0:
        return np.zeros(out_shape)
    vals = values[ctx.order_gauss]
    starts = ctx.group_start[:-1]
    sizes = np.diff(ctx.group_start)
    res = np.add.reduceat(vals, np.minimum(starts, len(vals) - 1), axis=0)
    res[sizes == 0] = 0.0
    return res


def context_outputs(ctx: SplatContext) -> RenderOutput:
    H, W = ctx.height, ctx.width
    hw = H * W
    n1 = ctx.n_objects + 1
    vp = ctx.vp
    rgb = np.zeros((hw, 3))
    depth = np.zeros(hw)
    obj = np.zeros((hw, n1))
    if ctx.pix.size:
        # one fused per-pixel reduction over [rgb, depth, obj] channels
        vals = np.empty((ctx.pix.size, 4 + n1))
        vals[:, 0:3] = vp.color.take(ctx.gi, axis=0)
        vals[:, 3] = vp.z.take(ctx.gi)
        vals[:, 4:] = vp.prob.take(ctx.gi, axis=0)
        vals *= ctx.w[:, None]
        seg_start = np.concatenate([[0], ctx.seg_end_idx[:-1] + 1])
        sums = np.add.reduceat(vals, seg_start, axis=0)
        seg_pix = ctx.pix.take(seg_start)
        rgb[seg_pix] = sums[:, 0:3]
        depth[seg_pix] = sums[:, 3]
        obj[seg_pix] = sums[:, 4:]
    rgb += ctx.T_final[:, None] * ctx.background_color[None, :]
    obj[:, 0] += ctx.T_final

    contrib = np.zeros(vp.n_total)
    if ctx.pix.size:
        w_g = ctx.w[ctx.order_gauss]
        starts = ctx.group_start[:-1]
        sizes = np.diff(ctx.group_start)
        peak = np.maximum.reduceat(w_g, np.minimum(starts, len(w_g) - 1))
        peak[sizes == 0] = 0.0
        contrib[vp.idx] = peak

    return RenderOutput(rgb=rgb.reshape(H, W, 3), depth=depth.reshape(H, W),
                        alpha=(1.0 - ctx.T_final).reshape(H, W),
                        obj_prob=obj.reshape(H, W, n1), contrib=contrib)


def rasterize(gmap: GaussianMap, cam: Camera) -> RenderOutput:
    """Render RGB, expected depth, accumulated alpha and object probabilities."""
    return context_outputs(build_splat_context(gmap, cam))


def blend_object_vector(samples, n_classes: Optional[int] = None) -> np.ndarray:
    """Front-to-back blend of (obj_logits, alpha) samples along one ray.

    Returns the completed per-class probability vector: the blended softmax
    values plus the residual transmittance assigned to the background channel.
    n_classes (the n+1 vector length) is only required for an empty sequence.
    """
    samples = list(samples)
    if not samples:
        if n_classes is None:
            raise ValueError("n_classes is required for an empty sample sequence")
        out = np.zeros(n_classes)
        out[0] = 1.0
        return out
    acc = np.zeros_like(np.asarray(samples[0][0], dtype=np.float64))
    T = 1.0
    for logits, a in samples:
        a = float(a)
        if not 0.0 <= a <= ALPHA_CLAMP:
            raise ValueError("alpha must lie in [0, 0.99]")
        p = softmax(np.asarray(logits, dtype=np.float64))
        acc += p * a * T
        T *= 1.0 - a
    acc[0] += 1.0 - acc.sum()
    return acc


def _suffix_sums(ctx: SplatContext, q: np.ndarray) -> np.ndarray:
    """Per pair, the sum of q over strictly later pairs of the same pixel."""
    cs = np.cumsum(q, axis=0)
    seg_total = cs[ctx.seg_end_idx]
    return seg_total[ctx.seg_id] - cs


def backward_into_grads(ctx: SplatContext,
                        d_rgb: Optional[np.ndarray] = None,
                        d_depth: Optional[np.ndarray] = None,
                        d_obj: Optional[np.ndarray] = None) -> ParamGrads:
    """Reverse-mode gradients of sum(d_out * out) for the given cotangents.

    d_obj is the gradient with respect to the completed object probabilities
    (background residual included); the completion is folded in here by
    treating the background one-hot as that output's background color.
    """
    vp = ctx.vp
    if vp.A is None and vp.count:
        raise ValueError("context was built without chain Jacobians")
    N = vp.n_total
    n1 = ctx.n_objects + 1
    K = vp.sh_B.shape[1] if vp.count else n_coeffs(0)
    grads = ParamGrads(mu=np.zeros((N, 3)), log_scale=np.zeros((N, 3)),
                       rot=np.zeros((N, 4)), opacity_logit=np.zeros(N),
                       color=np.zeros((N, K, 3)), obj_logits=np.zeros((N, n1)),
                       mean2d_norm=np.zeros(N), visible=np.zeros(N, dtype=bool))
    grads.visible[vp.idx] = True
    if ctx.pix.size == 0:
        return grads

    hw = ctx.height * ctx.width
    gi, pix = ctx.gi, ctx.pix
    P = pix.size
    chi = np.zeros(P)
    tail = np.zeros(hw)
    g_pair = []  # per-pair cotangent columns, fused into one group reduction
    if d_rgb is not None:
        Gr = d_rgb.reshape(hw, 3).take(pix, axis=0)
        col = vp.color.take(gi, axis=0)
        chi += np.einsum("pc,pc->p", Gr, col)
        tail += d_rgb.reshape(hw, 3) @ ctx.background_color
        g_pair.append(Gr)
    if d_depth is not None:
        Gd = d_depth.reshape(hw).take(pix)
        chi += Gd * vp.z.take(gi)
        g_pair.append(Gd[:, None])
    if d_obj is not None:
        Go = d_obj.reshape(hw, n1).take(pix, axis=0)
        chi += np.einsum("pc,pc->p", Go, vp.prob.take(gi, axis=0))
        tail += d_obj.reshape(hw, n1)[:, 0]
        g_pair.append(Go)

    psi = _suffix_sums(ctx, ctx.w * chi) + (tail * ctx.T_final).take(pix)
    d_alpha = chi * ctx.T - psi / (1.0 - ctx.alpha)
    dpow = d_alpha * ctx.alpha * ctx.live

    n_g = sum(a.shape[1] for a in g_pair)
    cols = np.empty((P, 6 + n_g))
    cols[:, 0] = ctx.g0
    cols[:, 1] = ctx.g1
    cols[:, 2] = 0.5 * ctx.g0 * ctx.g0
    cols[:, 3] = ctx.g0 * ctx.g1
    cols[:, 4] = 0.5 * ctx.g1 * ctx.g1
    cols[:, 5] = 1.0
    cols[:, 0:6] *= dpow[:, None]
    o = 6
    for a in g_pair:
        cols[:, o:o + a.shape[1]] = a
        o += a.shape[1]
    cols[:, 6:] *= ctx.w[:, None]
    red = _group_reduce(ctx, cols)
    t6 = red[:, 0:6]

    dgeo = np.einsum("mi,mij->mj", t6[:, 0:2], vp.A) \
        + np.einsum("mi,mij->mj", t6[:, 2:5], vp.B)
    d_op = t6[:, 5] * (1.0 - vp.sigma)

    o = 6
    if d_rgb is not None:
        dcol = red[:, o:o + 3]
        o += 3
        grads.color[vp.idx] = (dcol * vp.sig_prime)[:, None, :] * vp.sh_B[:, :, None]
        dgeo[:, 0:3] += np.einsum("mc,mcj->mj", dcol, vp.dcolor_dmu)
    if d_depth is not None:
        dz = red[:, o]
        o += 1
        dgeo[:, 0:3] += dz[:, None] * vp.dz_dmu[None, :]
    if d_obj is not None:
        dprob = red[:, o:o + n1]
        inner = np.einsum("mk,mk->m", dprob, vp.prob)
        grads.obj_logits[vp.idx] = vp.prob * (dprob - inner[:, None])

    grads.mu[vp.idx] = dgeo[:, 0:3]
    grads.log_scale[vp.idx] = dgeo[:, 3:6]
    grads.rot[vp.idx] = dgeo[:, 6:10]
    grads.opacity_logit[vp.idx] = d_op
    grads.mean2d_norm[vp.idx] = np.hypot(t6[:, 0], t6[:, 1])
    return grads


def render_gradients(gmap: GaussianMap, cam: Camera, target: Observation,
                     loss_cfg) -> tuple[float, ParamGrads]:
    """Loss of the full objective against a target view, plus its gradients."""
    from .losses import loss_overall_with_grads

    if target.rgb.shape != (cam.height, cam.width, 3):
        raise ShapeMismatch(f"rgb observation {target.rgb.shape} vs camera "
                            f"{(cam.height, cam.width, 3)}")
    if target.mask_onehot.shape[:2] != (cam.height, cam.width):
        raise ShapeMismatch("mask observation does not match the camera")
    ctx = build_splat_context(gmap, cam, with_chain=True)
    out = context_outputs(ctx)
    loss, d_rgb, d_obj = loss_overall_with_grads(out, target, loss_cfg)
    grads = backward_into_grads(ctx, d_rgb=d_rgb, d_obj=d_obj)
    return loss, grads

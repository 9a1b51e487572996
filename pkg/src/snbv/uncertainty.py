"""Per-Gaussian Fisher information blocks, confidence weights, and log-det.

The Gauss-Newton information of a rendered output is H = J^T J with J the
Jacobian of all pixels/channels with respect to the Gaussian parameters.
Keeping only intra-Gaussian correlations makes H block diagonal, one l x l
block per Gaussian, so its log-determinant is a sum of small factorizations
and the cost is linear in the number of Gaussians.

Parameter layouts per output kind (unconstrained coordinates):
  depth  -> [mu(3), log_scale(3), quat(4), opacity(1)],       l = 11
  rgb    -> depth layout + SH coefficients,                   l = 11 + 3(d+1)^2
  object -> depth layout + object logits,                     l = 11 + (n+1)
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Camera
from .projection import sigmoid, softmax
from .renderer import GaussianMap, SplatContext, build_splat_context, _suffix_sums, _group_reduce

OUTPUT_KINDS = ("rgb", "depth", "object")
DEFAULT_RIDGE = 1e-6


class KindMismatch(Exception):
    pass


class LengthMismatch(Exception):
    pass


class UnknownTarget(Exception):
    pass


@dataclass
class HessianBlocks:
    """Block-diagonal information for one output kind: one l x l block per Gaussian."""

    output_kind: str
    blocks: np.ndarray          # (N, l, l)
    l: int
    view_id: Optional[int] = None

    def __post_init__(self):
        if self.output_kind not in OUTPUT_KINDS:
            raise ValueError(f"unknown output kind {self.output_kind!r}")
        self.blocks = np.asarray(self.blocks, dtype=np.float64)
        if self.blocks.ndim != 3 or self.blocks.shape[1:] != (self.l, self.l):
            raise ValueError("blocks must have shape (N, l, l)")
        self.blocks = 0.5 * (self.blocks + np.swapaxes(self.blocks, 1, 2))

    @property
    def count(self) -> int:
        return self.blocks.shape[0]


@dataclass
class ConfidenceWeights:
    """Per-Gaussian scalars that rescale information blocks."""

    weights: np.ndarray
    alpha_obj: float
    alpha_opa: float
    target: Optional[int] = None  # None = whole scene


def block_len(kind: str, sh_degree: int, n_objects: int) -> int:
    if kind == "depth":
        return 11
    if kind == "rgb":
        return 11 + 3 * (sh_degree + 1) ** 2
    if kind == "object":
        return 11 + n_objects + 1
    raise ValueError(f"unknown output kind {kind!r}")


def _kind_data(ctx: SplatContext, kind: str):
    """Per-Gaussian channel values f, background vector, and df/dparams."""
    vp = ctx.vp
    M = vp.count
    n1 = ctx.n_objects + 1
    if kind == "rgb":
        K = vp.sh_B.shape[1]
        l = 11 + 3 * K
        f = vp.color
        bg = ctx.background_color
        v = np.zeros((M, 3, l))
        v[:, :, 0:3] = vp.dcolor_dmu
        cols = 11 + 3 * np.arange(K)
        for ch in range(3):
            v[:, ch, cols + ch] = vp.sig_prime[:, ch, None] * vp.sh_B
    elif kind == "depth":
        l = 11
        f = vp.z[:, None]
        bg = np.zeros(1)
        v = np.zeros((M, 1, l))
        v[:, 0, 0:3] = vp.dz_dmu[None, :]
    elif kind == "object":
        l = 11 + n1
        f = vp.prob
        bg = np.zeros(n1)
        bg[0] = 1.0
        v = np.zeros((M, n1, l))
        pp = -vp.prob[:, :, None] * vp.prob[:, None, :]
        pp[:, np.arange(n1), np.arange(n1)] += vp.prob
        v[:, :, 11:] = pp
    else:
        raise ValueError(f"unknown output kind {kind!r}")
    return f, bg, v, l


def blocks_from_context(ctx: SplatContext, kind: str) -> HessianBlocks:
    """Accumulate J^T J blocks for one output kind from a splat context."""
    vp = ctx.vp
    if vp.count == 0 or ctx.pix.size == 0:
        l = block_len(kind, ctx.sh_degree, ctx.n_objects)
        return HessianBlocks(output_kind=kind,
                             blocks=np.zeros((ctx.vp.n_total, l, l)), l=l)
    if vp.A is None:
        raise ValueError("context was built without chain Jacobians")
    f, bg, v, l = _kind_data(ctx, kind)
    M = vp.count
    C = f.shape[1]
    gi, pix = ctx.gi, ctx.pix

    # per-pair alpha derivative direction in the 6-dim (Lambda d, packed, 1) basis
    m6 = np.empty((ctx.pix.size, 6))
    m6[:, 0] = ctx.g0
    m6[:, 1] = ctx.g1
    m6[:, 2] = 0.5 * ctx.g0 * ctx.g0
    m6[:, 3] = ctx.g0 * ctx.g1
    m6[:, 4] = 0.5 * ctx.g1 * ctx.g1
    m6[:, 5] = 1.0
    au = ctx.alpha * ctx.live

    f_pair = f[gi]                       # (P, C)
    suf = _suffix_sums(ctx, ctx.w[:, None] * f_pair)
    s_ch = suf + (ctx.T_final[:, None] * bg[None, :])[pix]
    a_ch = ctx.T[:, None] * f_pair - s_ch / (1.0 - ctx.alpha[:, None])

    s2 = np.einsum("pc,pc->p", a_ch, a_ch)
    P6 = _group_reduce(ctx, (au * au * s2)[:, None, None] * m6[:, :, None] * m6[:, None, :])
    w2 = _group_reduce(ctx, ctx.w * ctx.w)
    t6 = np.empty((M, C, 6))
    for ch in range(C):
        t6[:, ch, :] = _group_reduce(ctx, (au * ctx.w * a_ch[:, ch])[:, None] * m6)

    # embed the 6-dim alpha chain into the l-dim parameter layout
    Lh = np.zeros((M, 6, l))
    Lh[:, 0:2, 0:10] = vp.A
    Lh[:, 2:5, 0:10] = vp.B
    Lh[:, 5, 10] = 1.0 - vp.sigma

    tmp = np.einsum("mij,mjb->mib", P6, Lh)
    blocks = np.einsum("mia,mib->mab", Lh, tmp)
    tl = np.einsum("mci,mib->mcb", t6, Lh)
    cross = np.einsum("mca,mcb->mab", tl, v)
    blocks += cross + np.swapaxes(cross, 1, 2)
    blocks += w2[:, None, None] * np.einsum("mca,mcb->mab", v, v)

    out = np.zeros((vp.n_total, l, l))
    out[vp.idx] = blocks
    return HessianBlocks(output_kind=kind, blocks=out, l=l)


def jacobian_blocks(gmap: GaussianMap, cam: Camera, output_kind: str) -> HessianBlocks:
    """Per-Gaussian J^T J blocks of one rendered output for one view."""
    ctx = build_splat_context(gmap, cam, with_chain=True)
    return blocks_from_context(ctx, output_kind)


def jacobian_blocks_all(gmap: GaussianMap, cam: Camera,
                        kinds: Sequence[str] = OUTPUT_KINDS) -> dict[str, HessianBlocks]:
    """Blocks for several output kinds, sharing one projection/compositing pass."""
    ctx = build_splat_context(gmap, cam, with_chain=True)
    return {kind: blocks_from_context(ctx, kind) for kind in kinds}


def confidence_weights(gmap: GaussianMap, alpha_obj: float = 0.3,
                       alpha_opa: float = 0.3,
                       target: Optional[int] = None) -> ConfidenceWeights:
    """Inverse-confidence scalars per Gaussian.

    Whole scene: max_k(p)^-a_obj * sigma^-a_opa. Object mode keeps only
    Gaussians argmax-assigned to the target object and uses that object's
    probability instead of the max.
    """
    if target is not None and not (0 <= target <= gmap.n_objects):
        raise UnknownTarget(f"target {target} outside 0..{gmap.n_objects}")
    p = softmax(gmap.obj_logits, axis=1)
    sig = np.maximum(sigmoid(gmap.opacity_logit), 1e-4)
    if target is None:
        pm = np.maximum(p.max(axis=1), 1e-4)
        w = pm ** (-alpha_obj) * sig ** (-alpha_opa)
    else:
        pt = np.maximum(p[:, target], 1e-4)
        w = pt ** (-alpha_obj) * sig ** (-alpha_opa)
        w[np.argmax(p, axis=1) != target] = 0.0
    return ConfidenceWeights(weights=w, alpha_obj=alpha_obj,
                             alpha_opa=alpha_opa, target=target)


def weighted_accumulate(blocks_per_view: Sequence[HessianBlocks],
                        conf: Optional[ConfidenceWeights] = None) -> HessianBlocks:
    """Sum blocks over views, then scale each Gaussian by its confidence.

    The confidence matrix is a scalar multiple of the identity per Gaussian,
    so weighting commutes with the J^T J quadratic form.
    """
    blocks_per_view = list(blocks_per_view)
    if not blocks_per_view:
        raise LengthMismatch("need at least one view")
    kind = blocks_per_view[0].output_kind
    n = blocks_per_view[0].count
    l = blocks_per_view[0].l
    for hb in blocks_per_view:
        if hb.output_kind != kind:
            raise KindMismatch(f"{hb.output_kind} vs {kind}")
        if hb.count != n or hb.l != l:
            raise LengthMismatch("inconsistent block shapes")
    total = blocks_per_view[0].blocks.copy()
    for hb in blocks_per_view[1:]:
        total += hb.blocks
    if conf is not None:
        if conf.weights.shape[0] != n:
            raise LengthMismatch("confidence length does not match blocks")
        total = total * conf.weights[:, None, None]
    return HessianBlocks(output_kind=kind, blocks=total, l=l)


def logdet(blocks: HessianBlocks, ridge: float = DEFAULT_RIDGE) -> float:
    """Sum of log-determinants of the ridge-regularized per-Gaussian blocks."""
    if ridge <= 0:
        raise ValueError("ridge must be positive")
    n = blocks.count
    if n == 0:
        return 0.0
    A = blocks.blocks + ridge * np.eye(blocks.l)[None]
    L = np.linalg.cholesky(A)
    diags = L[:, np.arange(blocks.l), np.arange(blocks.l)]
    return float(2.0 * np.sum(np.log(diags)))


def logdet_per_gaussian(blocks: HessianBlocks, ridge: float = DEFAULT_RIDGE) -> np.ndarray:
    if blocks.count == 0:
        return np.zeros(0)
    A = blocks.blocks + ridge * np.eye(blocks.l)[None]
    L = np.linalg.cholesky(A)
    diags = L[:, np.arange(blocks.l), np.arange(blocks.l)]
    return 2.0 * np.sum(np.log(diags), axis=1)


def dump_logdet_csv(path, blocks_by_kind: dict[str, HessianBlocks],
                    ridge: float = DEFAULT_RIDGE) -> None:
    """Diagnostic dump: per-Gaussian log-det contribution for each kind."""
    with open(path, "w") as fh:
        fh.write("gaussian_id,kind,logdet\n")
        for kind, hb in blocks_by_kind.items():
            vals = logdet_per_gaussian(hb, ridge)
            for i, val in enumerate(vals):
                fh.write(f"{i},{kind},{val:.12g}\n")

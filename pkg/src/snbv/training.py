"""Scene optimization: losses, the optimizer loop, pruning, refinement rounds.

Training supervises RGB and the instance masks only; depth never enters the
objective (it is used downstream for view planning and evaluation). Each
refinement round discards the previous map and restarts from fresh random
Gaussians: intermediate rounds run 100 * m iterations at SH degree 0, the
final round runs `final_iters` at degree 3.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import Camera
from .losses import (  # noqa: F401  (re-exported training surface)
    ShapeMismatch, TooSmall, loss_dice, loss_l1, loss_overall, loss_ssim,
)
from .projection import sigmoid, softmax
from .renderer import GaussianMap, Observation, ParamGrads, render_gradients
from .sh import n_coeffs

CHECKPOINT_MAGIC = b"SNBV1"


class NoViews(Exception):
    pass


@dataclass
class TrainConfig:
    lambda_ssim: float = 0.2
    lambda_dice: float = 0.5
    lambda_obj: float = 0.1
    delta_obj: float = 0.1
    opacity_prune: float = 0.005
    # False = masks act as background removal only (baseline protocol):
    # no object-vector loss term and no object-probability pruning
    object_supervision: bool = True
    iters_per_view: int = 100
    final_iters: int = 3000
    n_init_gaussians: int = 2000
    max_gaussians: int = 4000
    seed: int = 0
    scene_extent: float = 1.0
    scene_bounds: np.ndarray = field(
        default_factory=lambda: np.array([[-0.75, -0.75, 0.0], [0.75, 0.75, 0.8]]))
    # per-group learning rates (position is scaled by scene_extent and decays)
    lr_mu: float = 1.6e-4
    lr_mu_final: float = 1.6e-6
    lr_scale: float = 5e-3
    lr_rot: float = 1e-3
    lr_opacity: float = 5e-2
    lr_color: float = 2.5e-3
    lr_obj: float = 2.5e-2
    densify: bool = True
    densify_interval: int = 200
    densify_grad_threshold: float = 2e-4
    densify_percent: float = 0.01
    prune_interval: int = 200

    def __post_init__(self):
        for name in ("lambda_ssim", "lambda_dice", "lambda_obj"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.delta_obj <= 0:
            raise ValueError("delta_obj must be positive")
        if self.iters_per_view <= 0 or self.final_iters <= 0:
            raise ValueError("iteration counts must be positive")
        self.scene_bounds = np.asarray(self.scene_bounds, dtype=np.float64)


_GROUPS = ("mu", "log_scale", "rot", "opacity_logit", "color", "obj_logits")


class _Adam:
    """Adaptive-moment descent over the map's parameter groups."""

    def __init__(self, gmap: GaussianMap, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {g: np.zeros_like(getattr(gmap, g)) for g in _GROUPS}
        self.v = {g: np.zeros_like(getattr(gmap, g)) for g in _GROUPS}

    def step(self, gmap: GaussianMap, grads: ParamGrads, lrs: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for g in _GROUPS:
            grad = getattr(grads, g)
            m = self.m[g]
            v = self.v[g]
            m *= self.beta1
            m += (1 - self.beta1) * grad
            v *= self.beta2
            v += (1 - self.beta2) * grad * grad
            param = getattr(gmap, g)
            param -= lrs[g] * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def resize(self, keep: np.ndarray, n_new: int):
        """Drop pruned rows, append zero-state rows for fresh Gaussians."""
        for d in (self.m, self.v):
            for g in _GROUPS:
                kept = d[g][keep]
                if n_new:
                    pad = np.zeros((n_new,) + kept.shape[1:])
                    kept = np.concatenate([kept, pad], axis=0)
                d[g] = kept


def _prune_mask(gmap: GaussianMap, cfg: TrainConfig) -> np.ndarray:
    opacity = sigmoid(gmap.opacity_logit)
    keep = opacity >= cfg.opacity_prune
    if cfg.object_supervision:
        bound = 1.0 / (gmap.n_objects + 1) + 0.1
        if not 0.0 < cfg.delta_obj <= bound:
            raise ValueError(f"delta_obj must lie in (0, {bound:.4g}] for "
                             f"{gmap.n_objects} objects")
        max_prob = softmax(gmap.obj_logits, axis=1).max(axis=1)
        keep &= max_prob >= cfg.delta_obj
    return keep


def prune(gmap: GaussianMap, cfg: TrainConfig) -> GaussianMap:
    """Drop Gaussians with near-uniform object probability or tiny opacity."""
    return gmap.take(np.flatnonzero(_prune_mask(gmap, cfg)))


def _densify_and_prune(gmap: GaussianMap, cfg: TrainConfig, adam: _Adam,
                       grad_sum: np.ndarray, grad_cnt: np.ndarray,
                       rng: np.random.Generator) -> GaussianMap:
    N = len(gmap)
    avg = grad_sum / np.maximum(grad_cnt, 1.0)
    keep = _prune_mask(gmap, cfg)

    new_parts = None
    if cfg.densify and N < cfg.max_gaussians:
        big = avg > cfg.densify_grad_threshold
        small = np.exp(gmap.log_scale).max(axis=1) <= cfg.densify_percent * cfg.scene_extent
        clone_idx = np.flatnonzero(big & small & keep)
        split_idx = np.flatnonzero(big & ~small & keep)
        budget = cfg.max_gaussians - int(keep.sum())
        if clone_idx.size + 2 * split_idx.size > budget:
            clone_idx = clone_idx[:max(budget, 0)]
            split_idx = split_idx[:max((budget - clone_idx.size) // 2, 0)]
        pieces = []
        if clone_idx.size:
            pieces.append(gmap.take(clone_idx))
        if split_idx.size:
            src = gmap.take(np.repeat(split_idx, 2))
            from .geometry import covariance3d
            for row in range(len(src)):
                cov = covariance3d(np.exp(src.log_scale[row]), src.rot[row])
                src.mu[row] = rng.multivariate_normal(src.mu[row], cov)
            src.log_scale -= np.log(1.6)
            keep[split_idx] = False
            pieces.append(src)
        if pieces:
            new_parts = pieces

    kept = gmap.take(np.flatnonzero(keep))
    if new_parts:
        arrays = {g: np.concatenate([getattr(kept, g)] + [getattr(p, g) for p in new_parts])
                  for g in _GROUPS}
        out = GaussianMap(n_objects=gmap.n_objects, sh_degree=gmap.sh_degree,
                          background_color=gmap.background_color.copy(), **arrays)
    else:
        out = kept
    adam.resize(keep, len(out) - int(keep.sum()))
    return out


def optimize_with_history(gmap: GaussianMap, views: Sequence[tuple[Camera, Observation]],
                          iters: int, cfg: TrainConfig,
                          rng: Optional[np.random.Generator] = None
                          ) -> tuple[GaussianMap, list[float]]:
    """One optimization run; returns the refined map and the loss history."""
    if not views:
        raise NoViews("optimize needs at least one training view")
    if iters <= 0:
        raise ValueError("iters must be positive")
    work = gmap.copy()
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    adam = _Adam(work)
    decay = cfg.lr_mu_final / cfg.lr_mu
    window = (int(0.2 * iters), int(0.8 * iters))
    grad_sum = np.zeros(len(work))
    grad_cnt = np.zeros(len(work))
    history: list[float] = []

    for it in range(iters):
        vi = int(rng.integers(len(views)))
        cam, obs = views[vi]
        loss, grads = render_gradients(work, cam, obs, cfg)
        history.append(loss)
        lr_mu = cfg.lr_mu * cfg.scene_extent * decay ** (it / max(iters - 1, 1))
        adam.step(work, grads, {
            "mu": lr_mu, "log_scale": cfg.lr_scale, "rot": cfg.lr_rot,
            "opacity_logit": cfg.lr_opacity, "color": cfg.lr_color,
            "obj_logits": cfg.lr_obj,
        })
        work.rot /= np.linalg.norm(work.rot, axis=1, keepdims=True)
        grad_sum += grads.mean2d_norm
        grad_cnt += grads.visible

        due = (it + 1) % cfg.densify_interval == 0 and window[0] <= it <= window[1]
        if due and len(work) > 0:
            work = _densify_and_prune(work, cfg, adam, grad_sum, grad_cnt, rng)
            grad_sum = np.zeros(len(work))
            grad_cnt = np.zeros(len(work))
    return work, history


def optimize(gmap: GaussianMap, views: Sequence[tuple[Camera, Observation]],
             iters: int, cfg: TrainConfig) -> GaussianMap:
    """Adaptive-moment descent over the map, one random training view per step."""
    return optimize_with_history(gmap, views, iters, cfg)[0]


def init_random_map(cfg: TrainConfig, n_objects: int, sh_degree: int,
                    background_color, rng: np.random.Generator) -> GaussianMap:
    """Fresh random map: uniform positions, isotropic scale from point spacing."""
    N = cfg.n_init_gaussians
    lo, hi = cfg.scene_bounds
    mu = rng.uniform(lo, hi, (N, 3))
    nn = cKDTree(mu).query(mu, k=2)[0][:, 1]
    log_scale = np.full((N, 3), np.log(max(float(nn.mean()), 1e-4)))
    rot = rng.normal(0.0, 1.0, (N, 4))
    rot /= np.linalg.norm(rot, axis=1, keepdims=True)
    opacity_logit = np.full(N, np.log(0.1 / 0.9))
    color = np.zeros((N, n_coeffs(sh_degree), 3))
    color[:, 0, :] = rng.uniform(-1.5, 1.5, (N, 3))
    obj_logits = np.zeros((N, n_objects + 1))
    return GaussianMap(mu=mu, log_scale=log_scale, rot=rot,
                       opacity_logit=opacity_logit, color=color,
                       obj_logits=obj_logits, n_objects=n_objects,
                       sh_degree=sh_degree,
                       background_color=np.asarray(background_color, dtype=np.float64))


def refine_round(gmap: GaussianMap, views: Sequence[tuple[Camera, Observation]],
                 cfg: TrainConfig, round_index: int,
                 final: bool = False) -> tuple[GaussianMap, int]:
    """Reinitialize with fresh random Gaussians and optimize from scratch.

    Intermediate rounds run 100 * len(views) iterations at SH degree 0; the
    final round runs cfg.final_iters at degree 3. Returns the refined map and
    the number of iterations executed.
    """
    if not views:
        raise NoViews("refine_round needs at least one view")
    rng = np.random.default_rng((cfg.seed, round_index))
    degree = 3 if final else 0
    iters = cfg.final_iters if final else cfg.iters_per_view * len(views)
    fresh = init_random_map(cfg, gmap.n_objects, degree, gmap.background_color, rng)
    out, _ = optimize_with_history(fresh, views, iters, cfg, rng=rng)
    return out, iters


def save_map(gmap: GaussianMap, path) -> None:
    """Versioned little-endian checkpoint: counts, background, then records."""
    K = n_coeffs(gmap.sh_degree)
    rec = np.concatenate([
        gmap.mu, gmap.log_scale, gmap.rot, gmap.opacity_logit[:, None],
        gmap.color.reshape(len(gmap), 3 * K), gmap.obj_logits,
    ], axis=1).astype("<f8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<III", gmap.n_objects, len(gmap), gmap.sh_degree))
        fh.write(gmap.background_color.astype("<f8").tobytes())
        fh.write(rec.tobytes())


def load_map(path) -> GaussianMap:
    with open(path, "rb") as fh:
        magic = fh.read(5)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a map checkpoint (magic {magic!r})")
        n_objects, N, degree = struct.unpack("<III", fh.read(12))
        bg = np.frombuffer(fh.read(24), dtype="<f8").copy()
        K = n_coeffs(degree)
        width = 3 + 3 + 4 + 1 + 3 * K + n_objects + 1
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(N, width).copy()
    o = 0
    def take(n):
        nonlocal o
        out = data[:, o:o + n]
        o += n
        return out
    return GaussianMap(mu=take(3), log_scale=take(3), rot=take(4),
                       opacity_logit=take(1)[:, 0], color=take(3 * K).reshape(N, K, 3),
                       obj_logits=take(n_objects + 1), n_objects=n_objects,
                       sh_degree=degree, background_color=bg)

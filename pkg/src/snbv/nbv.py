"""Next-best-view planning: information gain, fusion, policies, and the loop.

Gain of a candidate view is the log-det increase of the block-diagonal
information matrix when the candidate's (confidence-weighted) J^T J blocks
are added to the accumulated training information. Per-output gains are
normalized by the mean gain a training view would get (so a typical training
view scores 1), then fused as rgb + beta_d * depth + beta_o * object.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Camera
from .harness import (NoObjectPixels, OracleImages, PrimitiveScene, ViewSet,
                      metrics, oracle_render, sample_candidate_views)
from .renderer import GaussianMap, Observation, rasterize
from .training import TrainConfig, refine_round
from .uncertainty import (DEFAULT_RIDGE, HessianBlocks, KindMismatch,
                          confidence_weights, jacobian_blocks_all, logdet,
                          logdet_per_gaussian, weighted_accumulate)

POLICIES = ("ours", "fisherrf", "random", "spiral", "fps")
KINDS = ("rgb", "depth", "object")
GAIN_FLOOR = 1e-12


class EmptyCandidates(Exception):
    pass


@dataclass
class NBVConfig:
    policy: str = "ours"
    beta_d: float = 10.0
    beta_o: float = 1.0
    alpha_obj: float = 0.3
    alpha_opa: float = 0.3
    target: Optional[int] = None  # None = whole scene
    init_views: int = 4
    add_views: int = 6
    ridge: float = DEFAULT_RIDGE
    seed: int = 0

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.beta_d < 0 or self.beta_o < 0:
            raise ValueError("fusion weights must be nonnegative")


@dataclass
class CandidateGain:
    view_id: int
    raw: dict
    normalized: dict
    fused: float
    selected: bool = False


@dataclass
class GainReport:
    round_index: int
    training_ids: list[int]
    training_mean: dict                      # per-kind denominator
    training_normalized: dict                # per-kind list, mean 1 by construction
    candidates: list[CandidateGain]
    selected_id: int = -1

    def to_dict(self) -> dict:
        return {
            "round": self.round_index,
            "training_ids": self.training_ids,
            "training_mean": self.training_mean,
            "training_normalized": self.training_normalized,
            "selected_id": self.selected_id,
            "candidates": [{
                "view_id": c.view_id, "raw": c.raw, "normalized": c.normalized,
                "fused": c.fused, "selected": c.selected} for c in self.candidates],
        }


def information_gain(h_train: HessianBlocks, h_cand: HessianBlocks,
                     ridge: float = DEFAULT_RIDGE) -> float:
    """logdet(H_T + H_c) - logdet(H_T), nonnegative for PSD candidates."""
    if h_train.output_kind != h_cand.output_kind:
        raise KindMismatch(f"{h_train.output_kind} vs {h_cand.output_kind}")
    if h_train.count != h_cand.count or h_train.l != h_cand.l:
        raise ValueError("block shapes do not match")
    return _gain_from_parts(h_train.blocks, logdet_per_gaussian(h_train, ridge),
                            h_cand.blocks, h_cand.l, ridge)


def _gain_from_parts(train_blocks: np.ndarray, train_ld: np.ndarray,
                     cand_blocks: np.ndarray, l: int, ridge: float) -> float:
    """Gain via per-Gaussian log-det deltas, skipping untouched blocks."""
    touched = np.flatnonzero(np.any(cand_blocks != 0.0, axis=(1, 2)))
    if touched.size == 0:
        return 0.0
    A = train_blocks[touched] + cand_blocks[touched] + ridge * np.eye(l)[None]
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    L = np.linalg.cholesky(A)
    diag = L[:, np.arange(l), np.arange(l)]
    return float(np.sum(2.0 * np.sum(np.log(diag), axis=1) - train_ld[touched]))


def normalized_gain(raw: float, training_gains) -> float:
    """Gain in units of the mean training-view gain (denominator floored)."""
    training_gains = np.asarray(list(training_gains), dtype=np.float64)
    if training_gains.size == 0:
        raise ValueError("training gains must be nonempty")
    return float(raw / max(float(training_gains.mean()), GAIN_FLOOR))


def fused_gain(g_rgb: float, g_d: float, g_o: float, cfg: NBVConfig) -> float:
    return float(g_rgb + cfg.beta_d * g_d + cfg.beta_o * g_o)


def select_next_view(gmap: GaussianMap, training: ViewSet, candidates: ViewSet,
                     cfg: NBVConfig) -> tuple[int, GainReport]:
    """Greedy argmax of fused normalized gain over the candidate set.

    The fisherrf policy degenerates to the unweighted raw RGB gain (exponents
    zero, no normalization, no depth/object terms).
    """
    if len(candidates) == 0:
        raise EmptyCandidates("no candidate views left")
    ours = cfg.policy == "ours"
    kinds = KINDS if ours else ("rgb",)
    conf = confidence_weights(gmap, cfg.alpha_obj if ours else 0.0,
                              cfg.alpha_opa if ours else 0.0,
                              target=cfg.target if ours else None)

    train_parts = {}
    for spec in training.views:
        per_kind = jacobian_blocks_all(gmap, spec.camera, kinds)
        train_parts[spec.id] = {
            k: weighted_accumulate([per_kind[k]], conf) for k in kinds}
    h_train = {k: weighted_accumulate([train_parts[i][k] for i in training.ids])
               for k in kinds}
    train_ld = {k: logdet_per_gaussian(h_train[k], cfg.ridge) for k in kinds}

    # denominators: gain a training view would add on top of the full H_T
    denom_lists = {k: [_gain_from_parts(h_train[k].blocks, train_ld[k],
                                        train_parts[i][k].blocks,
                                        h_train[k].l, cfg.ridge)
                       for i in training.ids] for k in kinds}
    denom = {k: max(float(np.mean(denom_lists[k])), GAIN_FLOOR) for k in kinds}
    training_normalized = {k: [v / denom[k] for v in denom_lists[k]] for k in kinds}

    report = GainReport(round_index=-1, training_ids=list(training.ids),
                        training_mean=denom,
                        training_normalized=training_normalized, candidates=[])
    best_id, best_val = -1, -np.inf
    for spec in sorted(candidates.views, key=lambda v: v.id):
        per_kind = jacobian_blocks_all(gmap, spec.camera, kinds)
        raw = {}
        for k in kinds:
            hc = weighted_accumulate([per_kind[k]], conf)
            raw[k] = _gain_from_parts(h_train[k].blocks, train_ld[k],
                                      hc.blocks, h_train[k].l, cfg.ridge)
        if ours:
            norm = {k: raw[k] / denom[k] for k in kinds}
            fused = fused_gain(norm["rgb"], norm["depth"], norm["object"], cfg)
        else:
            norm = dict(raw)
            fused = raw["rgb"]
        report.candidates.append(CandidateGain(view_id=spec.id, raw=raw,
                                               normalized=norm, fused=fused))
        if fused > best_val:
            best_val, best_id = fused, spec.id
    for c in report.candidates:
        c.selected = c.view_id == best_id
    report.selected_id = best_id
    return best_id, report


def _longitude(spec, centroid) -> float:
    d = spec.position - np.asarray(centroid)
    return float(np.arctan2(d[1], d[0]) % (2 * np.pi))


def baseline_select(policy: str, training: ViewSet, candidates: ViewSet,
                    seed: int) -> int:
    """Heuristic selection: seeded random, longitude-ordered spiral, or FPS."""
    if len(candidates) == 0:
        raise EmptyCandidates("no candidate views left")
    ids = sorted(candidates.ids)
    if policy == "random":
        rng = np.random.default_rng((seed, len(training), 131))
        return int(ids[rng.integers(len(ids))])
    if policy == "spiral":
        centroid = candidates.views[0].look_at
        order = sorted(candidates.views, key=lambda v: (_longitude(v, centroid), v.id))
        return int(order[0].id)
    if policy == "fps":
        tpos = np.stack([v.position for v in training.views])
        best_id, best_d = ids[0], -1.0
        for spec in sorted(candidates.views, key=lambda v: v.id):
            d = float(np.min(np.linalg.norm(tpos - spec.position[None, :], axis=1)))
            if d > best_d:
                best_d, best_id = d, spec.id
        return int(best_id)
    raise ValueError(f"{policy!r} is not a baseline policy")


@dataclass
class NBVRun:
    policy: str
    seed: int
    selected_ids: list[int]
    gain_reports: list[Optional[GainReport]]
    per_round_iters: list[int]
    total_iters: int
    sh_schedule: list[int]
    metrics_mean: dict
    per_view_metrics: list[dict]
    final_map: GaussianMap
    wall_time_s: float
    test_ids: list[int]

    def record(self) -> dict:
        # deliberately excludes wall time so reruns serialize byte-identically
        return {
            "policy": self.policy,
            "seed": self.seed,
            "selected_ids": self.selected_ids,
            "per_round_iters": self.per_round_iters,
            "total_iters": self.total_iters,
            "sh_schedule": self.sh_schedule,
            "metrics": self.metrics_mean,
            "per_view_metrics": self.per_view_metrics,
            "test_ids": self.test_ids,
            "gains": [r.to_dict() if r is not None else None
                      for r in self.gain_reports],
        }


@dataclass
class RunSetup:
    """Everything one NBV run needs besides the scene itself."""

    nbv: NBVConfig = field(default_factory=NBVConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    image_size: int = 64
    fov_deg: float = 45.0
    n_spiral: int = 48
    n_random: int = 16
    radius: float = 1.55
    n_test: int = 20
    test_elevation_deg: float = 25.0


def _view_lists(scene: PrimitiveScene, setup: RunSetup):
    centroid = scene.centroid
    if setup.radius <= scene.extent:
        raise ValueError("view sphere radius must exceed the scene extent")
    pool = sample_candidate_views(centroid, setup.radius, setup.n_spiral,
                                  setup.n_random, seed=setup.nbv.seed,
                                  width=setup.image_size, height=setup.image_size,
                                  fov_deg=setup.fov_deg)
    # held-out test views: two rings bracketing the candidate latitude
    half = setup.n_test - setup.n_test // 2
    low = sample_candidate_views(centroid, setup.radius, half, 0,
                                 seed=setup.nbv.seed + 7777,
                                 elevation_deg=setup.test_elevation_deg,
                                 width=setup.image_size, height=setup.image_size,
                                 fov_deg=setup.fov_deg, role="test",
                                 id_offset=10_000)
    high = sample_candidate_views(centroid, setup.radius, setup.n_test // 2, 0,
                                  seed=setup.nbv.seed + 7778,
                                  elevation_deg=setup.test_elevation_deg + 25.0,
                                  width=setup.image_size, height=setup.image_size,
                                  fov_deg=setup.fov_deg, role="test",
                                  id_offset=20_000)
    test = ViewSet(views=low.views + high.views, role="test")
    return pool, test


def evaluate_map(gmap: GaussianMap, scene: PrimitiveScene, test: ViewSet):
    """Mean PSNR / SSIM / masked depth MAE over a test view set."""
    rows = []
    for spec in test.views:
        gt = oracle_render(scene, spec.camera)
        try:
            m = metrics(rasterize(gmap, spec.camera), gt)
        except NoObjectPixels:
            continue
        m["view_id"] = spec.id
        rows.append(m)
    if not rows:
        raise NoObjectPixels("no test view sees any object")
    mean = {k: float(np.mean([r[k] for r in rows]))
            for k in ("psnr", "ssim", "depth_mae")}
    return mean, rows


def run_nbv(scene: PrimitiveScene, setup: RunSetup) -> NBVRun:
    """Full incremental loop: refine, select, acquire, repeat, final refine.

    The ours policy trains the full object-aware objective. Baseline policies
    (fisherrf/random/spiral/fps) follow the evaluation protocol where instance
    masks act as background removal only: no object-vector loss, no
    object-probability pruning.
    """
    t0 = time.perf_counter()
    nbv_cfg = setup.nbv
    train_cfg = setup.train
    if nbv_cfg.policy != "ours":
        train_cfg = replace(train_cfg, object_supervision=False)
    train_cfg.scene_bounds = scene.bounds
    train_cfg.scene_extent = scene.extent
    train_cfg.seed = nbv_cfg.seed

    pool, test = _view_lists(scene, setup)
    if nbv_cfg.init_views + nbv_cfg.add_views > len(pool):
        raise ValueError("candidate pool smaller than init + added views")
    spiral_order = sorted(pool.views[:setup.n_spiral], key=lambda v: v.id)
    init_specs = spiral_order[:nbv_cfg.init_views]
    init_ids = {v.id for v in init_specs}
    training = ViewSet(views=list(init_specs), role="training")
    candidates = ViewSet(views=[v for v in pool.views if v.id not in init_ids],
                         role="candidate")

    observations: dict[int, Observation] = {}
    for spec in training.views:
        observations[spec.id] = oracle_render(scene, spec.camera).as_observation(scene.n_objects)

    gmap = GaussianMap(mu=np.zeros((0, 3)), log_scale=np.zeros((0, 3)),
                       rot=np.ones((0, 4)), opacity_logit=np.zeros(0),
                       color=np.zeros((0, 1, 3)), obj_logits=np.zeros((0, scene.n_objects + 1)),
                       n_objects=scene.n_objects, sh_degree=0,
                       background_color=scene.background_color)

    selected: list[int] = []
    reports: list[Optional[GainReport]] = []
    per_round_iters: list[int] = []
    sh_schedule: list[int] = []

    for rnd in range(nbv_cfg.add_views):
        train_views = [(s.camera, observations[s.id]) for s in training.views]
        gmap, iters = refine_round(gmap, train_views, train_cfg, round_index=rnd)
        per_round_iters.append(iters)
        sh_schedule.append(gmap.sh_degree)
        if nbv_cfg.policy in ("ours", "fisherrf"):
            vid, rep = select_next_view(gmap, training, candidates, nbv_cfg)
            rep.round_index = rnd
        else:
            vid = baseline_select(nbv_cfg.policy, training, candidates, nbv_cfg.seed)
            rep = None
        reports.append(rep)
        selected.append(vid)
        spec = candidates.get(vid)
        observations[vid] = oracle_render(scene, spec.camera).as_observation(scene.n_objects)
        training = ViewSet(views=training.views + [spec], role="training")
        candidates = ViewSet(views=[v for v in candidates.views if v.id != vid],
                             role="candidate")

    train_views = [(s.camera, observations[s.id]) for s in training.views]
    gmap, iters = refine_round(gmap, train_views, train_cfg,
                               round_index=nbv_cfg.add_views, final=True)
    per_round_iters.append(iters)
    sh_schedule.append(gmap.sh_degree)

    mean, rows = evaluate_map(gmap, scene, test)
    return NBVRun(policy=nbv_cfg.policy, seed=nbv_cfg.seed, selected_ids=selected,
                  gain_reports=reports, per_round_iters=per_round_iters,
                  total_iters=int(sum(per_round_iters)), sh_schedule=sh_schedule,
                  metrics_mean=mean, per_view_metrics=rows, final_map=gmap,
                  wall_time_s=time.perf_counter() - t0, test_ids=test.ids)

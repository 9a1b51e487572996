"""Object-aware Gaussian splatting with confidence-weighted next-best-view planning.

A desk-scale, CPU-only implementation: a differentiable splatting renderer
carrying per-Gaussian object vectors, Fisher-information view planning with
per-Gaussian confidence weights, and a synthetic ray-traced harness that
provides ground truth for end-to-end experiments.
"""

from .geometry import (BehindCamera, Camera, Gaussian, covariance3d,
                       look_at_pose, project_gaussian, quat_to_rotmat)
from .harness import (NoObjectPixels, OracleImages, Primitive, PrimitiveScene,
                      ViewSet, ViewSpec, generate_scene, load_scene, metrics,
                      oracle_render, sample_candidate_views, save_scene)
from .losses import loss_dice, loss_l1, loss_overall, loss_ssim, ssim_value
from .nbv import (EmptyCandidates, GainReport, NBVConfig, NBVRun, RunSetup,
                  baseline_select, fused_gain, information_gain,
                  normalized_gain, run_nbv, select_next_view)
from .renderer import (GaussianMap, Observation, RenderOutput,
                       blend_object_vector, rasterize, render_gradients)
from .training import (NoViews, TrainConfig, load_map, optimize, prune,
                       refine_round, save_map)
from .uncertainty import (ConfidenceWeights, HessianBlocks, confidence_weights,
                          jacobian_blocks, logdet, weighted_accumulate)

__version__ = "0.1.0"

__all__ = [
    "BehindCamera", "Camera", "ConfidenceWeights", "EmptyCandidates",
    "GainReport", "Gaussian", "GaussianMap", "HessianBlocks", "NBVConfig",
    "NBVRun", "NoObjectPixels", "NoViews", "Observation", "OracleImages",
    "Primitive", "PrimitiveScene", "RenderOutput", "RunSetup", "TrainConfig",
    "ViewSet", "ViewSpec", "baseline_select", "blend_object_vector",
    "confidence_weights", "covariance3d", "fused_gain", "generate_scene",
    "information_gain", "jacobian_blocks", "load_map", "load_scene",
    "logdet", "look_at_pose", "loss_dice", "loss_l1", "loss_overall",
    "loss_ssim", "metrics", "normalized_gain", "optimize", "oracle_render",
    "project_gaussian", "prune", "quat_to_rotmat", "rasterize",
    "render_gradients", "run_nbv", "sample_candidate_views", "save_map",
    "save_scene", "select_next_view", "ssim_value", "weighted_accumulate",
]

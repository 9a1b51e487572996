"""Score candidate views by confidence-weighted Fisher information gain.

For a trained map, each view's rendering Jacobian gives per-Gaussian
information blocks. Blocks are scaled by inverse-confidence weights (low
opacity or undecided object probability = needs exploration), accumulated
over the training set, and candidates are ranked by the log-det increase,
normalized per output so rgb/depth/mask gains are commensurable.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from snbv import generate_scene, oracle_render, sample_candidate_views
from snbv.harness import ViewSet
from snbv.nbv import NBVConfig, select_next_view
from snbv.training import TrainConfig, init_random_map, optimize_with_history
from snbv.uncertainty import confidence_weights

scene = generate_scene(seed=5, n_objects=5, difficulty=0.7)
pool = sample_candidate_views(scene.centroid, radius=1.55, n_spiral=10,
                              n_random=0, seed=0, width=40, height=40)
training = ViewSet(views=pool.views[:3], role="training")   # one side only
candidates = ViewSet(views=pool.views[3:], role="candidate")

cfg = TrainConfig(seed=0, n_init_gaussians=600, max_gaussians=1200)
cfg.scene_bounds = scene.bounds
cfg.scene_extent = scene.extent
train_views = [(s.camera, oracle_render(scene, s.camera).as_observation(scene.n_objects))
               for s in training.views]
gmap, _ = optimize_with_history(
    init_random_map(cfg, scene.n_objects, 0, scene.background_color,
                    np.random.default_rng(0)),
    train_views, iters=300, cfg=cfg)

conf = confidence_weights(gmap)
print(f"map: {len(gmap)} gaussians; confidence weights "
      f"min {conf.weights.min():.2f} / median {np.median(conf.weights):.2f} / "
      f"max {conf.weights.max():.2f}")

vid, report = select_next_view(gmap, training, candidates, NBVConfig(seed=0))
print(f"\ntraining ids {report.training_ids}; mean training gains "
      + ", ".join(f"{k}={v:.1f}" for k, v in report.training_mean.items()))
print("\n id    rgb   depth  object   fused")
for c in report.candidates:
    mark = " <- selected" if c.selected else ""
    print(f"{c.view_id:3d}  {c.normalized['rgb']:6.2f} {c.normalized['depth']:6.2f} "
          f"{c.normalized['object']:6.2f}  {c.fused:6.2f}{mark}")

lon = np.rad2deg(np.arctan2(*(candidates.get(vid).position - scene.centroid)[[1, 0]])) % 360
print(f"\nselected view {vid} at longitude {lon:.0f} deg "
      f"(training views cluster near 0-72 deg)")

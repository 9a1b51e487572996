"""A complete miniature next-best-view experiment, three policies compared.

Each run: refine from scratch on the current views, pick the next view by the
policy, acquire its oracle observation, repeat; then a final refinement at SH
degree 3. Small sizes keep this demo around a minute; the CLI `snbv run`
drives the full-size version of the same loop.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from snbv import generate_scene
from snbv.nbv import NBVConfig, RunSetup, run_nbv
from snbv.training import TrainConfig

scene = generate_scene(seed=8, n_objects=5, difficulty=0.8)

for policy in ("ours", "fisherrf", "random"):
    setup = RunSetup(
        nbv=NBVConfig(policy=policy, seed=1, init_views=3, add_views=3),
        train=TrainConfig(seed=1, n_init_gaussians=500, max_gaussians=1000,
                          iters_per_view=60, final_iters=400,
                          densify_grad_threshold=1e-4),
        image_size=40, n_spiral=16, n_random=6, n_test=8)
    run = run_nbv(scene, setup)
    m = run.metrics_mean
    print(f"{policy:9s} selected {run.selected_ids}  "
          f"iters/round {run.per_round_iters} (sh {run.sh_schedule})")
    print(f"{'':9s} psnr {m['psnr']:.2f}  ssim {m['ssim']:.3f}  "
          f"masked depth mae {m['depth_mae']:.4f}  [{run.wall_time_s:.0f}s]")

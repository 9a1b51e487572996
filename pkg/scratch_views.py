"""Scratch: analyze selected-view geometry per policy."""
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene
from snbv.nbv import NBVConfig, RunSetup, run_nbv, _view_lists
from snbv.training import TrainConfig

seed = int(sys.argv[2]) if len(sys.argv) > 2 else 1
policy = sys.argv[1]
scene = generate_scene(seed=seed, n_objects=7, difficulty=0.6)
setup = RunSetup(nbv=NBVConfig(policy=policy, seed=seed),
                 train=TrainConfig(seed=seed, n_init_gaussians=1200, max_gaussians=2400))
pool, test = _view_lists(scene, setup)
run = run_nbv(scene, setup)
c = scene.centroid
print(f"policy={policy} seed={seed} mae={run.metrics_mean['depth_mae']:.4f} psnr={run.metrics_mean['psnr']:.2f}")
for vid in run.selected_ids:
    spec = pool.get(vid)
    d = spec.position - c
    el = np.rad2deg(np.arcsin(d[2] / np.linalg.norm(d)))
    az = np.rad2deg(np.arctan2(d[1], d[0])) % 360
    print(f"  view {vid}: az={az:6.1f} el={el:5.1f}")

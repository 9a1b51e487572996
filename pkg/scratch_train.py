"""Scratch: timing + convergence smoke of training at experiment scale."""
import time
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene, oracle_render, sample_candidate_views
from snbv.training import TrainConfig, init_random_map, optimize_with_history
from snbv.renderer import rasterize, render_gradients, build_splat_context
from snbv.nbv import evaluate_map
from snbv.uncertainty import jacobian_blocks_all

scene = generate_scene(seed=7, n_objects=6, difficulty=0.6)
views = sample_candidate_views(scene.centroid, 2.2, 8, 0, seed=1)
cfg = TrainConfig(seed=0, n_init_gaussians=1500, scene_bounds=scene.bounds,
                  scene_extent=scene.extent)
rng = np.random.default_rng(0)
gmap = init_random_map(cfg, scene.n_objects, 0, scene.background_color, rng)
print("init gaussians:", len(gmap))

obs = [(v.camera, oracle_render(scene, v.camera).as_observation(scene.n_objects))
       for v in views.views[:4]]

# timing: render fwd, fwd+bwd
t0 = time.perf_counter()
for _ in range(5):
    out = rasterize(gmap, obs[0][0])
t1 = time.perf_counter()
print(f"fwd render: {(t1-t0)/5*1000:.1f} ms")

t0 = time.perf_counter()
for _ in range(5):
    loss, grads = render_gradients(gmap, obs[0][0], obs[0][1], cfg)
t1 = time.perf_counter()
print(f"fwd+bwd: {(t1-t0)/5*1000:.1f} ms  loss={loss:.4f}")

t0 = time.perf_counter()
blocks = jacobian_blocks_all(gmap, obs[0][0])
t1 = time.perf_counter()
print(f"3-kind blocks: {(t1-t0)*1000:.1f} ms")

t0 = time.perf_counter()
gmap2, hist = optimize_with_history(gmap, obs, 400, cfg)
t1 = time.perf_counter()
print(f"400 iters: {t1-t0:.1f} s ({(t1-t0)/400*1000:.1f} ms/iter), "
      f"loss {hist[0]:.4f} -> {np.mean(hist[-20:]):.4f}, N={len(gmap2)}")

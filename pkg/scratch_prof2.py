import cProfile, pstats, time
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene, oracle_render, sample_candidate_views
from snbv.training import TrainConfig, init_random_map, optimize_with_history
from snbv.renderer import render_gradients

scene = generate_scene(seed=7, n_objects=7, difficulty=0.9)
views = sample_candidate_views(scene.centroid, 1.7, 8, 0, seed=1)
cfg = TrainConfig(seed=0, n_init_gaussians=2000, scene_bounds=scene.bounds,
                  scene_extent=scene.extent)
rng = np.random.default_rng(0)
gmap = init_random_map(cfg, scene.n_objects, 0, scene.background_color, rng)
obs = [(v.camera, oracle_render(scene, v.camera).as_observation(scene.n_objects))
       for v in views.views[:4]]

t0 = time.perf_counter()
for _ in range(10):
    loss, grads = render_gradients(gmap, obs[0][0], obs[0][1], cfg)
print(f"fwd+bwd init map: {(time.perf_counter()-t0)/10*1000:.1f} ms")

pr = cProfile.Profile()
pr.enable()
for _ in range(10):
    render_gradients(gmap, obs[0][0], obs[0][1], cfg)
pr.disable()
stats = pstats.Stats(pr)
stats.sort_stats("tottime").print_stats(16)

import cProfile, pstats, time
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene, oracle_render, sample_candidate_views
from snbv.training import TrainConfig, init_random_map, optimize_with_history
from snbv.renderer import build_splat_context
from snbv.uncertainty import jacobian_blocks_all, blocks_from_context

scene = generate_scene(seed=7, n_objects=6, difficulty=0.6)
views = sample_candidate_views(scene.centroid, 2.2, 8, 0, seed=1)
cfg = TrainConfig(seed=0, n_init_gaussians=1500, scene_bounds=scene.bounds,
                  scene_extent=scene.extent)
rng = np.random.default_rng(0)
gmap = init_random_map(cfg, scene.n_objects, 0, scene.background_color, rng)
obs = [(v.camera, oracle_render(scene, v.camera).as_observation(scene.n_objects))
       for v in views.views[:4]]
gmap, _ = optimize_with_history(gmap, obs, 400, cfg)
print("N after training:", len(gmap))

cam = obs[0][0]
ctx = build_splat_context(gmap, cam, with_chain=True)
print("pairs:", ctx.pix.size, "visible:", ctx.vp.count)

t0 = time.perf_counter()
for _ in range(3):
    blocks = jacobian_blocks_all(gmap, cam)
print("3-kind blocks:", (time.perf_counter()-t0)/3*1000, "ms")

pr = cProfile.Profile()
pr.enable()
for _ in range(3):
    jacobian_blocks_all(gmap, cam)
pr.disable()
stats = pstats.Stats(pr)
stats.sort_stats("cumulative").print_stats(18)

"""Scratch: densify/prune dynamics and gradient magnitudes during a round."""
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene, oracle_render
from snbv.nbv import NBVConfig, RunSetup, _view_lists
from snbv.training import TrainConfig, init_random_map
from snbv.renderer import GaussianMap, render_gradients
import snbv.training as T

scene = generate_scene(seed=1, n_objects=7, difficulty=0.6)
setup = RunSetup(nbv=NBVConfig(seed=1), train=TrainConfig(seed=1, n_init_gaussians=1200, max_gaussians=2400))
pool, test = _view_lists(scene, setup)
cfg = setup.train
cfg.scene_bounds = scene.bounds
cfg.scene_extent = scene.extent
ids = [pool.views[i].id for i in range(0, 48, 5)][:10]
train_views = [(pool.get(v).camera, oracle_render(scene, pool.get(v).camera).as_observation(scene.n_objects)) for v in ids]

rng = np.random.default_rng(0)
gmap = init_random_map(cfg, scene.n_objects, 0, scene.background_color, rng)

# patch _densify_and_prune to print stats
orig = T._densify_and_prune
def wrapped(gmap, cfg, adam, gsum, gcnt, rng):
    avg = gsum / np.maximum(gcnt, 1.0)
    big = avg > cfg.densify_grad_threshold
    small = np.exp(gmap.log_scale).max(axis=1) <= cfg.densify_percent * cfg.scene_extent
    keep = T._prune_mask(gmap, cfg)
    print(f"  N={len(gmap)} grad p50={np.percentile(avg,50):.2e} p90={np.percentile(avg,90):.2e} "
          f"big={big.sum()} clone={(big&small&keep).sum()} split={(big&~small&keep).sum()} pruned={(~keep).sum()}")
    return orig(gmap, cfg, adam, gsum, gcnt, rng)
T._densify_and_prune = wrapped

out, hist = T.optimize_with_history(gmap, train_views, 1500, cfg)
print("final N:", len(out), "loss:", hist[0], "->", np.mean(hist[-50:]))

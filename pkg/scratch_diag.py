"""Scratch: decompose depth error; find the reconstruction floor."""
import numpy as np
import sys, time
sys.path.insert(0, "src")

from snbv.harness import generate_scene, oracle_render, sample_candidate_views
from snbv.training import TrainConfig, refine_round
from snbv.renderer import GaussianMap, rasterize
from snbv.nbv import evaluate_map, RunSetup, NBVConfig, _view_lists

scene = generate_scene(seed=1, n_objects=7, difficulty=0.6)
setup = RunSetup(nbv=NBVConfig(seed=1), train=TrainConfig(seed=1, n_init_gaussians=1200, max_gaussians=2400))
pool, test = _view_lists(scene, setup)

# floor: 10 evenly spread spiral views (every ~36 deg), full final round
ids = [pool.views[i].id for i in range(0, 48, 5)][:10]
train_views = []
for vid in ids:
    spec = pool.get(vid)
    train_views.append((spec.camera, oracle_render(scene, spec.camera).as_observation(scene.n_objects)))

cfg = setup.train
cfg.scene_bounds = scene.bounds
cfg.scene_extent = scene.extent
gmap0 = GaussianMap(mu=np.zeros((0, 3)), log_scale=np.zeros((0, 3)), rot=np.ones((0, 4)),
                    opacity_logit=np.zeros(0), color=np.zeros((0, 1, 3)),
                    obj_logits=np.zeros((0, scene.n_objects + 1)),
                    n_objects=scene.n_objects, sh_degree=0,
                    background_color=scene.background_color)
t0 = time.perf_counter()
gmap, _ = refine_round(gmap0, train_views, cfg, 0, final=True)
print(f"floor training: {time.perf_counter()-t0:.0f}s, N={len(gmap)}")
mean, rows = evaluate_map(gmap, scene, test)
print("floor metrics (10 spread views):", mean)

# error decomposition on one test view
spec = test.views[0]
gt = oracle_render(scene, spec.camera)
out = rasterize(gmap, spec.camera)
obj = gt.mask != 0
err = np.abs(out.depth - gt.depth)[obj]
alpha = out.alpha[obj]
print(f"object pixels: {obj.sum()}, alpha: mean={alpha.mean():.3f} p10={np.percentile(alpha,10):.3f}")
print(f"mae={err.mean():.4f}  err p50={np.percentile(err,50):.4f} p90={np.percentile(err,90):.4f}")
hi = alpha > 0.95
print(f"mae(alpha>0.95)={err[hi].mean():.4f} ({hi.mean()*100:.0f}% of px), mae(alpha<=0.95)={err[~hi].mean():.4f}")
# normalized depth comparison
dn = out.depth / np.maximum(out.alpha, 1e-3)
errn = np.abs(dn - gt.depth)[obj]
print(f"alpha-normalized mae={errn.mean():.4f}")
# object size in pixels
for oid in range(1, 4):
    px = (gt.mask == oid).sum()
    print(f"object {oid}: {px} px in view 0")

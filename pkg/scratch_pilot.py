"""Pilot criterion-7 style comparison: policies x seeds, parallel workers."""
import multiprocessing as mp
import sys
import numpy as np
sys.path.insert(0, "/root/pkg/src")

from snbv.harness import generate_scene
from snbv.nbv import NBVConfig, RunSetup, run_nbv
from snbv.training import TrainConfig

DIFF = float(sys.argv[1]) if len(sys.argv) > 1 else 0.9
DENS = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-4
SEEDS = [int(s) for s in (sys.argv[3].split(",") if len(sys.argv) > 3 else ["1", "2", "3"])]
POLICIES = sys.argv[4].split(",") if len(sys.argv) > 4 else ["ours", "random", "fisherrf"]


def one(job):
    policy, seed = job
    n_objects = 6 + seed % 3
    scene = generate_scene(seed=seed, n_objects=n_objects, difficulty=DIFF)
    setup = RunSetup(
        nbv=NBVConfig(policy=policy, seed=seed, init_views=4, add_views=6),
        train=TrainConfig(seed=seed, n_init_gaussians=1500, max_gaussians=3000,
                          densify_grad_threshold=DENS),
        image_size=64, n_spiral=48, n_random=16)
    run = run_nbv(scene, setup)
    m = run.metrics_mean
    return (policy, seed, m["depth_mae"], m["psnr"], m["ssim"], run.wall_time_s)


if __name__ == "__main__":
    jobs = [(p, s) for p in POLICIES for s in SEEDS]
    with mp.Pool(2) as pool:
        rows = pool.map(one, jobs, chunksize=1)
    by_policy = {}
    for policy, seed, mae, psnr, ssim, wall in rows:
        print(f"{policy:9s} seed={seed} mae={mae:.4f} psnr={psnr:.2f} ssim={ssim:.3f} t={wall:.0f}s")
        by_policy.setdefault(policy, []).append(mae)
    print()
    for p, v in by_policy.items():
        print(f"{p:9s} mean mae {np.mean(v):.4f}")
    if "ours" in by_policy and "random" in by_policy:
        red = 1 - np.mean(by_policy["ours"]) / np.mean(by_policy["random"])
        print(f"ours vs random reduction: {red*100:.1f}%")

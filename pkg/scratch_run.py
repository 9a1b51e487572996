"""Scratch: one full NBV run at acceptance scale, timed."""
import time
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.harness import generate_scene
from snbv.nbv import NBVConfig, RunSetup, run_nbv
from snbv.training import TrainConfig

policy = sys.argv[1] if len(sys.argv) > 1 else "ours"
n_init = int(sys.argv[2]) if len(sys.argv) > 2 else 1200
seed = int(sys.argv[3]) if len(sys.argv) > 3 else 1

scene = generate_scene(seed=seed, n_objects=7, difficulty=0.9)
setup = RunSetup(
    nbv=NBVConfig(policy=policy, seed=seed, init_views=4, add_views=6),
    train=TrainConfig(seed=seed, n_init_gaussians=n_init, max_gaussians=2 * n_init),
    image_size=64, n_spiral=48, n_random=16,
)
t0 = time.perf_counter()
run = run_nbv(scene, setup)
t1 = time.perf_counter()
print(f"policy={policy} seed={seed} n_init={n_init}")
print(f"selected: {run.selected_ids}")
print(f"iters: {run.per_round_iters} total={run.total_iters} sh={run.sh_schedule}")
print(f"metrics: {run.metrics_mean}")
print(f"wall: {t1 - t0:.1f} s, final N={len(run.final_map)}")

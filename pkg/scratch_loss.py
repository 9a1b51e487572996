import numpy as np
import sys
sys.path.insert(0, "src")
from snbv.losses import ssim_with_grad, dice_with_grad, l1_with_grad, loss_ssim

rng = np.random.default_rng(0)
x = rng.uniform(0.1, 0.9, (16, 16, 3))
y = rng.uniform(0.1, 0.9, (16, 16, 3))

val, g = ssim_with_grad(x, y)
h = 1e-6
worst = 0
for _ in range(60):
    i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
    x[i, j, c] += h
    lp = 1.0 - (1.0 - 0) if False else None
    from snbv.losses import loss_ssim as ls
    lp = ls(x, y)
    x[i, j, c] -= 2 * h
    lm = ls(x, y)
    x[i, j, c] += h
    fd = (lp - lm) / (2 * h)
    rel = abs(g[i, j, c] - fd) / max(abs(fd), 1e-9)
    worst = max(worst, rel)
print("ssim grad worst rel:", worst)

# dice
p = rng.dirichlet(np.ones(4), size=(8, 8))
gt = np.zeros((8, 8, 4)); gt[np.arange(8)[:, None], np.arange(8)[None, :], rng.integers(0, 4, (8, 8))] = 1
val, gd = dice_with_grad(p, gt)
worst = 0
from snbv.losses import loss_dice
for _ in range(60):
    i, j, c = rng.integers(8), rng.integers(8), rng.integers(4)
    p[i, j, c] += h
    lp = loss_dice(p, gt)
    p[i, j, c] -= 2 * h
    lm = loss_dice(p, gt)
    p[i, j, c] += h
    fd = (lp - lm) / (2 * h)
    rel = abs(gd[i, j, c] - fd) / max(abs(fd), 1e-9)
    worst = max(worst, rel)
print("dice grad worst rel:", worst)

# spec value checks
print("ssim identical:", loss_ssim(x, x))
p_uniform = np.full((8, 8, 2), 0.5)
gt_bg = np.zeros((8, 8, 2)); gt_bg[:, :, 0] = 1
print("dice uniform-vs-bg (n=1):", loss_dice(p_uniform, gt_bg))

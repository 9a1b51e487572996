import numpy as np
import sys
sys.path.insert(0, "src")
from snbv.losses import ssim_with_grad, loss_ssim

rng = np.random.default_rng(0)
x = rng.uniform(0.1, 0.9, (16, 16, 3))
y = rng.uniform(0.1, 0.9, (16, 16, 3))
val, g = ssim_with_grad(x, y)
worst = 0
for h in (1e-5, 1e-4):
    worst = 0
    for _ in range(200):
        i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
        x[i, j, c] += h
        lp = loss_ssim(x, y)
        x[i, j, c] -= 2 * h
        lm = loss_ssim(x, y)
        x[i, j, c] += h
        fd = (lp - lm) / (2 * h)
        if abs(fd) > 1e-6:
            rel = abs(g[i, j, c] - fd) / abs(fd)
            if rel > worst:
                worst = rel
                mag = abs(fd)
    print(f"h={h}: worst rel {worst:.2e} (at |fd|>{1e-6})")

import numpy as np
import pytest

from snbv.losses import (ShapeMismatch, TooSmall, dice_with_grad, loss_dice,
                         loss_l1, loss_overall, loss_ssim, ssim_value,
                         ssim_with_grad)
from snbv.renderer import Observation, rasterize
from snbv.training import TrainConfig

from conftest import random_small_map, small_camera


class TestL1:
    def test_identical(self, rng):
        img = rng.uniform(size=(8, 8, 3))
        assert loss_l1(img, img) == 0.0

    def test_constant_offset(self, rng):
        img = rng.uniform(0.0, 0.8, size=(8, 8, 3))
        assert loss_l1(img + 0.1, img) == pytest.approx(0.1)

    def test_scalar_loop_oracle(self, rng):
        a = rng.uniform(size=(5, 7, 3))
        b = rng.uniform(size=(5, 7, 3))
        acc = 0.0
        for i in range(5):
            for j in range(7):
                for c in range(3):
                    acc += abs(a[i, j, c] - b[i, j, c])
        assert loss_l1(a, b) == pytest.approx(acc / (5 * 7 * 3), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            loss_l1(np.zeros((4, 4)), np.zeros((4, 5)))


def naive_ssim(x, y, size=11, sigma=1.5, c1=1e-4, c2=9e-4):
    """Direct sliding-window oracle, no convolution tricks."""
    off = np.arange(size) - (size - 1) / 2
    k1 = np.exp(-off ** 2 / (2 * sigma ** 2))
    k1 /= k1.sum()
    w = np.outer(k1, k1)
    H, W = x.shape
    vals = []
    for i in range(H - size + 1):
        for j in range(W - size + 1):
            wx = x[i:i + size, j:j + size]
            wy = y[i:i + size, j:j + size]
            mx, my = (w * wx).sum(), (w * wy).sum()
            sx = (w * wx * wx).sum() - mx * mx
            sy = (w * wy * wy).sum() - my * my
            sxy = (w * wx * wy).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * sxy + c2))
                        / ((mx * mx + my * my + c1) * (sx + sy + c2)))
    return float(np.mean(vals))


class TestSSIM:
    def test_identical_is_zero(self, rng):
        img = rng.uniform(size=(16, 16, 3))
        assert loss_ssim(img, img) == pytest.approx(0.0, abs=1e-12)

    def test_inversion_is_worse(self, rng):
        gt = (rng.uniform(size=(16, 16)) > 0.5).astype(float)
        v = loss_ssim(1.0 - gt, gt)
        assert 0.0 < v <= 2.0
        assert v > loss_ssim(gt, gt)

    def test_checkerboard_matches_naive_oracle(self):
        x = np.indices((14, 14)).sum(axis=0) % 2.0
        y = np.full((14, 14), 0.5)
        assert loss_ssim(x, y) == pytest.approx(1.0 - naive_ssim(x, y), abs=1e-6)

    def test_random_matches_naive_oracle(self, rng):
        x = rng.uniform(size=(13, 15))
        y = rng.uniform(size=(13, 15))
        assert loss_ssim(x, y) == pytest.approx(1.0 - naive_ssim(x, y), abs=1e-6)

    def test_too_small(self):
        with pytest.raises(TooSmall):
            loss_ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_gradient_matches_fd(self, rng):
        x = rng.uniform(0.1, 0.9, (16, 16, 3))
        y = rng.uniform(0.1, 0.9, (16, 16, 3))
        _, g = ssim_with_grad(x, y)
        h = 1e-5
        for _ in range(40):
            i, j, c = rng.integers(16), rng.integers(16), rng.integers(3)
            x[i, j, c] += h
            lp = loss_ssim(x, y)
            x[i, j, c] -= 2 * h
            lm = loss_ssim(x, y)
            x[i, j, c] += h
            fd = (lp - lm) / (2 * h)
            if abs(fd) > 1e-6:
                assert g[i, j, c] == pytest.approx(fd, rel=1e-3)


class TestDice:
    def test_perfect_overlap(self, rng):
        g = np.zeros((6, 6, 3))
        g[np.arange(6)[:, None], np.arange(6)[None, :], rng.integers(0, 3, (6, 6))] = 1.0
        assert loss_dice(g, g) == pytest.approx(0.0, abs=1e-6)

    def test_uniform_prediction_against_background(self):
        # soft Dice per the stated formula (squared denominators):
        # class 0: 2*0.5/(0.25+1) = 0.8, class 1: ~0  ->  loss ~ 0.6
        p = np.full((8, 8, 2), 0.5)
        g = np.zeros((8, 8, 2))
        g[:, :, 0] = 1.0
        assert loss_dice(p, g) == pytest.approx(0.6, abs=1e-6)

    def test_disjoint_approaches_one(self):
        p = np.zeros((8, 8, 2))
        p[:, :, 1] = 1.0
        g = np.zeros((8, 8, 2))
        g[:, :, 0] = 1.0
        assert loss_dice(p, g) == pytest.approx(1.0, abs=1e-6)

    def test_gradient_matches_fd(self, rng):
        p = rng.dirichlet(np.ones(4), size=(8, 8))
        g = np.zeros((8, 8, 4))
        g[np.arange(8)[:, None], np.arange(8)[None, :], rng.integers(0, 4, (8, 8))] = 1.0
        _, grad = dice_with_grad(p, g)
        h = 1e-6
        for _ in range(40):
            i, j, c = rng.integers(8), rng.integers(8), rng.integers(4)
            p[i, j, c] += h
            lp = loss_dice(p, g)
            p[i, j, c] -= 2 * h
            lm = loss_dice(p, g)
            p[i, j, c] += h
            fd = (lp - lm) / (2 * h)
            if abs(fd) > 1e-6:
                assert grad[i, j, c] == pytest.approx(fd, rel=1e-3)


class TestLossOverall:
    def test_degenerate_weights_reduce_to_l1(self, rng):
        gmap = random_small_map(rng)
        cam = small_camera()
        out = rasterize(gmap, cam)
        obs = Observation(rgb=rng.uniform(size=out.rgb.shape),
                          mask_onehot=np.zeros_like(out.obj_prob))
        cfg = TrainConfig(lambda_ssim=0.0, lambda_obj=0.0)
        loss, _, _ = loss_overall(out, obs, cfg)
        assert loss == pytest.approx(loss_l1(out.rgb, obs.rgb), abs=1e-12)

    def test_perfect_render_is_zero(self, rng):
        gmap = random_small_map(rng)
        out = rasterize(gmap, small_camera())
        obs = Observation(rgb=out.rgb.copy(), mask_onehot=out.obj_prob.copy())
        loss, _, _ = loss_overall(out, obs, TrainConfig())
        assert loss == pytest.approx(0.0, abs=1e-6)

    def test_compositional_oracle(self, rng):
        gmap = random_small_map(rng, n_objects=2)
        out = rasterize(gmap, small_camera())
        gt_rgb = rng.uniform(size=out.rgb.shape)
        gt_mask = np.zeros_like(out.obj_prob)
        gt_mask[:, :, 0] = 1.0
        obs = Observation(rgb=gt_rgb, mask_onehot=gt_mask)
        cfg = TrainConfig(lambda_ssim=0.3, lambda_obj=0.2, lambda_dice=0.6)
        loss, _, _ = loss_overall(out, obs, cfg)
        manual = (0.7 * loss_l1(out.rgb, gt_rgb)
                  + 0.3 * loss_ssim(out.rgb, gt_rgb)
                  + 0.2 * (0.4 * loss_l1(out.obj_prob, gt_mask)
                           + 0.6 * loss_dice(out.obj_prob, gt_mask)))
        assert loss == pytest.approx(manual, abs=1e-9)

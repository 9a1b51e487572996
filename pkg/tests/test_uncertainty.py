import numpy as np
import pytest

from snbv.geometry import Camera, look_at_pose
from snbv.renderer import GaussianMap, rasterize
from snbv.uncertainty import (HessianBlocks, KindMismatch, LengthMismatch,
                              UnknownTarget, block_len, confidence_weights,
                              jacobian_blocks, jacobian_blocks_all, logdet,
                              logdet_per_gaussian, weighted_accumulate)

from conftest import random_small_map, small_camera


def tiny_camera(size=8, fov=50.0, position=(0.4, -2.2, 1.0)):
    return small_camera(width=size, height=size, fov_deg=fov, position=position)


def fd_jtj(gmap, cam, kind, gidx, h=1e-5):
    """Finite-difference J column by column, then J^T J for one Gaussian."""
    def out_vec():
        out = rasterize(gmap, cam)
        return {"rgb": out.rgb, "depth": out.depth,
                "object": out.obj_prob}[kind].reshape(-1)

    slots = [(gmap.mu, [(gidx, j) for j in range(3)]),
             (gmap.log_scale, [(gidx, j) for j in range(3)]),
             (gmap.rot, [(gidx, j) for j in range(4)]),
             (gmap.opacity_logit, [(gidx,)])]
    if kind == "rgb":
        K = gmap.color.shape[1]
        slots.append((gmap.color, [(gidx, k, c) for k in range(K) for c in range(3)]))
    if kind == "object":
        slots.append((gmap.obj_logits, [(gidx, j)
                                        for j in range(gmap.n_objects + 1)]))
    cols = []
    for arr, idxs in slots:
        for idx in idxs:
            orig = arr[idx]
            arr[idx] = orig + h
            plus = out_vec()
            arr[idx] = orig - h
            minus = out_vec()
            arr[idx] = orig
            cols.append((plus - minus) / (2 * h))
    J = np.stack(cols, axis=1)
    return J.T @ J


class TestJacobianBlocks:
    def test_invisible_gaussian_zero_block(self, rng):
        gmap = random_small_map(rng, n=3)
        gmap.mu[1] = [0.0, -5.0, 0.0]  # behind the camera at (0.3, -2.5, 1.2)
        hb = jacobian_blocks(gmap, small_camera(), "depth")
        assert np.all(hb.blocks[1] == 0.0)

    @pytest.mark.parametrize("kind", ["rgb", "depth", "object"])
    def test_matches_fd_jtj(self, rng, kind):
        gmap = random_small_map(rng, n=2, n_objects=2)
        cam = tiny_camera()
        hb = jacobian_blocks(gmap, cam, kind)
        assert hb.l == block_len(kind, gmap.sh_degree, gmap.n_objects)
        for gidx in range(2):
            ref = fd_jtj(gmap, cam, kind, gidx)
            err = np.linalg.norm(hb.blocks[gidx] - ref)
            assert err < 1e-3 * max(np.linalg.norm(ref), 1e-12)

    def test_resolution_scaling(self, rng):
        # doubling the image resolution roughly quadruples a visible block's trace
        gmap = random_small_map(rng, n=1, spread=0.05)
        gmap.opacity_logit[:] = 1.0
        t8 = np.trace(jacobian_blocks(gmap, tiny_camera(8), "depth").blocks[0])
        t16 = np.trace(jacobian_blocks(gmap, tiny_camera(16), "depth").blocks[0])
        assert 3.0 <= t16 / t8 <= 5.0

    def test_blocks_symmetric_psd(self, rng):
        gmap = random_small_map(rng, n=4, n_objects=3)
        for kind in ("rgb", "depth", "object"):
            hb = jacobian_blocks(gmap, small_camera(), kind)
            sym = np.abs(hb.blocks - np.swapaxes(hb.blocks, 1, 2)).max()
            assert sym < 1e-10
            for b in hb.blocks:
                assert np.linalg.eigvalsh(b)[0] >= -1e-8


class TestConfidenceWeights:
    def test_zero_exponents_recover_unweighted(self, rng):
        gmap = random_small_map(rng, n=6)
        cw = confidence_weights(gmap, 0.0, 0.0)
        np.testing.assert_array_equal(cw.weights, np.ones(6))

    def test_closed_form(self):
        gmap = random_small_map(np.random.default_rng(0), n=1, n_objects=1)
        gmap.obj_logits[0] = [0.0, 0.0]                # p_max = 0.5
        gmap.opacity_logit[0] = np.log(0.25 / 0.75)    # sigma = 0.25
        cw = confidence_weights(gmap, 0.3, 0.3)
        assert cw.weights[0] == pytest.approx(2.0 ** 0.9, rel=1e-9)

    def test_object_mode_zeroes_other_gaussians(self, rng):
        gmap = random_small_map(rng, n=5, n_objects=3)
        gmap.obj_logits[:] = 0.0
        gmap.obj_logits[0, 3] = 4.0   # argmax -> object 3
        gmap.obj_logits[1, 0] = 4.0   # argmax -> background
        gmap.obj_logits[2:, 1] = 4.0  # argmax -> object 1
        cw = confidence_weights(gmap, 0.3, 0.3, target=3)
        assert cw.weights[0] > 0
        assert np.all(cw.weights[1:] == 0.0)

    def test_unknown_target(self, rng):
        with pytest.raises(UnknownTarget):
            confidence_weights(random_small_map(rng, n_objects=2), target=3)

    def test_strictly_decreasing_in_opacity(self, rng):
        gmap = random_small_map(rng, n=1, n_objects=2)
        base = confidence_weights(gmap, 0.4, 0.4).weights[0]
        gmap.opacity_logit[0] += 1.0
        assert confidence_weights(gmap, 0.4, 0.4).weights[0] < base

    def test_strictly_decreasing_in_max_prob(self, rng):
        gmap = random_small_map(rng, n=1, n_objects=2)
        gmap.obj_logits[0] = [0.0, 1.0, 0.0]
        w1 = confidence_weights(gmap, 0.4, 0.0).weights[0]
        gmap.obj_logits[0] = [0.0, 3.0, 0.0]
        w2 = confidence_weights(gmap, 0.4, 0.0).weights[0]
        assert w2 < w1


class TestWeightedAccumulate:
    def _blocks(self, rng, n=3, l=4, kind="depth"):
        b = rng.normal(size=(n, l, l))
        b = np.einsum("nij,nkj->nik", b, b)
        return HessianBlocks(output_kind=kind, blocks=b, l=l)

    def test_identity_weighting(self, rng):
        hb = self._blocks(rng, l=11)
        from snbv.uncertainty import ConfidenceWeights
        conf = ConfidenceWeights(weights=np.ones(3), alpha_obj=0, alpha_opa=0)
        out = weighted_accumulate([hb], conf)
        np.testing.assert_array_equal(out.blocks, hb.blocks)

    def test_two_views_double(self, rng):
        hb = self._blocks(rng, l=11)
        out = weighted_accumulate([hb, hb])
        np.testing.assert_allclose(out.blocks, 2.0 * hb.blocks, atol=1e-15)

    def test_explicit_matrix_oracle(self, rng):
        # c_g-scaled J^T J assembled from an explicit Jacobian on 2 Gaussians
        gmap = random_small_map(rng, n=2, n_objects=2)
        cam = tiny_camera()
        hb = jacobian_blocks(gmap, cam, "depth")
        from snbv.uncertainty import ConfidenceWeights
        w = np.array([0.5, 2.0])
        conf = ConfidenceWeights(weights=w, alpha_obj=0, alpha_opa=0)
        out = weighted_accumulate([hb], conf)
        for g in range(2):
            ref = w[g] * fd_jtj(gmap, cam, "depth", g)
            assert np.linalg.norm(out.blocks[g] - ref) < 1e-3 * max(np.linalg.norm(ref), 1e-10)

    def test_kind_and_length_mismatch(self, rng):
        a = self._blocks(rng, kind="depth", l=11)
        b = self._blocks(rng, kind="rgb", l=11)
        with pytest.raises(KindMismatch):
            weighted_accumulate([a, b])
        c = self._blocks(rng, n=4, l=11)
        with pytest.raises(LengthMismatch):
            weighted_accumulate([a, c])


class TestLogdet:
    def test_ridge_only(self):
        hb = HessianBlocks(output_kind="depth", blocks=np.zeros((5, 11, 11)), l=11)
        assert logdet(hb, ridge=1e-6) == pytest.approx(5 * 11 * np.log(1e-6), rel=1e-12)

    def test_diagonal_toy(self):
        hb = HessianBlocks(output_kind="depth",
                           blocks=np.diag([1.0, 2.0, 4.0])[None], l=3)
        assert logdet(hb, ridge=1e-12) == pytest.approx(np.log(8.0), abs=1e-9)

    def test_dense_block_diagonal_oracle(self, rng):
        gmap = random_small_map(rng, n=3, n_objects=2)
        hb = jacobian_blocks(gmap, tiny_camera(), "object")
        ridge = 1e-6
        dense = np.zeros((3 * hb.l, 3 * hb.l))
        for g in range(3):
            dense[g * hb.l:(g + 1) * hb.l, g * hb.l:(g + 1) * hb.l] = \
                hb.blocks[g] + ridge * np.eye(hb.l)
        ref = np.linalg.slogdet(dense)[1]
        assert logdet(hb, ridge) == pytest.approx(ref, abs=1e-8)

    def test_monotone_in_psd_additions(self, rng):
        a = rng.normal(size=(4, 6, 6))
        a = np.einsum("nij,nkj->nik", a, a)
        b = rng.normal(size=(4, 6, 6))
        b = np.einsum("nij,nkj->nik", b, b)
        ha = HessianBlocks(output_kind="rgb", blocks=a, l=6)
        hab = HessianBlocks(output_kind="rgb", blocks=a + b, l=6)
        assert logdet(hab, 1e-6) >= logdet(ha, 1e-6) - 1e-9

    def test_positive_ridge_required(self):
        hb = HessianBlocks(output_kind="depth", blocks=np.zeros((1, 11, 11)), l=11)
        with pytest.raises(ValueError):
            logdet(hb, ridge=0.0)

    def test_per_gaussian_sum_matches(self, rng):
        gmap = random_small_map(rng, n=4)
        hb = jacobian_blocks(gmap, tiny_camera(), "depth")
        per = logdet_per_gaussian(hb, 1e-6)
        assert per.sum() == pytest.approx(logdet(hb, 1e-6), rel=1e-12)


def test_jacobian_blocks_all_consistent(rng):
    gmap = random_small_map(rng, n=4, n_objects=2)
    cam = tiny_camera()
    all_kinds = jacobian_blocks_all(gmap, cam)
    for kind in ("rgb", "depth", "object"):
        single = jacobian_blocks(gmap, cam, kind)
        np.testing.assert_array_equal(all_kinds[kind].blocks, single.blocks)

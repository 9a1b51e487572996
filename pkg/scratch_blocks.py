"""Scratch: Jacobian blocks vs finite-difference J^T J on a tiny scene."""
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.geometry import Camera, look_at_pose
from snbv.renderer import GaussianMap, rasterize
from snbv.uncertainty import jacobian_blocks
from snbv.sh import n_coeffs


def random_map(rng, N=2, n_objects=2, sh_degree=0):
    K = n_coeffs(sh_degree)
    return GaussianMap(
        mu=rng.normal(0, 0.25, (N, 3)),
        log_scale=rng.normal(np.log(0.3), 0.2, (N, 3)),
        rot=rng.normal(0, 1, (N, 4)),
        opacity_logit=rng.normal(0.5, 0.7, N),
        color=rng.normal(0, 1.0, (N, K, 3)),
        obj_logits=rng.normal(0, 1.0, (N, n_objects + 1)),
        n_objects=n_objects, sh_degree=sh_degree,
    )


def make_cam(H=8, W=8):
    pose = look_at_pose([0.4, -2.2, 1.0], [0, 0, 0])
    f = W / (2 * np.tan(np.deg2rad(25)))
    return Camera(width=W, height=H, fx=f, fy=f, cx=W / 2, cy=H / 2, pose=pose)


def output_of(gmap, cam, kind):
    out = rasterize(gmap, cam)
    if kind == "rgb":
        return out.rgb.reshape(-1)
    if kind == "depth":
        return out.depth.reshape(-1)
    return out.obj_prob.reshape(-1)


def params_of(gmap, gidx, kind):
    # views into the parameter arrays, in block layout order
    base = [(gmap.mu, gidx), (gmap.log_scale, gidx), (gmap.rot, gidx)]
    flats = [gmap.mu[gidx], gmap.log_scale[gidx], gmap.rot[gidx]]
    vecs = [("mu", 3), ("ls", 3), ("rot", 4), ("op", 1)]
    if kind == "rgb":
        vecs.append(("color", gmap.color.shape[1] * 3))
    if kind == "object":
        vecs.append(("obj", gmap.n_objects + 1))
    return vecs


def fd_block(gmap, cam, gidx, kind, h=1e-5):
    cols = []
    specs = params_of(gmap, gidx, kind)
    for name, size in specs:
        for j in range(size):
            if name == "mu":
                arr, idx = gmap.mu, (gidx, j)
            elif name == "ls":
                arr, idx = gmap.log_scale, (gidx, j)
            elif name == "rot":
                arr, idx = gmap.rot, (gidx, j)
            elif name == "op":
                arr, idx = gmap.opacity_logit, (gidx,)
            elif name == "color":
                arr, idx = gmap.color, (gidx, j // 3, j % 3)
            else:
                arr, idx = gmap.obj_logits, (gidx, j)
            orig = arr[idx]
            arr[idx] = orig + h
            op = output_of(gmap, cam, kind)
            arr[idx] = orig - h
            om = output_of(gmap, cam, kind)
            arr[idx] = orig
            cols.append((op - om) / (2 * h))
    J = np.stack(cols, axis=1)
    return J.T @ J


rng = np.random.default_rng(11)
for kind in ("rgb", "depth", "object"):
    gmap = random_map(rng)
    cam = make_cam()
    hb = jacobian_blocks(gmap, cam, kind)
    worst = 0
    for gidx in range(len(gmap)):
        ref = fd_block(gmap, cam, gidx, kind)
        got = hb.blocks[gidx]
        err = np.linalg.norm(got - ref) / max(np.linalg.norm(ref), 1e-12)
        worst = max(worst, err)
    print(f"{kind}: worst Frobenius rel err {worst:.3e}")

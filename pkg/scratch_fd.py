"""Scratch: finite-difference check of the renderer backward pass."""
import numpy as np
import sys
sys.path.insert(0, "src")

from snbv.geometry import Camera, look_at_pose
from snbv.renderer import GaussianMap, build_splat_context, context_outputs, backward_into_grads, rasterize, Observation, render_gradients
from snbv.sh import n_coeffs


def random_map(rng, N=5, n_objects=2, sh_degree=0):
    K = n_coeffs(sh_degree)
    return GaussianMap(
        mu=rng.normal(0, 0.3, (N, 3)) + np.array([0, 0, 0.0]),
        log_scale=rng.normal(np.log(0.25), 0.3, (N, 3)),
        rot=rng.normal(0, 1, (N, 4)),
        opacity_logit=rng.normal(0.5, 1.0, N),
        color=rng.normal(0, 1.0, (N, K, 3)),
        obj_logits=rng.normal(0, 1.0, (N, n_objects + 1)),
        n_objects=n_objects, sh_degree=sh_degree,
    )


def make_cam(H=16, W=16):
    pose = look_at_pose([0.3, -2.5, 1.2], [0, 0, 0])
    f = W / (2 * np.tan(np.deg2rad(25)))
    return Camera(width=W, height=H, fx=f, fy=f, cx=W / 2, cy=H / 2, pose=pose)


def loss_fn(gmap, cam, Wr, Wd, Wo):
    out = rasterize(gmap, cam)
    return float(np.sum(out.rgb * Wr) + np.sum(out.depth * Wd) + np.sum(out.obj_prob * Wo))


def main():
    rng = np.random.default_rng(3)
    for sh_degree in (0, 3):
        gmap = random_map(rng, sh_degree=sh_degree)
        cam = make_cam()
        Wr = rng.normal(0, 1, (16, 16, 3))
        Wd = rng.normal(0, 1, (16, 16))
        Wo = rng.normal(0, 1, (16, 16, 3))

        ctx = build_splat_context(gmap, cam, with_chain=True)
        grads = backward_into_grads(ctx, d_rgb=Wr, d_depth=Wd, d_obj=Wo)

        h = 1e-5
        worst = 0.0
        for gidx in range(len(gmap)):
            for name, arr in (("mu", gmap.mu), ("log_scale", gmap.log_scale),
                              ("rot", gmap.rot), ("color", gmap.color),
                              ("obj", gmap.obj_logits)):
                ana = getattr(grads, {"obj": "obj_logits"}.get(name, name))[gidx]
                flat = arr[gidx].reshape(-1)
                ana = np.asarray(ana).reshape(-1)
                for j in range(flat.size):
                    orig = flat[j]
                    flat[j] = orig + h
                    lp = loss_fn(gmap, cam, Wr, Wd, Wo)
                    flat[j] = orig - h
                    lm = loss_fn(gmap, cam, Wr, Wd, Wo)
                    flat[j] = orig
                    fd = (lp - lm) / (2 * h)
                    if abs(ana[j]) > 1e-6 or abs(fd) > 1e-6:
                        rel = abs(ana[j] - fd) / max(abs(fd), abs(ana[j]), 1e-9)
                        if rel > worst:
                            worst = rel
                            print(f"d={sh_degree} g={gidx} {name}[{j}] ana={ana[j]:.6g} fd={fd:.6g} rel={rel:.2e}")
            # opacity
            orig = gmap.opacity_logit[gidx]
            gmap.opacity_logit[gidx] = orig + h
            lp = loss_fn(gmap, cam, Wr, Wd, Wo)
            gmap.opacity_logit[gidx] = orig - h
            lm = loss_fn(gmap, cam, Wr, Wd, Wo)
            gmap.opacity_logit[gidx] = orig
            fd = (lp - lm) / (2 * h)
            ana = grads.opacity_logit[gidx]
            if abs(ana) > 1e-6 or abs(fd) > 1e-6:
                rel = abs(ana - fd) / max(abs(fd), abs(ana), 1e-9)
                if rel > worst:
                    worst = rel
                    print(f"d={sh_degree} g={gidx} opacity ana={ana:.6g} fd={fd:.6g} rel={rel:.2e}")
        print(f"sh_degree={sh_degree}: worst rel err {worst:.3e}")


if __name__ == "__main__":
    main()

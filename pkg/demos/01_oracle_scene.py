"""Generate a synthetic tabletop scene and render ground truth for one view.

The oracle is a tiny analytic ray tracer: spheres, axis-aligned boxes and a
ground plane, one ray per pixel, Lambertian shading. It supplies the RGB,
depth and instance-mask images that every experiment trains against.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np

from snbv import generate_scene, oracle_render, sample_candidate_views, save_scene
from snbv.imgio import write_pfm, write_pgm, write_ppm

out_dir = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(out_dir, exist_ok=True)

scene = generate_scene(seed=11, n_objects=6, difficulty=0.8)
print(f"scene: {len(scene.primitives)} primitives, bounds\n{scene.bounds}")
for p in scene.primitives:
    size = p.radius if p.shape == "sphere" else p.half_extents
    print(f"  object {p.object_id}: {p.shape:6s} at {np.round(p.center, 3)} size {np.round(size, 3)}")

views = sample_candidate_views(scene.centroid, radius=1.55, n_spiral=8,
                               n_random=0, seed=0, width=96, height=96)
cam = views.views[1].camera
img = oracle_render(scene, cam)

print(f"\nview 1: {np.sum(img.mask > 0)} object pixels, "
      f"depth range [{img.depth[img.mask > 0].min():.2f}, {img.depth.max():.2f}]")

save_scene(scene, os.path.join(out_dir, "scene.json"))
write_ppm(os.path.join(out_dir, "oracle_rgb.ppm"), img.rgb)
write_pfm(os.path.join(out_dir, "oracle_depth.pfm"), img.depth)
write_pgm(os.path.join(out_dir, "oracle_mask.pgm"), img.mask)
print(f"wrote scene.json + oracle images to {out_dir}")

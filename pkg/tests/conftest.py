import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

import numpy as np
import pytest

from snbv.geometry import Camera, look_at_pose
from snbv.renderer import GaussianMap
from snbv.sh import n_coeffs


def small_camera(width=16, height=16, fov_deg=50.0,
                 position=(0.3, -2.5, 1.2), target=(0.0, 0.0, 0.0)) -> Camera:
    pose = look_at_pose(position, target)
    f = width / (2.0 * np.tan(np.deg2rad(fov_deg) / 2.0))
    return Camera(width=width, height=height, fx=f, fy=f,
                  cx=width / 2.0, cy=height / 2.0, pose=pose)


def random_small_map(rng, n=5, n_objects=2, sh_degree=0, spread=0.3) -> GaussianMap:
    K = n_coeffs(sh_degree)
    return GaussianMap(
        mu=rng.normal(0.0, spread, (n, 3)),
        log_scale=rng.normal(np.log(0.25), 0.3, (n, 3)),
        rot=rng.normal(0.0, 1.0, (n, 4)),
        opacity_logit=rng.normal(0.5, 1.0, n),
        color=rng.normal(0.0, 1.0, (n, K, 3)),
        obj_logits=rng.normal(0.0, 1.0, (n, n_objects + 1)),
        n_objects=n_objects, sh_degree=sh_degree,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

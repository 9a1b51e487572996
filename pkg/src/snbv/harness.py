"""Synthetic ground truth: primitive scenes, a ray-traced oracle, view sampling.

The oracle shoots one primary ray per pixel (through the pixel center),
intersects spheres, axis-aligned boxes and the optional ground plane, and
shades Lambertian: albedo * (ambient + max(0, normal . light)). Background
pixels (plane hits and misses) get the configured background color, matching
the training convention; missed rays carry a depth-0 sentinel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Camera, look_at_pose
from .losses import ShapeMismatch, ssim_value
from .renderer import Observation, RenderOutput

DEFAULT_AMBIENT = 0.35
RAY_EPS = 1e-9


class NoObjectPixels(Exception):
    """Ground-truth mask contains no foreground pixels."""


@dataclass
class Primitive:
    shape: str                     # "sphere" | "box"
    center: np.ndarray             # (3,)
    albedo: np.ndarray             # (3,)
    object_id: int
    radius: Optional[float] = None          # spheres
    half_extents: Optional[np.ndarray] = None  # boxes

    def __post_init__(self):
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"unknown primitive shape {self.shape!r}")
        self.center = np.asarray(self.center, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if self.shape == "sphere" and (self.radius is None or self.radius <= 0):
            raise ValueError("sphere needs a positive radius")
        if self.shape == "box":
            self.half_extents = np.asarray(self.half_extents, dtype=np.float64)
            if np.any(self.half_extents <= 0):
                raise ValueError("box needs positive half extents")


@dataclass
class PrimitiveScene:
    primitives: list[Primitive]
    n_objects: int
    bounds: np.ndarray = field(
        default_factory=lambda: np.array([[-0.75, -0.75, 0.0], [0.75, 0.75, 0.8]]))
    ground_albedo: Optional[np.ndarray] = None  # None disables the plane
    light_dir: np.ndarray = field(
        default_factory=lambda: np.array([0.35, 0.2, 0.91]))
    ambient: float = DEFAULT_AMBIENT
    background_color: np.ndarray = field(default_factory=lambda: np.full(3, 0.25))

    def __post_init__(self):
        self.bounds = np.asarray(self.bounds, dtype=np.float64)
        self.light_dir = np.asarray(self.light_dir, dtype=np.float64)
        self.light_dir = self.light_dir / np.linalg.norm(self.light_dir)
        self.background_color = np.asarray(self.background_color, dtype=np.float64)
        if self.ground_albedo is not None:
            self.ground_albedo = np.asarray(self.ground_albedo, dtype=np.float64)
        ids = sorted(p.object_id for p in self.primitives)
        if ids != list(range(1, self.n_objects + 1)):
            raise ValueError("object ids must form a contiguous 1..n set")

    @property
    def centroid(self) -> np.ndarray:
        return np.mean([p.center for p in self.primitives], axis=0)

    @property
    def extent(self) -> float:
        lo, hi = self.bounds
        return 0.5 * float(np.linalg.norm(hi - lo))


@dataclass
class OracleImages:
    rgb: np.ndarray    # (H, W, 3)
    depth: np.ndarray  # (H, W), camera-z depth, 0 where nothing was hit
    mask: np.ndarray   # (H, W) int object ids, 0 = background

    def as_observation(self, n_objects: int) -> Observation:
        H, W = self.mask.shape
        onehot = np.zeros((H, W, n_objects + 1))
        np.put_along_axis(onehot, self.mask[:, :, None], 1.0, axis=2)
        return Observation(rgb=self.rgb, mask_onehot=onehot, depth=self.depth)


def _hsv_color(i: int, n: int) -> np.ndarray:
    h = (i / max(n, 1)) * 6.0
    s, v = 0.75, 0.72
    c = v * s
    xx = c * (1 - abs(h % 2 - 1))
    sector = int(h) % 6
    r, g, b = [(c, xx, 0), (xx, c, 0), (0, c, xx), (0, xx, c), (xx, 0, c), (c, 0, xx)][sector]
    m = v - c
    return np.array([r + m, g + m, b + m])


def generate_scene(seed: int, n_objects: int, difficulty: float = 0.5,
                   corner_layout: bool = False) -> PrimitiveScene:
    """Seeded placement of spheres and boxes on and above the ground plane.

    difficulty in [0, 1] controls clutter: above zero, tall box occluders
    appear and short objects are tucked against them or stacked on others,
    producing view-dependent occlusion pockets; 0 guarantees horizontally
    separated primitives. corner_layout pins the first four objects near the
    four horizontal corners (spatially distant targets for the object-centric
    study) and keeps the rest central.
    """
    if not 2 <= n_objects <= 12:
        raise ValueError("n_objects must lie in [2, 12]")
    rng = np.random.default_rng((seed, 701))
    prims: list[Primitive] = []
    tall: list[Primitive] = []
    for oid in range(1, n_objects + 1):
        albedo = _hsv_color(oid - 1, n_objects)
        make_tall = (not corner_layout and difficulty > 0 and prims
                     and len(tall) < 1 + int(2 * difficulty)
                     and rng.random() < 0.45 * difficulty)
        if make_tall:
            size = rng.uniform(0.10, 0.15)
        else:
            size = rng.uniform(0.11, 0.15 + 0.07 * difficulty)
        shape = "box" if make_tall else ("sphere" if rng.random() < 0.5 else "box")
        placed = False
        for _ in range(60):
            mode = "ground"
            if corner_layout and oid <= 4:
                cx, cy = [(-0.5, -0.5), (0.5, -0.5), (-0.5, 0.5), (0.5, 0.5)][oid - 1]
                x = cx + rng.uniform(-0.06, 0.06)
                y = cy + rng.uniform(-0.06, 0.06)
            elif corner_layout:
                x, y = rng.uniform(-0.18, 0.18, 2)
            elif not make_tall and difficulty > 0 and prims:
                u = rng.random()
                if tall and u < 0.45 * difficulty:
                    # tuck a short object against a tall occluder
                    mode = "tuck"
                    base = tall[int(rng.integers(len(tall)))]
                    ang = rng.uniform(0, 2 * np.pi)
                    gap = float(np.max(base.half_extents[:2])) + size + rng.uniform(0.0, 0.05)
                    x = base.center[0] + gap * np.cos(ang)
                    y = base.center[1] + gap * np.sin(ang)
                elif u < 0.45 * difficulty + 0.25 * difficulty:
                    mode = "stack"
                    base = prims[int(rng.integers(len(prims)))]
                    x = base.center[0] + rng.uniform(-0.05, 0.05)
                    y = base.center[1] + rng.uniform(-0.05, 0.05)
                else:
                    x, y = rng.uniform(-0.52, 0.52, 2)
            else:
                x, y = rng.uniform(-0.52, 0.52, 2)
            if abs(x) > 0.58 or abs(y) > 0.58:
                continue
            if mode == "stack":
                top = base.center[2] + (base.radius if base.shape == "sphere"
                                        else base.half_extents[2])
                z = top + size * 0.9
            else:
                z = size
            ok = True
            if difficulty == 0:
                for p in prims:
                    other = p.radius if p.shape == "sphere" else float(np.max(p.half_extents[:2]))
                    if np.hypot(x - p.center[0], y - p.center[1]) <= size + other:
                        ok = False
                        break
            if ok:
                placed = True
                break
        if not placed:
            x, y = rng.uniform(-0.52, 0.52, 2)
            z = size
        if make_tall:
            he = np.array([size, size * rng.uniform(0.8, 1.4),
                           rng.uniform(0.28, 0.30 + 0.15 * difficulty)])
            prim = Primitive(shape="box", center=(x, y, he[2]), half_extents=he,
                             albedo=albedo, object_id=oid)
            tall.append(prim)
        elif shape == "sphere":
            prim = Primitive(shape="sphere", center=(x, y, z), radius=size,
                             albedo=albedo, object_id=oid)
        else:
            he = np.array([size, size * rng.uniform(0.7, 1.3),
                           size * rng.uniform(0.7, 1.3)])
            prim = Primitive(shape="box", center=(x, y, max(z, he[2])),
                             half_extents=he, albedo=albedo, object_id=oid)
        prims.append(prim)
    zmax = max(p.center[2] + (p.radius if p.shape == "sphere" else p.half_extents[2])
               for p in prims)
    bounds = np.array([[-0.75, -0.75, 0.0], [0.75, 0.75, max(zmax + 0.1, 0.5)]])
    return PrimitiveScene(primitives=prims, n_objects=n_objects, bounds=bounds,
                          ground_albedo=np.array([0.45, 0.42, 0.4]))


def oracle_render(scene: PrimitiveScene, cam: Camera) -> OracleImages:
    """One primary ray per pixel center; nearest hit, Lambertian shading."""
    H, W = cam.height, cam.width
    jj, ii = np.meshgrid(np.arange(W), np.arange(H))
    dirs_cam = np.stack([
        (jj + 0.5 - cam.cx) / cam.fx,
        (ii + 0.5 - cam.cy) / cam.fy,
        np.ones((H, W)),
    ], axis=-1).reshape(-1, 3)
    dirs = dirs_cam @ cam.rotation.T
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    origin = cam.position

    P = dirs.shape[0]
    best_t = np.full(P, np.inf)
    hit_id = np.zeros(P, dtype=np.int64)
    normal = np.zeros((P, 3))
    albedo = np.zeros((P, 3))

    def update(t, mask, nrm, alb, oid):
        better = mask & (t < best_t)
        if not np.any(better):
            return
        best_t[better] = t[better]
        hit_id[better] = oid
        normal[better] = nrm[better] if nrm.ndim == 2 else nrm
        albedo[better] = alb

    for p in scene.primitives:
        if p.shape == "sphere":
            oc = origin - p.center
            b = 2.0 * dirs @ oc
            c = oc @ oc - p.radius ** 2
            disc = b * b - 4 * c
            ok = disc > 0
            sq = np.sqrt(np.maximum(disc, 0))
            t0 = (-b - sq) / 2
            t1 = (-b + sq) / 2
            t = np.where(t0 > RAY_EPS, t0, t1)
            ok &= t > RAY_EPS
            pts = origin + t[:, None] * dirs
            nrm = (pts - p.center) / p.radius
            update(t, ok, nrm, p.albedo, p.object_id)
        else:
            lo = p.center - p.half_extents
            hi = p.center + p.half_extents
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - origin) / dirs
                t2 = (hi - origin) / dirs
            tmin = np.minimum(t1, t2)
            tmax = np.maximum(t1, t2)
            tnear = np.nanmax(tmin, axis=1)
            tfar = np.nanmin(tmax, axis=1)
            ok = (tnear <= tfar) & (tfar > RAY_EPS)
            t = np.where(tnear > RAY_EPS, tnear, tfar)
            axis = np.argmax(np.where(tmin == tnear[:, None], 1, 0), axis=1)
            nrm = np.zeros((P, 3))
            nrm[np.arange(P), axis] = -np.sign(dirs[np.arange(P), axis])
            update(t, ok, nrm, p.albedo, p.object_id)

    if scene.ground_albedo is not None:
        dz = dirs[:, 2]
        with np.errstate(divide="ignore"):
            t = -origin[2] / dz
        ok = (np.abs(dz) > RAY_EPS) & (t > RAY_EPS)
        nrm = np.zeros((P, 3))
        nrm[:, 2] = 1.0
        update(t, ok, nrm, scene.ground_albedo, 0)

    hit = np.isfinite(best_t)
    shade = scene.ambient + np.maximum(0.0, normal @ scene.light_dir)
    rgb = np.where(hit[:, None], albedo * shade[:, None], 0.0)
    rgb = np.clip(rgb, 0.0, 1.0)
    bgmask = (hit_id == 0)
    rgb[bgmask] = scene.background_color

    pts = origin + np.where(hit, best_t, 0.0)[:, None] * dirs
    depth = ((pts - origin) @ cam.rotation)[:, 2]
    depth = np.where(hit, depth, 0.0)

    return OracleImages(rgb=rgb.reshape(H, W, 3), depth=depth.reshape(H, W),
                        mask=hit_id.reshape(H, W))


@dataclass
class ViewSpec:
    """Look-at camera description, serializable to the view-file schema."""

    id: int
    position: np.ndarray
    look_at: np.ndarray
    up: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.look_at = np.asarray(self.look_at, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)

    @property
    def camera(self) -> Camera:
        pose = look_at_pose(self.position, self.look_at, self.up)
        return Camera(width=self.width, height=self.height, fx=self.fx,
                      fy=self.fy, cx=self.cx, cy=self.cy, pose=pose)

    def to_dict(self) -> dict:
        return {"id": self.id, "position": self.position.tolist(),
                "look_at": self.look_at.tolist(), "up": self.up.tolist(),
                "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}


@dataclass
class ViewSet:
    views: list[ViewSpec]
    role: str  # training | candidate | test

    def __post_init__(self):
        ids = [v.id for v in self.views]
        if len(set(ids)) != len(ids):
            raise ValueError("view ids must be unique")

    def __len__(self) -> int:
        return len(self.views)

    @property
    def ids(self) -> list[int]:
        return [v.id for v in self.views]

    def get(self, view_id: int) -> ViewSpec:
        for v in self.views:
            if v.id == view_id:
                return v
        raise KeyError(f"no view with id {view_id}")

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump([v.to_dict() for v in self.views], fh, indent=1)

    @classmethod
    def load(cls, path, role: str = "candidate") -> "ViewSet":
        with open(path) as fh:
            raw = json.load(fh)
        return cls(views=[ViewSpec(**d) for d in raw], role=role)


def _intrinsics(width: int, height: int, fov_deg: float):
    f = width / (2.0 * np.tan(np.deg2rad(fov_deg) / 2.0))
    return dict(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0,
                width=width, height=height)


def sample_candidate_views(centroid, radius: float, n_spiral: int, n_random: int,
                           seed: int, elevation_deg: float = 35.0,
                           width: int = 64, height: int = 64,
                           fov_deg: float = 50.0, role: str = "candidate",
                           id_offset: int = 0) -> ViewSet:
    """Spiral ring (even longitudes at fixed latitude) plus seeded random views.

    Random views are area-uniform over the upper-hemisphere cap with elevation
    in [15, 75] degrees. All cameras sit on the sphere and look at the centroid.
    """
    centroid = np.asarray(centroid, dtype=np.float64)
    rng = np.random.default_rng((seed, 409))
    intr = _intrinsics(width, height, fov_deg)
    views = []
    el = np.deg2rad(elevation_deg)
    for k in range(n_spiral):
        lon = 2.0 * np.pi * k / n_spiral
        pos = centroid + radius * np.array([
            np.cos(el) * np.cos(lon), np.cos(el) * np.sin(lon), np.sin(el)])
        views.append(ViewSpec(id=id_offset + k, position=pos, look_at=centroid,
                              up=(0, 0, 1), **intr))
    smin, smax = np.sin(np.deg2rad(15.0)), np.sin(np.deg2rad(75.0))
    for k in range(n_random):
        s = rng.uniform(smin, smax)
        lon = rng.uniform(0.0, 2.0 * np.pi)
        el_r = np.arcsin(s)
        pos = centroid + radius * np.array([
            np.cos(el_r) * np.cos(lon), np.cos(el_r) * np.sin(lon), np.sin(el_r)])
        views.append(ViewSpec(id=id_offset + n_spiral + k, position=pos,
                              look_at=centroid, up=(0, 0, 1), **intr))
    return ViewSet(views=views, role=role)


def metrics(pred: RenderOutput, gt: OracleImages) -> dict:
    """PSNR / SSIM on RGB plus depth MAE over ground-truth object pixels."""
    if pred.rgb.shape != gt.rgb.shape:
        raise ShapeMismatch(f"{pred.rgb.shape} vs {gt.rgb.shape}")
    mse = float(np.mean((pred.rgb - gt.rgb) ** 2))
    psnr = 99.0 if mse < 1e-12 else min(10.0 * np.log10(1.0 / mse), 99.0)
    ssim = ssim_value(pred.rgb, gt.rgb)
    obj = gt.mask != 0
    if not np.any(obj):
        raise NoObjectPixels("mask is entirely background")
    mae = float(np.mean(np.abs(pred.depth[obj] - gt.depth[obj])))
    return {"psnr": float(psnr), "ssim": float(ssim), "depth_mae": mae}


def save_scene(scene: PrimitiveScene, path) -> None:
    prims = []
    for p in scene.primitives:
        d = {"shape": p.shape, "center": p.center.tolist(),
             "albedo": p.albedo.tolist(), "object_id": p.object_id}
        if p.shape == "sphere":
            d["radius"] = p.radius
        else:
            d["half_extents"] = p.half_extents.tolist()
        prims.append(d)
    doc = {
        "n_objects": scene.n_objects,
        "background_color": scene.background_color.tolist(),
        "primitives": prims,
        "light_dir": scene.light_dir.tolist(),
        # extra keys beyond the minimal schema; loaders may omit them
        "ambient": scene.ambient,
        "bounds": scene.bounds.tolist(),
        "ground_albedo": None if scene.ground_albedo is None else scene.ground_albedo.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_scene(path) -> PrimitiveScene:
    with open(path) as fh:
        doc = json.load(fh)
    prims = [Primitive(shape=d["shape"], center=d["center"], albedo=d["albedo"],
                       object_id=d["object_id"], radius=d.get("radius"),
                       half_extents=d.get("half_extents"))
             for d in doc["primitives"]]
    kwargs = {}
    if "bounds" in doc:
        kwargs["bounds"] = np.asarray(doc["bounds"])
    if doc.get("ground_albedo") is not None:
        kwargs["ground_albedo"] = np.asarray(doc["ground_albedo"])
    if "ambient" in doc:
        kwargs["ambient"] = doc["ambient"]
    return PrimitiveScene(primitives=prims, n_objects=doc["n_objects"],
                          light_dir=np.asarray(doc["light_dir"]),
                          background_color=np.asarray(doc["background_color"]),
                          **kwargs)

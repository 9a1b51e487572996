"""Experiment orchestration: policy sweeps, result tables, image dumps.

Subcommands:
  run          policy x seed sweep on one scene; metrics.csv + gains.json
  object-study whole-scene vs object-centric runs on a corner-layout scene
  convergence  metrics as the final view count grows

Outputs are plain CSV/JSON; every output directory gets a config echo so any
artifact can be reproduced from it. SNBV_THREADS caps worker processes.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing as mp
import os
import sys
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .harness import PrimitiveScene, generate_scene, load_scene, oracle_render
from .imgio import write_pfm, write_pgm, write_ppm
from .nbv import NBVConfig, NBVRun, RunSetup, run_nbv, evaluate_map, _view_lists
from .renderer import rasterize
from .training import TrainConfig, load_map, save_map

CORNER_LABELS = {1: "SW", 2: "SE", 3: "NW", 4: "NE"}


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    scene_seed: int = 0
    scene_file: str = ""
    n_objects: int = 7
    difficulty: float = 0.9
    corner_layout: bool = False
    policies: list = field(default_factory=lambda: ["ours"])
    seeds: list = field(default_factory=lambda: [1])
    init_views: int = 4
    add_views: int = 6
    image_size: int = 64
    candidates_spiral: int = 48
    candidates_random: int = 16
    n_test: int = 20
    radius: float = 1.55
    fov_deg: float = 45.0
    target_object: int = -1  # -1 = whole scene
    beta_d: float = 10.0
    beta_o: float = 1.0
    alpha_obj: float = 0.3
    alpha_opa: float = 0.3
    ridge: float = 1e-6
    n_gaussians: int = 2000
    max_gaussians: int = 4000
    densify_threshold: float = 2e-4
    out: str = "out"
    save_images: bool = False
    save_map: bool = False
    load_map: str = ""
    view_counts: list = field(default_factory=lambda: list(range(5, 13)))

    def scene(self) -> PrimitiveScene:
        if self.scene_file:
            if not os.path.exists(self.scene_file):
                raise ConfigError(f"scene file not found: {self.scene_file}")
            return load_scene(self.scene_file)
        return generate_scene(self.scene_seed, self.n_objects, self.difficulty,
                              corner_layout=self.corner_layout)

    def setup(self, policy: str, seed: int, add_views=None, target=None) -> RunSetup:
        nbv = NBVConfig(policy=policy, seed=seed,
                        beta_d=self.beta_d, beta_o=self.beta_o,
                        alpha_obj=self.alpha_obj, alpha_opa=self.alpha_opa,
                        target=target if target is not None else (
                            None if self.target_object < 0 else self.target_object),
                        init_views=self.init_views,
                        add_views=self.add_views if add_views is None else add_views,
                        ridge=self.ridge)
        train = TrainConfig(seed=seed, n_init_gaussians=self.n_gaussians,
                            max_gaussians=self.max_gaussians,
                            densify_grad_threshold=self.densify_threshold)
        return RunSetup(nbv=nbv, train=train, image_size=self.image_size,
                        fov_deg=self.fov_deg, n_spiral=self.candidates_spiral,
                        n_random=self.candidates_random, radius=self.radius,
                        n_test=self.n_test)

    def echo(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _parse_config_file(path: str) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{ln}: expected 'key = value'")
            k, v = (s.strip() for s in line.split("=", 1))
            out[k] = v
    return out


_INT_LIST = ("seeds", "view_counts")
_STR_LIST = ("policies",)
_BOOLS = ("corner_layout", "save_images", "save_map")


def _coerce(cfg: ExperimentConfig, key: str, raw) -> None:
    if not hasattr(cfg, key):
        raise ConfigError(f"unknown config key: {key}")
    if key in _INT_LIST:
        val = [int(x) for x in str(raw).split(",") if x != ""]
    elif key in _STR_LIST:
        val = [x.strip() for x in str(raw).split(",") if x.strip()]
    elif key in _BOOLS:
        val = str(raw).lower() in ("1", "true", "yes", "on")
    else:
        cur = getattr(cfg, key)
        val = type(cur)(raw) if not isinstance(cur, str) else str(raw)
    setattr(cfg, key, val)


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if args.config:
        for k, v in _parse_config_file(args.config).items():
            _coerce(cfg, k, v)
    flag_map = {
        "scene_seed": "scene_seed", "scene_file": "scene_file",
        "n_objects": "n_objects", "difficulty": "difficulty",
        "corner_layout": "corner_layout", "policy": "policies",
        "seeds": "seeds", "init_views": "init_views", "add_views": "add_views",
        "image_size": "image_size", "candidates_spiral": "candidates_spiral",
        "candidates_random": "candidates_random", "n_test": "n_test",
        "radius": "radius", "fov": "fov_deg",
        "target_object": "target_object", "beta_d": "beta_d",
        "beta_o": "beta_o", "alpha_obj": "alpha_obj", "alpha_opa": "alpha_opa",
        "ridge": "ridge", "n_gaussians": "n_gaussians",
        "max_gaussians": "max_gaussians", "densify_threshold": "densify_threshold",
        "out": "out", "save_images": "save_images", "save_map": "save_map",
        "load_map": "load_map", "view_counts": "view_counts",
    }
    for flag, key in flag_map.items():
        v = getattr(args, flag, None)
        if v is not None:
            _coerce(cfg, key, v)
    if not cfg.policies:
        raise ConfigError("at least one policy is required")
    if not cfg.seeds:
        raise ConfigError("at least one seed is required")
    from .nbv import POLICIES
    for p in cfg.policies:
        if p not in POLICIES:
            raise ConfigError(f"unknown policy {p!r}; choose from {POLICIES}")
    return cfg


def _n_workers(n_jobs: int) -> int:
    cap = os.environ.get("SNBV_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(cap, n_jobs))


def _run_one(job) -> dict:
    cfg, policy, seed, add_views, target = job
    scene = cfg.scene()
    setup = cfg.setup(policy, seed, add_views=add_views, target=target)
    run = run_nbv(scene, setup)
    rec = run.record()
    rec["scene_seed"] = cfg.scene_seed
    rec["target"] = -1 if target is None else target
    rec["views"] = setup.nbv.init_views + setup.nbv.add_views
    rec["per_object_mae"] = _per_object_mae(run, scene, setup)
    if cfg.save_map or cfg.save_images:
        _dump_run_artifacts(cfg, scene, setup, run, target)
    return rec


def _per_object_mae(run: NBVRun, scene: PrimitiveScene, setup: RunSetup) -> dict:
    _, test = _view_lists(scene, setup)
    err = {oid: [0.0, 0] for oid in range(1, scene.n_objects + 1)}
    for spec in test.views:
        gt = oracle_render(scene, spec.camera)
        pred = rasterize(run.final_map, spec.camera)
        for oid in err:
            sel = gt.mask == oid
            if np.any(sel):
                err[oid][0] += float(np.sum(np.abs(pred.depth[sel] - gt.depth[sel])))
                err[oid][1] += int(sel.sum())
    return {str(oid): (s / n if n else float("nan")) for oid, (s, n) in err.items()}


def _tag(policy: str, seed: int, target) -> str:
    t = "" if target is None else f"_obj{target}"
    return f"{policy}{t}_s{seed}"


def _dump_run_artifacts(cfg, scene, setup, run, target) -> None:
    tag = _tag(run.policy, run.seed, target)
    if cfg.save_map:
        os.makedirs(os.path.join(cfg.out, "maps"), exist_ok=True)
        save_map(run.final_map, os.path.join(cfg.out, "maps", f"{tag}.snbv"))
    if cfg.save_images:
        img_dir = os.path.join(cfg.out, "images", tag)
        os.makedirs(img_dir, exist_ok=True)
        _, test = _view_lists(scene, setup)
        for spec in test.views:
            out = rasterize(run.final_map, spec.camera)
            base = os.path.join(img_dir, f"test_{spec.id}")
            write_ppm(base + ".ppm", out.rgb)
            write_pfm(base + "_depth.pfm", out.depth)
            write_pfm(base + "_alpha.pfm", out.alpha)
            write_pgm(base + "_mask.pgm", np.argmax(out.obj_prob, axis=2))


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.8g}"
    return str(x)


def _mean_selected_gain(rec: dict, kind: str) -> str:
    vals = []
    for rep in rec.get("gains", []):
        if rep is None:
            continue
        for c in rep["candidates"]:
            if c["selected"] and kind in c["normalized"]:
                vals.append(c["normalized"][kind])
    return _fmt(float(np.mean(vals))) if vals else ""


def _fused_selected_gain(rec: dict) -> str:
    vals = [c["fused"] for rep in rec.get("gains", []) if rep
            for c in rep["candidates"] if c["selected"]]
    return _fmt(float(np.mean(vals))) if vals else ""


METRICS_HEADER = ("scene,policy,seed,views,psnr,ssim,depth_mae,"
                  "gain_rgb,gain_depth,gain_object,gain_fused\n")


def _metrics_row(rec: dict) -> str:
    m = rec["metrics"]
    return ",".join([
        str(rec["scene_seed"]), rec["policy"], str(rec["seed"]),
        str(rec["views"]), _fmt(m["psnr"]), _fmt(m["ssim"]),
        _fmt(m["depth_mae"]), _mean_selected_gain(rec, "rgb"),
        _mean_selected_gain(rec, "depth"), _mean_selected_gain(rec, "object"),
        _fused_selected_gain(rec),
    ]) + "\n"


def _prepare_out(cfg: ExperimentConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.txt"), "w") as fh:
        fh.write(cfg.echo())


def _map_jobs(jobs, workers: int):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with mp.Pool(workers) as pool:
        return pool.map(_run_one, jobs, chunksize=1)


def cmd_run(cfg: ExperimentConfig) -> int:
    scene = cfg.scene()  # validates scene source before any output exists
    _prepare_out(cfg)
    if cfg.load_map:
        gmap = load_map(cfg.load_map)
        setup = cfg.setup(cfg.policies[0], cfg.seeds[0])
        _, test = _view_lists(scene, setup)
        mean, _ = evaluate_map(gmap, scene, test)
        with open(os.path.join(cfg.out, "metrics.csv"), "w") as fh:
            fh.write(METRICS_HEADER)
            fh.write(",".join([str(cfg.scene_seed), "loaded", "0", "0",
                               _fmt(mean["psnr"]), _fmt(mean["ssim"]),
                               _fmt(mean["depth_mae"]), "", "", "", ""]) + "\n")
        return 0
    jobs = [(cfg, p, s, None, None) for p in cfg.policies for s in cfg.seeds]
    recs = _map_jobs(jobs, _n_workers(len(jobs)))
    with open(os.path.join(cfg.out, "metrics.csv"), "w") as fh:
        fh.write(METRICS_HEADER)
        for rec in recs:
            fh.write(_metrics_row(rec))
    with open(os.path.join(cfg.out, "gains.json"), "w") as fh:
        json.dump({"runs": recs}, fh, indent=1, default=str)
    return 0


def cmd_object_study(cfg: ExperimentConfig) -> int:
    cfg.corner_layout = True
    scene = cfg.scene()
    if scene.n_objects < 4:
        raise ConfigError("object study needs at least the four corner objects")
    _prepare_out(cfg)
    targets = [None, 1, 2, 3, 4]
    jobs = [(cfg, "ours", s, None, t) for t in targets for s in cfg.seeds]
    recs = _map_jobs(jobs, _n_workers(len(jobs)))

    rows_path = os.path.join(cfg.out, "object_study.csv")
    with open(rows_path, "w") as fh:
        fh.write("scene,seed,run_target,object,label,depth_mae\n")
        for rec in recs:
            for oid_s, mae in sorted(rec["per_object_mae"].items(), key=lambda kv: int(kv[0])):
                oid = int(oid_s)
                label = CORNER_LABELS.get(oid, "center")
                tgt = rec["target"]
                fh.write(f"{rec['scene_seed']},{rec['seed']},"
                         f"{'whole' if tgt < 0 else tgt},{oid},{label},{_fmt(mae)}\n")

    # Summary: corner cells come from the run targeting that corner; the
    # center/total cells of the corner row average over the four corner runs.
    def cell(target, oid):
        vals = [rec["per_object_mae"][str(oid)] for rec in recs
                if rec["target"] == (-1 if target is None else target)
                and not np.isnan(rec["per_object_mae"][str(oid)])]
        return float(np.mean(vals)) if vals else float("nan")

    center_ids = [oid for oid in range(1, scene.n_objects + 1) if oid > 4]
    summary_path = os.path.join(cfg.out, "object_study_summary.csv")
    with open(summary_path, "w") as fh:
        fh.write("run_target,NW,NE,SW,SE,center,total\n")
        whole = {lbl: cell(None, oid) for oid, lbl in CORNER_LABELS.items()}
        whole_center = [cell(None, oid) for oid in center_ids]
        whole_all = [cell(None, oid) for oid in range(1, scene.n_objects + 1)]
        fh.write("whole," + ",".join(_fmt(whole[l]) for l in ("NW", "NE", "SW", "SE"))
                 + f",{_fmt(float(np.nanmean(whole_center)) if center_ids else float('nan'))}"
                 + f",{_fmt(float(np.nanmean(whole_all)))}\n")
        corner = {lbl: cell(oid, oid) for oid, lbl in CORNER_LABELS.items()}
        corner_center = [cell(oid, c) for oid in CORNER_LABELS for c in center_ids]
        corner_all = [cell(oid, o) for oid in CORNER_LABELS
                      for o in range(1, scene.n_objects + 1)]
        fh.write("corner," + ",".join(_fmt(corner[l]) for l in ("NW", "NE", "SW", "SE"))
                 + f",{_fmt(float(np.nanmean(corner_center)) if center_ids else float('nan'))}"
                 + f",{_fmt(float(np.nanmean(corner_all)))}\n")
    with open(os.path.join(cfg.out, "object_study.json"), "w") as fh:
        json.dump({"runs": recs}, fh, indent=1, default=str)
    return 0


def cmd_convergence(cfg: ExperimentConfig) -> int:
    cfg.scene()
    _prepare_out(cfg)
    jobs = []
    for p in cfg.policies:
        for count in cfg.view_counts:
            add = count - cfg.init_views
            if add < 0:
                raise ConfigError(f"view count {count} below init_views")
            for s in cfg.seeds:
                jobs.append((cfg, p, s, add, None))
    recs = _map_jobs(jobs, _n_workers(len(jobs)))
    with open(os.path.join(cfg.out, "convergence.csv"), "w") as fh:
        fh.write("policy,views,seed,psnr,ssim,depth_mae\n")
        for rec in recs:
            m = rec["metrics"]
            fh.write(f"{rec['policy']},{rec['views']},{rec['seed']},"
                     f"{_fmt(m['psnr'])},{_fmt(m['ssim'])},{_fmt(m['depth_mae'])}\n")
    return 0


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="snbv", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "object-study", "convergence"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--scene-seed", dest="scene_seed", type=int, default=None)
        p.add_argument("--scene-file", dest="scene_file", default=None)
        p.add_argument("--n-objects", dest="n_objects", type=int, default=None)
        p.add_argument("--difficulty", type=float, default=None)
        p.add_argument("--corner-layout", dest="corner_layout",
                       action="store_const", const=True, default=None)
        p.add_argument("--policy", default=None, help="comma-separated policies")
        p.add_argument("--seeds", default=None, help="comma-separated seeds")
        p.add_argument("--init-views", dest="init_views", type=int, default=None)
        p.add_argument("--add-views", dest="add_views", type=int, default=None)
        p.add_argument("--image-size", dest="image_size", type=int, default=None)
        p.add_argument("--candidates-spiral", dest="candidates_spiral", type=int, default=None)
        p.add_argument("--candidates-random", dest="candidates_random", type=int, default=None)
        p.add_argument("--n-test", dest="n_test", type=int, default=None)
        p.add_argument("--radius", type=float, default=None)
        p.add_argument("--fov", type=float, default=None)
        p.add_argument("--target-object", dest="target_object", type=int, default=None)
        p.add_argument("--beta-d", dest="beta_d", type=float, default=None)
        p.add_argument("--beta-o", dest="beta_o", type=float, default=None)
        p.add_argument("--alpha-obj", dest="alpha_obj", type=float, default=None)
        p.add_argument("--alpha-opa", dest="alpha_opa", type=float, default=None)
        p.add_argument("--ridge", type=float, default=None)
        p.add_argument("--n-gaussians", dest="n_gaussians", type=int, default=None)
        p.add_argument("--max-gaussians", dest="max_gaussians", type=int, default=None)
        p.add_argument("--densify-threshold", dest="densify_threshold",
                       type=float, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--save-images", dest="save_images",
                       action="store_const", const=True, default=None)
        p.add_argument("--save-map", dest="save_map",
                       action="store_const", const=True, default=None)
        p.add_argument("--load-map", dest="load_map", default=None)
        p.add_argument("--view-counts", dest="view_counts", default=None,
                       help="comma-separated final view counts (convergence)")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = build_config(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "object-study":
            return cmd_object_study(cfg)
        return cmd_convergence(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001 - runtime failures exit 2 per contract
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

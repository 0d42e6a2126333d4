"""texrand command line: render / augment / perturb / eval-pose /
eval-detect / inspect / make-assets."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import cv2
import numpy as np

from . import __version__
from .assets import (AssetError, load_model_set, load_texture, load_texture_bank)
from .augment import (AugPipeline, CORRUPTION_KINDS, Corruption, apply_corruption,
                      apply_pipeline)
from .bop import (BopIoError, BopValidationError, CameraRecord, FrameData, GtRecord,
                  PoseCsvError, list_scene_dirs, read_scene, write_scene,
                  read_detections)
from .compose import PlacementError, plan_dataset
from .config import (ConfigError, compose_config_from, config_hash,
                     load_render_config, shading_params_from)
from .detect_metrics import (det_boxes_from_records, gt_boxes_from_dataset, map_coco,
                             summary_table)
from .pose_metrics import (MetricConfig, MetricInputError, average_recall,
                           build_pose_targets, hypotheses_from_csv)
from .procgen import make_demo_assets
from .render import pack_scene, project, render_frame, transform_points
from .streams import Purpose, RngStream, SamplingMode, sample_texture_assignment

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2

_IMAGE_EXTS = (".png", ".jpg", ".jpeg")


def _eprint(*args):
    print(*args, file=sys.stderr)


def _thread_count(threads):
    return os.cpu_count() or 1 if threads == 0 else max(1, threads)


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# render

def _material_manifest(mat):
    entry = {"specularity": mat.specularity, "roughness": mat.roughness}
    if mat.texture_index is not None:
        entry["texture_index"] = mat.texture_index
    else:
        entry["color"] = list(mat.color)
    return entry


def cmd_render(args):
    config = load_render_config(args.config, args.set or [])
    if args.seed is not None:
        config["seed"] = args.seed
    if args.scenes is not None:
        config["scenes"] = args.scenes
    if args.views is not None:
        config["views"] = args.views
    if args.models is not None:
        config["models_dir"] = args.models
    if args.textures is not None:
        config["textures_dir"] = args.textures
    if args.mode is not None:
        config["mode"] = args.mode

    # fail-fast validation before any rendering starts
    models_dir = config["models_dir"]
    textures_dir = config["textures_dir"]
    if not models_dir or not os.path.isdir(models_dir):
        raise ConfigError(f"models_dir does not exist: {models_dir}")
    if not textures_dir or not os.path.isdir(textures_dir):
        raise ConfigError(f"textures_dir does not exist: {textures_dir}")
    textures = load_texture_bank(textures_dir)
    n = config["texture_count"] or len(textures)
    if n > len(textures):
        raise ConfigError(
            f"texture_count {n} exceeds the {len(textures)} textures in the bank")
    if config["mode"] not in ("shape", "texture"):
        raise ConfigError("mode must be 'shape' or 'texture'")
    mode = (SamplingMode.for_shape_bias(n) if config["mode"] == "shape"
            else SamplingMode.for_texture_bias())
    models = load_model_set(models_dir, unit_scale=config["unit_scale"],
                            continuous_steps=config["symmetry_steps"],
                            texel_density=config["texel_density"])

    compose_cfg = compose_config_from(config)
    shading = shading_params_from(config)
    seed = int(config["seed"])
    m, l = int(config["scenes"]), int(config["views"])
    _eprint(f"planning {m} scenes x {l} views (seed {seed})")
    jobs = plan_dataset(m, l, models, mode, seed, config=compose_cfg,
                        bank_size=len(textures))

    os.makedirs(args.out, exist_ok=True)
    threads = _thread_count(args.threads)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    scenes = []
    for job in jobs:
        if not scenes or scenes[-1] is not job.scene:
            scenes.append(job.scene)

    scene_manifest = {}
    depth_scale = float(config["depth_scale"])
    per_frame_materials = bool(config["per_frame_materials"])
    try:
        for scene in scenes:
            scene_id = scene.index
            base_pack = None
            view_scenes = []
            for v in range(len(scene.views)):
                if per_frame_materials:
                    rng = RngStream(seed).child(Purpose.SCENE, scene_id,
                                                Purpose.VIEW, v, Purpose.MATERIAL)
                    mats = sample_texture_assignment(len(scene.instances), mode, rng)
                    frame_scene = replace(scene, instances=[
                        replace(inst, material=mat)
                        for inst, mat in zip(scene.instances, mats)])
                    view_scenes.append((frame_scene,
                                        pack_scene(frame_scene, models, textures,
                                                   shading, compose_cfg)))
                else:
                    if base_pack is None:
                        base_pack = pack_scene(scene, models, textures, shading,
                                               compose_cfg)
                    view_scenes.append((scene, base_pack))

            def render_view(v):
                vs, pack = view_scenes[v]
                return render_frame(vs, v, models, shading, textures=textures,
                                    config=compose_cfg, pack=pack)

            if pool is None:
                results = [render_view(v) for v in range(len(scene.views))]
            else:
                results = list(pool.map(render_view, range(len(scene.views))))

            frames = []
            for v, frame in enumerate(results):
                vs = view_scenes[v][0]
                cam = scene.views[v].camera
                gt = []
                for inst in vs.instances:
                    R = cam.R_w2c @ inst.rotation
                    t = cam.R_w2c @ inst.translation + cam.t_w2c
                    gt.append(GtRecord(cam_R_m2c=[float(x) for x in R.ravel()],
                                       cam_t_m2c=[float(x) for x in t],
                                       obj_id=inst.object_id))
                camera = CameraRecord(
                    cam_K=[cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0],
                    depth_scale=depth_scale)
                frames.append(FrameData(
                    im_id=v, camera=camera, gt=gt, rgb=frame.rgb,
                    depth_mm=frame.depth,
                    masks_full=[frame.masks_full[i] for i in range(len(gt))],
                    masks_visible=[frame.masks_visible[i] for i in range(len(gt))]))
            scene_dir = os.path.join(args.out, f"{scene_id:06d}")
            write_scene(scene_dir, frames)
            scene_manifest[f"{scene_id:06d}"] = {
                "instances": [dict(obj_id=inst.object_id,
                                   **_material_manifest(inst.material))
                              for inst in scene.instances],
                "ground_texture": scene.ground_texture,
                "wall_textures": list(scene.wall_textures),
                "ambient": scene.ambient,
            }
            _eprint(f"scene {scene_id:06d}: {len(frames)} views written")
    finally:
        if pool is not None:
            pool.shutdown()

    manifest = {
        "tool": "texrand",
        "version": __version__,
        "command": "render",
        "seed": seed,
        "threads_hint": threads,
        "config": config,
        "config_hash": config_hash(config),
        "texture_census": {
            "directory": os.path.abspath(textures_dir),
            "bank_size": len(textures),
            "texture_count_n": n,
            "files": sorted(f for f in os.listdir(textures_dir)
                            if f.lower().endswith(_IMAGE_EXTS)),
        },
        "scenes": scene_manifest,
    }
    _write_json(os.path.join(args.out, "run_manifest.json"), manifest)
    print(f"wrote {len(jobs)} frames across {len(scenes)} scenes to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# augment / perturb

def _list_images(directory):
    if not os.path.isdir(directory):
        raise BopIoError(f"not a directory: {directory}")
    names = sorted(f for f in os.listdir(directory)
                   if f.lower().endswith(_IMAGE_EXTS))
    if not names:
        raise ConfigError(f"no images found in {directory}")
    return names


def _save_image(path, rgb):
    params = [cv2.IMWRITE_JPEG_QUALITY, 95] if path.lower().endswith((".jpg", ".jpeg")) else []
    if not cv2.imwrite(path, rgb[:, :, ::-1], params):
        raise BopIoError(f"cannot write image: {path}")


def cmd_augment(args):
    names = _list_images(args.input)
    pipeline = AugPipeline.for_profile(args.profile, lam=args.lam)
    os.makedirs(args.out, exist_ok=True)
    root = RngStream(args.seed)
    for idx, name in enumerate(names):
        image = load_texture(os.path.join(args.input, name)).pixels
        out = apply_pipeline(image, pipeline, root.child(Purpose.AUGMENT, idx))
        _save_image(os.path.join(args.out, name), out)
    _write_json(os.path.join(args.out, "augment_manifest.json"), {
        "tool": "texrand", "version": __version__, "command": "augment",
        "seed": args.seed, "profile": args.profile, "lambda": args.lam,
        "pipeline": pipeline.to_json(), "images": len(names),
    })
    print(f"augmented {len(names)} images -> {args.out}")
    return EXIT_OK


def cmd_perturb(args):
    names = _list_images(args.input)
    severities = range(1, 6) if args.severity == 0 else [args.severity]
    os.makedirs(args.out, exist_ok=True)
    root = RngStream(args.seed)
    count = 0
    for sev in severities:
        corruption = Corruption(args.kind, sev)
        sub = os.path.join(args.out, f"{args.kind}_s{sev}")
        os.makedirs(sub, exist_ok=True)
        for idx, name in enumerate(names):
            image = load_texture(os.path.join(args.input, name)).pixels
            out = apply_corruption(image, corruption,
                                   root.child(Purpose.CORRUPT, sev, idx),
                                   brightness_sign=args.brightness_sign)
            _save_image(os.path.join(sub, name), out)
            count += 1
    _write_json(os.path.join(args.out, "perturb_manifest.json"), {
        "tool": "texrand", "version": __version__, "command": "perturb",
        "seed": args.seed, "kind": args.kind,
        "severities": list(severities), "brightness_sign": args.brightness_sign,
        "images": count,
    })
    print(f"wrote {count} perturbed images -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluation

def cmd_eval_pose(args):
    models = load_model_set(args.models, continuous_steps=args.symmetry_steps)
    targets = build_pose_targets(args.gt, models, min_visib=args.min_visib)
    hypotheses = hypotheses_from_csv(args.pred)
    if not hypotheses:
        _eprint("warning: prediction file holds no rows; AR will be 0")
    cfg = MetricConfig(skip_vsd=args.skip_vsd)
    report = average_recall(hypotheses, targets, config=cfg, lenient=args.lenient)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "pose_report.json"), report.to_json())
    table = report.summary_table()
    with open(os.path.join(args.out, "pose_report.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


def cmd_eval_detect(args):
    records = read_detections(args.pred)
    gts = gt_boxes_from_dataset(args.gt, min_visib=args.min_visib)
    result = map_coco(det_boxes_from_records(records), gts)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "detect_report.json"), result)
    table = summary_table(result)
    with open(os.path.join(args.out, "detect_report.txt"), "w") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# inspect

def _box_corners(mesh):
    lo, hi = mesh.bounding_box()
    return np.array([[x, y, z] for x in (lo[0], hi[0])
                     for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])


_BOX_EDGES = [(0, 1), (0, 2), (1, 3), (2, 3), (4, 5), (4, 6), (5, 7), (6, 7),
              (0, 4), (1, 5), (2, 6), (3, 7)]


def cmd_inspect(args):
    scene_dirs = list_scene_dirs(args.dataset)
    if not scene_dirs:
        raise ConfigError(f"no scenes found in {args.dataset}")
    models = load_model_set(args.models) if args.models else None
    os.makedirs(args.out, exist_ok=True)

    report = {"dataset": os.path.abspath(args.dataset), "scenes": {}, "errors": []}
    manifest_path = os.path.join(args.dataset, "run_manifest.json")
    texture_census = {}
    if os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        for scene_key, entry in manifest.get("scenes", {}).items():
            for inst in entry.get("instances", []):
                if "texture_index" in inst:
                    key = str(inst["texture_index"])
                    texture_census[key] = texture_census.get(key, 0) + 1
    overlays_written = 0

    for scene_dir in scene_dirs:
        scene_key = os.path.basename(scene_dir)
        try:
            frames = read_scene(scene_dir, load_images=True)
        except (BopIoError, BopValidationError) as exc:
            report["errors"].append({"scene": scene_key, "error": str(exc)})
            continue
        visib = [info.visib_fract for f in frames for info in f.gt_info]
        hist, edges = np.histogram(visib, bins=10, range=(0.0, 1.0))
        scene_entry = {
            "images": len(frames),
            "instances_per_image": [len(f.gt) for f in frames],
            "visib_fract_histogram": {
                f"{edges[i]:.1f}-{edges[i+1]:.1f}": int(hist[i]) for i in range(10)
            },
            "overlay_corners": {},
        }
        for frame in frames:
            if overlays_written >= args.max_overlays:
                break
            canvas = frame.rgb[:, :, ::-1].copy()  # draw in BGR
            fx, fy = frame.camera.cam_K[0], frame.camera.cam_K[4]
            cx, cy = frame.camera.cam_K[2], frame.camera.cam_K[5]
            corner_log = []
            for inst, rec in enumerate(frame.gt):
                if frame.gt_info:
                    x, y, w, h = frame.gt_info[inst].bbox_visib
                    if w > 0 and h > 0:
                        cv2.rectangle(canvas, (int(x), int(y)),
                                      (int(x + w - 1), int(y + h - 1)), (0, 255, 0), 1)
                if models and rec.obj_id in models:
                    pts = _box_corners(models[rec.obj_id].mesh)
                    cam_pts = transform_points(pts, rec.R, rec.t)
                    if np.all(cam_pts[:, 2] > 0):
                        px = np.empty((8, 2))
                        px[:, 0] = fx * cam_pts[:, 0] / cam_pts[:, 2] + cx
                        px[:, 1] = fy * cam_pts[:, 1] / cam_pts[:, 2] + cy
                        corner_log.append({"obj_id": rec.obj_id,
                                           "corners_px": px.tolist()})
                        for a, b in _BOX_EDGES:
                            cv2.line(canvas,
                                     (int(round(px[a, 0])), int(round(px[a, 1]))),
                                     (int(round(px[b, 0])), int(round(px[b, 1]))),
                                     (255, 128, 0), 1)
            name = f"overlay_{scene_key}_{frame.im_id:06d}.jpg"
            cv2.imwrite(os.path.join(args.out, name), canvas,
                        [cv2.IMWRITE_JPEG_QUALITY, 95])
            scene_entry["overlay_corners"][str(frame.im_id)] = corner_log
            overlays_written += 1
        report["scenes"][scene_key] = scene_entry

    if texture_census:
        report["texture_census"] = texture_census
    _write_json(os.path.join(args.out, "inspect_report.json"), report)
    total_images = sum(s["images"] for s in report["scenes"].values())
    print(f"{len(report['scenes'])} scene(s), {total_images} image(s), "
          f"{len(report['errors'])} error(s); report -> {args.out}")
    return EXIT_OK


def cmd_make_assets(args):
    shapes = args.shapes.split(",") if args.shapes else None
    models_dir, textures_dir = make_demo_assets(
        args.out, shapes=shapes, textures=args.textures, seed=args.seed,
        texture_size=args.texture_size)
    print(f"models -> {models_dir}\ntextures -> {textures_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="texrand",
        description="Randomized-texture synthetic scenes plus BOP-style evaluation")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a BOP-layout dataset")
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="dotted-path config override (repeatable)")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--scenes", type=int)
    p.add_argument("--views", type=int)
    p.add_argument("--models")
    p.add_argument("--textures")
    p.add_argument("--mode", choices=["shape", "texture"])
    p.add_argument("--threads", type=int, default=0, help="0 = all cores")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("augment", help="run the augmentation pipeline over a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--profile", choices=["detection", "pose"], default="detection")
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("perturb", help="write corrupted copies of a directory")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=list(CORRUPTION_KINDS), required=True)
    p.add_argument("--severity", type=int, default=0, help="1..5, or 0 for all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brightness-sign", type=int, choices=[-1, 1], default=1)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("eval-pose", help="VSD/MSSD/MSPD average recall")
    p.add_argument("--gt", required=True, help="BOP dataset root")
    p.add_argument("--pred", required=True, help="pose CSV")
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lenient", action="store_true")
    p.add_argument("--skip-vsd", action="store_true")
    p.add_argument("--min-visib", type=float, default=0.0)
    p.add_argument("--symmetry-steps", type=int, default=64)
    p.set_defaults(func=cmd_eval_pose)

    p = sub.add_parser("eval-detect", help="COCO mAP for detections")
    p.add_argument("--gt", required=True, help="BOP dataset root")
    p.add_argument("--pred", required=True, help="detections JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--min-visib", type=float, default=0.1)
    p.set_defaults(func=cmd_eval_detect)

    p = sub.add_parser("inspect", help="dataset statistics and GT overlays")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--models")
    p.add_argument("--max-overlays", type=int, default=20)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("make-assets", help="write procedural demo meshes + textures")
    p.add_argument("--out", required=True)
    p.add_argument("--shapes", help="comma-separated shape names")
    p.add_argument("--textures", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--texture-size", type=int, default=256)
    p.set_defaults(func=cmd_make_assets)
    return parser


_VALIDATION_ERRORS = (ConfigError, BopValidationError, MetricInputError,
                      PlacementError, AssetError, PoseCsvError, ValueError)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _VALIDATION_ERRORS as exc:
        _eprint(f"error: {exc}")
        return EXIT_VALIDATION
    except (BopIoError, OSError) as exc:
        _eprint(f"i/o error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

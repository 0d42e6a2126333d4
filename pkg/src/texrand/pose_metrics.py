"""Pose error functions (VSD, MSSD, MSPD) and average recall over the
standard threshold grids."""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .bop import read_pose_csv, read_scene, list_scene_dirs
from .compose import CameraSample
from .render import render_object_depth


class MetricInputError(Exception):
    pass


@dataclass
class PoseTarget:
    """Ground-truth side of one evaluation target."""

    scene_id: int
    im_id: int
    obj_id: int
    gt_R: np.ndarray  # (3, 3) model-to-camera
    gt_t: np.ndarray  # (3,) mm
    K: np.ndarray  # (3, 3)
    image_size: tuple  # (w, h)
    scene_depth: np.ndarray | None  # (h, w) mm, needed for VSD
    diameter: float
    symmetries: list
    model: object = None  # ObjectModel, needed for VSD rendering

    def camera(self):
        return CameraSample(self.K[0, 0], self.K[1, 1], self.K[0, 2], self.K[1, 2],
                            self.image_size[0], self.image_size[1],
                            np.eye(3), np.zeros(3))


@dataclass
class PoseHypothesis:
    R: np.ndarray
    t: np.ndarray
    score: float = 1.0


def _sym_poses(gt_R, gt_t, symmetries):
    """GT pose composed with each symmetry transform."""
    out = []
    for sym in symmetries:
        out.append((gt_R @ sym.R, gt_R @ sym.t + gt_t))
    return out


def subsample_vertices(vertices, limit=10000):
    """Deterministic farthest-point subsample when the model is too dense."""
    pts = np.asarray(vertices, dtype=np.float64)
    n = len(pts)
    if n <= limit:
        return pts
    chosen = np.empty(limit, dtype=np.int64)
    chosen[0] = 0
    dist = np.linalg.norm(pts - pts[0], axis=1)
    for i in range(1, limit):
        idx = int(np.argmax(dist))
        chosen[i] = idx
        dist = np.minimum(dist, np.linalg.norm(pts - pts[idx], axis=1))
    return pts[np.sort(chosen)]


def mssd(hyp, target, vertices):
    """Maximum symmetry-aware surface distance, mm: the smallest (over the
    symmetry set) worst-case vertex displacement between the poses."""
    pts = np.asarray(vertices, dtype=np.float64)
    if len(pts) == 0:
        raise MetricInputError("empty vertex set")
    est = pts @ hyp.R.T + hyp.t
    best = np.inf
    for R, t in _sym_poses(target.gt_R, target.gt_t, target.symmetries):
        gt = pts @ R.T + t
        err = np.linalg.norm(est - gt, axis=1).max()
        best = min(best, float(err))
    return best


def mspd(hyp, target, vertices):
    """Maximum symmetry-aware projection distance, px. Targets whose
    transformed vertices land behind the camera score +inf."""
    pts = np.asarray(vertices, dtype=np.float64)
    if len(pts) == 0:
        raise MetricInputError("empty vertex set")
    K = target.K
    est = pts @ hyp.R.T + hyp.t
    if np.any(est[:, 2] <= 0):
        return np.inf
    proj_est = est[:, :2] * np.array([K[0, 0], K[1, 1]]) / est[:, 2:3] \
        + np.array([K[0, 2], K[1, 2]])
    best = np.inf
    for R, t in _sym_poses(target.gt_R, target.gt_t, target.symmetries):
        gt = pts @ R.T + t
        if np.any(gt[:, 2] <= 0):
            continue
        proj_gt = gt[:, :2] * np.array([K[0, 0], K[1, 1]]) / gt[:, 2:3] \
            + np.array([K[0, 2], K[1, 2]])
        err = np.linalg.norm(proj_est - proj_gt, axis=1).max()
        best = min(best, float(err))
    return best


def visibility_mask(rendered_depth, scene_depth, delta):
    """Pixels where the rendered surface would be visible in the scene:
    rendered geometry exists and is not behind the recorded scene surface
    by more than `delta` (empty scene depth counts as visible)."""
    rendered = rendered_depth > 0
    return rendered & ((scene_depth == 0) | (rendered_depth <= scene_depth + delta))


def vsd_from_depth(depth_est, depth_gt, scene_depth, taus, delta):
    """Core VSD computation on given depth maps; returns one error per tau."""
    vis_est = visibility_mask(depth_est, scene_depth, delta)
    vis_gt = visibility_mask(depth_gt, scene_depth, delta)
    union = vis_est | vis_gt
    n_union = int(union.sum())
    if n_union == 0:
        return [1.0 for _ in taus]
    inter = vis_est & vis_gt
    diff = np.abs(depth_est - depth_gt)
    errors = []
    for tau in taus:
        good = inter & (diff < tau)
        errors.append(1.0 - int(good.sum()) / n_union)
    return errors


def vsd(hyp, target, renderer=None, tau=None, delta=15.0, taus=None):
    """Visible surface discrepancy in [0, 1].

    Renders distance maps for the hypothesis and GT poses, estimates
    visibility against the target's scene depth, and scores depth agreement
    over the union of the visible masks. Pass `taus` for several tolerances
    at the cost of a single render pair.
    """
    if target.scene_depth is None:
        raise MetricInputError("target lacks a scene depth map (needed for VSD)")
    if target.model is None:
        raise MetricInputError("target lacks an object model (needed for VSD)")
    render = renderer or render_object_depth
    if taus is None:
        if tau is None:
            raise MetricInputError("pass tau or taus")
        taus = [tau]
        single = True
    else:
        single = False
    cam = target.camera()
    depth_est = render(target.model, hyp.R, hyp.t, cam)
    depth_gt = render(target.model, target.gt_R, target.gt_t, cam)
    errors = vsd_from_depth(depth_est, depth_gt, target.scene_depth, taus, delta)
    return errors[0] if single else errors


@dataclass
class MetricConfig:
    """BOP-2019/2020-style threshold grids, config-overridable."""

    vsd_delta: float = 15.0  # mm
    vsd_tau_fracs: tuple = tuple(i * 0.05 for i in range(1, 11))  # of diameter
    vsd_theta_grid: tuple = tuple(i * 0.05 for i in range(1, 11))
    mssd_theta_fracs: tuple = tuple(i * 0.05 for i in range(1, 11))  # of diameter
    mspd_theta_px: tuple = tuple(5.0 * i for i in range(1, 11))  # at 640-wide
    mspd_ref_width: float = 640.0
    max_vertices: int = 10000
    skip_vsd: bool = False


@dataclass
class MetricReport:
    per_target: list
    ar_vsd: float
    ar_mssd: float
    ar_mspd: float

    @property
    def ar(self):
        return (self.ar_vsd + self.ar_mssd + self.ar_mspd) / 3.0

    def to_json(self):
        return {
            "ar_vsd": self.ar_vsd,
            "ar_mssd": self.ar_mssd,
            "ar_mspd": self.ar_mspd,
            "ar": self.ar,
            "num_targets": len(self.per_target),
            "per_target": self.per_target,
        }

    def summary_table(self):
        lines = [
            f"{'AR_MSPD':>10} {'AR_MSSD':>10} {'AR_VSD':>10} {'AR':>10}",
            f"{self.ar_mspd:10.4f} {self.ar_mssd:10.4f} {self.ar_vsd:10.4f} "
            f"{self.ar:10.4f}",
        ]
        return "\n".join(lines)


def _match_hypotheses(hypotheses, targets, lenient=False):
    """Best same-(scene, image, object) hypothesis per target, by score."""
    by_triple = {}
    for key, hyp in hypotheses:
        best = by_triple.get(key)
        if best is None or hyp.score > best.score:
            by_triple[key] = hyp
    known = {(t.scene_id, t.im_id, t.obj_id) for t in targets}
    unknown = sorted(set(by_triple) - known)
    if unknown and not lenient:
        raise MetricInputError(
            f"{len(unknown)} prediction triple(s) match no target, e.g. {unknown[0]}")
    return by_triple


def average_recall(hypotheses, targets, renderer=None, config=None, lenient=False):
    """Score matched hypotheses against targets and average over the grids.

    `hypotheses` is a list of ((scene_id, im_id, obj_id), PoseHypothesis).
    A target with no hypothesis counts as incorrect everywhere. AR_VSD
    averages correctness over the full (tau, theta) grid; the combined AR is
    the plain mean of the three per-metric recalls.
    """
    cfg = config or MetricConfig()
    by_triple = _match_hypotheses(hypotheses, targets, lenient=lenient)

    vertex_cache = {}
    per_target = []
    mssd_hits = mspd_hits = vsd_hits = 0
    mssd_total = mspd_total = vsd_total = 0
    for target in targets:
        key = (target.scene_id, target.im_id, target.obj_id)
        hyp = by_triple.get(key)
        entry = {"scene_id": target.scene_id, "im_id": target.im_id,
                 "obj_id": target.obj_id, "matched": hyp is not None}
        n_theta = len(cfg.mssd_theta_fracs)
        mssd_total += n_theta
        mspd_total += len(cfg.mspd_theta_px)
        vsd_total += len(cfg.vsd_tau_fracs) * len(cfg.vsd_theta_grid)
        if hyp is None:
            entry.update(e_mssd=None, e_mspd=None, e_vsd=None)
            per_target.append(entry)
            continue

        if target.obj_id not in vertex_cache:
            verts = target.model.mesh.vertices if target.model is not None else None
            if verts is None:
                raise MetricInputError(f"target {key} lacks model vertices")
            vertex_cache[target.obj_id] = subsample_vertices(verts, cfg.max_vertices)
        verts = vertex_cache[target.obj_id]

        e_mssd = mssd(hyp, target, verts)
        e_mspd = mspd(hyp, target, verts)
        entry["e_mssd"] = e_mssd
        entry["e_mspd"] = e_mspd
        mssd_hits += sum(e_mssd < f * target.diameter for f in cfg.mssd_theta_fracs)
        r = target.image_size[0] / cfg.mspd_ref_width
        mspd_hits += sum(e_mspd < th * r for th in cfg.mspd_theta_px)

        if cfg.skip_vsd:
            entry["e_vsd"] = None
        else:
            taus = [f * target.diameter for f in cfg.vsd_tau_fracs]
            e_vsd = vsd(hyp, target, renderer=renderer, taus=taus, delta=cfg.vsd_delta)
            entry["e_vsd"] = e_vsd
            vsd_hits += sum(e < th for e in e_vsd for th in cfg.vsd_theta_grid)
        per_target.append(entry)

    ar_mssd = mssd_hits / mssd_total if mssd_total else 0.0
    ar_mspd = mspd_hits / mspd_total if mspd_total else 0.0
    ar_vsd = vsd_hits / vsd_total if vsd_total else 0.0
    return MetricReport(per_target, ar_vsd, ar_mssd, ar_mspd)


# ---------------------------------------------------------------------------
# dataset plumbing

def build_pose_targets(dataset_root, models, min_visib=0.0):
    """One PoseTarget per GT instance of every scene under `dataset_root`."""
    targets = []
    for scene_dir in list_scene_dirs(dataset_root):
        scene_id = int(os.path.basename(scene_dir))
        frames = read_scene(scene_dir, load_images=True)
        for frame in frames:
            if frame.depth_mm is None:
                raise MetricInputError(
                    f"scene {scene_id} image {frame.im_id} lacks a depth map")
            h, w = frame.depth_mm.shape
            for inst, rec in enumerate(frame.gt):
                if frame.gt_info and frame.gt_info[inst].visib_fract < min_visib:
                    continue
                model = models.get(rec.obj_id)
                if model is None:
                    raise MetricInputError(f"no model for object id {rec.obj_id}")
                targets.append(PoseTarget(
                    scene_id=scene_id, im_id=frame.im_id, obj_id=rec.obj_id,
                    gt_R=rec.R, gt_t=rec.t, K=frame.camera.K, image_size=(w, h),
                    scene_depth=frame.depth_mm, diameter=model.diameter,
                    symmetries=model.symmetries, model=model))
    return targets


def hypotheses_from_csv(path):
    rows = read_pose_csv(path)
    return [((row.scene_id, row.im_id, row.obj_id),
             PoseHypothesis(R=row.R, t=row.t, score=row.score)) for row in rows]

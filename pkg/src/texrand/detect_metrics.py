"""COCO-style detection evaluation: IoU, PR curves, mAP over 0.50:0.95."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .bop import list_scene_dirs, read_scene

IOU_THRESHOLDS = tuple((50 + 5 * i) / 100.0 for i in range(10))
RECALL_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class DetBox:
    bbox: tuple  # x, y, w, h in pixels
    class_id: int
    score: float = 1.0
    image_key: tuple = (0, 0)  # (scene_id, im_id)

    def __post_init__(self):
        if self.bbox[2] < 0 or self.bbox[3] < 0:
            raise ValueError("box width/height must be non-negative")


def iou(a, b):
    """Intersection over union of two (x, y, w, h) boxes; 0 on empty union."""
    ax, ay, aw, ah = a.bbox if isinstance(a, DetBox) else a
    bx, by, bw, bh = b.bbox if isinstance(b, DetBox) else b
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass
class PrCurve:
    """101-point interpolated precision over the recall grid, per threshold."""

    iou_threshold: float
    precision: np.ndarray  # (101,)

    @property
    def ap(self):
        return float(self.precision.mean())


def _pr_curve(predictions, gts, threshold):
    """Greedy COCO matching at one IoU threshold for one class."""
    n_gt = len(gts)
    order = sorted(range(len(predictions)),
                   key=lambda i: (-predictions[i].score, i))
    matched_gt = set()
    tps = np.zeros(len(order), dtype=bool)
    for rank, idx in enumerate(order):
        pred = predictions[idx]
        best_iou = -1.0
        best_gt = -1
        for gi, gt in enumerate(gts):
            if gi in matched_gt or gt.image_key != pred.image_key:
                continue
            v = iou(pred, gt)
            if v >= threshold and v > best_iou:
                best_iou = v
                best_gt = gi
        if best_gt >= 0:
            matched_gt.add(best_gt)
            tps[rank] = True

    tp_cum = np.cumsum(tps)
    fp_cum = np.cumsum(~tps)
    recall = tp_cum / max(n_gt, 1)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)

    # interpolate: max precision at recall >= r
    interp = np.zeros(len(RECALL_GRID))
    if len(recall):
        # running max of precision from the right
        prec_right = np.maximum.accumulate(precision[::-1])[::-1]
        idx = np.searchsorted(recall, RECALL_GRID, side="left")
        valid = idx < len(recall)
        interp[valid] = prec_right[idx[valid]]
    return PrCurve(threshold, interp)


def map_coco(predictions, ground_truth):
    """Per-class AP averaged over IoU 0.50:0.95 plus the class mean.

    Score ties break by input order; classes with no GT instances are
    excluded from the mean; predictions for such classes count nowhere.
    """
    classes = sorted({g.class_id for g in ground_truth})
    per_class = {}
    for cls in classes:
        preds = [p for p in predictions if p.class_id == cls]
        gts = [g for g in ground_truth if g.class_id == cls]
        curves = [_pr_curve(preds, gts, t) for t in IOU_THRESHOLDS]
        per_class[cls] = {
            "ap": float(np.mean([c.ap for c in curves])),
            "ap_per_iou": {f"{c.iou_threshold:.2f}": c.ap for c in curves},
        }
    mean_ap = float(np.mean([v["ap"] for v in per_class.values()])) if per_class else 0.0
    return {"mAP": mean_ap, "per_class": per_class}


def summary_table(result):
    lines = [f"{'class':>8} {'AP@0.50:0.95':>14}"]
    for cls, entry in sorted(result["per_class"].items()):
        lines.append(f"{cls:>8} {entry['ap']:>14.4f}")
    lines.append(f"{'mAP':>8} {result['mAP']:>14.4f}")
    return "\n".join(lines)


def gt_boxes_from_dataset(dataset_root, min_visib=0.1):
    """Detection ground truth from a generated dataset's visible-mask boxes,
    filtered by visible fraction."""
    boxes = []
    for scene_dir in list_scene_dirs(dataset_root):
        scene_id = int(os.path.basename(scene_dir))
        for frame in read_scene(scene_dir, load_images=False):
            for inst, rec in enumerate(frame.gt):
                if inst >= len(frame.gt_info):
                    continue
                info = frame.gt_info[inst]
                if info.visib_fract < min_visib:
                    continue
                x, y, w, h = info.bbox_visib
                if w <= 0 or h <= 0:
                    continue
                boxes.append(DetBox(bbox=(float(x), float(y), float(w), float(h)),
                                    class_id=rec.obj_id,
                                    image_key=(scene_id, frame.im_id)))
    return boxes


def det_boxes_from_records(records):
    return [DetBox(bbox=tuple(float(v) for v in r.bbox), class_id=r.obj_id,
                   score=r.score, image_key=(r.scene_id, r.im_id))
            for r in records]

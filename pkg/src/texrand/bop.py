"""BOP-convention dataset reading and writing.

Directory layout per scene:
    rgb/{im:06d}.jpg  depth/{im:06d}.png  mask/{im:06d}_{inst:06d}.png
    mask_visib/{im:06d}_{inst:06d}.png
    scene_gt.json  scene_camera.json  scene_gt_info.json

Depth PNGs are 16-bit with value = depth / depth_scale; masks are 8-bit
0/255; JSON files are keyed by stringified image ids. Everything except the
JPEG encode round-trips losslessly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import cv2
import numpy as np

DEPTH_SCALE_DEFAULT = 0.1  # mm per stored 16-bit unit
JPEG_QUALITY = 95


class BopIoError(Exception):
    """Missing or unwritable dataset artifact."""


class BopValidationError(Exception):
    """Structurally present but schema-violating data."""


class PoseCsvError(Exception):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def _check_rotation(flat, tol, context):
    R = np.asarray(flat, dtype=np.float64)
    if R.size != 9:
        raise BopValidationError(f"{context}: rotation needs 9 values, got {R.size}")
    R = R.reshape(3, 3)
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > tol:
        raise BopValidationError(f"{context}: rotation not orthonormal (dev {err:.2e})")
    return R


@dataclass
class GtRecord:
    cam_R_m2c: list  # 9 scalars, row-major
    cam_t_m2c: list  # 3 scalars, mm
    obj_id: int

    def validate(self):
        _check_rotation(self.cam_R_m2c, 1e-6, "scene_gt")
        if len(self.cam_t_m2c) != 3:
            raise BopValidationError("scene_gt: cam_t_m2c needs 3 values")

    @property
    def R(self):
        return np.asarray(self.cam_R_m2c, dtype=np.float64).reshape(3, 3)

    @property
    def t(self):
        return np.asarray(self.cam_t_m2c, dtype=np.float64)


@dataclass
class CameraRecord:
    cam_K: list  # 9 scalars, row-major
    depth_scale: float = DEPTH_SCALE_DEFAULT

    def validate(self):
        if len(self.cam_K) != 9:
            raise BopValidationError("scene_camera: cam_K needs 9 values")
        if self.cam_K[8] != 1:
            raise BopValidationError("scene_camera: K[8] must be 1")
        if self.depth_scale <= 0:
            raise BopValidationError("scene_camera: depth_scale must be positive")

    @property
    def K(self):
        return np.asarray(self.cam_K, dtype=np.float64).reshape(3, 3)


@dataclass
class GtInfoRecord:
    bbox_obj: list  # x, y, w, h
    bbox_visib: list
    px_count_all: int
    px_count_valid: int
    px_count_visib: int
    visib_fract: float

    def validate(self):
        if self.px_count_visib > self.px_count_all:
            raise BopValidationError("gt_info: px_count_visib exceeds px_count_all")
        expect = self.px_count_visib / max(self.px_count_all, 1)
        if abs(self.visib_fract - expect) > 1e-6:
            raise BopValidationError("gt_info: visib_fract inconsistent with counts")


@dataclass
class PoseCsvRow:
    scene_id: int
    im_id: int
    obj_id: int
    score: float
    R: np.ndarray  # (3, 3)
    t: np.ndarray  # (3,) mm
    time: float = -1.0

    def validate(self):
        if not np.isfinite(self.score):
            raise BopValidationError("pose row: score must be finite")
        err = np.abs(self.R @ self.R.T - np.eye(3)).max()
        if err > 1e-4:
            raise BopValidationError(f"pose row: rotation not orthonormal (dev {err:.2e})")


@dataclass
class DetectionRecord:
    scene_id: int
    im_id: int
    obj_id: int
    score: float
    bbox: list  # x, y, w, h in pixels

    def validate(self):
        if self.bbox[2] < 0 or self.bbox[3] < 0:
            raise BopValidationError("detection: bbox w/h must be non-negative")


@dataclass
class FrameData:
    """In-memory view of one dataset image and its ground truth."""

    im_id: int
    camera: CameraRecord
    gt: list
    gt_info: list = field(default_factory=list)
    rgb: np.ndarray | None = None
    depth_mm: np.ndarray | None = None
    masks_full: list = field(default_factory=list)
    masks_visible: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# canonical JSON: one image key per line, keys in numeric order

def _py(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_py(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_py(v) for v in value]
    if isinstance(value, dict):
        return {k: _py(v) for k, v in value.items()}
    return value


def dump_keyed_json(path, doc):
    keys = sorted(doc, key=lambda k: int(k))
    lines = ["{"]
    for i, key in enumerate(keys):
        body = json.dumps(_py(doc[key]), separators=(", ", ": "))
        comma = "," if i + 1 < len(keys) else ""
        lines.append(f' "{int(key)}": {body}{comma}')
    lines.append("}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _load_json(path):
    if not os.path.exists(path):
        raise BopIoError(f"missing file: {path}")
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise BopValidationError(f"{path}: invalid JSON ({exc})") from exc


# ---------------------------------------------------------------------------
# scene writing

def _mask_bbox(mask):
    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        return [-1, -1, -1, -1]
    return [int(xs.min()), int(ys.min()),
            int(xs.max() - xs.min() + 1), int(ys.max() - ys.min() + 1)]


def _gt_info_from_masks(mask_full, mask_visible, depth_mm):
    px_all = int(mask_full.sum())
    px_visib = int(mask_visible.sum())
    px_valid = int((mask_full & (depth_mm > 0)).sum())
    return GtInfoRecord(
        bbox_obj=_mask_bbox(mask_full),
        bbox_visib=_mask_bbox(mask_visible),
        px_count_all=px_all,
        px_count_valid=px_valid,
        px_count_visib=px_visib,
        visib_fract=px_visib / max(px_all, 1),
    )


def write_scene(scene_dir, frames):
    """Write FrameData records as one BOP scene directory.

    gt_info is recomputed from the masks and depth so the JSON invariants
    (bbox == tight mask box, counts == pixel sums) hold by construction.
    """
    for sub in ("rgb", "depth", "mask", "mask_visib"):
        os.makedirs(os.path.join(scene_dir, sub), exist_ok=True)

    gt_doc, cam_doc, info_doc = {}, {}, {}
    for frame in frames:
        if len(frame.gt) != len(frame.masks_full) or len(frame.gt) != len(frame.masks_visible):
            raise BopValidationError(
                f"frame {frame.im_id}: gt count does not match mask count")
        frame.camera.validate()
        for rec in frame.gt:
            rec.validate()
        im = frame.im_id
        ok = cv2.imwrite(os.path.join(scene_dir, "rgb", f"{im:06d}.jpg"),
                         frame.rgb[:, :, ::-1],
                         [cv2.IMWRITE_JPEG_QUALITY, JPEG_QUALITY])
        depth_u16 = np.rint(frame.depth_mm / frame.camera.depth_scale)
        if depth_u16.max(initial=0) > np.iinfo(np.uint16).max:
            raise BopValidationError(
                f"frame {im}: depth exceeds 16-bit range at scale {frame.camera.depth_scale}")
        ok &= cv2.imwrite(os.path.join(scene_dir, "depth", f"{im:06d}.png"),
                          depth_u16.astype(np.uint16))
        infos = []
        for inst, (full, visib) in enumerate(zip(frame.masks_full, frame.masks_visible)):
            if np.any(visib & ~full):
                raise BopValidationError(
                    f"frame {im} instance {inst}: visible mask escapes full mask")
            ok &= cv2.imwrite(os.path.join(scene_dir, "mask", f"{im:06d}_{inst:06d}.png"),
                              full.astype(np.uint8) * 255)
            ok &= cv2.imwrite(
                os.path.join(scene_dir, "mask_visib", f"{im:06d}_{inst:06d}.png"),
                visib.astype(np.uint8) * 255)
            infos.append(_gt_info_from_masks(full, visib, frame.depth_mm))
        if not ok:
            raise BopIoError(f"cannot write images under {scene_dir}")

        key = str(im)
        gt_doc[key] = [
            {"cam_R_m2c": list(rec.cam_R_m2c), "cam_t_m2c": list(rec.cam_t_m2c),
             "obj_id": int(rec.obj_id)}
            for rec in frame.gt
        ]
        cam_doc[key] = {"cam_K": list(frame.camera.cam_K),
                        "depth_scale": frame.camera.depth_scale}
        info_doc[key] = [
            {"bbox_obj": info.bbox_obj, "bbox_visib": info.bbox_visib,
             "px_count_all": info.px_count_all, "px_count_valid": info.px_count_valid,
             "px_count_visib": info.px_count_visib, "visib_fract": info.visib_fract}
            for info in infos
        ]

    dump_keyed_json(os.path.join(scene_dir, "scene_gt.json"), gt_doc)
    dump_keyed_json(os.path.join(scene_dir, "scene_camera.json"), cam_doc)
    dump_keyed_json(os.path.join(scene_dir, "scene_gt_info.json"), info_doc)


# ---------------------------------------------------------------------------
# scene reading

def _read_image(path, flags, required=True):
    if not os.path.exists(path):
        if required:
            raise BopIoError(f"missing file: {path}")
        return None
    img = cv2.imread(path, flags)
    if img is None:
        raise BopIoError(f"cannot decode image: {path}")
    return img


def _find_rgb(scene_dir, im_id):
    for ext in (".jpg", ".png", ".jpeg"):
        path = os.path.join(scene_dir, "rgb", f"{im_id:06d}{ext}")
        if os.path.exists(path):
            return path
    raise BopIoError(f"missing file: {os.path.join(scene_dir, 'rgb', f'{im_id:06d}.jpg')}")


def read_scene(scene_dir, load_images=True):
    """Read one BOP scene directory into FrameData records.

    Tolerates the extra per-image keys some distributed datasets carry in
    scene_camera.json; masks and gt_info are optional (test scenes of the
    public benchmark sets ship without full masks).
    """
    gt_doc = _load_json(os.path.join(scene_dir, "scene_gt.json"))
    cam_doc = _load_json(os.path.join(scene_dir, "scene_camera.json"))
    info_path = os.path.join(scene_dir, "scene_gt_info.json")
    info_doc = _load_json(info_path) if os.path.exists(info_path) else {}

    frames = []
    for key in sorted(gt_doc, key=int):
        im_id = int(key)
        if key not in cam_doc:
            raise BopValidationError(f"scene_camera.json lacks image {key}")
        cam_entry = cam_doc[key]
        camera = CameraRecord(cam_K=cam_entry["cam_K"],
                              depth_scale=cam_entry.get("depth_scale", DEPTH_SCALE_DEFAULT))
        camera.validate()
        gt = []
        for entry in gt_doc[key]:
            rec = GtRecord(cam_R_m2c=entry["cam_R_m2c"], cam_t_m2c=entry["cam_t_m2c"],
                           obj_id=int(entry["obj_id"]))
            rec.validate()
            gt.append(rec)
        infos = []
        for entry in info_doc.get(key, []):
            info = GtInfoRecord(
                bbox_obj=entry.get("bbox_obj", [-1, -1, -1, -1]),
                bbox_visib=entry.get("bbox_visib", [-1, -1, -1, -1]),
                px_count_all=int(entry.get("px_count_all", 0)),
                px_count_valid=int(entry.get("px_count_valid", 0)),
                px_count_visib=int(entry.get("px_count_visib", 0)),
                visib_fract=float(entry.get("visib_fract", 0.0)),
            )
            infos.append(info)

        frame = FrameData(im_id=im_id, camera=camera, gt=gt, gt_info=infos)
        if load_images:
            rgb = _read_image(_find_rgb(scene_dir, im_id), cv2.IMREAD_COLOR)
            frame.rgb = np.ascontiguousarray(rgb[:, :, ::-1])
            depth_raw = _read_image(os.path.join(scene_dir, "depth", f"{im_id:06d}.png"),
                                    cv2.IMREAD_UNCHANGED, required=False)
            if depth_raw is not None:
                frame.depth_mm = depth_raw.astype(np.float64) * camera.depth_scale
            for inst in range(len(gt)):
                full = _read_image(
                    os.path.join(scene_dir, "mask", f"{im_id:06d}_{inst:06d}.png"),
                    cv2.IMREAD_GRAYSCALE, required=False)
                visib = _read_image(
                    os.path.join(scene_dir, "mask_visib", f"{im_id:06d}_{inst:06d}.png"),
                    cv2.IMREAD_GRAYSCALE, required=False)
                frame.masks_full.append(full > 127 if full is not None else None)
                frame.masks_visible.append(visib > 127 if visib is not None else None)
        frames.append(frame)
    return frames


def list_scene_dirs(dataset_root):
    """Sorted scene sub-directories (numeric names) of a dataset root."""
    if not os.path.isdir(dataset_root):
        raise BopIoError(f"not a directory: {dataset_root}")
    out = []
    for name in sorted(os.listdir(dataset_root)):
        path = os.path.join(dataset_root, name)
        if os.path.isdir(path) and name.isdigit():
            out.append(path)
    return out


# ---------------------------------------------------------------------------
# pose CSV (BOP submission format)

POSE_CSV_HEADER = "scene_id,im_id,obj_id,score,R,t,time"


def _fmt_float(x):
    return repr(float(x))


def write_pose_csv(path, rows):
    lines = [POSE_CSV_HEADER]
    for row in rows:
        row.validate()
        r = " ".join(_fmt_float(v) for v in np.asarray(row.R, dtype=np.float64).ravel())
        t = " ".join(_fmt_float(v) for v in np.asarray(row.t, dtype=np.float64).ravel())
        lines.append(f"{row.scene_id},{row.im_id},{row.obj_id},"
                     f"{_fmt_float(row.score)},{r},{t},{_fmt_float(row.time)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pose_csv(path):
    if not os.path.exists(path):
        raise BopIoError(f"missing file: {path}")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().startswith("scene_id"):
                continue
            parts = line.split(",")
            if len(parts) != 7:
                raise PoseCsvError(f"expected 7 comma fields, got {len(parts)}",
                                   line=lineno)
            try:
                r_vals = [float(v) for v in parts[4].split()]
                t_vals = [float(v) for v in parts[5].split()]
                if len(r_vals) != 9 or len(t_vals) != 3:
                    raise ValueError(f"R needs 9 values and t needs 3, "
                                     f"got {len(r_vals)}/{len(t_vals)}")
                row = PoseCsvRow(
                    scene_id=int(parts[0]), im_id=int(parts[1]), obj_id=int(parts[2]),
                    score=float(parts[3]),
                    R=np.array(r_vals, dtype=np.float64).reshape(3, 3),
                    t=np.array(t_vals, dtype=np.float64),
                    time=float(parts[6]))
                row.validate()
            except (ValueError, BopValidationError) as exc:
                raise PoseCsvError(str(exc), line=lineno) from exc
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# detection JSON

def write_detections(path, records):
    doc = []
    for rec in records:
        rec.validate()
        doc.append({"scene_id": int(rec.scene_id), "im_id": int(rec.im_id),
                    "obj_id": int(rec.obj_id), "score": float(rec.score),
                    "bbox": [float(v) for v in rec.bbox]})
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_detections(path):
    doc = _load_json(path)
    if not isinstance(doc, list):
        raise BopValidationError(f"{path}: detections must be a JSON list")
    records = []
    for entry in doc:
        rec = DetectionRecord(scene_id=int(entry["scene_id"]), im_id=int(entry["im_id"]),
                              obj_id=int(entry["obj_id"]), score=float(entry["score"]),
                              bbox=list(entry["bbox"]))
        rec.validate()
        records.append(rec)
    return records

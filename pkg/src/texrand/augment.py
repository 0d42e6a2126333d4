"""Online augmentation pipeline with probability scaling, and the five-level
image corruption suite used for robustness inputs.

All ops take and return 8-bit RGB; arithmetic runs in float64 and each op
clamps to [0, 255] and rounds half-to-even on the way out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import cv2
import numpy as np

from .streams import RngStream

_LUMA = np.array([0.299, 0.587, 0.114])


def _quantize(img_f):
    return np.rint(np.clip(img_f, 0.0, 255.0)).astype(np.uint8)


def _as_float(img):
    if img.dtype != np.uint8 or img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("expected an 8-bit RGB image")
    return img.astype(np.float64)


def _draw(params, gen, name, lo, hi):
    if name in params:
        return float(params[name])
    return float(gen.uniform(lo, hi))


# ---------------------------------------------------------------------------
# augmentation ops (Table-ted GDRNPP-style parameter ranges, config-overridable)

def _coarse_dropout(img, gen, params):
    h, w = img.shape[:2]
    cell = params.get("cell_frac", 0.05)
    prob = params.get("drop_prob", 0.2)
    side = max(1, int(round(cell * min(w, h))))
    gh, gw = -(-h // side), -(-w // side)
    drop = gen.uniform(size=(gh, gw)) < prob
    mask = np.repeat(np.repeat(drop, side, axis=0), side, axis=1)[:h, :w]
    out = img.copy()
    out[mask] = 0.0
    return out


def _gaussian_blur(img, gen, params):
    sigma = _draw(params, gen, "sigma", 0.0, 3.0)
    if sigma <= 1e-6:
        return img
    return cv2.GaussianBlur(img, (0, 0), sigmaX=sigma, sigmaY=sigma,
                            borderType=cv2.BORDER_REFLECT_101)


def _blend(base, img, f):
    return (1.0 - f) * base + f * img


def _enhance_sharpness(img, gen, params):
    f = _draw(params, gen, "factor", 0.5, 1.5)
    base = cv2.blur(img, (3, 3), borderType=cv2.BORDER_REFLECT_101)
    return _blend(base, img, f)


def _enhance_contrast(img, gen, params):
    f = _draw(params, gen, "factor", 0.5, 1.5)
    base = float((img @ _LUMA).mean())
    return _blend(base, img, f)


def _enhance_brightness(img, gen, params):
    f = _draw(params, gen, "factor", 0.5, 1.5)
    return _blend(0.0, img, f)


def _enhance_color(img, gen, params):
    f = _draw(params, gen, "factor", 0.5, 1.5)
    gray = (img @ _LUMA)[:, :, None].repeat(3, axis=2)
    return _blend(gray, img, f)


def _add(img, gen, params):
    c = _draw(params, gen, "value", -25.0, 25.0)
    return img + c


def _invert(img, gen, params):
    return 255.0 - img


def _multiply(img, gen, params):
    m = _draw(params, gen, "factor", 0.6, 1.4)
    return img * m


def _gaussian_noise(img, gen, params):
    sigma = _draw(params, gen, "sigma", 3.0, 15.0)
    return img + gen.normal(0.0, sigma, size=img.shape)


def _linear_contrast(img, gen, params):
    a = _draw(params, gen, "factor", 0.5, 2.2)
    return 127.0 + a * (img - 127.0)


_OPS = {
    "CoarseDropout": _coarse_dropout,
    "GaussianBlur": _gaussian_blur,
    "EnhanceSharpness": _enhance_sharpness,
    "EnhanceContrast": _enhance_contrast,
    "EnhanceBrightness": _enhance_brightness,
    "EnhanceColor": _enhance_color,
    "Add": _add,
    "Invert": _invert,
    "Multiply": _multiply,
    "GaussianNoise": _gaussian_noise,
    "LinearContrast": _linear_contrast,
}

AUG_KINDS = tuple(_OPS)


def apply_augmentation(kind, params, image, rng):
    """Apply one augmentation op; random magnitudes come from `rng` unless
    pinned in `params` (e.g. {"factor": 1.0})."""
    if kind not in _OPS:
        raise ValueError(f"unknown augmentation kind: {kind}")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    return _quantize(_OPS[kind](_as_float(image), gen, params or {}))


@dataclass
class AugOpSpec:
    kind: str
    p: float
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("op probability must lie in [0, 1]")
        if self.kind not in _OPS:
            raise ValueError(f"unknown augmentation kind: {self.kind}")


# base probabilities per profile (detection: 11 ops; pose: 6 ops)
DETECTION_PROFILE = [
    ("CoarseDropout", 0.5), ("GaussianBlur", 0.4), ("EnhanceSharpness", 0.3),
    ("EnhanceContrast", 0.3), ("EnhanceBrightness", 0.5), ("EnhanceColor", 0.3),
    ("Add", 0.5), ("Invert", 0.3), ("Multiply", 0.5), ("GaussianNoise", 0.1),
    ("LinearContrast", 0.5),
]
POSE_PROFILE = [
    ("CoarseDropout", 0.5), ("GaussianBlur", 0.5), ("Add", 0.5),
    ("Invert", 0.3), ("Multiply", 0.5), ("LinearContrast", 0.5),
]


@dataclass
class AugPipeline:
    """Ordered augmentation ops whose firing probabilities scale by lambda."""

    ops: list
    lam: float = 1.0
    profile: str = "custom"

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")

    @staticmethod
    def for_profile(profile, lam=1.0):
        table = {"detection": DETECTION_PROFILE, "pose": POSE_PROFILE}
        if profile not in table:
            raise ValueError(f"unknown profile: {profile} (use detection or pose)")
        ops = [AugOpSpec(kind, p) for kind, p in table[profile]]
        return AugPipeline(ops=ops, lam=lam, profile=profile)

    def to_json(self):
        return {"profile": self.profile, "lambda": self.lam,
                "ops": [{"kind": o.kind, "p": o.p, "params": o.params} for o in self.ops]}

    @staticmethod
    def from_json(doc):
        ops = [AugOpSpec(o["kind"], o["p"], o.get("params", {})) for o in doc["ops"]]
        return AugPipeline(ops=ops, lam=doc.get("lambda", 1.0),
                           profile=doc.get("profile", "custom"))


def apply_pipeline(image, pipeline, rng):
    """Run the pipeline: op i fires iff an independent uniform < lam * p_i.

    Gate draws all come from `rng` in op order and are consumed whether or
    not the op fires; each op's magnitudes come from a per-op child stream,
    so the realized randomness of op j never depends on whether op i fired.
    """
    gen = rng.generator()
    gates = gen.uniform(size=len(pipeline.ops))
    out = image
    for i, op in enumerate(pipeline.ops):
        if gates[i] < pipeline.lam * op.p:
            out = apply_augmentation(op.kind, op.params, out, rng.child(i))
    return out


# ---------------------------------------------------------------------------
# corruption suite (five severities per kind)

CORRUPTION_KINDS = ("GaussianNoise", "ShotNoise", "MotionBlur", "GaussianBlur",
                    "Brightness")

_GAUSS_NOISE_SIGMA = (0.04, 0.06, 0.08, 0.09, 0.10)  # fraction of full scale
_SHOT_NOISE_RATE = (60.0, 25.0, 12.0, 5.0, 3.0)  # photons at full scale
_MOTION_BLUR_LEN = (5, 9, 13, 17, 21)  # px
_GAUSS_BLUR_SIGMA = (1.0, 2.0, 3.0, 4.0, 6.0)  # px
_BRIGHTNESS_SHIFT = (0.1, 0.2, 0.3, 0.4, 0.5)  # fraction of full scale


@dataclass
class Corruption:
    kind: str
    severity: int

    def __post_init__(self):
        if self.kind not in CORRUPTION_KINDS:
            raise ValueError(f"unknown corruption kind: {self.kind}")
        if not 1 <= self.severity <= 5:
            raise ValueError("severity must lie in 1..5")


def _motion_kernel(length, angle):
    half = (length - 1) / 2.0
    size = int(2 * math.ceil(half) + 1)
    kernel = np.zeros((size, size), dtype=np.float64)
    c = size // 2
    steps = np.linspace(-half, half, length)
    for s in steps:
        x = int(round(c + s * math.cos(angle)))
        y = int(round(c + s * math.sin(angle)))
        kernel[y, x] = 1.0
    return kernel / kernel.sum()


def apply_corruption(image, corruption, rng, brightness_sign=1):
    """Apply one corruption at its severity level; returns 8-bit RGB."""
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    sev = corruption.severity - 1
    x = _as_float(image) / 255.0
    kind = corruption.kind
    if kind == "GaussianNoise":
        x = x + gen.normal(0.0, _GAUSS_NOISE_SIGMA[sev], size=x.shape)
    elif kind == "ShotNoise":
        rate = _SHOT_NOISE_RATE[sev]
        x = gen.poisson(np.clip(x, 0.0, 1.0) * rate) / rate
    elif kind == "MotionBlur":
        angle = float(gen.uniform(0.0, math.pi))
        kernel = _motion_kernel(_MOTION_BLUR_LEN[sev], angle)
        x = cv2.filter2D(x, -1, kernel, borderType=cv2.BORDER_REFLECT_101)
    elif kind == "GaussianBlur":
        sigma = _GAUSS_BLUR_SIGMA[sev]
        x = cv2.GaussianBlur(x, (0, 0), sigmaX=sigma, sigmaY=sigma,
                             borderType=cv2.BORDER_REFLECT_101)
    elif kind == "Brightness":
        x = x + brightness_sign * _BRIGHTNESS_SHIFT[sev]
    return _quantize(x * 255.0)

"""Run configuration: JSON file + dotted-path overrides over defaults."""

from __future__ import annotations

import copy
import hashlib
import json

from .compose import ComposeConfig, DEFAULT_INTRINSICS
from .render import ShadingParams


class ConfigError(Exception):
    pass


RENDER_DEFAULTS = {
    "seed": 0,
    "scenes": 2,
    "views": 3,
    "mode": "shape",  # "shape" (randomized textures) or "texture" (uniform colors)
    "texture_count": None,  # None = full bank
    "models_dir": None,
    "textures_dir": None,
    "unit_scale": 1.0,
    "depth_scale": 0.1,
    "per_frame_materials": False,
    "symmetry_steps": 64,
    "texel_density": None,  # None = one tile per object extent
    "compose": {
        "count_range": [3, 8],
        "slab_xy_mm": 150.0,
        "slab_z_mm": [40.0, 200.0],
        "separation_tol": 0.05,
        "rest_on_plane": False,
        "max_attempts": 200,
        "camera_radius_mm": [550.0, 950.0],
        "image_size": [640, 480],
        "intrinsics": list(DEFAULT_INTRINSICS),
        "light_count": [1, 3],
        "light_radius_mm": [900.0, 1800.0],
        "light_power": [4.0e5, 1.6e6],
        "ambient_range": [0.1, 0.3],
        "ground_extent_mm": 2000.0,
        "wall_height_mm": 2000.0,
        "env_tile_mm": 500.0,
    },
    "shading": {
        "gamma": 2.2,
        "shadows": True,
        "roughness_eps": 0.05,
        "supersample": 1,
        "sky_color": [0.18, 0.20, 0.23],
    },
}


def _coerce(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config, dotted_key, value):
    """Set config['a']['b'] = value for dotted_key 'a.b'; value is parsed as
    JSON when possible, else kept as a string."""
    node = config
    parts = dotted_key.split(".")
    for part in parts[:-1]:
        if part not in node or not isinstance(node[part], dict):
            raise ConfigError(f"unknown config group: {'.'.join(parts[:-1])}")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(f"unknown config key: {dotted_key}")
    node[parts[-1]] = _coerce(value) if isinstance(value, str) else value


def _merge(base, update, path=""):
    for key, value in update.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {path}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, path=f"{path}{key}.")
        else:
            base[key] = value


def load_render_config(config_path=None, overrides=(), defaults=None):
    """Defaults <- config file <- CLI overrides, in increasing precedence."""
    config = copy.deepcopy(defaults or RENDER_DEFAULTS)
    if config_path:
        with open(config_path) as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{config_path}: invalid JSON ({exc})") from exc
        _merge(config, doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, _, value = item.partition("=")
        apply_override(config, key.strip(), value.strip())
    return config


def compose_config_from(config):
    c = config["compose"]
    return ComposeConfig(
        count_range=tuple(c["count_range"]),
        slab_xy_mm=float(c["slab_xy_mm"]),
        slab_z_mm=tuple(c["slab_z_mm"]),
        separation_tol=float(c["separation_tol"]),
        rest_on_plane=bool(c["rest_on_plane"]),
        max_attempts=int(c["max_attempts"]),
        camera_radius_mm=tuple(c["camera_radius_mm"]),
        image_size=tuple(int(v) for v in c["image_size"]),
        intrinsics=tuple(float(v) for v in c["intrinsics"]),
        light_count=tuple(int(v) for v in c["light_count"]),
        light_radius_mm=tuple(c["light_radius_mm"]),
        light_power=tuple(c["light_power"]),
        ambient_range=tuple(c["ambient_range"]),
        ground_extent_mm=float(c["ground_extent_mm"]),
        wall_height_mm=float(c["wall_height_mm"]),
        env_tile_mm=float(c["env_tile_mm"]),
    )


def shading_params_from(config):
    s = config["shading"]
    return ShadingParams(
        gamma=float(s["gamma"]),
        shadows=bool(s["shadows"]),
        roughness_eps=float(s["roughness_eps"]),
        supersample=int(s["supersample"]),
        sky_color=tuple(float(v) for v in s["sky_color"]),
    )


def config_hash(config):
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()

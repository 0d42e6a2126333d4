"""Randomized scene composition: placements, cameras, lights, dataset plans."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .streams import MaterialSample, Purpose, RngStream, SamplingMode, sample_texture_assignment


class PlacementError(Exception):
    """Raised when an instance cannot be placed without overlap."""


@dataclass
class ObjectInstance:
    object_id: int
    rotation: np.ndarray  # (3, 3) model-to-world
    translation: np.ndarray  # (3,) mm
    material: MaterialSample

    def validate(self):
        err = np.abs(self.rotation @ self.rotation.T - np.eye(3)).max()
        if err > 1e-6 or np.linalg.det(self.rotation) < 0:
            raise ValueError(f"instance rotation not orthonormal (dev {err:.2e})")


@dataclass
class CameraSample:
    """Pinhole camera: intrinsics in pixels, extrinsics world-to-camera."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    R_w2c: np.ndarray
    t_w2c: np.ndarray

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def validate(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must lie inside the image")


@dataclass
class LightSample:
    position: np.ndarray  # (3,) mm, world frame
    intensity: np.ndarray  # (3,) radiometric, >= 0


@dataclass
class ViewSpec:
    camera: CameraSample
    lights: list[LightSample]


@dataclass
class SceneSpec:
    """One composed scene: fixed instances/materials, per-view cameras and lights."""

    index: int
    instances: list[ObjectInstance]
    ground_texture: int
    wall_textures: list[int]
    ambient: float
    views: list[ViewSpec] = field(default_factory=list)

    def validate(self):
        for inst in self.instances:
            inst.validate()
        if not self.views:
            raise ValueError("scene needs at least one view")
        for view in self.views:
            view.camera.validate()
            if not view.lights:
                raise ValueError("every view needs at least one light")
            if not any(l.position[2] > 0 for l in view.lights):
                raise ValueError("at least one light must sit above the ground plane")


@dataclass
class RenderJob:
    scene: SceneSpec
    view_index: int


# TLESS-Primesense-like default intrinsics at 640x480 (config-overridable).
DEFAULT_INTRINSICS = (1075.65, 1075.65, 374.0, 232.0)


@dataclass
class ComposeConfig:
    count_range: tuple[int, int] = (3, 8)
    slab_xy_mm: float = 150.0
    slab_z_mm: tuple[float, float] = (40.0, 200.0)
    separation_tol: float = 0.05
    rest_on_plane: bool = False
    max_attempts: int = 200
    camera_radius_mm: tuple[float, float] = (550.0, 950.0)
    image_size: tuple[int, int] = (640, 480)
    intrinsics: tuple[float, float, float, float] = DEFAULT_INTRINSICS
    light_count: tuple[int, int] = (1, 3)
    light_radius_mm: tuple[float, float] = (900.0, 1800.0)
    light_power: tuple[float, float] = (4.0e5, 1.6e6)
    ambient_range: tuple[float, float] = (0.1, 0.3)
    ground_extent_mm: float = 2000.0
    wall_height_mm: float = 2000.0
    env_tile_mm: float = 500.0

    def validate(self):
        lo, hi = self.count_range
        if not (1 <= lo <= hi <= 30):
            raise ValueError("count_range must lie within [1, 30]")
        if self.camera_radius_mm[0] <= 0 or self.camera_radius_mm[0] > self.camera_radius_mm[1]:
            raise ValueError("camera_radius_mm must be positive with min <= max")


def random_rotation(gen):
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    q = gen.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def _yaw_rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _world_sphere(model, R, t):
    center, radius = model.mesh.bounding_sphere()
    return R @ center + t, radius


def compose_scene(models, count_range, mode, rng, max_attempts=200,
                  config=None, bank_size=None, num_views=1):
    """Compose one randomized scene.

    Instance count is uniform over `count_range`; each instance gets a
    uniform object id, a Haar-uniform orientation and a position uniform in
    the configured slab. Placements whose bounding spheres overlap beyond the
    separation tolerance are re-drawn up to `max_attempts` times. Materials
    are drawn once per scene via sample_texture_assignment; ground and walls
    receive independently drawn texture indices from the full bank.
    """
    cfg = config or ComposeConfig()
    cfg.validate()
    if not models:
        raise ValueError("model set is empty")
    lo, hi = count_range
    if not (1 <= lo <= hi <= 30):
        raise ValueError("count_range must lie within [1, 30]")
    if bank_size is None:
        bank_size = mode.texture_count if mode.shape_bias else 1

    scene_index = rng.path[-1] if rng.path else 0
    place_gen = rng.child(Purpose.PLACEMENT).generator()
    ids = sorted(models)

    count = int(place_gen.integers(lo, hi + 1))
    placed = []  # (center, radius) world bounding spheres
    poses = []
    for i in range(count):
        obj_id = ids[int(place_gen.integers(0, len(ids)))]
        model = models[obj_id]
        if cfg.rest_on_plane:
            R = _yaw_rotation(place_gen.uniform(0.0, 2.0 * math.pi))
        else:
            R = random_rotation(place_gen)
        ok = False
        for _ in range(max_attempts):
            xy = place_gen.uniform(-cfg.slab_xy_mm, cfg.slab_xy_mm, size=2)
            if cfg.rest_on_plane:
                center_m, radius = model.mesh.bounding_sphere()
                z = radius - (R @ center_m)[2]
            else:
                z = place_gen.uniform(*cfg.slab_z_mm)
            t = np.array([xy[0], xy[1], z])
            center, radius = _world_sphere(model, R, t)
            if all(
                np.linalg.norm(center - c) >= (radius + r) * (1.0 - cfg.separation_tol)
                for c, r in placed
            ):
                ok = True
                break
        if not ok:
            raise PlacementError(
                f"cannot place instance {i} (object {obj_id}) after {max_attempts} attempts"
            )
        placed.append((center, radius))
        poses.append((obj_id, R, t))

    materials = sample_texture_assignment(count, mode, rng.child(Purpose.MATERIAL))
    instances = [
        ObjectInstance(obj_id, R, t, mat)
        for (obj_id, R, t), mat in zip(poses, materials)
    ]

    env_gen = rng.child(Purpose.ENVIRONMENT).generator()
    ground = int(env_gen.integers(1, bank_size + 1))
    walls = [int(env_gen.integers(1, bank_size + 1)) for _ in range(4)]
    ambient = float(env_gen.uniform(*cfg.ambient_range))

    scene = SceneSpec(scene_index, instances, ground, walls, ambient, views=[])
    for v in range(num_views):
        view_rng = rng.child(Purpose.VIEW, v)
        camera = sample_camera_shell(scene, cfg.camera_radius_mm, view_rng.child(Purpose.CAMERA),
                                     intrinsics=cfg.intrinsics, image_size=cfg.image_size)
        lights = _sample_lights(scene, cfg, view_rng.child(Purpose.LIGHTS))
        scene.views.append(ViewSpec(camera, lights))
    scene.validate()
    return scene


def _instance_centroid(scene):
    return np.mean([inst.translation for inst in scene.instances], axis=0)


def _hemisphere_direction(gen):
    z = gen.uniform(0.0, 1.0)
    phi = gen.uniform(0.0, 2.0 * math.pi)
    s = math.sqrt(max(0.0, 1.0 - z * z))
    return np.array([s * math.cos(phi), s * math.sin(phi), z])


def sample_camera_shell(scene, radius_range, rng,
                        intrinsics=DEFAULT_INTRINSICS, image_size=(640, 480)):
    """Camera on the upper-hemisphere shell around the instance centroid,
    looking at the centroid with uniform in-plane roll."""
    if not (0 < radius_range[0] <= radius_range[1]):
        raise ValueError("radius_range must be positive with min <= max")
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    centroid = _instance_centroid(scene)
    radius = gen.uniform(*radius_range)
    direction = _hemisphere_direction(gen)
    eye = centroid + radius * direction
    roll = gen.uniform(0.0, 2.0 * math.pi)

    forward = centroid - eye
    forward /= np.linalg.norm(forward)
    world_up = np.array([0.0, 0.0, 1.0])
    down0 = -(world_up - np.dot(world_up, forward) * forward)
    if np.linalg.norm(down0) < 1e-9:
        down0 = -(np.array([1.0, 0.0, 0.0])
                  - np.dot(np.array([1.0, 0.0, 0.0]), forward) * forward)
    down0 /= np.linalg.norm(down0)
    right0 = np.cross(down0, forward)

    c, s = math.cos(roll), math.sin(roll)
    right = c * right0 + s * down0
    down = -s * right0 + c * down0

    R_w2c = np.stack([right, down, forward])
    t_w2c = -R_w2c @ eye
    fx, fy, cx, cy = intrinsics
    camera = CameraSample(fx, fy, cx, cy, image_size[0], image_size[1], R_w2c, t_w2c)
    camera.validate()
    return camera


def _sample_lights(scene, cfg, rng):
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    centroid = _instance_centroid(scene)
    count = int(gen.integers(cfg.light_count[0], cfg.light_count[1] + 1))
    lights = []
    for _ in range(count):
        radius = gen.uniform(*cfg.light_radius_mm)
        position = centroid + radius * _hemisphere_direction(gen)
        power = gen.uniform(*cfg.light_power)
        tint = gen.uniform(0.85, 1.0, size=3)
        lights.append(LightSample(position, power * tint))
    return lights


def plan_dataset(m, l, models, mode, seed, config=None, bank_size=None):
    """Plan m scenes x l views: one RenderJob per (scene, view).

    Instances and materials are fixed per scene; cameras and lights are
    re-drawn per view. The plan is a pure function of (seed, config), so the
    job list is identical across runs and independent of later execution
    order.
    """
    if m < 1 or l < 1:
        raise ValueError("m and l must be >= 1")
    jobs = []
    for scene_idx in range(m):
        rng = RngStream(int(seed)).child(Purpose.SCENE, scene_idx)
        cfg = config or ComposeConfig()
        scene = compose_scene(models, cfg.count_range, mode, rng,
                              max_attempts=cfg.max_attempts, config=cfg,
                              bank_size=bank_size, num_views=l)
        for view_idx in range(l):
            jobs.append(RenderJob(scene, view_idx))
    return jobs

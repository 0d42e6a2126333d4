"""CPU ray-cast renderer: RGB with hard shadows, depth, instance maps, masks."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .assets import TriMesh, triplanar_uv
from .bvh import Bvh, build_bvh_from_corners
from .compose import ComposeConfig


class BehindCameraError(ValueError):
    pass


@dataclass
class ShadingParams:
    """Knobs of the direct-lighting shading model.

    The specular exponent is a Blinn-Phong-style mapping of the sampled
    roughness, alpha(r) = 2 / max(r, roughness_eps)^2 - 2, isolated here so
    the mapping can be swapped without touching the kernels.
    """

    gamma: float = 2.2
    shadows: bool = True
    roughness_eps: float = 0.05
    supersample: int = 1
    sky_color: tuple[float, float, float] = (0.18, 0.20, 0.23)

    def alpha_from_roughness(self, roughness):
        r = max(float(roughness), self.roughness_eps)
        return 2.0 / (r * r) - 2.0

    def validate(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.supersample not in (1, 2):
            raise ValueError("supersample must be 1 or 2")


@dataclass
class RenderFrame:
    """Rendered outputs for one camera view.

    depth is z-distance along the optical axis in mm with 0 marking no hit;
    instance_map holds the nearest real instance index or -1 (background
    geometry and sky both map to -1). masks_full[i] ignores occlusion,
    masks_visible[i] is the nearest-hit footprint.
    """

    rgb: np.ndarray
    depth: np.ndarray
    instance_map: np.ndarray
    masks_full: np.ndarray
    masks_visible: np.ndarray
    visib_fractions: np.ndarray


def project(camera, points_cam):
    """Pinhole projection of camera-frame points to pixel coordinates."""
    pts = np.atleast_2d(np.asarray(points_cam, dtype=np.float64))
    z = pts[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("point behind the camera (z <= 0)")
    out = np.empty((len(pts), 2))
    out[:, 0] = camera.fx * pts[:, 0] / z + camera.cx
    out[:, 1] = camera.fy * pts[:, 1] / z + camera.cy
    return out if np.asarray(points_cam).ndim == 2 else out[0]


def transform_points(points, R, t):
    """Apply the rigid transform x -> R x + t to (n, 3) points."""
    return points @ np.asarray(R, dtype=np.float64).T + np.asarray(t, dtype=np.float64)


def environment_mesh(config=None):
    """Ground plane plus four walls as a flat-shaded TriMesh with UVs."""
    cfg = config or ComposeConfig()
    e = float(cfg.ground_extent_mm)
    h = float(cfg.wall_height_mm)
    quads = [
        # ground, normal +z
        ([-e, -e, 0], [e, -e, 0], [e, e, 0], [-e, e, 0]),
        # walls, normals inward
        ([-e, -e, 0], [-e, e, 0], [-e, e, h], [-e, -e, h]),   # x = -e, +x
        ([e, -e, 0], [e, -e, h], [e, e, h], [e, e, 0]),       # x = +e, -x
        ([-e, -e, 0], [-e, -e, h], [e, -e, h], [e, -e, 0]),   # y = -e, +y
        ([-e, e, 0], [e, e, 0], [e, e, h], [-e, e, h]),       # y = +e, -y
    ]
    verts, tris = [], []
    for quad in quads:
        base = len(verts)
        verts.extend(quad)
        tris.append((base, base + 1, base + 2))
        tris.append((base, base + 2, base + 3))
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(tris, dtype=np.int64)
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    face_n = np.cross(b - a, c - a)
    face_n /= np.linalg.norm(face_n, axis=1, keepdims=True)
    # flat shading: duplicate vertices per face so normals stay uncoupled
    flat_verts = verts[tris].reshape(-1, 3)
    flat_normals = np.repeat(face_n, 3, axis=0)
    flat_tris = np.arange(len(flat_verts), dtype=np.int64).reshape(-1, 3)
    return TriMesh(flat_verts, flat_tris, flat_normals)


@dataclass
class ScenePack:
    """Kernel-ready arrays for one composed scene (camera-independent)."""

    bvh: Bvh
    tri_inst: np.ndarray
    tri_normals: np.ndarray
    tri_uvs: np.ndarray
    mat_mode: np.ndarray
    mat_color: np.ndarray
    mat_tex: np.ndarray
    mat_spec: np.ndarray
    mat_alpha: np.ndarray
    tex_data: np.ndarray
    tex_off: np.ndarray
    tex_w: np.ndarray
    tex_h: np.ndarray
    num_instances: int
    instance_bvhs: list = field(default_factory=list)
    instance_bounds: list = field(default_factory=list)  # (lo, hi) world AABBs


def _texture_atlas(textures):
    if not textures:
        data = np.zeros(3, dtype=np.float64)
        return data, np.array([0], dtype=np.int64), np.array([1], dtype=np.int64), \
            np.array([1], dtype=np.int64)
    chunks, offsets, widths, heights = [], [0], [], []
    total = 0
    for tex in textures:
        flat = tex.pixels.astype(np.float64).ravel()
        chunks.append(flat)
        total += flat.size
        offsets.append(total)
        widths.append(tex.width)
        heights.append(tex.height)
    return (np.concatenate(chunks), np.asarray(offsets[:-1], dtype=np.int64),
            np.asarray(widths, dtype=np.int64), np.asarray(heights, dtype=np.int64))


def _bank_slot(texture_index, n_bank):
    if not (1 <= texture_index <= n_bank):
        raise ValueError(
            f"texture index {texture_index} outside bank of {n_bank} textures")
    return texture_index - 1


def pack_scene(scene, models, textures, params=None, config=None):
    """Flatten a SceneSpec into ScenePack arrays.

    Real instances take material slots 0..k-1; the ground and walls occupy
    five extra matte slots after them.
    """
    params = params or ShadingParams()
    cfg = config or ComposeConfig()
    n_bank = len(textures)

    all_corners, all_normals, all_uvs, all_inst = [], [], [], []
    inst_bvhs, inst_bounds = [], []
    k = len(scene.instances)

    for idx, inst in enumerate(scene.instances):
        model = models[inst.object_id]
        verts = transform_points(model.mesh.vertices, inst.rotation, inst.translation)
        normals = model.mesh.normals @ np.asarray(inst.rotation, dtype=np.float64).T
        tris = model.mesh.triangles
        corners = verts[tris]
        all_corners.append(corners)
        all_normals.append(normals[tris])
        all_uvs.append(model.uv.corner_uvs)
        all_inst.append(np.full(len(tris), idx, dtype=np.int32))
        inst_bvhs.append(build_bvh_from_corners(corners))
        inst_bounds.append((verts.min(axis=0), verts.max(axis=0)))

    env = environment_mesh(cfg)
    env_uv = triplanar_uv(env, 1.0 / cfg.env_tile_mm)
    env_corners = env.vertices[env.triangles]
    env_normals = env.normals[env.triangles]
    env_slot_of_tri = np.repeat(np.arange(5, dtype=np.int32), 2)  # 2 tris per quad
    all_corners.append(env_corners)
    all_normals.append(env_normals)
    all_uvs.append(env_uv.corner_uvs)
    all_inst.append(k + env_slot_of_tri)

    corners = np.concatenate(all_corners)
    normals = np.concatenate(all_normals)
    uvs = np.concatenate(all_uvs)
    inst_ids = np.concatenate(all_inst)

    bvh = build_bvh_from_corners(corners)
    perm = bvh.perm

    n_mat = k + 5
    mat_mode = np.zeros(n_mat, dtype=np.uint8)
    mat_color = np.zeros((n_mat, 3), dtype=np.float64)
    mat_tex = np.full(n_mat, -1, dtype=np.int64)
    mat_spec = np.zeros(n_mat, dtype=np.float64)
    mat_alpha = np.zeros(n_mat, dtype=np.float64)
    for idx, inst in enumerate(scene.instances):
        mat = inst.material
        mat_spec[idx] = mat.specularity
        mat_alpha[idx] = params.alpha_from_roughness(mat.roughness)
        if mat.color is not None:
            mat_mode[idx] = 0
            mat_color[idx] = mat.color
        else:
            mat_mode[idx] = 1
            mat_tex[idx] = _bank_slot(mat.texture_index, n_bank)
    env_textures = [scene.ground_texture] + list(scene.wall_textures)
    for j, tex_index in enumerate(env_textures):
        slot = k + j
        mat_mode[slot] = 1
        mat_tex[slot] = _bank_slot(tex_index, n_bank)
        mat_spec[slot] = 0.0
        mat_alpha[slot] = params.alpha_from_roughness(1.0)

    tex_data, tex_off, tex_w, tex_h = _texture_atlas(textures)
    return ScenePack(
        bvh=bvh,
        tri_inst=np.ascontiguousarray(inst_ids[perm]),
        tri_normals=np.ascontiguousarray(normals[perm]),
        tri_uvs=np.ascontiguousarray(uvs[perm]),
        mat_mode=mat_mode,
        mat_color=mat_color,
        mat_tex=mat_tex,
        mat_spec=mat_spec,
        mat_alpha=mat_alpha,
        tex_data=tex_data,
        tex_off=tex_off,
        tex_w=tex_w,
        tex_h=tex_h,
        num_instances=k,
        instance_bvhs=inst_bvhs,
        instance_bounds=inst_bounds,
    )


def build_bvh(scene, models, textures=(), config=None):
    """Scene-level BVH over all instance and environment triangles."""
    return pack_scene(scene, models, list(textures), config=config).bvh


def _camera_rays_frame(camera):
    R = np.ascontiguousarray(camera.R_w2c, dtype=np.float64)
    origin = np.ascontiguousarray(-R.T @ np.asarray(camera.t_w2c, dtype=np.float64))
    return R, origin


def _project_bounds(camera, lo, hi):
    """Pixel-rect covering the projection of a world AABB, or the full
    image when any corner is not safely in front of the camera."""
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    cam_pts = transform_points(corners, camera.R_w2c, camera.t_w2c)
    if np.any(cam_pts[:, 2] <= 1e-6):
        return 0, camera.width, 0, camera.height
    px = project(camera, cam_pts)
    x0 = max(0, int(np.floor(px[:, 0].min() - 1.0)))
    x1 = min(camera.width, int(np.ceil(px[:, 0].max() + 1.0)) + 1)
    y0 = max(0, int(np.floor(px[:, 1].min() - 1.0)))
    y1 = min(camera.height, int(np.ceil(px[:, 1].max() + 1.0)) + 1)
    if x1 <= x0 or y1 <= y0:
        return 0, 0, 0, 0
    return x0, x1, y0, y1


def _run_blocks(fn, height, tile_rows, pool):
    blocks = [(y, min(y + tile_rows, height)) for y in range(0, height, tile_rows)]
    if pool is None:
        for y0, y1 in blocks:
            fn(y0, y1)
    else:
        list(pool.map(lambda b: fn(b[0], b[1]), blocks))


def render_frame(scene, camera, models, params=None, rng=None, *,
                 textures, lights=None, config=None, pack=None, pool=None,
                 tile_rows=64):
    """Render one view of a composed scene.

    `camera` may be a view index into scene.views (lights come along) or a
    CameraSample (pass `lights` unless it is one of the scene's views).

    Shading: ambient * albedo plus, per unshadowed light, diffuse
    albedo * max(0, n.l) * I / d^2 and a white specular lobe
    S * max(0, n.h)^alpha(R) * I / d^2, gamma-encoded. Output is
    bit-identical for any tile decomposition or thread pool because every
    pixel is computed independently in a fixed order.
    """
    params = params or ShadingParams()
    params.validate()
    pack = pack or pack_scene(scene, models, textures, params, config)

    if isinstance(camera, (int, np.integer)):
        view = scene.views[int(camera)]
        camera, lights = view.camera, view.lights
    elif lights is None:
        for v in scene.views:
            if v.camera is camera:
                lights = v.lights
                break
        if lights is None:
            raise ValueError("camera is not a scene view; pass lights= explicitly")

    w, h = camera.width, camera.height
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    depth = np.zeros((h, w), dtype=np.float64)
    inst = np.full((h, w), -1, dtype=np.int32)

    cam_rows, origin = _camera_rays_frame(camera)
    light_pos = np.ascontiguousarray([l.position for l in lights], dtype=np.float64)
    light_rgb = np.ascontiguousarray([l.intensity for l in lights], dtype=np.float64)
    sky = np.asarray(params.sky_color, dtype=np.float64)
    bvh = pack.bvh

    def shade_rows(y0, y1):
        kernels.render_block(
            bvh.node_lo, bvh.node_hi, bvh.node_right, bvh.node_start, bvh.node_count,
            bvh.v0, bvh.e1, bvh.e2, pack.tri_inst, pack.tri_normals, pack.tri_uvs,
            pack.mat_mode, pack.mat_color, pack.mat_tex, pack.mat_spec, pack.mat_alpha,
            pack.tex_data, pack.tex_off, pack.tex_w, pack.tex_h,
            light_pos, light_rgb,
            camera.fx, camera.fy, camera.cx, camera.cy, cam_rows, origin,
            scene.ambient, params.gamma, params.shadows, params.supersample, sky,
            y0, y1, 0, w, rgb, depth, inst)

    _run_blocks(shade_rows, h, tile_rows, pool)

    k = pack.num_instances
    masks_full = np.zeros((k, h, w), dtype=bool)
    masks_visible = np.zeros((k, h, w), dtype=bool)
    fractions = np.zeros(k, dtype=np.float64)
    obj_depth = np.zeros((h, w), dtype=np.float64)
    for i in range(k):
        lo, hi = pack.instance_bounds[i]
        x0, x1, y0, y1 = _project_bounds(camera, lo, hi)
        if x1 > x0 and y1 > y0:
            obj_depth[:] = 0.0
            b = pack.instance_bvhs[i]
            kernels.depth_block(
                b.node_lo, b.node_hi, b.node_right, b.node_start, b.node_count,
                b.v0, b.e1, b.e2,
                camera.fx, camera.fy, camera.cx, camera.cy, cam_rows, origin,
                y0, y1, x0, x1, obj_depth)
            masks_full[i] = obj_depth > 0.0
        masks_visible[i] = inst == i
        n_full = int(masks_full[i].sum())
        n_vis = int(masks_visible[i].sum())
        fractions[i] = n_vis / n_full if n_full > 0 else 0.0

    instance_map = np.where(inst >= k, np.int32(-1), inst)
    return RenderFrame(rgb, depth, instance_map, masks_full, masks_visible, fractions)


def render_object_depth(model, pose_R, pose_t, camera, tile_rows=64, pool=None):
    """Depth map of one object alone at the given model-to-camera-world pose.

    Same ray parameterization as render_frame, so on unoccluded pixels the
    values match the scene depth bit-for-bit.
    """
    verts = transform_points(model.mesh.vertices, pose_R, pose_t)
    corners = verts[model.mesh.triangles]
    bvh = build_bvh_from_corners(corners)
    cam_rows, origin = _camera_rays_frame(camera)
    depth = np.zeros((camera.height, camera.width), dtype=np.float64)
    x0, x1, y0, y1 = _project_bounds(camera, verts.min(axis=0), verts.max(axis=0))
    if x1 <= x0 or y1 <= y0:
        return depth

    def rows(r0, r1):
        kernels.depth_block(
            bvh.node_lo, bvh.node_hi, bvh.node_right, bvh.node_start, bvh.node_count,
            bvh.v0, bvh.e1, bvh.e2,
            camera.fx, camera.fy, camera.cx, camera.cy, cam_rows, origin,
            r0, r1, x0, x1, depth)

    blocks = [(y, min(y + tile_rows, y1)) for y in range(y0, y1, tile_rows)]
    if pool is None:
        for r0, r1 in blocks:
            rows(r0, r1)
    else:
        list(pool.map(lambda b: rows(b[0], b[1]), blocks))
    return depth

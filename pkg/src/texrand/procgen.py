"""Procedural demo assets: parametric industrial-like meshes and a synthetic
texture bank, so datasets can be generated without downloading anything."""

from __future__ import annotations

import json
import math
import os
import struct

import cv2
import numpy as np

from .assets import TriMesh, TextureImage, compute_diameter


# ---------------------------------------------------------------------------
# mesh construction helpers (flat shading via duplicated vertices)

def _mesh_from_faces(faces):
    """faces: list of (corner, corner, corner) triples; normals per face."""
    verts, tris, normals = [], [], []
    for a, b, c in faces:
        base = len(verts)
        verts.extend([a, b, c])
        tris.append((base, base + 1, base + 2))
        n = np.cross(np.subtract(b, a), np.subtract(c, a))
        n = n / np.linalg.norm(n)
        normals.extend([n, n, n])
    return TriMesh(np.asarray(verts, dtype=np.float64),
                   np.asarray(tris, dtype=np.int64),
                   np.asarray(normals, dtype=np.float64))


def _quads_to_faces(quads):
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return faces


def box_mesh(sx, sy, sz):
    """Axis-aligned box centered at the origin, dimensions in mm."""
    x, y, z = sx / 2.0, sy / 2.0, sz / 2.0
    quads = [
        ((-x, -y, -z), (-x, y, -z), (x, y, -z), (x, -y, -z)),   # -z
        ((-x, -y, z), (x, -y, z), (x, y, z), (-x, y, z)),       # +z
        ((-x, -y, -z), (x, -y, -z), (x, -y, z), (-x, -y, z)),   # -y
        ((-x, y, -z), (-x, y, z), (x, y, z), (x, y, -z)),       # +y
        ((-x, -y, -z), (-x, -y, z), (-x, y, z), (-x, y, -z)),   # -x
        ((x, -y, -z), (x, y, -z), (x, y, z), (x, -y, z)),       # +x
    ]
    return _mesh_from_faces(_quads_to_faces(quads))


def cylinder_mesh(radius, height, segments=48):
    """Cylinder along z, centered at the origin."""
    h = height / 2.0
    faces = []
    for i in range(segments):
        a0 = 2 * math.pi * i / segments
        a1 = 2 * math.pi * (i + 1) / segments
        p0 = (radius * math.cos(a0), radius * math.sin(a0))
        p1 = (radius * math.cos(a1), radius * math.sin(a1))
        faces.append(((p0[0], p0[1], -h), (p1[0], p1[1], -h), (p1[0], p1[1], h)))
        faces.append(((p0[0], p0[1], -h), (p1[0], p1[1], h), (p0[0], p0[1], h)))
        faces.append(((0, 0, h), (p0[0], p0[1], h), (p1[0], p1[1], h)))
        faces.append(((0, 0, -h), (p1[0], p1[1], -h), (p0[0], p0[1], -h)))
    return _mesh_from_faces(faces)


def tube_mesh(r_out, r_in, height, segments=48):
    """Hollow cylinder along z (outer/inner shells plus ring caps)."""
    h = height / 2.0
    faces = []
    for i in range(segments):
        a0 = 2 * math.pi * i / segments
        a1 = 2 * math.pi * (i + 1) / segments
        co0, si0 = math.cos(a0), math.sin(a0)
        co1, si1 = math.cos(a1), math.sin(a1)
        o0 = (r_out * co0, r_out * si0)
        o1 = (r_out * co1, r_out * si1)
        i0 = (r_in * co0, r_in * si0)
        i1 = (r_in * co1, r_in * si1)
        faces += _quads_to_faces([
            ((o0[0], o0[1], -h), (o1[0], o1[1], -h), (o1[0], o1[1], h), (o0[0], o0[1], h)),
            ((i0[0], i0[1], -h), (i0[0], i0[1], h), (i1[0], i1[1], h), (i1[0], i1[1], -h)),
            ((o0[0], o0[1], h), (o1[0], o1[1], h), (i1[0], i1[1], h), (i0[0], i0[1], h)),
            ((o0[0], o0[1], -h), (i0[0], i0[1], -h), (i1[0], i1[1], -h), (o1[0], o1[1], -h)),
        ])
    return _mesh_from_faces(faces)


def cone_mesh(radius, height, segments=48):
    """Cone along z with the base at z = -height/2."""
    h = height / 2.0
    faces = []
    for i in range(segments):
        a0 = 2 * math.pi * i / segments
        a1 = 2 * math.pi * (i + 1) / segments
        p0 = (radius * math.cos(a0), radius * math.sin(a0), -h)
        p1 = (radius * math.cos(a1), radius * math.sin(a1), -h)
        faces.append((p0, p1, (0.0, 0.0, h)))
        faces.append(((0.0, 0.0, -h), p1, p0))
    return _mesh_from_faces(faces)


def wedge_mesh(sx, sy, sz):
    """Right-triangular prism: full box footprint, sloped top."""
    x, y, z = sx / 2.0, sy / 2.0, sz / 2.0
    tri0 = [(-x, -y, -z), (x, -y, -z), (-x, -y, z)]
    tri1 = [(-x, y, -z), (x, y, -z), (-x, y, z)]
    faces = [tuple(tri0), (tri1[0], tri1[2], tri1[1])]
    faces += _quads_to_faces([
        (tri0[0], tri1[0], tri1[1], tri0[1]),                   # bottom
        (tri0[0], tri0[2], tri1[2], tri1[0]),                   # back (x = -x)
        (tri0[1], tri1[1], tri1[2], tri0[2]),                   # slope
    ])
    return _mesh_from_faces(faces)


def lbracket_mesh(sx, sy, sz, thickness):
    """Two fused slabs forming an L cross-section, extruded along y."""
    t = thickness
    base = box_mesh(sx, sy, t)
    upright = box_mesh(t, sy, sz - t)
    # base slab occupies z in [-sz/2, -sz/2 + t]; upright sits on it at x min
    base_verts = base.vertices + np.array([0.0, 0.0, -(sz - t) / 2.0])
    up_verts = upright.vertices + np.array([-(sx - t) / 2.0, 0.0, t / 2.0])
    verts = np.vstack([base_verts, up_verts])
    tris = np.vstack([base.triangles, upright.triangles + len(base.vertices)])
    normals = np.vstack([base.normals, upright.normals])
    return TriMesh(verts, tris, normals)


def cross_mesh(arm_width, length, thickness):
    """Plus-shaped extrusion: two crossing slabs."""
    slab_a = box_mesh(length, arm_width, thickness)
    slab_b = box_mesh(arm_width, length, thickness)
    verts = np.vstack([slab_a.vertices, slab_b.vertices])
    tris = np.vstack([slab_a.triangles, slab_b.triangles + len(slab_a.vertices)])
    normals = np.vstack([slab_a.normals, slab_b.normals])
    return TriMesh(verts, tris, normals)


def torus_mesh(major_radius, minor_radius, seg_major=48, seg_minor=24):
    verts, normals = [], []
    for i in range(seg_major):
        a = 2 * math.pi * i / seg_major
        ca, sa = math.cos(a), math.sin(a)
        for j in range(seg_minor):
            b = 2 * math.pi * j / seg_minor
            cb, sb = math.cos(b), math.sin(b)
            r = major_radius + minor_radius * cb
            verts.append((r * ca, r * sa, minor_radius * sb))
            normals.append((cb * ca, cb * sa, sb))
    tris = []
    for i in range(seg_major):
        for j in range(seg_minor):
            a = i * seg_minor + j
            b = i * seg_minor + (j + 1) % seg_minor
            c = ((i + 1) % seg_major) * seg_minor + (j + 1) % seg_minor
            d = ((i + 1) % seg_major) * seg_minor + j
            tris.append((a, b, c))
            tris.append((a, c, d))
    return TriMesh(np.asarray(verts, dtype=np.float64),
                   np.asarray(tris, dtype=np.int64),
                   np.asarray(normals, dtype=np.float64))


def uv_sphere_mesh(radius, lat=48, lon=96):
    """UV sphere with exact pole vertices on the z axis."""
    verts = [(0.0, 0.0, radius)]
    for i in range(1, lat):
        theta = math.pi * i / lat
        st, ct = math.sin(theta), math.cos(theta)
        for j in range(lon):
            phi = 2 * math.pi * j / lon
            verts.append((radius * st * math.cos(phi),
                          radius * st * math.sin(phi), radius * ct))
    verts.append((0.0, 0.0, -radius))
    south = len(verts) - 1
    tris = []
    for j in range(lon):
        tris.append((0, 1 + j, 1 + (j + 1) % lon))
    for i in range(lat - 2):
        row0 = 1 + i * lon
        row1 = row0 + lon
        for j in range(lon):
            a, b = row0 + j, row0 + (j + 1) % lon
            c, d = row1 + (j + 1) % lon, row1 + j
            tris.append((a, b, c))
            tris.append((a, c, d))
    last = 1 + (lat - 2) * lon
    for j in range(lon):
        tris.append((south, last + (j + 1) % lon, last + j))
    verts = np.asarray(verts, dtype=np.float64)
    normals = verts / radius
    return TriMesh(verts, np.asarray(tris, dtype=np.int64), normals)


# ---------------------------------------------------------------------------
# mesh writers

def write_obj(path, mesh):
    with open(path, "w") as fh:
        fh.write("# generated mesh\n")
        for v in mesh.vertices:
            fh.write(f"v {v[0]!r} {v[1]!r} {v[2]!r}\n")
        for n in mesh.normals:
            fh.write(f"vn {n[0]!r} {n[1]!r} {n[2]!r}\n")
        for t in mesh.triangles:
            a, b, c = (int(i) + 1 for i in t)
            fh.write(f"f {a}//{a} {b}//{b} {c}//{c}\n")


def write_ply(path, mesh, binary=True):
    n_v, n_f = len(mesh.vertices), len(mesh.triangles)
    fmt = "binary_little_endian" if binary else "ascii"
    header = (
        "ply\n"
        f"format {fmt} 1.0\n"
        f"element vertex {n_v}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        f"element face {n_f}\n"
        "property list uchar int vertex_indices\n"
        "end_header\n"
    )
    if binary:
        with open(path, "wb") as fh:
            fh.write(header.encode("ascii"))
            data = np.hstack([mesh.vertices, mesh.normals]).astype("<f4")
            fh.write(data.tobytes())
            for t in mesh.triangles:
                fh.write(struct.pack("<Biii", 3, int(t[0]), int(t[1]), int(t[2])))
    else:
        with open(path, "w") as fh:
            fh.write(header)
            for v, n in zip(mesh.vertices, mesh.normals):
                fh.write(f"{v[0]!r} {v[1]!r} {v[2]!r} {n[0]!r} {n[1]!r} {n[2]!r}\n")
            for t in mesh.triangles:
                fh.write(f"3 {int(t[0])} {int(t[1])} {int(t[2])}\n")


# ---------------------------------------------------------------------------
# synthetic textures

def make_texture(seed, size=256):
    """One synthetic texture: random pattern family, palette and scale."""
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=seed, spawn_key=(77,))))
    kind = gen.integers(0, 5)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64) / size
    c0 = gen.uniform(0, 255, size=3)
    c1 = gen.uniform(0, 255, size=3)
    c2 = gen.uniform(0, 255, size=3)
    if kind == 0:  # checker
        n = int(gen.integers(2, 10))
        grid = ((np.floor(xx * n) + np.floor(yy * n)) % 2).astype(bool)
        img = np.where(grid[:, :, None], c0, c1)
    elif kind == 1:  # stripes at a random angle
        freq = gen.uniform(2, 14)
        angle = gen.uniform(0, math.pi)
        phase = gen.uniform(0, 1)
        s = np.sin(2 * math.pi * (freq * (xx * math.cos(angle)
                                          + yy * math.sin(angle)) + phase))
        img = np.where(s[:, :, None] > 0, c0, c1)
    elif kind == 2:  # smoothed noise blobs
        noise = gen.uniform(0, 1, size=(size, size))
        k = int(gen.integers(5, 31)) | 1
        noise = cv2.GaussianBlur(noise, (k, k), 0)
        lo, hi = noise.min(), noise.max()
        t = (noise - lo) / max(hi - lo, 1e-9)
        img = c0 * (1 - t[:, :, None]) + c1 * t[:, :, None]
    elif kind == 3:  # polka dots
        n = int(gen.integers(3, 9))
        fx = xx * n - np.floor(xx * n) - 0.5
        fy = yy * n - np.floor(yy * n) - 0.5
        r = gen.uniform(0.15, 0.4)
        img = np.where((fx * fx + fy * fy < r * r)[:, :, None], c0, c1)
    else:  # concentric rings around a random center
        cx, cy = gen.uniform(0.2, 0.8, size=2)
        freq = gen.uniform(3, 12)
        d = np.sqrt((xx - cx) ** 2 + (yy - cy) ** 2)
        s = np.sin(2 * math.pi * freq * d)
        img = np.where(s[:, :, None] > 0, c1, c2)
    return TextureImage(np.clip(img, 0, 255).astype(np.uint8))


def write_texture_bank(out_dir, n, seed, size=256):
    """Write n synthetic textures as t_{i:06d}.png; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(1, n + 1):
        tex = make_texture(seed * 1_000_003 + i, size=size)
        path = os.path.join(out_dir, f"t_{i:06d}.png")
        cv2.imwrite(path, tex.pixels[:, :, ::-1])
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# asset sets

_SHAPE_BUILDERS = {
    "box": lambda: box_mesh(90, 60, 40),
    "slab": lambda: box_mesh(110, 80, 25),
    "block": lambda: box_mesh(55, 55, 85),
    "bar": lambda: box_mesh(130, 35, 35),
    "cylinder": lambda: cylinder_mesh(32, 90),
    "tube": lambda: tube_mesh(40, 26, 70),
    "cone": lambda: cone_mesh(42, 85),
    "wedge": lambda: wedge_mesh(90, 55, 50),
    "lbracket": lambda: lbracket_mesh(80, 60, 70, 22),
    "cross": lambda: cross_mesh(28, 100, 26),
    "torus": lambda: torus_mesh(42, 16),
    "sphere": lambda: uv_sphere_mesh(40),
}

# shapes whose bounding-box corners lie on the surface (used by the
# geometric ground-truth checks)
BOX_CORNER_SHAPES = ("box", "slab", "block", "bar")

_CONTINUOUS_Z = ("cylinder", "tube", "cone", "torus", "sphere")


def make_demo_assets(out_dir, shapes=None, textures=16, seed=0, texture_size=256):
    """Write a models/ directory (PLY + models_info.json) and a textures/
    bank. Returns (models_dir, textures_dir)."""
    shapes = list(shapes or ("box", "slab", "cylinder", "tube", "cone", "wedge",
                             "lbracket", "cross"))
    models_dir = os.path.join(out_dir, "models")
    os.makedirs(models_dir, exist_ok=True)
    info = {}
    for idx, name in enumerate(shapes, start=1):
        if name not in _SHAPE_BUILDERS:
            raise ValueError(f"unknown shape {name!r}; options: {sorted(_SHAPE_BUILDERS)}")
        mesh = _SHAPE_BUILDERS[name]()
        write_ply(os.path.join(models_dir, f"obj_{idx:06d}.ply"), mesh, binary=True)
        entry = {"diameter": compute_diameter(mesh), "shape": name}
        if name in _CONTINUOUS_Z:
            entry["symmetries_continuous"] = [{"axis": [0, 0, 1], "offset": [0, 0, 0]}]
        info[str(idx)] = entry
    with open(os.path.join(models_dir, "models_info.json"), "w") as fh:
        json.dump(info, fh, indent=1, sort_keys=True)
        fh.write("\n")

    textures_dir = os.path.join(out_dir, "textures")
    write_texture_bank(textures_dir, textures, seed, size=texture_size)
    return models_dir, textures_dir

"""Mesh, texture and symmetry loading plus low-cost UV generation."""

from __future__ import annotations

import json
import math
import os
import re
import struct
from dataclasses import dataclass, field

import cv2
import numpy as np
from scipy.spatial import ConvexHull, QhullError


class AssetError(Exception):
    """Base class for asset loading problems."""


class MeshFormatError(AssetError):
    """Unparseable mesh file; carries the byte offset where parsing failed."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)


class EmptyMeshError(AssetError):
    pass


class TextureFormatError(AssetError):
    pass


class SymmetryError(AssetError):
    pass


@dataclass
class TriMesh:
    """Triangle mesh in millimeters.

    Attributes:
        vertices: (n, 3) float64 vertex positions.
        triangles: (m, 3) int64 vertex indices.
        normals: (n, 3) float64 unit vertex normals.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    normals: np.ndarray

    def validate(self):
        if self.triangles.size and self.triangles.max() >= len(self.vertices):
            raise MeshFormatError("triangle index out of range")
        if self.triangles.size == 0:
            raise EmptyMeshError("mesh has no triangles")
        norms = np.linalg.norm(self.normals, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-4):
            raise MeshFormatError("vertex normals are not unit length")

    def face_normals(self):
        a, b, c = (self.vertices[self.triangles[:, i]] for i in range(3))
        n = np.cross(b - a, c - a)
        return n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def bounding_sphere(self):
        """(center, radius) of the axis-aligned-box-centered enclosing sphere."""
        lo, hi = self.bounding_box()
        center = 0.5 * (lo + hi)
        radius = float(np.linalg.norm(self.vertices - center, axis=1).max())
        return center, radius


@dataclass
class UvChart:
    """One (u, v) pair per triangle corner, shape (m, 3, 2), values in [0, 1)."""

    corner_uvs: np.ndarray

    def validate(self):
        if not np.all(np.isfinite(self.corner_uvs)):
            raise AssetError("non-finite UV coordinates")
        if self.corner_uvs.size and (
            self.corner_uvs.min() < 0.0 or self.corner_uvs.max() >= 1.0
        ):
            raise AssetError("UV coordinates outside [0, 1)")


@dataclass
class TextureImage:
    """Decoded RGB8 texture."""

    pixels: np.ndarray  # (h, w, 3) uint8

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]


@dataclass
class RigidTransform:
    """Rotation + translation, applied as x -> R @ x + t."""

    R: np.ndarray
    t: np.ndarray

    @staticmethod
    def identity():
        return RigidTransform(np.eye(3), np.zeros(3))

    def compose(self, other):
        """self ∘ other (apply `other` first)."""
        return RigidTransform(self.R @ other.R, self.R @ other.t + self.t)


@dataclass
class ObjectModel:
    """A renderable, scoreable object: mesh + UVs + diameter + symmetries."""

    object_id: int
    mesh: TriMesh
    uv: UvChart
    diameter: float
    symmetries: list[RigidTransform] = field(default_factory=lambda: [RigidTransform.identity()])

    def validate(self):
        if self.object_id <= 0:
            raise AssetError("object id must be positive")
        if self.diameter <= 0:
            raise AssetError("diameter must be positive")
        if not self.symmetries:
            raise SymmetryError("symmetry set must contain the identity")


# ---------------------------------------------------------------------------
# Mesh loading

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def load_mesh(path, unit_scale=1.0):
    """Load a PLY (ascii / binary little-endian) or OBJ triangle mesh.

    Vertices are scaled to millimeters by `unit_scale`. Zero-area triangles
    are dropped; missing normals are computed as area-weighted face-normal
    averages per vertex.
    """
    ext = os.path.splitext(path)[1].lower()
    if ext == ".ply":
        verts, tris, normals = _parse_ply(path)
    elif ext == ".obj":
        verts, tris, normals = _parse_obj(path)
    else:
        raise MeshFormatError(f"unsupported mesh extension: {ext}", offset=0)

    verts = verts * float(unit_scale)
    tris = np.asarray(tris, dtype=np.int64)
    if tris.size and tris.max() >= len(verts):
        raise MeshFormatError("face references a vertex beyond vertex count")

    tris = _drop_degenerate(verts, tris)
    if len(tris) == 0:
        raise EmptyMeshError(f"no non-degenerate triangles in {path}")

    if normals is None:
        normals = _vertex_normals(verts, tris)
    else:
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = normals / np.maximum(lengths, 1e-12)

    mesh = TriMesh(verts.astype(np.float64), tris, normals.astype(np.float64))
    mesh.validate()
    return mesh


def _drop_degenerate(verts, tris):
    if tris.size == 0:
        return tris
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    doubled_area = np.linalg.norm(np.cross(b - a, c - a), axis=1)
    extent = max(float(np.ptp(verts, axis=0).max()), 1e-30) if len(verts) else 1.0
    return tris[doubled_area > 1e-14 * extent * extent]


def _vertex_normals(verts, tris):
    a, b, c = verts[tris[:, 0]], verts[tris[:, 1]], verts[tris[:, 2]]
    face_n = np.cross(b - a, c - a)  # length encodes 2x area: area weighting
    normals = np.zeros_like(verts)
    for i in range(3):
        np.add.at(normals, tris[:, i], face_n)
    lengths = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
    normals[(lengths <= 0).ravel()] = (0.0, 0.0, 1.0)
    return normals


def _parse_ply(path):
    with open(path, "rb") as fh:
        data = fh.read()

    end_tag = b"end_header"
    end = data.find(end_tag)
    if not data.startswith(b"ply") or end < 0:
        raise MeshFormatError("not a PLY file (missing header)", offset=0)
    header_end = data.find(b"\n", end)
    if header_end < 0:
        raise MeshFormatError("unterminated PLY header", offset=len(data))
    header = data[:header_end].decode("ascii", errors="replace")
    body_offset = header_end + 1

    fmt = None
    elements = []  # (name, count, [(prop_name, dtype) or ('list', count_t, idx_t, name)])
    for line in header.splitlines():
        tokens = line.strip().split()
        if not tokens or tokens[0] == "comment":
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            elements.append((tokens[1], int(tokens[2]), []))
        elif tokens[0] == "property":
            if not elements:
                raise MeshFormatError("property before element in header", offset=0)
            if tokens[1] == "list":
                elements[-1][2].append(("list", tokens[2], tokens[3], tokens[4]))
            else:
                elements[-1][2].append((tokens[2], tokens[1]))
    if fmt not in ("ascii", "binary_little_endian"):
        raise MeshFormatError(f"unsupported PLY format: {fmt}", offset=0)

    if fmt == "ascii":
        return _parse_ply_ascii(data[body_offset:].decode("ascii", errors="replace"),
                                elements, body_offset)
    return _parse_ply_binary(data, body_offset, elements)


def _ply_vertex_layout(props):
    names = [p[0] for p in props]
    for required in ("x", "y", "z"):
        if required not in names:
            raise MeshFormatError(f"vertex element lacks property {required}", offset=0)
    has_normals = all(n in names for n in ("nx", "ny", "nz"))
    return names, has_normals


def _parse_ply_ascii(text, elements, body_offset):
    tokens = text.split()
    pos = 0
    verts = tris = normals = None
    consumed_chars = 0  # rough byte offset tracking for error messages

    def take(n):
        nonlocal pos
        if pos + n > len(tokens):
            raise MeshFormatError("truncated ASCII PLY body",
                                  offset=body_offset + consumed_chars)
        out = tokens[pos:pos + n]
        pos += n
        return out

    for name, count, props in elements:
        if name == "vertex":
            names, has_normals = _ply_vertex_layout(props)
            rows = np.array(take(count * len(names)), dtype=np.float64).reshape(count, len(names))
            cols = {n: rows[:, i] for i, n in enumerate(names)}
            verts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
            if has_normals:
                normals = np.stack([cols["nx"], cols["ny"], cols["nz"]], axis=1)
        elif name == "face":
            faces = []
            for _ in range(count):
                arity = int(take(1)[0])
                idx = [int(v) for v in take(arity)]
                for k in range(1, arity - 1):
                    faces.append((idx[0], idx[k], idx[k + 1]))
            tris = np.array(faces, dtype=np.int64).reshape(-1, 3)
        else:
            # skip unknown element payload
            per_row = len(props)
            if any(p[0] == "list" for p in props):
                for _ in range(count):
                    for p in props:
                        if p[0] == "list":
                            take(int(take(1)[0]))
                        else:
                            take(1)
            else:
                take(count * per_row)
    if verts is None or tris is None:
        raise MeshFormatError("PLY missing vertex or face element", offset=body_offset)
    return verts, tris, normals


def _parse_ply_binary(data, offset, elements):
    verts = tris = normals = None
    for name, count, props in elements:
        if name == "vertex":
            names, has_normals = _ply_vertex_layout(props)
            if any(p[0] == "list" for p in props):
                raise MeshFormatError("list property on vertex element unsupported", offset=offset)
            dt = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
            nbytes = dt.itemsize * count
            if offset + nbytes > len(data):
                raise MeshFormatError("truncated binary PLY vertex data", offset=len(data))
            rows = np.frombuffer(data, dtype=dt, count=count, offset=offset)
            offset += nbytes
            verts = np.stack([rows["x"], rows["y"], rows["z"]], axis=1).astype(np.float64)
            if has_normals:
                normals = np.stack([rows["nx"], rows["ny"], rows["nz"]], axis=1).astype(np.float64)
        elif name == "face":
            lists = [p for p in props if p[0] == "list"]
            if len(lists) != 1 or len(props) != 1:
                raise MeshFormatError("face element must be a single index list", offset=offset)
            _, count_t, idx_t, _ = lists[0]
            cdt = np.dtype("<" + _PLY_TYPES[count_t])
            idt = np.dtype("<" + _PLY_TYPES[idx_t])
            faces = []
            for _ in range(count):
                if offset + cdt.itemsize > len(data):
                    raise MeshFormatError("truncated binary PLY face data", offset=len(data))
                arity = int(np.frombuffer(data, dtype=cdt, count=1, offset=offset)[0])
                offset += cdt.itemsize
                nbytes = arity * idt.itemsize
                if offset + nbytes > len(data):
                    raise MeshFormatError("truncated binary PLY face data", offset=len(data))
                idx = np.frombuffer(data, dtype=idt, count=arity, offset=offset)
                offset += nbytes
                for k in range(1, arity - 1):
                    faces.append((int(idx[0]), int(idx[k]), int(idx[k + 1])))
            tris = np.array(faces, dtype=np.int64).reshape(-1, 3)
        else:
            if any(p[0] == "list" for p in props):
                raise MeshFormatError(f"cannot skip list element {name}", offset=offset)
            dt = np.dtype([(n, "<" + _PLY_TYPES[t]) for n, t in props])
            offset += dt.itemsize * count
    if verts is None or tris is None:
        raise MeshFormatError("PLY missing vertex or face element", offset=offset)
    return verts, tris, normals


def _parse_obj(path):
    verts, vnormals, faces, face_normal_ids = [], [], [], []
    with open(path, "r", errors="replace") as fh:
        consumed = 0
        for line in fh:
            stripped = line.strip()
            consumed += len(line.encode("utf-8", errors="replace"))
            if not stripped or stripped.startswith("#"):
                continue
            parts = stripped.split()
            try:
                if parts[0] == "v":
                    verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif parts[0] == "vn":
                    vnormals.append([float(parts[1]), float(parts[2]), float(parts[3])])
                elif parts[0] == "f":
                    corner_v, corner_n = [], []
                    for spec in parts[1:]:
                        fields = spec.split("/")
                        vi = int(fields[0])
                        corner_v.append(vi - 1 if vi > 0 else len(verts) + vi)
                        if len(fields) == 3 and fields[2]:
                            ni = int(fields[2])
                            corner_n.append(ni - 1 if ni > 0 else len(vnormals) + ni)
                    for k in range(1, len(corner_v) - 1):
                        faces.append((corner_v[0], corner_v[k], corner_v[k + 1]))
                        if len(corner_n) == len(corner_v):
                            face_normal_ids.append((corner_n[0], corner_n[k], corner_n[k + 1]))
            except (ValueError, IndexError) as exc:
                raise MeshFormatError(f"bad OBJ record {parts[0]!r}: {exc}",
                                      offset=consumed - len(line)) from exc
    if not verts or not faces:
        raise MeshFormatError("OBJ contains no usable geometry", offset=0)
    verts = np.asarray(verts, dtype=np.float64)
    tris = np.asarray(faces, dtype=np.int64)

    normals = None
    if vnormals and len(face_normal_ids) == len(faces):
        # OBJ normals are per corner; average onto shared vertices
        vn = np.asarray(vnormals, dtype=np.float64)
        normals = np.zeros_like(verts)
        nid = np.asarray(face_normal_ids, dtype=np.int64)
        for i in range(3):
            np.add.at(normals, tris[:, i], vn[nid[:, i]])
        lengths = np.linalg.norm(normals, axis=1, keepdims=True)
        normals = np.divide(normals, lengths, out=np.zeros_like(normals), where=lengths > 0)
        normals[(lengths <= 0).ravel()] = (0.0, 0.0, 1.0)
    return verts, tris, normals


# ---------------------------------------------------------------------------
# Derived quantities

_EXACT_DIAMETER_LIMIT = 5000


def compute_diameter(mesh_or_vertices):
    """Largest inter-vertex distance, in mm.

    Exact pairwise search up to 5000 vertices; above that the search runs on
    the convex hull of the vertex set (the diameter lies on the hull).
    """
    verts = mesh_or_vertices.vertices if isinstance(mesh_or_vertices, TriMesh) else np.asarray(mesh_or_vertices, dtype=np.float64)
    if len(verts) < 2:
        raise EmptyMeshError("diameter needs at least two vertices")
    if len(verts) > _EXACT_DIAMETER_LIMIT:
        try:
            hull = ConvexHull(verts)
            verts = verts[hull.vertices]
        except QhullError:
            verts = np.unique(verts, axis=0)
    best = 0.0
    chunk = 512
    for start in range(0, len(verts), chunk):
        block = verts[start:start + chunk]
        d2 = ((block[:, None, :] - verts[None, :, :]) ** 2).sum(axis=2)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


# Projection planes per dominant axis; ties resolved x -> y -> z by argmax.
_PLANE_AXES = np.array([[1, 2], [0, 2], [0, 1]], dtype=np.int64)


def triplanar_uv(mesh, texel_density):
    """Dominant-axis planar UVs: each face projects onto the axis-aligned
    plane most orthogonal to its normal, scaled by `texel_density` (1/mm).

    Each triangle is wrapped into [0, 1) by a shared integer shift so faces
    that fit inside one tile keep continuous coordinates; corners landing
    exactly on a tile boundary are nudged just inside it. Triangles spanning
    more than one tile wrap per corner and show a seam, which is acceptable
    for randomized texturing.
    """
    if texel_density <= 0:
        raise AssetError("texel_density must be positive")
    tris = mesh.triangles
    corners = mesh.vertices[tris]  # (m, 3, 3)
    face_n = np.abs(np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]))
    dominant = np.argmax(face_n, axis=1)  # first max wins: x -> y -> z
    plane = _PLANE_AXES[dominant]  # (m, 2)

    raw = np.take_along_axis(corners, plane[:, None, :].repeat(3, axis=1), axis=2)
    raw = raw * float(texel_density)  # (m, 3, 2)

    shift = np.floor(raw.min(axis=1, keepdims=True))
    uv = raw - shift
    over = uv >= 1.0
    boundary = over & (uv < 1.0 + 1e-7)
    uv = np.where(boundary, np.nextafter(1.0, 0.0), uv)
    spill = uv >= 1.0
    uv = np.where(spill, uv - np.floor(uv), uv)

    chart = UvChart(uv)
    chart.validate()
    return chart


# ---------------------------------------------------------------------------
# Textures

def load_texture(path):
    """Decode a PNG or JPEG to RGB8; grayscale is promoted, alpha dropped."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise TextureFormatError(f"cannot decode image: {path}")
    return TextureImage(np.ascontiguousarray(img[:, :, ::-1]))


def save_texture(path, texture):
    ok = cv2.imwrite(str(path), texture.pixels[:, :, ::-1])
    if not ok:
        raise TextureFormatError(f"cannot encode image: {path}")


def load_texture_bank(directory):
    """All PNG/JPEG files in `directory`, sorted by filename.

    Returns a list of TextureImage; index i in sampling space [1, n] maps to
    list position i - 1.
    """
    names = sorted(
        f for f in os.listdir(directory)
        if re.search(r"\.(png|jpg|jpeg)$", f, re.IGNORECASE)
    )
    if not names:
        raise TextureFormatError(f"no textures found in {directory}")
    return [load_texture(os.path.join(directory, f)) for f in names]


# ---------------------------------------------------------------------------
# Symmetries

def _axis_rotation(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    cc = 1.0 - c
    return np.array([
        [c + x * x * cc, x * y * cc - z * s, x * z * cc + y * s],
        [y * x * cc + z * s, c + y * y * cc, y * z * cc - x * s],
        [z * x * cc - y * s, z * y * cc + x * s, c + z * z * cc],
    ])


def _check_rotation(R, tol=1e-6):
    err = np.abs(R @ R.T - np.eye(3)).max()
    if err > tol or np.linalg.det(R) < 0:
        raise SymmetryError(f"rotation not orthonormal (deviation {err:.2e})")


def symmetries_from_info(entry, continuous_steps=64):
    """Build the discretized symmetry set from a models_info-style entry.

    `entry` may contain `symmetries_discrete` (row-major 4x4 flattened) and
    `symmetries_continuous` ({axis, offset}). Continuous axes are discretized
    into `continuous_steps` equal angles; identity is always first.
    """
    discrete = [RigidTransform.identity()]
    for flat in entry.get("symmetries_discrete", []) or []:
        m = np.asarray(flat, dtype=np.float64)
        if m.size != 16:
            raise SymmetryError("discrete symmetry must have 16 entries")
        m = m.reshape(4, 4)
        R, t = m[:3, :3], m[:3, 3]
        _check_rotation(R)
        discrete.append(RigidTransform(R, t))

    continuous = []
    for spec in entry.get("symmetries_continuous", []) or []:
        axis = np.asarray(spec.get("axis", [0, 0, 1]), dtype=np.float64)
        offset = np.asarray(spec.get("offset", [0, 0, 0]), dtype=np.float64)
        if np.linalg.norm(axis) == 0:
            raise SymmetryError("continuous symmetry axis must be non-zero")
        for step in range(1, int(continuous_steps)):
            R = _axis_rotation(axis, 2.0 * math.pi * step / continuous_steps)
            continuous.append(RigidTransform(R, offset - R @ offset))

    out = list(discrete)
    for cont in continuous:
        for disc in discrete:
            out.append(cont.compose(disc))

    # drop near-duplicates, keeping first occurrences (identity stays first)
    unique, seen = [], set()
    for tf in out:
        key = tuple(np.round(np.concatenate([tf.R.ravel(), tf.t]), 9))
        if key not in seen:
            seen.add(key)
            unique.append(tf)
    return unique


def load_symmetries(path, obj_id=None, continuous_steps=64):
    """Read a symmetry set from JSON (single entry or a models_info mapping)."""
    with open(path) as fh:
        doc = json.load(fh)
    if obj_id is not None:
        entry = doc.get(str(obj_id)) or doc.get(int(obj_id)) or {}
    elif all(isinstance(v, dict) for v in doc.values()) and doc and all(
        k.lstrip("-").isdigit() for k in doc
    ):
        raise SymmetryError("models_info-style file needs an obj_id")
    else:
        entry = doc
    return symmetries_from_info(entry, continuous_steps=continuous_steps)


# ---------------------------------------------------------------------------
# Model sets

def load_model_set(models_dir, unit_scale=1.0, continuous_steps=64, texel_density=None):
    """Load every obj_*.ply / obj_*.obj under `models_dir` into ObjectModels.

    Diameters and symmetries come from models_info.json when present, and are
    computed / defaulted otherwise. When `texel_density` is None each object
    uses one texture tile per bounding-box extent.
    """
    pattern = re.compile(r"obj_(\d+)\.(ply|obj)$", re.IGNORECASE)
    entries = {}
    for name in sorted(os.listdir(models_dir)):
        m = pattern.match(name)
        if m:
            entries[int(m.group(1))] = os.path.join(models_dir, name)
    if not entries:
        raise AssetError(f"no obj_*.ply / obj_*.obj meshes in {models_dir}")

    info_path = os.path.join(models_dir, "models_info.json")
    info = {}
    if os.path.exists(info_path):
        with open(info_path) as fh:
            info = {int(k): v for k, v in json.load(fh).items()}

    models = {}
    for obj_id, path in entries.items():
        mesh = load_mesh(path, unit_scale=unit_scale)
        entry = info.get(obj_id, {})
        diameter = float(entry["diameter"]) if "diameter" in entry else compute_diameter(mesh)
        syms = symmetries_from_info(entry, continuous_steps=continuous_steps)
        density = texel_density
        if density is None:
            lo, hi = mesh.bounding_box()
            density = 1.0 / max(float((hi - lo).max()), 1e-9)
        uv = triplanar_uv(mesh, density)
        model = ObjectModel(obj_id, mesh, uv, diameter, syms)
        model.validate()
        models[obj_id] = model
    return models

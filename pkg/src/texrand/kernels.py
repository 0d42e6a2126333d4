"""Numba kernels for BVH traversal and shading.

Every kernel is pure over its array arguments and writes only the output
region it is handed, so tiles and frames can run on any thread pool without
locks. fastmath stays off: results must be bit-identical across runs and
thread counts.
"""

import numba
import numpy as np

MAX_STACK = 128
SHADOW_OFFSET = 1e-3  # mm, along the viewer-side face normal
SHADOW_TMIN = 1e-7  # parametric, along the unnormalized light vector


@numba.njit(inline="always", error_model="numpy")
def _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i):
    """Moller-Trumbore; returns (t, u, v) with t < 0 on miss."""
    p0 = dy * e2[i, 2] - dz * e2[i, 1]
    p1 = dz * e2[i, 0] - dx * e2[i, 2]
    p2 = dx * e2[i, 1] - dy * e2[i, 0]
    det = e1[i, 0] * p0 + e1[i, 1] * p1 + e1[i, 2] * p2
    if -1e-300 < det < 1e-300:
        return -1.0, 0.0, 0.0
    inv_det = 1.0 / det
    sx = ox - v0[i, 0]
    sy = oy - v0[i, 1]
    sz = oz - v0[i, 2]
    u = (sx * p0 + sy * p1 + sz * p2) * inv_det
    if u < 0.0 or u > 1.0:
        return -1.0, 0.0, 0.0
    q0 = sy * e1[i, 2] - sz * e1[i, 1]
    q1 = sz * e1[i, 0] - sx * e1[i, 2]
    q2 = sx * e1[i, 1] - sy * e1[i, 0]
    v = (dx * q0 + dy * q1 + dz * q2) * inv_det
    if v < 0.0 or u + v > 1.0:
        return -1.0, 0.0, 0.0
    t = (e2[i, 0] * q0 + e2[i, 1] * q1 + e2[i, 2] * q2) * inv_det
    if t <= 0.0:
        return -1.0, 0.0, 0.0
    return t, u, v


@numba.njit(inline="always", error_model="numpy")
def _box_entry(lo, hi, n, ox, oy, oz, ix, iy, iz, t_best):
    """Entry distance of ray into node n's box, or inf when missed.

    NaN-tolerant slab test: comparisons with NaN fall through to the
    previous bound, which only makes the test conservative.
    """
    tmin = 0.0
    tmax = t_best
    t1 = (lo[n, 0] - ox) * ix
    t2 = (hi[n, 0] - ox) * ix
    if t1 > t2:
        t1, t2 = t2, t1
    if t1 > tmin:
        tmin = t1
    if t2 < tmax:
        tmax = t2
    t1 = (lo[n, 1] - oy) * iy
    t2 = (hi[n, 1] - oy) * iy
    if t1 > t2:
        t1, t2 = t2, t1
    if t1 > tmin:
        tmin = t1
    if t2 < tmax:
        tmax = t2
    t1 = (lo[n, 2] - oz) * iz
    t2 = (hi[n, 2] - oz) * iz
    if t1 > t2:
        t1, t2 = t2, t1
    if t1 > tmin:
        tmin = t1
    if t2 < tmax:
        tmax = t2
    if tmax < tmin:
        return np.inf
    return tmin


@numba.njit(error_model="numpy", nogil=True, cache=True)
def closest_hit(node_lo, node_hi, node_right, node_start, node_count,
                v0, e1, e2, ox, oy, oz, dx, dy, dz, t_max):
    """Nearest triangle along the ray; returns (t, tri, u, v), tri = -1 on miss."""
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    best_t = t_max
    best_tri = -1
    best_u = 0.0
    best_v = 0.0
    stack = np.empty(MAX_STACK, dtype=np.int32)
    sp = 0
    if _box_entry(node_lo, node_hi, 0, ox, oy, oz, ix, iy, iz, best_t) < np.inf:
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for i in range(start, start + count):
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
                if 0.0 < t < best_t:
                    best_t = t
                    best_tri = i
                    best_u = u
                    best_v = v
        else:
            left = node + 1
            right = node_right[node]
            tl = _box_entry(node_lo, node_hi, left, ox, oy, oz, ix, iy, iz, best_t)
            tr = _box_entry(node_lo, node_hi, right, ox, oy, oz, ix, iy, iz, best_t)
            if tl <= tr:
                if tr < np.inf and sp < MAX_STACK:
                    stack[sp] = right
                    sp += 1
                if tl < np.inf and sp < MAX_STACK:
                    stack[sp] = left
                    sp += 1
            else:
                if tl < np.inf and sp < MAX_STACK:
                    stack[sp] = left
                    sp += 1
                if tr < np.inf and sp < MAX_STACK:
                    stack[sp] = right
                    sp += 1
    if best_tri < 0:
        return -1.0, -1, 0.0, 0.0
    return best_t, best_tri, best_u, best_v


@numba.njit(error_model="numpy", nogil=True, cache=True)
def any_hit(node_lo, node_hi, node_right, node_start, node_count,
            v0, e1, e2, ox, oy, oz, dx, dy, dz, t_min, t_max):
    """True when any triangle intersects the ray with t in (t_min, t_max)."""
    ix = 1.0 / dx
    iy = 1.0 / dy
    iz = 1.0 / dz
    stack = np.empty(MAX_STACK, dtype=np.int32)
    sp = 0
    if _box_entry(node_lo, node_hi, 0, ox, oy, oz, ix, iy, iz, t_max) < np.inf:
        stack[0] = 0
        sp = 1
    while sp > 0:
        sp -= 1
        node = stack[sp]
        count = node_count[node]
        if count > 0:
            start = node_start[node]
            for i in range(start, start + count):
                t, u, v = _tri_hit(ox, oy, oz, dx, dy, dz, v0, e1, e2, i)
                if t_min < t < t_max:
                    return True
        else:
            left = node + 1
            right = node_right[node]
            if _box_entry(node_lo, node_hi, left, ox, oy, oz, ix, iy, iz, t_max) < np.inf \
                    and sp < MAX_STACK:
                stack[sp] = left
                sp += 1
            if _box_entry(node_lo, node_hi, right, ox, oy, oz, ix, iy, iz, t_max) < np.inf \
                    and sp < MAX_STACK:
                stack[sp] = right
                sp += 1
    return False


@numba.njit(inline="always", error_model="numpy")
def _sample_texture(tex_data, tex_off, tex_w, tex_h, tex_id, u, v):
    """Bilinear wrap sample of bank texture `tex_id`; returns linear RGB."""
    u = u - np.floor(u)
    v = v - np.floor(v)
    w = tex_w[tex_id]
    h = tex_h[tex_id]
    x = u * w - 0.5
    y = v * h - 0.5
    x0 = np.int64(np.floor(x))
    y0 = np.int64(np.floor(y))
    fx = x - x0
    fy = y - y0
    xi0 = x0 % w
    xi1 = (x0 + 1) % w
    yi0 = y0 % h
    yi1 = (y0 + 1) % h
    base = tex_off[tex_id]
    r = 0.0
    g = 0.0
    b = 0.0
    w00 = (1.0 - fx) * (1.0 - fy)
    w10 = fx * (1.0 - fy)
    w01 = (1.0 - fx) * fy
    w11 = fx * fy
    i00 = base + (yi0 * w + xi0) * 3
    i10 = base + (yi0 * w + xi1) * 3
    i01 = base + (yi1 * w + xi0) * 3
    i11 = base + (yi1 * w + xi1) * 3
    r = w00 * tex_data[i00] + w10 * tex_data[i10] + w01 * tex_data[i01] + w11 * tex_data[i11]
    g = w00 * tex_data[i00 + 1] + w10 * tex_data[i10 + 1] + w01 * tex_data[i01 + 1] \
        + w11 * tex_data[i11 + 1]
    b = w00 * tex_data[i00 + 2] + w10 * tex_data[i10 + 2] + w01 * tex_data[i01 + 2] \
        + w11 * tex_data[i11 + 2]
    return r / 255.0, g / 255.0, b / 255.0


@numba.njit(error_model="numpy", nogil=True, cache=True)
def render_block(node_lo, node_hi, node_right, node_start, node_count,
                 v0, e1, e2, tri_inst, tri_normals, tri_uvs,
                 mat_mode, mat_color, mat_tex, mat_spec, mat_alpha,
                 tex_data, tex_off, tex_w, tex_h,
                 light_pos, light_rgb,
                 fx, fy, cx, cy, cam_rows, cam_origin,
                 ambient, gamma, shadows, supersample, sky,
                 y0, y1, x0, x1,
                 out_rgb, out_depth, out_inst):
    """Shade one image block; writes rgb, z-depth (mm) and instance indices.

    Rays are parameterized so the camera-frame z of the hit equals t: the
    camera-space direction keeps z = 1 and is rotated, unnormalized, into
    the world frame.
    """
    ox = cam_origin[0]
    oy = cam_origin[1]
    oz = cam_origin[2]
    inv_gamma = 1.0 / gamma
    n_lights = light_pos.shape[0]
    ss = supersample
    inv_ss = 1.0 / ss
    for py in range(y0, y1):
        for px in range(x0, x1):
            acc_r = 0.0
            acc_g = 0.0
            acc_b = 0.0
            center_t = 0.0
            center_inst = -1
            for sy in range(ss):
                for sx in range(ss):
                    if ss == 1:
                        u_px = px + 0.5
                        v_px = py + 0.5
                    else:
                        u_px = px + (sx + 0.5) * inv_ss
                        v_px = py + (sy + 0.5) * inv_ss
                    dcx = (u_px - cx) / fx
                    dcy = (v_px - cy) / fy
                    dx = cam_rows[0, 0] * dcx + cam_rows[1, 0] * dcy + cam_rows[2, 0]
                    dy = cam_rows[0, 1] * dcx + cam_rows[1, 1] * dcy + cam_rows[2, 1]
                    dz = cam_rows[0, 2] * dcx + cam_rows[1, 2] * dcy + cam_rows[2, 2]
                    t, tri, bu, bv = closest_hit(
                        node_lo, node_hi, node_right, node_start, node_count,
                        v0, e1, e2, ox, oy, oz, dx, dy, dz, np.inf)
                    if tri < 0:
                        acc_r += sky[0]
                        acc_g += sky[1]
                        acc_b += sky[2]
                        continue
                    inst = tri_inst[tri]
                    hx = ox + t * dx
                    hy = oy + t * dy
                    hz = oz + t * dz

                    w0 = 1.0 - bu - bv
                    nx = w0 * tri_normals[tri, 0, 0] + bu * tri_normals[tri, 1, 0] \
                        + bv * tri_normals[tri, 2, 0]
                    ny = w0 * tri_normals[tri, 0, 1] + bu * tri_normals[tri, 1, 1] \
                        + bv * tri_normals[tri, 2, 1]
                    nz = w0 * tri_normals[tri, 0, 2] + bu * tri_normals[tri, 1, 2] \
                        + bv * tri_normals[tri, 2, 2]
                    nlen = np.sqrt(nx * nx + ny * ny + nz * nz)
                    if nlen > 0.0:
                        nx /= nlen
                        ny /= nlen
                        nz /= nlen
                    if nx * dx + ny * dy + nz * dz > 0.0:
                        nx = -nx
                        ny = -ny
                        nz = -nz

                    # face normal (viewer side) for the shadow-ray offset
                    gx = e1[tri, 1] * e2[tri, 2] - e1[tri, 2] * e2[tri, 1]
                    gy = e1[tri, 2] * e2[tri, 0] - e1[tri, 0] * e2[tri, 2]
                    gz = e1[tri, 0] * e2[tri, 1] - e1[tri, 1] * e2[tri, 0]
                    glen = np.sqrt(gx * gx + gy * gy + gz * gz)
                    if glen > 0.0:
                        gx /= glen
                        gy /= glen
                        gz /= glen
                    if gx * dx + gy * dy + gz * dz > 0.0:
                        gx = -gx
                        gy = -gy
                        gz = -gz

                    if mat_mode[inst] == 0:
                        alb_r = mat_color[inst, 0]
                        alb_g = mat_color[inst, 1]
                        alb_b = mat_color[inst, 2]
                    else:
                        uu = w0 * tri_uvs[tri, 0, 0] + bu * tri_uvs[tri, 1, 0] \
                            + bv * tri_uvs[tri, 2, 0]
                        vv = w0 * tri_uvs[tri, 0, 1] + bu * tri_uvs[tri, 1, 1] \
                            + bv * tri_uvs[tri, 2, 1]
                        alb_r, alb_g, alb_b = _sample_texture(
                            tex_data, tex_off, tex_w, tex_h, mat_tex[inst], uu, vv)

                    rad_r = ambient * alb_r
                    rad_g = ambient * alb_g
                    rad_b = ambient * alb_b

                    vlen = np.sqrt(dx * dx + dy * dy + dz * dz)
                    vx = -dx / vlen
                    vy = -dy / vlen
                    vz = -dz / vlen

                    for li in range(n_lights):
                        lx = light_pos[li, 0] - hx
                        ly = light_pos[li, 1] - hy
                        lz = light_pos[li, 2] - hz
                        dist2 = lx * lx + ly * ly + lz * lz
                        if dist2 <= 0.0:
                            continue
                        dist = np.sqrt(dist2)
                        ux = lx / dist
                        uy = ly / dist
                        uz = lz / dist
                        ndotl = nx * ux + ny * uy + nz * uz
                        if ndotl <= 0.0:
                            continue
                        if shadows:
                            sox = hx + gx * SHADOW_OFFSET
                            soy = hy + gy * SHADOW_OFFSET
                            soz = hz + gz * SHADOW_OFFSET
                            if any_hit(node_lo, node_hi, node_right, node_start,
                                       node_count, v0, e1, e2,
                                       sox, soy, soz, lx, ly, lz,
                                       SHADOW_TMIN, 1.0 - SHADOW_TMIN):
                                continue
                        base_r = light_rgb[li, 0] / dist2
                        base_g = light_rgb[li, 1] / dist2
                        base_b = light_rgb[li, 2] / dist2
                        rad_r += alb_r * ndotl * base_r
                        rad_g += alb_g * ndotl * base_g
                        rad_b += alb_b * ndotl * base_b
                        spec = mat_spec[inst]
                        if spec > 0.0:
                            hxv = ux + vx
                            hyv = uy + vy
                            hzv = uz + vz
                            hlen = np.sqrt(hxv * hxv + hyv * hyv + hzv * hzv)
                            if hlen > 0.0:
                                ndoth = (nx * hxv + ny * hyv + nz * hzv) / hlen
                                if ndoth > 0.0:
                                    glint = spec * ndoth ** mat_alpha[inst]
                                    rad_r += glint * base_r
                                    rad_g += glint * base_g
                                    rad_b += glint * base_b

                    acc_r += rad_r
                    acc_g += rad_g
                    acc_b += rad_b
                    if ss == 1 or (sy == ss // 2 and sx == ss // 2):
                        center_t = t
                        center_inst = inst

            if ss > 1:
                # depth and instance follow the pixel-center ray
                dcx = (px + 0.5 - cx) / fx
                dcy = (py + 0.5 - cy) / fy
                dx = cam_rows[0, 0] * dcx + cam_rows[1, 0] * dcy + cam_rows[2, 0]
                dy = cam_rows[0, 1] * dcx + cam_rows[1, 1] * dcy + cam_rows[2, 1]
                dz = cam_rows[0, 2] * dcx + cam_rows[1, 2] * dcy + cam_rows[2, 2]
                t, tri, bu, bv = closest_hit(
                    node_lo, node_hi, node_right, node_start, node_count,
                    v0, e1, e2, ox, oy, oz, dx, dy, dz, np.inf)
                if tri < 0:
                    center_t = 0.0
                    center_inst = -1
                else:
                    center_t = t
                    center_inst = tri_inst[tri]

            scale = inv_ss * inv_ss
            r = acc_r * scale
            g = acc_g * scale
            b = acc_b * scale
            if r < 0.0:
                r = 0.0
            elif r > 1.0:
                r = 1.0
            if g < 0.0:
                g = 0.0
            elif g > 1.0:
                g = 1.0
            if b < 0.0:
                b = 0.0
            elif b > 1.0:
                b = 1.0
            out_rgb[py, px, 0] = np.uint8(np.rint(255.0 * r ** inv_gamma))
            out_rgb[py, px, 1] = np.uint8(np.rint(255.0 * g ** inv_gamma))
            out_rgb[py, px, 2] = np.uint8(np.rint(255.0 * b ** inv_gamma))
            out_depth[py, px] = center_t
            out_inst[py, px] = center_inst


@numba.njit(error_model="numpy", nogil=True, cache=True)
def depth_block(node_lo, node_hi, node_right, node_start, node_count,
                v0, e1, e2,
                fx, fy, cx, cy, cam_rows, cam_origin,
                y0, y1, x0, x1, out_depth):
    """z-depth (mm) of the nearest hit per pixel over a block; 0 = no hit."""
    ox = cam_origin[0]
    oy = cam_origin[1]
    oz = cam_origin[2]
    for py in range(y0, y1):
        for px in range(x0, x1):
            dcx = (px + 0.5 - cx) / fx
            dcy = (py + 0.5 - cy) / fy
            dx = cam_rows[0, 0] * dcx + cam_rows[1, 0] * dcy + cam_rows[2, 0]
            dy = cam_rows[0, 1] * dcx + cam_rows[1, 1] * dcy + cam_rows[2, 1]
            dz = cam_rows[0, 2] * dcx + cam_rows[1, 2] * dcy + cam_rows[2, 2]
            t, tri, bu, bv = closest_hit(
                node_lo, node_hi, node_right, node_start, node_count,
                v0, e1, e2, ox, oy, oz, dx, dy, dz, np.inf)
            out_depth[py, px] = t if tri >= 0 else 0.0

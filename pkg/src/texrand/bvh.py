"""Median-split bounding volume hierarchy over triangle soups."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEAF_SIZE = 4


@dataclass
class Bvh:
    """Flat BVH: internal node i has left child i + 1 and right child
    node_right[i]; leaves own triangle range [node_start, node_start + node_count).

    Triangle attribute arrays are permuted into leaf order; `perm` maps the
    stored order back to the caller's original triangle indices.
    """

    node_lo: np.ndarray  # (n, 3)
    node_hi: np.ndarray  # (n, 3)
    node_right: np.ndarray  # (n,) int32, -1 at leaves
    node_start: np.ndarray  # (n,) int32
    node_count: np.ndarray  # (n,) int32, 0 at internal nodes
    v0: np.ndarray  # (m, 3)
    e1: np.ndarray  # (m, 3) v1 - v0
    e2: np.ndarray  # (m, 3) v2 - v0
    perm: np.ndarray  # (m,) int64

    @property
    def num_nodes(self):
        return len(self.node_right)

    @property
    def num_triangles(self):
        return len(self.v0)


def build_bvh_from_corners(corners, leaf_size=LEAF_SIZE):
    """Build a BVH over (m, 3, 3) float64 triangle corners.

    Median split along the widest centroid axis, stable ordering, so the
    tree is deterministic for a given triangle order.
    """
    corners = np.ascontiguousarray(corners, dtype=np.float64)
    m = len(corners)
    if m == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    tlo = corners.min(axis=1)
    thi = corners.max(axis=1)
    centers = 0.5 * (tlo + thi)

    node_lo, node_hi, node_right, node_start, node_count = [], [], [], [], []
    perm_segments = []
    offset = 0

    def rec(idx):
        nonlocal offset
        slot = len(node_right)
        node_lo.append(tlo[idx].min(axis=0))
        node_hi.append(thi[idx].max(axis=0))
        node_right.append(-1)
        node_start.append(0)
        node_count.append(0)
        if len(idx) <= leaf_size:
            node_start[slot] = offset
            node_count[slot] = len(idx)
            perm_segments.append(idx)
            offset += len(idx)
            return slot
        extent = centers[idx].max(axis=0) - centers[idx].min(axis=0)
        axis = int(np.argmax(extent))
        order = np.argsort(centers[idx, axis], kind="stable")
        half = len(idx) // 2
        rec(idx[order[:half]])
        node_right[slot] = rec(idx[order[half:]])
        return slot

    rec(np.arange(m, dtype=np.int64))
    perm = np.concatenate(perm_segments)
    v0 = corners[perm, 0]
    return Bvh(
        node_lo=np.ascontiguousarray(node_lo, dtype=np.float64),
        node_hi=np.ascontiguousarray(node_hi, dtype=np.float64),
        node_right=np.asarray(node_right, dtype=np.int32),
        node_start=np.asarray(node_start, dtype=np.int32),
        node_count=np.asarray(node_count, dtype=np.int32),
        v0=np.ascontiguousarray(v0),
        e1=np.ascontiguousarray(corners[perm, 1] - v0),
        e2=np.ascontiguousarray(corners[perm, 2] - v0),
        perm=perm,
    )

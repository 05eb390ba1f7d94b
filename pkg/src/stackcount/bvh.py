"""Binned-SAH BVH over triangle soups with numba traversal kernels.

Shared by the depth renderer (nearest hit), point-in-mesh parity tests, and
distance checks in tests. All kernels are pure functions over flat arrays so
results are independent of threading and call order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

_LEAF_SIZE = 4
_N_BINS = 16
_STACK_DEPTH = 96

# Fallback ray directions for parity tests; first axis-aligned, then fixed
# irrational-ish directions so degenerate alignments cannot persist.
PARITY_DIRECTIONS = np.array(
    [
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.577350269189626, 0.577350269189626, 0.577350269189626],
        [0.801783725737273, 0.267261241912424, 0.534522483824849],
        [0.267261241912424, 0.801783725737273, -0.534522483824849],
        [-0.484122918275927, 0.726184377413891, 0.484122918275927],
        [0.358568582800318, -0.597614304667197, 0.717137165600636],
    ]
)


@dataclass
class BVH:
    """Flattened BVH. Leaves reference reordered triangle corner arrays."""

    node_min: np.ndarray
    node_max: np.ndarray
    node_left: np.ndarray  # left child id, or -1 for a leaf (right = left + 1)
    node_start: np.ndarray
    node_count: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    prim_id: np.ndarray  # reordered-leaf position -> original triangle index

    @property
    def n_triangles(self) -> int:
        return len(self.v0)


def build_bvh(corners: np.ndarray) -> BVH:
    """Build from (m, 3, 3) triangle corners."""
    corners = np.ascontiguousarray(corners, dtype=np.float64)
    m = corners.shape[0]
    if m == 0:
        raise ValueError("cannot build a BVH over zero triangles")
    v0 = np.ascontiguousarray(corners[:, 0])
    v1 = np.ascontiguousarray(corners[:, 1])
    v2 = np.ascontiguousarray(corners[:, 2])
    (node_min, node_max, node_left, node_start, node_count, order, n_nodes) = _build(v0, v1, v2)
    return BVH(
        node_min=node_min[:n_nodes].copy(),
        node_max=node_max[:n_nodes].copy(),
        node_left=node_left[:n_nodes].copy(),
        node_start=node_start[:n_nodes].copy(),
        node_count=node_count[:n_nodes].copy(),
        v0=np.ascontiguousarray(v0[order]),
        v1=np.ascontiguousarray(v1[order]),
        v2=np.ascontiguousarray(v2[order]),
        prim_id=order.copy(),
    )


def mesh_bvh(mesh) -> BVH:
    return build_bvh(mesh.triangle_corners())


@njit(cache=True)
def _build(v0, v1, v2):
    m = v0.shape[0]
    tri_min = np.minimum(np.minimum(v0, v1), v2)
    tri_max = np.maximum(np.maximum(v0, v1), v2)
    centroid = (tri_min + tri_max) * 0.5

    max_nodes = 2 * m + 1
    node_min = np.empty((max_nodes, 3))
    node_max = np.empty((max_nodes, 3))
    node_left = np.full(max_nodes, -1, dtype=np.int64)
    node_start = np.zeros(max_nodes, dtype=np.int64)
    node_count = np.zeros(max_nodes, dtype=np.int64)
    order = np.arange(m)

    # stack of (node_id, start, end)
    stack = np.empty((_STACK_DEPTH * 4, 3), dtype=np.int64)
    stack[0] = (0, 0, m)
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node, start, end = stack[top]
        lo = np.full(3, np.inf)
        hi = np.full(3, -np.inf)
        clo = np.full(3, np.inf)
        chi = np.full(3, -np.inf)
        for i in range(start, end):
            t = order[i]
            for k in range(3):
                if tri_min[t, k] < lo[k]:
                    lo[k] = tri_min[t, k]
                if tri_max[t, k] > hi[k]:
                    hi[k] = tri_max[t, k]
                if centroid[t, k] < clo[k]:
                    clo[k] = centroid[t, k]
                if centroid[t, k] > chi[k]:
                    chi[k] = centroid[t, k]
        node_min[node] = lo
        node_max[node] = hi
        count = end - start
        if count <= _LEAF_SIZE:
            node_left[node] = -1
            node_start[node] = start
            node_count[node] = count
            continue

        axis = 0
        span = chi[0] - clo[0]
        for k in (1, 2):
            if chi[k] - clo[k] > span:
                span = chi[k] - clo[k]
                axis = k
        if span <= 0.0:
            node_left[node] = -1
            node_start[node] = start
            node_count[node] = count
            continue

        # binned SAH along the widest centroid axis
        bin_count = np.zeros(_N_BINS, dtype=np.int64)
        bin_lo = np.full((_N_BINS, 3), np.inf)
        bin_hi = np.full((_N_BINS, 3), -np.inf)
        inv = _N_BINS / span
        for i in range(start, end):
            t = order[i]
            b = int((centroid[t, axis] - clo[axis]) * inv)
            if b >= _N_BINS:
                b = _N_BINS - 1
            bin_count[b] += 1
            for k in range(3):
                if tri_min[t, k] < bin_lo[b, k]:
                    bin_lo[b, k] = tri_min[t, k]
                if tri_max[t, k] > bin_hi[b, k]:
                    bin_hi[b, k] = tri_max[t, k]

        left_area = np.empty(_N_BINS - 1)
        left_n = np.empty(_N_BINS - 1, dtype=np.int64)
        acc_lo = np.full(3, np.inf)
        acc_hi = np.full(3, -np.inf)
        n_acc = 0
        for b in range(_N_BINS - 1):
            n_acc += bin_count[b]
            for k in range(3):
                if bin_lo[b, k] < acc_lo[k]:
                    acc_lo[k] = bin_lo[b, k]
                if bin_hi[b, k] > acc_hi[k]:
                    acc_hi[k] = bin_hi[b, k]
            left_n[b] = n_acc
            left_area[b] = _half_area(acc_lo, acc_hi) if n_acc > 0 else 0.0

        best_cost = np.inf
        best_split = -1
        acc_lo[:] = np.inf
        acc_hi[:] = -np.inf
        n_acc = 0
        for b in range(_N_BINS - 1, 0, -1):
            n_acc += bin_count[b]
            for k in range(3):
                if bin_lo[b, k] < acc_lo[k]:
                    acc_lo[k] = bin_lo[b, k]
                if bin_hi[b, k] > acc_hi[k]:
                    acc_hi[k] = bin_hi[b, k]
            right_area = _half_area(acc_lo, acc_hi) if n_acc > 0 else 0.0
            nl = left_n[b - 1]
            nr = n_acc
            if nl == 0 or nr == 0:
                continue
            cost = left_area[b - 1] * nl + right_area * nr
            if cost < best_cost:
                best_cost = cost
                best_split = b

        if best_split < 0:
            # all centroids in one bin: median split
            mid = start + count // 2
        else:
            mid = start
            j = end - 1
            while mid <= j:
                t = order[mid]
                b = int((centroid[t, axis] - clo[axis]) * inv)
                if b >= _N_BINS:
                    b = _N_BINS - 1
                if b < best_split:
                    mid += 1
                else:
                    order[mid], order[j] = order[j], order[mid]
                    j -= 1
            if mid == start or mid == end:
                mid = start + count // 2

        left = n_nodes
        n_nodes += 2
        node_left[node] = left
        stack[top] = (left, start, mid)
        top += 1
        stack[top] = (left + 1, mid, end)
        top += 1

    return node_min, node_max, node_left, node_start, node_count, order, n_nodes


@njit(cache=True, inline="always")
def _half_area(lo, hi):
    dx = hi[0] - lo[0]
    dy = hi[1] - lo[1]
    dz = hi[2] - lo[2]
    return dx * dy + dy * dz + dz * dx


@njit(cache=True, inline="always")
def _slab_hit(lo, hi, ox, oy, oz, ix, iy, iz, tmax):
    t0 = (lo[0] - ox) * ix
    t1 = (hi[0] - ox) * ix
    tn = min(t0, t1)
    tf = max(t0, t1)
    t0 = (lo[1] - oy) * iy
    t1 = (hi[1] - oy) * iy
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    t0 = (lo[2] - oz) * iz
    t1 = (hi[2] - oz) * iz
    tn = max(tn, min(t0, t1))
    tf = min(tf, max(t0, t1))
    return tf >= tn and tf >= 0.0 and tn <= tmax


@njit(cache=True)
def ray_nearest(node_min, node_max, node_left, node_start, node_count, v0, v1, v2,
                origin, direction, t_min):
    """Nearest triangle hit along the ray. Returns (t, leaf_position) or (inf, -1)."""
    ox, oy, oz = origin[0], origin[1], origin[2]
    dx, dy, dz = direction[0], direction[1], direction[2]
    ix = 1.0 / dx if dx != 0.0 else np.inf
    iy = 1.0 / dy if dy != 0.0 else np.inf
    iz = 1.0 / dz if dz != 0.0 else np.inf

    best_t = np.inf
    best_i = -1
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(node_min[node], node_max[node], ox, oy, oz, ix, iy, iz, best_t):
            continue
        left = node_left[node]
        if left < 0:
            start = node_start[node]
            for i in range(start, start + node_count[node]):
                t = _tri_hit_t(v0[i], v1[i], v2[i], ox, oy, oz, dx, dy, dz, t_min)
                if t < best_t:
                    best_t = t
                    best_i = i
        else:
            stack[top] = left
            stack[top + 1] = left + 1
            top += 2
    return best_t, best_i


@njit(cache=True, inline="always")
def _tri_hit_t(a, b, c, ox, oy, oz, dx, dy, dz, t_min):
    e1x = b[0] - a[0]
    e1y = b[1] - a[1]
    e1z = b[2] - a[2]
    e2x = c[0] - a[0]
    e2y = c[1] - a[1]
    e2z = c[2] - a[2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if det > -1e-14 and det < 1e-14:
        return np.inf
    inv = 1.0 / det
    tx = ox - a[0]
    ty = oy - a[1]
    tz = oz - a[2]
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return np.inf
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return np.inf
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= t_min:
        return np.inf
    return t


@njit(cache=True)
def _parity_crossings(node_min, node_max, node_left, node_start, node_count, v0, v1, v2,
                      px, py, pz, dx, dy, dz, eps):
    """Count ray crossings with t > 0. Returns (count, degenerate_flag)."""
    ix = 1.0 / dx if dx != 0.0 else np.inf
    iy = 1.0 / dy if dy != 0.0 else np.inf
    iz = 1.0 / dz if dz != 0.0 else np.inf
    crossings = 0
    degenerate = False
    stack = np.empty(_STACK_DEPTH, dtype=np.int64)
    stack[0] = 0
    top = 1
    while top > 0:
        top -= 1
        node = stack[top]
        if not _slab_hit(node_min[node], node_max[node], px, py, pz, ix, iy, iz, np.inf):
            continue
        left = node_left[node]
        if left < 0:
            start = node_start[node]
            for i in range(start, start + node_count[node]):
                a = v0[i]
                b = v1[i]
                c = v2[i]
                e1x = b[0] - a[0]
                e1y = b[1] - a[1]
                e1z = b[2] - a[2]
                e2x = c[0] - a[0]
                e2y = c[1] - a[1]
                e2z = c[2] - a[2]
                qx = dy * e2z - dz * e2y
                qy = dz * e2x - dx * e2z
                qz = dx * e2y - dy * e2x
                det = e1x * qx + e1y * qy + e1z * qz
                if det > -1e-300 and det < 1e-300:
                    continue
                inv = 1.0 / det
                tx = px - a[0]
                ty = py - a[1]
                tz = pz - a[2]
                u = (tx * qx + ty * qy + tz * qz) * inv
                if u < -eps or u > 1.0 + eps:
                    continue
                rx = ty * e1z - tz * e1y
                ry = tz * e1x - tx * e1z
                rz = tx * e1y - ty * e1x
                v = (dx * rx + dy * ry + dz * rz) * inv
                if v < -eps or u + v > 1.0 + eps:
                    continue
                t = (e2x * rx + e2y * ry + e2z * rz) * inv
                if t <= 0.0:
                    if t > -eps:
                        degenerate = True
                    continue
                if u < eps or v < eps or u + v > 1.0 - eps or t < eps:
                    degenerate = True
                crossings += 1
        else:
            stack[top] = left
            stack[top + 1] = left + 1
            top += 2
    return crossings, degenerate


@njit(cache=True)
def point_in_bvh(node_min, node_max, node_left, node_start, node_count, v0, v1, v2,
                 px, py, pz, directions, eps):
    """Ray-parity containment with deterministic fallback directions."""
    if (px < node_min[0, 0] or px > node_max[0, 0]
            or py < node_min[0, 1] or py > node_max[0, 1]
            or pz < node_min[0, 2] or pz > node_max[0, 2]):
        return False
    parity = False
    for d in range(directions.shape[0]):
        crossings, degenerate = _parity_crossings(
            node_min, node_max, node_left, node_start, node_count, v0, v1, v2,
            px, py, pz, directions[d, 0], directions[d, 1], directions[d, 2], eps)
        parity = (crossings & 1) == 1
        if not degenerate:
            return parity
    return parity


@njit(cache=True)
def points_in_bvh(node_min, node_max, node_left, node_start, node_count, v0, v1, v2,
                  points, directions, eps):
    out = np.empty(points.shape[0], dtype=np.bool_)
    for i in range(points.shape[0]):
        out[i] = point_in_bvh(node_min, node_max, node_left, node_start, node_count,
                              v0, v1, v2, points[i, 0], points[i, 1], points[i, 2],
                              directions, eps)
    return out


@njit(cache=True)
def point_triangles_distance(v0, v1, v2, p):
    """Distance from a point to the closest triangle (brute force; test use)."""
    best = np.inf
    for i in range(v0.shape[0]):
        d = _point_tri_dist(v0[i], v1[i], v2[i], p)
        if d < best:
            best = d
    return best


@njit(cache=True, inline="always")
def _point_tri_dist(a, b, c, p):
    # Ericson, Real-Time Collision Detection, closest point on triangle
    abx = b[0] - a[0]
    aby = b[1] - a[1]
    abz = b[2] - a[2]
    acx = c[0] - a[0]
    acy = c[1] - a[1]
    acz = c[2] - a[2]
    apx = p[0] - a[0]
    apy = p[1] - a[1]
    apz = p[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return (apx * apx + apy * apy + apz * apz) ** 0.5
    bpx = p[0] - b[0]
    bpy = p[1] - b[1]
    bpz = p[2] - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return (bpx * bpx + bpy * bpy + bpz * bpz) ** 0.5
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        t = d1 / (d1 - d3)
        qx = apx - t * abx
        qy = apy - t * aby
        qz = apz - t * abz
        return (qx * qx + qy * qy + qz * qz) ** 0.5
    cpx = p[0] - c[0]
    cpy = p[1] - c[1]
    cpz = p[2] - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return (cpx * cpx + cpy * cpy + cpz * cpz) ** 0.5
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        t = d2 / (d2 - d6)
        qx = apx - t * acx
        qy = apy - t * acy
        qz = apz - t * acz
        return (qx * qx + qy * qy + qz * qz) ** 0.5
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        t = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bpx - t * (c[0] - b[0])
        qy = bpy - t * (c[1] - b[1])
        qz = bpz - t * (c[2] - b[2])
        return (qx * qx + qy * qy + qz * qz) ** 0.5
    denom = 1.0 / (va + vb + vc)
    s = vb * denom
    t = vc * denom
    qx = apx - s * abx - t * acx
    qy = apy - s * aby - t * acy
    qz = apz - s * abz - t * acz
    return (qx * qx + qy * qy + qz * qz) ** 0.5

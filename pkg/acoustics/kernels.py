"""
Compiled ray kernels: BVH traversal, segment queries and the stochastic
energy tracer.

All geometry is passed as flat numpy arrays so the kernels stay plain
`@njit` functions. The BVH layout is:

    node_min, node_max   (N, 3) float64 bounds
    node_left, node_right (N,) child indices, node_left == -1 marks a leaf
    node_start, node_count (N,) leaf range into tri_order
    tri_order            (T,) triangle indices grouped by leaf
"""

import numpy as np
from numba import njit, prange

RAY_EPSILON = 1e-6
BARY_EPSILON = 1e-9
STACK_SIZE = 64

MODE_OMNI = 0
MODE_AMBISONICS = 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV_2_53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def _next_uniform(state):
    """splitmix64 step: returns (new_state, uniform in [0, 1))."""
    state = state + _GOLDEN
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z = z ^ (z >> np.uint64(31))
    return state, float(z >> np.uint64(11)) * _INV_2_53


@njit(cache=True, error_model="numpy")
def intersect_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2, t_max):
    """Two-sided Moller-Trumbore. Returns distance in (RAY_EPSILON, t_max) or -1."""
    px = dy * e2[2] - dz * e2[1]
    py = dz * e2[0] - dx * e2[2]
    pz = dx * e2[1] - dy * e2[0]
    det = e1[0] * px + e1[1] * py + e1[2] * pz
    if abs(det) < 1e-14:
        return -1.0
    inv = 1.0 / det
    sx = ox - v0[0]
    sy = oy - v0[1]
    sz = oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -BARY_EPSILON or u > 1.0 + BARY_EPSILON:
        return -1.0
    qx = sy * e1[2] - sz * e1[1]
    qy = sz * e1[0] - sx * e1[2]
    qz = sx * e1[1] - sy * e1[0]
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -BARY_EPSILON or u + v > 1.0 + BARY_EPSILON:
        return -1.0
    t = (e2[0] * qx + e2[1] * qy + e2[2] * qz) * inv
    if t > RAY_EPSILON and t < t_max:
        return t
    return -1.0


@njit(cache=True, inline="always")
def _safe_inverse(d):
    if abs(d) > 1e-30:
        return 1.0 / d
    return 1e30 if d >= 0.0 else -1e30


@njit(cache=True, inline="always")
def _hit_box(ox, oy, oz, ix, iy, iz, bmin, bmax, t_max):
    t0 = (bmin[0] - ox) * ix
    t1 = (bmax[0] - ox) * ix
    lo = min(t0, t1)
    hi = max(t0, t1)
    t0 = (bmin[1] - oy) * iy
    t1 = (bmax[1] - oy) * iy
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    t0 = (bmin[2] - oz) * iz
    t1 = (bmax[2] - oz) * iz
    lo = max(lo, min(t0, t1))
    hi = min(hi, max(t0, t1))
    return hi >= max(lo, 0.0) and lo <= t_max


@njit(cache=True, error_model="numpy")
def closest_hit(ox, oy, oz, dx, dy, dz, t_max,
                node_min, node_max, node_left, node_right, node_start, node_count,
                tri_order, tri_v0, tri_e1, tri_e2):
    """Nearest triangle along the ray. Returns (distance, triangle) or (t_max, -1)."""
    ix = _safe_inverse(dx)
    iy = _safe_inverse(dy)
    iz = _safe_inverse(dz)
    stack = np.empty(STACK_SIZE, np.int64)
    stack[0] = 0
    sp = 1
    best_t = t_max
    best = -1
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if not _hit_box(ox, oy, oz, ix, iy, iz, node_min[n], node_max[n], best_t):
            continue
        if node_left[n] < 0:
            for k in range(node_start[n], node_start[n] + node_count[n]):
                tri = tri_order[k]
                t = intersect_triangle(ox, oy, oz, dx, dy, dz,
                                       tri_v0[tri], tri_e1[tri], tri_e2[tri], best_t)
                if t > 0.0:
                    best_t = t
                    best = tri
        else:
            stack[sp] = node_left[n]
            stack[sp + 1] = node_right[n]
            sp += 2
    return best_t, best


@njit(cache=True, error_model="numpy")
def segment_hits(ox, oy, oz, dx, dy, dz, t_max,
                 node_min, node_max, node_left, node_right, node_start, node_count,
                 tri_order, tri_v0, tri_e1, tri_e2, out_t, out_tri):
    """Every triangle crossed by the segment; fills out_t/out_tri and returns the count."""
    ix = _safe_inverse(dx)
    iy = _safe_inverse(dy)
    iz = _safe_inverse(dz)
    stack = np.empty(STACK_SIZE, np.int64)
    stack[0] = 0
    sp = 1
    count = 0
    while sp > 0:
        sp -= 1
        n = stack[sp]
        if not _hit_box(ox, oy, oz, ix, iy, iz, node_min[n], node_max[n], t_max):
            continue
        if node_left[n] < 0:
            for k in range(node_start[n], node_start[n] + node_count[n]):
                tri = tri_order[k]
                t = intersect_triangle(ox, oy, oz, dx, dy, dz,
                                       tri_v0[tri], tri_e1[tri], tri_e2[tri], t_max)
                if t > 0.0:
                    out_t[count] = t
                    out_tri[count] = tri
                    count += 1
        else:
            stack[sp] = node_left[n]
            stack[sp + 1] = node_right[n]
            sp += 2
    return count


@njit(cache=True, inline="always")
def _channel_weights(mode, dx, dy, dz, weights):
    weights[0] = 1.0
    if mode == MODE_AMBISONICS:
        # Arrival direction is -d. ACN order W, Y, Z, X with Y = -z, Z = y in scene axes.
        weights[1] = dz
        weights[2] = -dy
        weights[3] = -dx


@njit(cache=True, parallel=True, error_model="numpy")
def trace_energy(source, receiver, n_rays, n_chunks, seed, max_bounces, max_distance,
                 bin_length, n_bins, capture_radius, energy_floor, air_db_per_m,
                 n_channels, mode,
                 node_min, node_max, node_left, node_right, node_start, node_count,
                 tri_order, tri_v0, tri_e1, tri_e2, tri_normal, tri_absorption, tri_scatter):
    """Trace n_rays from source and histogram the energy crossing the receiver sphere.

    A ray deposits its current band energy at every crossing, but its
    deposits over its whole life never exceed the energy it was emitted
    with, so the per-band histogram total stays <= 1.

    Returns (energy[n_chunks, n_channels, B, n_bins], signed[n_chunks, n_channels, n_bins]).
    Per-chunk buffers are reduced by the caller in a fixed order.
    """
    n_bands = tri_absorption.shape[1]
    energy_hist = np.zeros((n_chunks, n_channels, n_bands, n_bins))
    signed_hist = np.zeros((n_chunks, n_channels, n_bins))
    per_chunk = (n_rays + n_chunks - 1) // n_chunks
    inv_n = 1.0 / n_rays
    r2 = capture_radius * capture_radius
    air_ln = np.empty(n_bands)
    for b in range(n_bands):
        air_ln[b] = -air_db_per_m[b] * np.log(10.0) / 10.0

    for chunk in prange(n_chunks):
        lo = chunk * per_chunk
        hi = min(n_rays, lo + per_chunk)
        energy = np.empty(n_bands)
        budget = np.empty(n_bands)
        weights = np.zeros(n_channels)
        for ray in range(lo, hi):
            state = seed ^ (np.uint64(ray) * _GOLDEN)
            state, u1 = _next_uniform(state)
            state, u2 = _next_uniform(state)
            dz = 1.0 - 2.0 * u1
            sr = np.sqrt(max(0.0, 1.0 - dz * dz))
            phi = 2.0 * np.pi * u2
            dx = sr * np.cos(phi)
            dy = sr * np.sin(phi)
            px = source[0]
            py = source[1]
            pz = source[2]
            path = 0.0
            for b in range(n_bands):
                energy[b] = 1.0
                budget[b] = 1.0

            for bounce in range(max_bounces + 1):
                remaining = max_distance - path
                if remaining <= 0.0:
                    break
                t, tri = closest_hit(px, py, pz, dx, dy, dz, remaining,
                                     node_min, node_max, node_left, node_right,
                                     node_start, node_count, tri_order, tri_v0, tri_e1, tri_e2)
                seg = t if tri >= 0 else remaining

                # first segment is the direct path, rendered deterministically
                if bounce > 0:
                    wx = receiver[0] - px
                    wy = receiver[1] - py
                    wz = receiver[2] - pz
                    tc = wx * dx + wy * dy + wz * dz
                    if tc >= 0.0 and tc < seg:
                        cx = wx - tc * dx
                        cy = wy - tc * dy
                        cz = wz - tc * dz
                        if cx * cx + cy * cy + cz * cz < r2:
                            arrival = path + tc
                            bin_idx = int(arrival / bin_length)
                            if bin_idx < n_bins:
                                _channel_weights(mode, dx, dy, dz, weights)
                                total = 0.0
                                for b in range(n_bands):
                                    e = min(energy[b] * np.exp(air_ln[b] * tc), budget[b])
                                    budget[b] -= e
                                    e *= inv_n
                                    total += e
                                    for c in range(n_channels):
                                        energy_hist[chunk, c, b, bin_idx] += e * weights[c] * weights[c]
                                mean_e = total / n_bands
                                for c in range(n_channels):
                                    signed_hist[chunk, c, bin_idx] += mean_e * weights[c]

                if tri < 0 or bounce == max_bounces:
                    break

                px += t * dx
                py += t * dy
                pz += t * dz
                path += t
                alive = False
                for b in range(n_bands):
                    energy[b] *= (1.0 - tri_absorption[tri, b]) * np.exp(air_ln[b] * t)
                    if energy[b] >= energy_floor:
                        alive = True
                if not alive:
                    break

                nx = tri_normal[tri, 0]
                ny = tri_normal[tri, 1]
                nz = tri_normal[tri, 2]
                cos_i = dx * nx + dy * ny + dz * nz
                if cos_i > 0.0:
                    nx = -nx
                    ny = -ny
                    nz = -nz
                    cos_i = -cos_i

                state, u3 = _next_uniform(state)
                if u3 < tri_scatter[tri]:
                    state, u4 = _next_uniform(state)
                    state, u5 = _next_uniform(state)
                    if abs(nx) > 0.9:
                        ax, ay, az = 0.0, 1.0, 0.0
                    else:
                        ax, ay, az = 1.0, 0.0, 0.0
                    t1x = ay * nz - az * ny
                    t1y = az * nx - ax * nz
                    t1z = ax * ny - ay * nx
                    norm = np.sqrt(t1x * t1x + t1y * t1y + t1z * t1z)
                    t1x /= norm
                    t1y /= norm
                    t1z /= norm
                    t2x = ny * t1z - nz * t1y
                    t2y = nz * t1x - nx * t1z
                    t2z = nx * t1y - ny * t1x
                    ang = 2.0 * np.pi * u4
                    rad = np.sqrt(u5)
                    lx = rad * np.cos(ang)
                    ly = rad * np.sin(ang)
                    lz = np.sqrt(max(0.0, 1.0 - u5))
                    dx = lx * t1x + ly * t2x + lz * nx
                    dy = lx * t1y + ly * t2y + lz * ny
                    dz = lx * t1z + ly * t2z + lz * nz
                else:
                    dx -= 2.0 * cos_i * nx
                    dy -= 2.0 * cos_i * ny
                    dz -= 2.0 * cos_i * nz
                norm = np.sqrt(dx * dx + dy * dy + dz * dz)
                dx /= norm
                dy /= norm
                dz /= norm
                px += RAY_EPSILON * nx
                py += RAY_EPSILON * ny
                pz += RAY_EPSILON * nz

    return energy_hist, signed_hist

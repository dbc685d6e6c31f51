# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled point/triangle-mesh kernels: BVH closest point and winding numbers."""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, sqrt

cnp.import_array()

cdef double PI = 3.141592653589793


cdef inline double _dot(double ax, double ay, double az, double bx, double by, double bz) noexcept nogil:
    return ax * bx + ay * by + az * bz


cdef inline void _closest_on_triangle(const double[:, :, ::1] tri, Py_ssize_t t,
                                      double px, double py, double pz,
                                      double* out) noexcept nogil:
    cdef double ax = tri[t, 0, 0], ay = tri[t, 0, 1], az = tri[t, 0, 2]
    cdef double bx = tri[t, 1, 0], by = tri[t, 1, 1], bz = tri[t, 1, 2]
    cdef double cx = tri[t, 2, 0], cy = tri[t, 2, 1], cz = tri[t, 2, 2]
    cdef double abx = bx - ax, aby = by - ay, abz = bz - az
    cdef double acx = cx - ax, acy = cy - ay, acz = cz - az
    cdef double d1 = _dot(abx, aby, abz, px - ax, py - ay, pz - az)
    cdef double d2 = _dot(acx, acy, acz, px - ax, py - ay, pz - az)
    cdef double d3, d4, d5, d6, va, vb, vc, v, w, denom
    if d1 <= 0 and d2 <= 0:
        out[0] = ax; out[1] = ay; out[2] = az
        return
    d3 = _dot(abx, aby, abz, px - bx, py - by, pz - bz)
    d4 = _dot(acx, acy, acz, px - bx, py - by, pz - bz)
    if d3 >= 0 and d4 <= d3:
        out[0] = bx; out[1] = by; out[2] = bz
        return
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        out[0] = ax + v * abx; out[1] = ay + v * aby; out[2] = az + v * abz
        return
    d5 = _dot(abx, aby, abz, px - cx, py - cy, pz - cz)
    d6 = _dot(acx, acy, acz, px - cx, py - cy, pz - cz)
    if d6 >= 0 and d5 <= d6:
        out[0] = cx; out[1] = cy; out[2] = cz
        return
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        out[0] = ax + w * acx; out[1] = ay + w * acy; out[2] = az + w * acz
        return
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        out[0] = bx + w * (cx - bx); out[1] = by + w * (cy - by); out[2] = bz + w * (cz - bz)
        return
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    out[0] = ax + abx * v + acx * w
    out[1] = ay + aby * v + acy * w
    out[2] = az + abz * v + acz * w


cdef inline double _box_dist2(const double[:, ::1] lo, const double[:, ::1] hi, Py_ssize_t n,
                              double px, double py, double pz) noexcept nogil:
    cdef double d = 0.0, e
    e = lo[n, 0] - px
    if e > 0: d += e * e
    e = px - hi[n, 0]
    if e > 0: d += e * e
    e = lo[n, 1] - py
    if e > 0: d += e * e
    e = py - hi[n, 1]
    if e > 0: d += e * e
    e = lo[n, 2] - pz
    if e > 0: d += e * e
    e = pz - hi[n, 2]
    if e > 0: d += e * e
    return d


def closest_points(const double[:, ::1] points, const double[:, :, ::1] tri,
                   const double[:, ::1] node_lo, const double[:, ::1] node_hi,
                   const long long[::1] node_left, const long long[::1] node_right,
                   const long long[::1] node_start, const long long[::1] node_count,
                   const long long[::1] order):
    """Exact nearest triangle for every point by best-first BVH descent."""
    cdef Py_ssize_t n = points.shape[0]
    dist2_arr = np.empty(n, dtype=np.float64)
    closest_arr = np.empty((n, 3), dtype=np.float64)
    index_arr = np.empty(n, dtype=np.int64)
    cdef double[::1] dist2 = dist2_arr
    cdef double[:, ::1] closest = closest_arr
    cdef long long[::1] index = index_arr
    cdef Py_ssize_t depth = node_left.shape[0] + 1
    stack_arr = np.empty(max(depth, 64), dtype=np.int64)
    cdef long long[::1] stack = stack_arr
    cdef Py_ssize_t i, top, node, k, t, near, far
    cdef double px, py, pz, best, d, dl, dr
    cdef double q[3]
    cdef double bq[3]
    cdef long long best_t
    with nogil:
        for i in range(n):
            px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
            best = 1e300
            best_t = -1
            bq[0] = 0; bq[1] = 0; bq[2] = 0
            top = 0
            stack[top] = 0
            top += 1
            while top > 0:
                top -= 1
                node = stack[top]
                if _box_dist2(node_lo, node_hi, node, px, py, pz) >= best:
                    continue
                if node_left[node] < 0:
                    for k in range(node_start[node], node_start[node] + node_count[node]):
                        t = order[k]
                        _closest_on_triangle(tri, t, px, py, pz, q)
                        d = (q[0] - px) * (q[0] - px) + (q[1] - py) * (q[1] - py) + (q[2] - pz) * (q[2] - pz)
                        if d < best or (d == best and t < best_t):
                            best = d
                            best_t = t
                            bq[0] = q[0]; bq[1] = q[1]; bq[2] = q[2]
                else:
                    dl = _box_dist2(node_lo, node_hi, node_left[node], px, py, pz)
                    dr = _box_dist2(node_lo, node_hi, node_right[node], px, py, pz)
                    if dl <= dr:
                        near = node_left[node]; far = node_right[node]
                    else:
                        near = node_right[node]; far = node_left[node]
                    stack[top] = far
                    top += 1
                    stack[top] = near
                    top += 1
            dist2[i] = best
            index[i] = best_t
            closest[i, 0] = bq[0]; closest[i, 1] = bq[1]; closest[i, 2] = bq[2]
    return dist2_arr, closest_arr, index_arr


def winding_numbers(const double[:, ::1] points, const double[:, :, ::1] tri):
    """Generalized winding number of a triangle soup at each point."""
    cdef Py_ssize_t n = points.shape[0], m = tri.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, t
    cdef double px, py, pz, total
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz, la, lb, lc, det, den
    with nogil:
        for i in range(n):
            px = points[i, 0]; py = points[i, 1]; pz = points[i, 2]
            total = 0.0
            for t in range(m):
                ax = tri[t, 0, 0] - px; ay = tri[t, 0, 1] - py; az = tri[t, 0, 2] - pz
                bx = tri[t, 1, 0] - px; by = tri[t, 1, 1] - py; bz = tri[t, 1, 2] - pz
                cx = tri[t, 2, 0] - px; cy = tri[t, 2, 1] - py; cz = tri[t, 2, 2] - pz
                la = sqrt(ax * ax + ay * ay + az * az)
                lb = sqrt(bx * bx + by * by + bz * bz)
                lc = sqrt(cx * cx + cy * cy + cz * cz)
                det = ax * (by * cz - bz * cy) - ay * (bx * cz - bz * cx) + az * (bx * cy - by * cx)
                den = la * lb * lc + _dot(ax, ay, az, bx, by, bz) * lc \
                    + _dot(bx, by, bz, cx, cy, cz) * la + _dot(cx, cy, cz, ax, ay, az) * lb
                total += 2.0 * atan2(det, den)
            out[i] = total / (4.0 * PI)
    return out_arr

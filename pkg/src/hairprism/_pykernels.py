"""Pure numpy versions of the compiled kernels.

Same signatures as ``_ckernels``. The closest-point query ignores the BVH and
scans all triangles per block of points, which is exact but O(n * m).
"""
import numpy as np

_BLOCK = 256


def _closest_on_triangles(p, a, b, c):
    """Closest points on triangles (a, b, c) to p; all arrays broadcast to (..., 3)."""
    ab, ac = b - a, c - a
    ap, bp, cp = p - a, p - b, p - c
    d1 = np.sum(ab * ap, -1)
    d2 = np.sum(ac * ap, -1)
    d3 = np.sum(ab * bp, -1)
    d4 = np.sum(ac * bp, -1)
    d5 = np.sum(ab * cp, -1)
    d6 = np.sum(ac * cp, -1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = vb / denom
        w = vc / denom
        out = a + ab * v[..., None] + ac * w[..., None]

        bc_w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        on_bc = b + (c - b) * bc_w[..., None]
        ac_w = d2 / (d2 - d6)
        on_ac = a + ac * ac_w[..., None]
        ab_v = d1 / (d1 - d3)
        on_ab = a + ab * ab_v[..., None]

    # apply regions from last to first so earlier tests take precedence
    region_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    out = np.where(region_bc[..., None], on_bc, out)
    region_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    out = np.where(region_ac[..., None], on_ac, out)
    region_c = (d6 >= 0) & (d5 <= d6)
    out = np.where(region_c[..., None], np.broadcast_to(c, out.shape), out)
    region_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    out = np.where(region_ab[..., None], on_ab, out)
    region_b = (d3 >= 0) & (d4 <= d3)
    out = np.where(region_b[..., None], np.broadcast_to(b, out.shape), out)
    region_a = (d1 <= 0) & (d2 <= 0)
    out = np.where(region_a[..., None], np.broadcast_to(a, out.shape), out)
    return out


def closest_points(points, tri, node_lo=None, node_hi=None, node_left=None, node_right=None,
                   node_start=None, node_count=None, order=None):
    points = np.asarray(points, dtype=np.float64)
    tri = np.asarray(tri, dtype=np.float64)
    n = points.shape[0]
    dist2 = np.empty(n)
    closest = np.empty((n, 3))
    index = np.empty(n, dtype=np.int64)
    a, b, c = tri[None, :, 0], tri[None, :, 1], tri[None, :, 2]
    for s in range(0, n, _BLOCK):
        p = points[s:s + _BLOCK, None, :]
        q = _closest_on_triangles(p, a, b, c)
        d = np.sum((q - p) ** 2, axis=-1)
        best = np.argmin(d, axis=1)
        rows = np.arange(p.shape[0])
        dist2[s:s + _BLOCK] = d[rows, best]
        closest[s:s + _BLOCK] = q[rows, best]
        index[s:s + _BLOCK] = best
    return dist2, closest, index


def winding_numbers(points, tri):
    points = np.asarray(points, dtype=np.float64)
    tri = np.asarray(tri, dtype=np.float64)
    out = np.empty(points.shape[0])
    for s in range(0, points.shape[0], _BLOCK):
        p = points[s:s + _BLOCK, None, :]
        a, b, c = tri[None, :, 0] - p, tri[None, :, 1] - p, tri[None, :, 2] - p
        la, lb, lc = (np.linalg.norm(x, axis=-1) for x in (a, b, c))
        det = np.sum(a * np.cross(b, c), axis=-1)
        den = la * lb * lc + np.sum(a * b, -1) * lc + np.sum(b * c, -1) * la + np.sum(c * a, -1) * lb
        out[s:s + _BLOCK] = np.sum(2.0 * np.arctan2(det, den), axis=1) / (4.0 * np.pi)
    return out

"""Differentiable prismatization of hair strands.

Every strand point ``p_j`` gets a ring of ``K`` vertices ``p_j + R * n_kj``
where ``n_kj`` is an initial normal rotated about the point's tangent by
``2*pi*k/K``. Adjacent rings are stitched with two triangles per lateral quad,
and each end ring is closed with a triangle fan anchored at ring vertex 0, so
every strand becomes a closed, outward-wound prism with exactly ``K * n_p``
vertices.

The initial normal at a point is ``normalize(t x (c - p))`` for tangent ``t``
and reference point ``c`` (typically the head center), evaluated at every
point. Setting ``frame="transport"`` instead evaluates it at the root only and
carries it along the strand with a rotation-minimizing (double reflection)
frame.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import TriMesh, validate_mesh  # noqa: F401  (re-exported)
from .strands import Hairstyle, Strand, orientation_vjp, segment_orientations

log = logging.getLogger(__name__)

COLLINEAR_EPS = 1e-7
NORMALIZE_EPS = 1e-9
FRAMES = ("cross", "transport")


@dataclass(frozen=True)
class PrismParams:
    k_edges: int = 4
    radius: float = 0.01
    reference_point: tuple[float, float, float] = (0.0, 0.0, 0.0)
    frame: str = "cross"

    def __post_init__(self):
        if int(self.k_edges) != self.k_edges or self.k_edges < 3:
            raise ValueError(f"k_edges must be an integer >= 3, got {self.k_edges}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}, got {self.frame!r}")
        object.__setattr__(self, "k_edges", int(self.k_edges))
        object.__setattr__(self, "reference_point", tuple(float(x) for x in self.reference_point))


@dataclass(frozen=True)
class PrismMesh(TriMesh):
    """Triangle mesh whose vertex ``v`` sits on ring ``(strand, point, edge)``."""

    strand_of_vertex: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        sov = np.zeros((0, 3), dtype=np.int64) if self.strand_of_vertex is None else self.strand_of_vertex
        sov = np.asarray(sov, dtype=np.int64).reshape(-1, 3)
        if sov.shape[0] != self.vertices.shape[0]:
            raise ValueError("strand_of_vertex must have one row per vertex")
        object.__setattr__(self, "strand_of_vertex", sov)


def default_radius(scalp_area: float, n_strands: int) -> float:
    """Prism radius that tiles the scalp area with ``n_strands`` discs."""
    if not scalp_area > 0 or n_strands < 1:
        raise ValueError("need scalp_area > 0 and n_strands >= 1")
    return math.sqrt(scalp_area / (n_strands * math.pi))


def _fallback_axes(t: np.ndarray) -> np.ndarray:
    axes = np.zeros_like(t)
    pick = np.argmin(np.abs(t), axis=-1)
    np.put_along_axis(axes, pick[..., None], 1.0, axis=-1)
    return axes


def _initial_normals(t: np.ndarray, points: np.ndarray, reference: np.ndarray):
    arm = reference - points
    m = np.cross(t, arm)
    norm = np.linalg.norm(m, axis=-1)
    fallback = norm < COLLINEAR_EPS
    if fallback.any():
        log.debug("initial normal: %d near-collinear point(s), using axis fallback", int(fallback.sum()))
        axes = _fallback_axes(t[fallback])
        m[fallback] = np.cross(t[fallback], axes)
        arm = arm.copy()
        arm[fallback] = axes
        norm = np.linalg.norm(m, axis=-1)
    n0 = m / np.maximum(norm, NORMALIZE_EPS)[..., None]
    return n0, arm, norm, fallback


def initial_normal(orientation, point, reference_point) -> np.ndarray:
    """Unit normal ``normalize(o x (c - p))`` with an axis fallback when collinear."""
    n0, *_ = _initial_normals(np.asarray(orientation, dtype=np.float64)[None],
                              np.asarray(point, dtype=np.float64)[None],
                              np.asarray(reference_point, dtype=np.float64))
    return n0[0]


def _normalize_vjp(n: np.ndarray, norm: np.ndarray, g: np.ndarray) -> np.ndarray:
    return (g - n * np.sum(n * g, axis=-1, keepdims=True)) / np.maximum(norm, NORMALIZE_EPS)[..., None]


def _reflect(y, v, c):
    return y - (2.0 * np.sum(v * y, axis=-1) / c)[..., None] * v


def _reflect_vjp(y, v, c, g):
    vy = np.sum(v * y, axis=-1)[..., None]
    vg = np.sum(v * g, axis=-1)[..., None]
    c = c[..., None]
    g_y = g - 2.0 * vg / c * v
    g_v = -2.0 / c * (y * vg + vy * g) + 4.0 * vy * vg / c ** 2 * v
    return g_y, g_v


class _Forward:
    """Forward pass of the prism map for a batch of equal-length strands."""

    def __init__(self, points: np.ndarray, params: PrismParams, tangents: np.ndarray | None = None):
        self.points = points
        self.params = params
        K = params.k_edges
        self.theta = 2.0 * np.pi * np.arange(K) / K
        self.o, self.length = segment_orientations(points)
        if tangents is not None:
            self.o = tangents
        self.t = np.concatenate([self.o, self.o[:, -1:]], axis=1)
        ref = np.asarray(params.reference_point, dtype=np.float64)
        if params.frame == "cross":
            self.n0, self.arm, self.m_norm, self.fallback = _initial_normals(self.t, points, ref)
            self.r = self.n0
        else:
            n0, arm, m_norm, fallback = _initial_normals(self.t[:, 0], points[:, 0], ref)
            self.n0, self.arm, self.m_norm, self.fallback = n0, arm, m_norm, fallback
            self._transport()
        self.b = np.cross(self.t, self.r)
        ring = (np.cos(self.theta)[:, None] * self.r[:, :, None, :]
                + np.sin(self.theta)[:, None] * self.b[:, :, None, :])
        self.vertices = points[:, :, None, :] + params.radius * ring

    def _transport(self):
        x, t = self.points, self.t
        n_p = x.shape[1]
        r = np.empty_like(x)
        r[:, 0] = self.n0
        self.steps = []
        for j in range(n_p - 1):
            v1 = x[:, j + 1] - x[:, j]
            c1 = np.sum(v1 * v1, axis=-1)
            rl = _reflect(r[:, j], v1, c1)
            tl = _reflect(t[:, j], v1, c1)
            v2 = t[:, j + 1] - tl
            c2 = np.sum(v2 * v2, axis=-1)
            flat = c2 < 1e-24
            c2s = np.where(flat, 1.0, c2)
            r[:, j + 1] = np.where(flat[:, None], rl, _reflect(rl, v2, c2s))
            self.steps.append((v1, c1, rl, tl, v2, c2s, flat))
        self.r = r

    def backward(self, g_vertices: np.ndarray) -> np.ndarray:
        """Vector-Jacobian product: vertex cotangents to point cotangents."""
        R = self.params.radius
        cos, sin = np.cos(self.theta), np.sin(self.theta)
        g_p = g_vertices.sum(axis=2)
        g_r = R * np.einsum("k,spkd->spd", cos, g_vertices)
        g_b = R * np.einsum("k,spkd->spd", sin, g_vertices)
        # b = t x r
        g_t = np.cross(self.r, g_b)
        g_r = g_r + np.cross(g_b, self.t)

        if self.params.frame == "cross":
            g_n0 = g_r
            g_m = _normalize_vjp(self.n0, self.m_norm, g_n0)
            g_t = g_t + np.cross(self.arm, g_m)
            g_arm = np.cross(g_m, self.t)
            g_arm[self.fallback] = 0.0
            g_p = g_p - g_arm
        else:
            x = self.points
            g_t = g_t.copy()
            for j in range(x.shape[1] - 2, -1, -1):
                v1, c1, rl, tl, v2, c2, flat = self.steps[j]
                g_out = g_r[:, j + 1]
                g_rl, g_v2 = _reflect_vjp(rl, v2, c2, g_out)
                g_rl = np.where(flat[:, None], g_out, g_rl)
                g_v2 = np.where(flat[:, None], 0.0, g_v2)
                g_t[:, j + 1] += g_v2
                g_tl = -g_v2
                g_tj, g_v1a = _reflect_vjp(self.t[:, j], v1, c1, g_tl)
                g_rj, g_v1b = _reflect_vjp(self.r[:, j], v1, c1, g_rl)
                g_t[:, j] += g_tj
                g_r[:, j] += g_rj
                g_v1 = g_v1a + g_v1b
                g_p[:, j + 1] += g_v1
                g_p[:, j] -= g_v1
            g_m = _normalize_vjp(self.n0, self.m_norm, g_r[:, 0])
            g_t[:, 0] += np.cross(self.arm, g_m)
            g_arm = np.cross(g_m, self.t[:, 0])
            g_arm[self.fallback] = 0.0
            g_p[:, 0] -= g_arm

        # last point reuses the last segment's tangent
        g_o = g_t[:, :-1].copy()
        g_o[:, -1] += g_t[:, -1]
        return g_p + orientation_vjp(self.o, self.length, g_o)


@lru_cache(maxsize=64)
def strand_triangles(n_points: int, k_edges: int) -> np.ndarray:
    """Triangle template for one strand, vertices indexed ``j * K + k``."""
    K = k_edges
    j, k = np.meshgrid(np.arange(n_points - 1), np.arange(K), indexing="ij")
    j, k = j.ravel(), k.ravel()
    a = j * K + k
    b = j * K + (k + 1) % K
    c = (j + 1) * K + (k + 1) % K
    d = (j + 1) * K + k
    lateral = np.stack([np.stack([a, b, c], 1), np.stack([a, c, d], 1)], axis=1).reshape(-1, 3)
    fan = np.arange(1, K - 1)
    zeros = np.zeros_like(fan)
    bottom = np.stack([zeros, fan + 1, fan], axis=1)
    last = (n_points - 1) * K
    top = np.stack([zeros + last, fan + last, fan + 1 + last], axis=1)
    tris = np.concatenate([lateral, bottom, top]).astype(np.int64)
    tris.setflags(write=False)
    return tris


def _assemble(vertices: np.ndarray) -> PrismMesh:
    n_s, n_p, K, _ = vertices.shape
    if n_s == 0:
        return PrismMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), np.zeros((0, 3), dtype=np.int64))
    tmpl = strand_triangles(n_p, K)
    per = n_p * K
    tris = (tmpl[None, :, :] + per * np.arange(n_s)[:, None, None]).reshape(-1, 3)
    s, j, k = np.meshgrid(np.arange(n_s), np.arange(n_p), np.arange(K), indexing="ij")
    sov = np.stack([s.ravel(), j.ravel(), k.ravel()], axis=1)
    return PrismMesh(vertices.reshape(-1, 3), tris, sov)


def _check_frames(strand_points: np.ndarray, frames) -> np.ndarray | None:
    if frames is None:
        return None
    o = np.asarray(getattr(frames, "orientations", frames), dtype=np.float64)
    if o.ndim == 3:
        if o.shape[0] != 1:
            raise ValueError("frames hold more than one strand")
        o = o[0]
    if o.shape != (strand_points.shape[0] - 1, 3):
        raise ValueError(f"frames shape {o.shape} inconsistent with strand of {strand_points.shape[0]} points")
    return o[None]


def prismatize_strand(strand: Strand | np.ndarray, params: PrismParams = PrismParams(),
                      frames=None) -> PrismMesh:
    """Closed prism around one strand.

    ``frames`` may supply precomputed segment orientations (a
    :class:`~hairprism.strands.StrandFrameField` or an array); by default they
    are derived from the points.
    """
    pts = strand.points if isinstance(strand, Strand) else np.asarray(strand, dtype=np.float64)
    fwd = _Forward(pts[None], params, _check_frames(pts, frames))
    return _assemble(fwd.vertices)


def prismatize_hairstyle(hair: Hairstyle, params: PrismParams = PrismParams()) -> PrismMesh:
    """Disjoint union of all strand prisms in strand-major, point-major, edge-minor order."""
    if hair.n_strands == 0:
        return _assemble(np.zeros((0, 0, params.k_edges, 3)))
    return _assemble(_Forward(hair.points, params).vertices)


def backprop_vertices(mesh: PrismMesh, vertex_grads: np.ndarray, strand_points: Hairstyle,
                      params: PrismParams = PrismParams()) -> np.ndarray:
    """Pull per-vertex gradients back to strand points, shape ``(n_s, n_p, 3)``.

    Includes the dependence of every ring normal on the neighboring points
    through the tangents and the reference-point cross product.
    """
    g = np.asarray(vertex_grads, dtype=np.float64)
    n_s, n_p = strand_points.n_strands, strand_points.n_points
    K = params.k_edges
    if g.shape != (mesh.n_vertices, 3) or mesh.n_vertices != n_s * n_p * K:
        raise ValueError(
            f"vertex_grads shape {g.shape} does not match mesh of {mesh.n_vertices} vertices "
            f"for {n_s} strands x {n_p} points x {K} edges"
        )
    if n_s == 0:
        return np.zeros((0, n_p, 3))
    fwd = _Forward(strand_points.points, params)
    return fwd.backward(g.reshape(n_s, n_p, K, 3))


def prism_vertices(points: np.ndarray, params: PrismParams = PrismParams()) -> np.ndarray:
    """Raw ring vertex array ``(n_s, n_p, K, 3)`` for a point array."""
    return _Forward(np.asarray(points, dtype=np.float64), params).vertices

"""Signed distance sources used by the geometry penalties.

All sources are negative inside, positive outside and zero on the surface.
"""
from __future__ import annotations

import numpy as np

from . import kernels
from .mesh import TriMesh, validate_mesh

_GRAD_EPS = 1e-12


class SdfSource:
    """Base class. Subclasses implement :meth:`value_and_grad`."""

    def value(self, points) -> np.ndarray:
        return self.value_and_grad(points)[0]

    def gradient(self, points) -> np.ndarray:
        return self.value_and_grad(points)[1]

    def value_and_grad(self, points) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Axis-aligned bounds of the interior, or None when unbounded."""
        return None

    def __call__(self, points) -> np.ndarray:
        return self.value(points)


def _as_points(points) -> tuple[np.ndarray, tuple]:
    p = np.asarray(points, dtype=np.float64)
    return p.reshape(-1, 3), p.shape[:-1]


class BoxSdf(SdfSource):
    """Oriented box; ``rotation`` maps box-local axes to world axes."""

    def __init__(self, center, half_extents, rotation=None):
        self.center = np.asarray(center, dtype=np.float64).reshape(3)
        self.half_extents = np.asarray(half_extents, dtype=np.float64).reshape(3)
        if np.any(self.half_extents <= 0):
            raise ValueError("box half extents must be positive")
        self.rotation = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        if not np.allclose(self.rotation @ self.rotation.T, np.eye(3), atol=1e-9):
            raise ValueError("box rotation must be orthonormal")

    def value_and_grad(self, points):
        p, shape = _as_points(points)
        local = (p - self.center) @ self.rotation
        q = np.abs(local) - self.half_extents
        outside = np.maximum(q, 0.0)
        out_len = np.linalg.norm(outside, axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        value = out_len + inside

        sign = np.where(local < 0, -1.0, 1.0)
        g_local = np.zeros_like(local)
        is_out = out_len > 0
        g_local[is_out] = outside[is_out] / out_len[is_out, None]
        ax = np.argmax(q[~is_out], axis=1)
        g_in = np.zeros((ax.shape[0], 3))
        g_in[np.arange(ax.shape[0]), ax] = 1.0
        g_local[~is_out] = g_in
        grad = (g_local * sign) @ self.rotation.T
        return value.reshape(shape), grad.reshape(shape + (3,))

    def bounds(self):
        ext = np.abs(self.rotation) @ self.half_extents
        return self.center - ext, self.center + ext


class HalfSpaceSdf(SdfSource):
    """Signed plane distance; the interior is the side opposite ``normal``."""

    def __init__(self, point, normal):
        self.point = np.asarray(point, dtype=np.float64).reshape(3)
        n = np.asarray(normal, dtype=np.float64).reshape(3)
        norm = np.linalg.norm(n)
        if not abs(norm - 1.0) <= 1e-6:
            raise ValueError(f"half-space normal must be unit length, got |n|={norm}")
        self.normal = n / norm

    def value_and_grad(self, points):
        p, shape = _as_points(points)
        value = (p - self.point) @ self.normal
        grad = np.broadcast_to(self.normal, p.shape).copy()
        return value.reshape(shape), grad.reshape(shape + (3,))


class MeshSdf(SdfSource):
    """Exact distance to a closed triangle mesh, signed by its winding number.

    Construction rejects meshes that are not watertight. Queries outside the
    mesh's bounding box skip the winding number (it is zero there).
    """

    def __init__(self, mesh: TriMesh, backend: str | None = None):
        report = validate_mesh(mesh)
        if mesh.n_triangles == 0 or not report.watertight:
            raise ValueError(f"mesh SDF source must be watertight: {report.to_dict()}")
        self.mesh = mesh
        self.backend = backend
        self.tri = np.ascontiguousarray(mesh.corners())
        self.bvh = kernels.Bvh.build(self.tri)
        self.lo = mesh.vertices.min(axis=0)
        self.hi = mesh.vertices.max(axis=0)
        n = np.cross(self.tri[:, 1] - self.tri[:, 0], self.tri[:, 2] - self.tri[:, 0])
        self.face_normals = n / np.maximum(np.linalg.norm(n, axis=1), _GRAD_EPS)[:, None]

    def unsigned(self, points):
        p, shape = _as_points(points)
        d2, q, tri = kernels.closest_points(p, self.tri, self.bvh, self.backend)
        return np.sqrt(d2).reshape(shape), q.reshape(shape + (3,)), tri.reshape(shape)

    def winding_number(self, points) -> np.ndarray:
        p, shape = _as_points(points)
        w = np.zeros(p.shape[0])
        near = np.all((p >= self.lo) & (p <= self.hi), axis=1)
        if near.any():
            w[near] = kernels.winding_numbers(p[near], self.tri, self.backend)
        return w.reshape(shape)

    def value_and_grad(self, points):
        p, shape = _as_points(points)
        d2, q, tri = kernels.closest_points(p, self.tri, self.bvh, self.backend)
        dist = np.sqrt(d2)
        sign = np.where(self.winding_number(p) > 0.5, -1.0, 1.0)
        diff = p - q
        on_surface = dist <= _GRAD_EPS
        grad = np.empty_like(p)
        grad[~on_surface] = sign[~on_surface, None] * diff[~on_surface] / dist[~on_surface, None]
        grad[on_surface] = self.face_normals[tri[on_surface]]
        return (sign * dist).reshape(shape), grad.reshape(shape + (3,))

    def bounds(self):
        return self.lo.copy(), self.hi.copy()


def sdf_eval(source: SdfSource, points) -> np.ndarray:
    return source.value(points)


def sdf_grad(source: SdfSource, points) -> np.ndarray:
    return source.gradient(points)

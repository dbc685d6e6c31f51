"""Shared fixtures and brute-force oracles used across the test suite.

The oracles are written independently of the package code: plain Python
loops, explicit enumeration, or finite differences.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np
import pytest

from hairprism.strands import Hairstyle

try:
    from hypothesis import settings

    settings.register_profile("ci", max_examples=40, deadline=None)
    settings.load_profile("ci")
except ImportError:  # pragma: no cover
    pass


def arc_points(n_points: int, step: float, radius: float = 1.0, phase: float = 0.0,
               offset=(0.0, 0.0, 0.0)) -> np.ndarray:
    t = phase + step * np.arange(n_points)
    pts = np.stack([radius * np.cos(t), radius * np.sin(t), np.zeros(n_points)], axis=1)
    return pts + np.asarray(offset, dtype=np.float64)


def arc_hairstyle(n_strands: int, n_points: int, step: float) -> Hairstyle:
    pts = np.stack([arc_points(n_points, step, offset=(0.0, 0.0, 0.3 * i)) for i in range(n_strands)])
    return Hairstyle.from_points(pts)


def straight_hairstyle(n_strands: int, n_points: int, spacing: float = 0.1) -> Hairstyle:
    """Parallel strands along -z hanging from a line of roots."""
    pts = np.zeros((n_strands, n_points, 3))
    pts[:, :, 0] = spacing * np.arange(n_strands)[:, None]
    pts[:, :, 2] = -0.05 * np.arange(n_points)[None, :]
    return Hairstyle.from_points(pts)


def loop_orientations(points) -> list:
    out = []
    for a, b in zip(points[:-1], points[1:]):
        d = [b[i] - a[i] for i in range(3)]
        n = math.sqrt(sum(x * x for x in d))
        out.append([x / n for x in d])
    return out


def loop_curvatures(points) -> list:
    o = loop_orientations(points)
    c = [0.0]
    for a, b in zip(o[:-1], o[1:]):
        c.append(math.sqrt(sum((b[i] - a[i]) ** 2 for i in range(3))))
    c.append(0.0)
    return c


def brute_neighbors(roots, k):
    out = []
    for i, r in enumerate(roots):
        d = [(float(np.sum((r - q) ** 2)), j) for j, q in enumerate(roots) if j != i]
        d.sort()
        out.append(tuple(j for _, j in d[:k]))
    return out


def edge_counts(triangles) -> Counter:
    c = Counter()
    for t in np.asarray(triangles).tolist():
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            c[(min(a, b), max(a, b))] += 1
    return c


def euler_characteristic(n_vertices: int, triangles) -> int:
    return n_vertices - len(edge_counts(triangles)) + len(triangles)


def closest_on_segment(p, a, b):
    ab = b - a
    t = np.clip(np.dot(p - a, ab) / np.dot(ab, ab), 0.0, 1.0)
    return a + t * ab


def closest_on_triangle_brute(p, a, b, c):
    """Minimum over the plane projection (when inside) and the three edges."""
    cands = [closest_on_segment(p, a, b), closest_on_segment(p, b, c), closest_on_segment(p, c, a)]
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    q = p - np.dot(p - a, n) * n
    inside = all(np.dot(np.cross(v1 - v0, q - v0), n) >= 0 for v0, v1 in ((a, b), (b, c), (c, a)))
    if inside:
        cands.append(q)
    return min(cands, key=lambda x: float(np.sum((p - x) ** 2)))


def fd_grad(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for idx in np.ndindex(*x.shape):
        old = x[idx]
        x[idx] = old + h
        fp = f(x)
        x[idx] = old - h
        fm = f(x)
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


@pytest.fixture
def rng():
    return np.random.default_rng(12345)

"""Backend selection and threading for the point/mesh kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise (or
with ``HAIRPRISM_PURE=1`` in the environment) the numpy fallback in
``_pykernels`` is used. Both return identical nearest distances; results for
each point are independent of how points are chunked across threads, so
outputs are bit-identical for any thread count.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _pykernels

try:
    if os.environ.get("HAIRPRISM_PURE"):
        raise ImportError("pure-python backend requested")
    from . import _ckernels
except ImportError:
    _ckernels = None

BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["cython"] = _ckernels
DEFAULT_BACKEND = "cython" if _ckernels is not None else "python"

_threads = 1
_LEAF_SIZE = 4
_MIN_CHUNK = 256


def set_num_threads(n: int) -> None:
    global _threads
    if n < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_num_threads() -> int:
    return _threads


def _impl(backend: str | None):
    name = backend or DEFAULT_BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None


@dataclass(frozen=True)
class Bvh:
    """Flat median-split bounding volume hierarchy over triangles."""

    lo: np.ndarray
    hi: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray

    @classmethod
    def build(cls, tri: np.ndarray, leaf_size: int = _LEAF_SIZE) -> "Bvh":
        tri_lo = tri.min(axis=1)
        tri_hi = tri.max(axis=1)
        centroid = tri.mean(axis=1)
        order = np.arange(tri.shape[0], dtype=np.int64)
        lo, hi, left, right, start, count = [], [], [], [], [], []

        def new_node(s, e):
            idx = order[s:e]
            lo.append(tri_lo[idx].min(axis=0))
            hi.append(tri_hi[idx].max(axis=0))
            left.append(-1)
            right.append(-1)
            start.append(s)
            count.append(e - s)
            return len(lo) - 1

        stack = [(new_node(0, len(order)), 0, len(order))]
        while stack:
            node, s, e = stack.pop()
            if e - s <= leaf_size:
                continue
            idx = order[s:e]
            c = centroid[idx]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            order[s:e] = idx[np.argsort(c[:, axis], kind="stable")]
            mid = (s + e) // 2
            left[node] = new_node(s, mid)
            right[node] = new_node(mid, e)
            stack.append((right[node], mid, e))
            stack.append((left[node], s, mid))

        as_i = lambda x: np.ascontiguousarray(x, dtype=np.int64)
        return cls(np.ascontiguousarray(lo), np.ascontiguousarray(hi), as_i(left), as_i(right),
                   as_i(start), as_i(count), order)


def _chunks(n: int):
    if _threads == 1 or n < 2 * _MIN_CHUNK:
        return [(0, n)]
    size = max(_MIN_CHUNK, -(-n // _threads))
    return [(s, min(n, s + size)) for s in range(0, n, size)]


def _map_chunks(fn, n):
    chunks = _chunks(n)
    if len(chunks) == 1:
        return [fn(0, n)]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        return list(pool.map(lambda se: fn(*se), chunks))


def closest_points(points: np.ndarray, tri: np.ndarray, bvh: Bvh, backend: str | None = None):
    """Squared distance, closest point and triangle index of the nearest triangle."""
    impl = _impl(backend)
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    tri = np.ascontiguousarray(tri, dtype=np.float64)
    if points.shape[0] == 0:
        return np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=np.int64)

    def run(s, e):
        return impl.closest_points(points[s:e], tri, bvh.lo, bvh.hi, bvh.left, bvh.right,
                                   bvh.start, bvh.count, bvh.order)

    parts = _map_chunks(run, points.shape[0])
    return tuple(np.concatenate(x) for x in zip(*parts))


def winding_numbers(points: np.ndarray, tri: np.ndarray, backend: str | None = None) -> np.ndarray:
    impl = _impl(backend)
    points = np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    tri = np.ascontiguousarray(tri, dtype=np.float64)
    if points.shape[0] == 0:
        return np.zeros(0)
    parts = _map_chunks(lambda s, e: impl.winding_numbers(points[s:e], tri), points.shape[0])
    return np.concatenate(parts)

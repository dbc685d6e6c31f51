"""Strand and hairstyle data model, strand kinematics and synthetic fixtures.

Hairstyles are stored densely as a ``(n_strands, n_points, 3)`` float64 array.
Orientations are the normalized segment directions, curvatures the norm of the
difference between consecutive orientations, zero-padded at both strand ends so
each strand carries exactly ``n_points`` curvature samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

SEGMENT_EPS = 1e-9
DEFAULT_NEIGHBORS = 4
SCALP_CAP_DEGREES = 70.0


class DegenerateSegmentError(ValueError):
    """Raised when two consecutive strand points coincide."""

    def __init__(self, strand: int, segment: int, length: float):
        self.strand = strand
        self.segment = segment
        self.length = length
        super().__init__(
            f"degenerate segment {segment} on strand {strand} (length {length:.3g})"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Strand:
    """One hair fiber as an ordered polyline of ``n_points`` 3D positions."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 2:
            raise ValueError(f"strand points must have shape (n>=2, 3), got {pts.shape}")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def root(self) -> np.ndarray:
        return self.points[0]


@dataclass(frozen=True)
class Hairstyle:
    """A set of strands sharing one point count, plus the root neighbor graph.

    ``neighbors[i]`` lists the strands adjacent to strand ``i``. It may be
    ``None`` when no adjacency has been built (statistics that need it raise).
    """

    points: np.ndarray
    neighbors: tuple[tuple[int, ...], ...] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 2 and pts.shape[0] == 0:
            pts = pts.reshape(0, 0, 3)
        if pts.ndim != 3 or pts.shape[2] != 3:
            raise ValueError(f"hairstyle points must have shape (n_s, n_p, 3), got {pts.shape}")
        if pts.shape[0] > 0 and pts.shape[1] < 2:
            raise ValueError("strands need at least 2 points")
        object.__setattr__(self, "points", _frozen(pts))
        if self.neighbors is not None:
            nbrs = tuple(tuple(int(k) for k in row) for row in self.neighbors)
            if len(nbrs) != pts.shape[0]:
                raise ValueError("neighbor list count must equal strand count")
            for i, row in enumerate(nbrs):
                for k in row:
                    if k == i or not 0 <= k < pts.shape[0]:
                        raise ValueError(f"invalid neighbor {k} for strand {i}")
            object.__setattr__(self, "neighbors", nbrs)

    @classmethod
    def from_strands(cls, strands: Sequence[Strand | np.ndarray], k: int | None = DEFAULT_NEIGHBORS,
                     meta: dict | None = None) -> "Hairstyle":
        arrays = [s.points if isinstance(s, Strand) else np.asarray(s, dtype=np.float64) for s in strands]
        if arrays:
            counts = {a.shape[0] for a in arrays}
            if len(counts) != 1:
                raise ValueError(f"strands have differing point counts {sorted(counts)}")
            pts = np.stack(arrays)
        else:
            pts = np.zeros((0, 0, 3))
        return cls.from_points(pts, k=k, meta=meta)

    @classmethod
    def from_points(cls, points: np.ndarray, k: int | None = DEFAULT_NEIGHBORS,
                    meta: dict | None = None) -> "Hairstyle":
        """Build a hairstyle and its k-nearest-root adjacency (k clipped to n_s - 1)."""
        pts = np.asarray(points, dtype=np.float64)
        nbrs = None
        if k is not None and pts.shape[0] >= 2:
            nbrs = build_neighbors(pts[:, 0], min(k, pts.shape[0] - 1))
        return cls(pts, nbrs, dict(meta or {}))

    @property
    def n_strands(self) -> int:
        return self.points.shape[0]

    @property
    def n_points(self) -> int:
        return self.points.shape[1]

    @property
    def roots(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def strands(self) -> tuple[Strand, ...]:
        return tuple(Strand(p) for p in self.points)

    def with_points(self, points: np.ndarray) -> "Hairstyle":
        """Same adjacency and metadata, new positions (shape must match)."""
        points = np.asarray(points, dtype=np.float64)
        if points.shape != self.points.shape:
            raise ValueError(f"shape {points.shape} does not match {self.points.shape}")
        return Hairstyle(points, self.neighbors, dict(self.meta))

    def neighbor_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Flattened adjacency as (i, k, 1/|A(i)|) arrays in index order."""
        if self.neighbors is None:
            raise ValueError("hairstyle has no neighbor graph")
        src, dst, w = [], [], []
        for i, row in enumerate(self.neighbors):
            if not row:
                raise ValueError(f"strand {i} has an empty neighbor list")
            src.extend([i] * len(row))
            dst.extend(row)
            w.extend([1.0 / len(row)] * len(row))
        return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp), np.array(w)


# -- array kernels shared with the loss module ---------------------------------

def segment_orientations(points: np.ndarray, check: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Unit segment directions and segment lengths for ``(..., n_p, 3)`` points."""
    d = np.diff(points, axis=-2)
    length = np.linalg.norm(d, axis=-1)
    if check and length.size and length.min() <= SEGMENT_EPS:
        flat = np.argmin(length.reshape(-1, length.shape[-1]).min(axis=1))
        seg = int(np.argmin(length.reshape(-1, length.shape[-1])[flat]))
        raise DegenerateSegmentError(int(flat), seg, float(length.reshape(-1, length.shape[-1])[flat, seg]))
    return d / np.maximum(length, SEGMENT_EPS)[..., None], length


def orientation_vjp(o: np.ndarray, length: np.ndarray, g_o: np.ndarray) -> np.ndarray:
    """Pull an orientation cotangent back to point positions."""
    g_d = (g_o - o * np.sum(o * g_o, axis=-1, keepdims=True)) / np.maximum(length, SEGMENT_EPS)[..., None]
    g_p = np.zeros(o.shape[:-2] + (o.shape[-2] + 1, 3))
    g_p[..., 1:, :] += g_d
    g_p[..., :-1, :] -= g_d
    return g_p


def padded_curvatures(o: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded curvature samples and the orientation differences behind them."""
    u = o[..., 1:, :] - o[..., :-1, :]
    c = np.zeros(o.shape[:-2] + (o.shape[-2] + 1,))
    c[..., 1:-1] = np.linalg.norm(u, axis=-1)
    return c, u


def curvature_vjp(c: np.ndarray, u: np.ndarray, g_c: np.ndarray) -> np.ndarray:
    """Pull a padded-curvature cotangent back to orientations.

    The norm is not differentiable at zero; the subgradient 0 is used there.
    """
    ci = c[..., 1:-1]
    scale = np.where(ci > 0, g_c[..., 1:-1] / np.where(ci > 0, ci, 1.0), 0.0)
    g_u = u * scale[..., None]
    g_o = np.zeros(u.shape[:-2] + (u.shape[-2] + 1, 3))
    g_o[..., 1:, :] += g_u
    g_o[..., :-1, :] -= g_u
    return g_o


# -- public operations ---------------------------------------------------------

def orientations(strand: Strand | np.ndarray) -> np.ndarray:
    """Unit direction of every segment, shape ``(n_p - 1, 3)``."""
    pts = strand.points if isinstance(strand, Strand) else np.asarray(strand, dtype=np.float64)
    return segment_orientations(pts)[0]


def curvatures(strand: Strand | np.ndarray) -> np.ndarray:
    """Per-point curvature ``|o_j - o_{j-1}|``, zero at the first and last point."""
    return padded_curvatures(orientations(strand))[0]


def build_neighbors(roots: np.ndarray, k: int = DEFAULT_NEIGHBORS) -> tuple[tuple[int, ...], ...]:
    """Indices of the ``k`` nearest other roots; ties go to the lower index."""
    roots = np.asarray(roots, dtype=np.float64)
    n = roots.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k + 1:
        raise ValueError(f"need at least {k + 1} roots for k={k}, got {n}")
    out = []
    idx = np.arange(n)
    for start in range(0, n, 512):
        block = roots[start:start + 512]
        d2 = np.sum((block[:, None, :] - roots[None, :, :]) ** 2, axis=-1)
        d2[np.arange(block.shape[0]), idx[start:start + 512]] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        out.extend(tuple(int(j) for j in row) for row in order)
    return tuple(out)


def resample_strand(strand: Strand | np.ndarray, n_points: int) -> Strand:
    """Resample at equal arc-length spacing, keeping both endpoints exactly."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    pts = strand.points if isinstance(strand, Strand) else np.asarray(strand, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= SEGMENT_EPS:
        raise ValueError("cannot resample a strand of zero length")
    # drop zero-length segments so np.interp sees strictly increasing abscissae
    keep = np.concatenate([[True], seg > 0])
    s, pts_k = s[keep], pts[keep]
    t = np.linspace(0.0, total, n_points)
    out = np.stack([np.interp(t, s, pts_k[:, d]) for d in range(3)], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return Strand(out)


_STYLES = {
    # lateral amplitude, cycles per unit length, helical (True) or planar wave
    "straight": (0.0, 0.0, False),
    "wavy": (0.05, 1.6, False),
    "curly": (0.05, 2.1, True),
}
_SWEEP = 0.6      # polar angle swept while hugging the head
_DRIFT = 0.12     # outward drift over the sweep
_TAPER = 0.6      # length over which waves fade in from the root


def _base_paths(theta0, phi, length, n_dense=256):
    """Dense hanging path per strand: a meridian sweep then a straight run along its last tangent."""
    u = np.linspace(0.0, 1.0, n_dense)
    theta = theta0[:, None] + _SWEEP * u[None, :]
    radius = 1.0 + _DRIFT * u[None, :]
    cphi, sphi = np.cos(phi)[:, None], np.sin(phi)[:, None]
    sweep = radius[..., None] * np.stack(
        [np.sin(theta) * cphi, np.sin(theta) * sphi, np.cos(theta) * np.ones_like(cphi)], axis=-1)
    seg = np.linalg.norm(np.diff(sweep, axis=1), axis=-1)
    sweep_len = seg.sum(axis=1)
    tangent = sweep[:, -1] - sweep[:, -2]
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    run = np.maximum(length - sweep_len, 0.0)
    tail = sweep[:, -1:, :] + (run[:, None] * u[None, 1:])[..., None] * tangent[:, None, :]
    return np.concatenate([sweep, tail], axis=1)


def synth_hairstyle(kind: str, n_strands: int, n_points: int, seed: int = 0,
                    k: int = DEFAULT_NEIGHBORS, length: float = 3.0) -> Hairstyle:
    """Procedural hairstyle rooted on a spherical cap of the unit sphere.

    Each strand hugs the head along a meridian, then hangs straight; wavy
    strands add a planar sine and curly strands a helix about that path.
    Points are spaced evenly in arc length along the base path, and mean
    curvature increases straight < wavy < curly.
    """
    if kind not in _STYLES:
        raise ValueError(f"unknown style {kind!r}; expected one of {sorted(_STYLES)}")
    if n_strands < 1 or n_points < 3:
        raise ValueError("need n_strands >= 1 and n_points >= 3")
    amp, cycles, helical = _STYLES[kind]
    rng = np.random.default_rng(seed)
    cap = math.radians(SCALP_CAP_DEGREES)
    theta0 = np.arccos(rng.uniform(math.cos(cap), 1.0, n_strands))
    phi = rng.uniform(0.0, 2.0 * math.pi, n_strands)
    phase = rng.uniform(0.0, 2.0 * math.pi, n_strands)
    amp_i = amp * rng.uniform(0.9, 1.1, n_strands)

    dense = _base_paths(theta0, phi, length)
    pts = np.stack([resample_strand(d, n_points).points for d in dense])
    if amp > 0:
        s = np.concatenate([np.zeros((n_strands, 1)),
                            np.cumsum(np.linalg.norm(np.diff(pts, axis=1), axis=-1), axis=1)], axis=1)
        tangent = np.gradient(pts, axis=1)
        tangent /= np.linalg.norm(tangent, axis=-1, keepdims=True)
        side = np.stack([-np.sin(phi), np.cos(phi), np.zeros(n_strands)], axis=-1)[:, None, :]
        normal = np.cross(side, tangent)
        envelope = np.sin(0.5 * math.pi * np.minimum(1.0, s / _TAPER)) ** 2
        arg = 2.0 * math.pi * cycles * s + phase[:, None]
        wave = amp_i[:, None] * envelope
        offset = (wave * np.sin(arg))[..., None] * side
        if helical:
            offset = offset + (wave * (np.cos(arg) - np.cos(phase)[:, None]))[..., None] * normal
        pts = pts + offset
    return Hairstyle.from_points(pts, k=k, meta={"kind": kind, "seed": seed})


@dataclass(frozen=True)
class StrandFrameField:
    """Per-strand segment orientations ``(n_s, n_p-1, 3)`` and padded curvatures ``(n_s, n_p)``."""

    orientations: np.ndarray
    curvatures: np.ndarray


def frame_field(hair: Hairstyle) -> StrandFrameField:
    o, _ = segment_orientations(hair.points)
    c, _ = padded_curvatures(o)
    return StrandFrameField(_frozen(o), _frozen(c))

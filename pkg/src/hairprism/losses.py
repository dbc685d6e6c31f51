"""Differentiable objectives over strand points and template meshes.

Every loss returns a :class:`LossValue` whose ``grad`` has the shape of the
optimized variable (``(n_s, n_p, 3)`` for hairstyles, ``(n_v, 3)`` for mesh
vertices). Kinks of ``|x|`` and ``max(0, x)`` take the subgradient 0.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.spatial import cKDTree

from .mesh import DeformableMesh, TriMesh
from .sdf import SdfSource
from .strands import (Hairstyle, curvature_vjp, orientation_vjp, padded_curvatures,
                      segment_orientations)

C_TARGETS = {"straight": 2e-2, "normal": 5e-2, "wavy": 1e-1, "curly": 2e-1}


@dataclass(frozen=True)
class LossConfig:
    lambda_ori_fit: float = 5e-2
    lambda_cur_fit: float = 1.0
    lambda_ori: float = 1e4
    lambda_cur: float = 1e4
    lambda_bbox: float = 1e3
    lambda_face: float = 1e3
    lambda_colli: float = 1e3
    c_target: float = C_TARGETS["normal"]
    lambda_chamf: float = 1e2
    lambda_edge: float = 1.0
    lambda_nor: float = 1e-2
    lambda_lap: float = 1e-1
    lambda_prior: float = 1e3

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a finite non-negative number, got {v}")
        if self.c_target > 2:
            raise ValueError(f"c_target must lie in [0, 2], got {self.c_target}")

    def replace(self, **kw) -> "LossConfig":
        return LossConfig(**{**asdict(self), **kw})


@dataclass
class LossValue:
    value: float
    grad: np.ndarray
    terms: dict[str, float] = field(default_factory=dict)

    def __add__(self, other: "LossValue") -> "LossValue":
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return LossValue(self.value + other.value, self.grad + other.grad, terms)

    def scaled(self, weight: float, name: str | None = None) -> "LossValue":
        terms = {name: weight * self.value} if name else {k: weight * v for k, v in self.terms.items()}
        return LossValue(weight * self.value, weight * self.grad, terms)


@dataclass(frozen=True)
class GeometrySources:
    bbox: SdfSource | None = None
    face: SdfSource | None = None
    head: SdfSource | None = None


# -- strand statistics ---------------------------------------------------------

def _cs_ori_and_grad(hair: Hairstyle) -> tuple[float, np.ndarray]:
    src, dst, w = hair.neighbor_pairs()
    o, length = segment_orientations(hair.points)
    norm = 1.0 / (hair.n_strands * o.shape[1])
    dots = np.einsum("pjd,pjd->p", o[src], o[dst])
    value = norm * float(np.sum(w * dots))
    g_o = np.zeros_like(o)
    np.add.at(g_o, src, (norm * w)[:, None, None] * o[dst])
    np.add.at(g_o, dst, (norm * w)[:, None, None] * o[src])
    return value, orientation_vjp(o, length, g_o)


def cs_ori(hair: Hairstyle) -> float:
    """Mean cosine similarity between each strand's orientations and its neighbors'."""
    return _cs_ori_and_grad(hair)[0]


def _curvature_state(points):
    o, length = segment_orientations(points)
    c, u = padded_curvatures(o)
    return o, length, c, u


def c_mean(hair: Hairstyle) -> float:
    """Mean padded curvature over all ``n_s * n_p`` strand points."""
    if hair.n_strands == 0:
        return 0.0
    return float(_curvature_state(hair.points)[2].mean())


def c_mean_interior(hair: Hairstyle) -> float:
    """Mean over the ``n_p - 2`` interior curvature samples only."""
    if hair.n_strands == 0 or hair.n_points < 3:
        return 0.0
    return float(_curvature_state(hair.points)[2][:, 1:-1].mean())


def _c_mean_grad(points, state):
    o, length, c, u = state
    g_c = np.full(c.shape, 1.0 / c.size)
    return orientation_vjp(o, length, curvature_vjp(c, u, g_c))


def loss_ori(hair: Hairstyle) -> LossValue:
    value, grad = _cs_ori_and_grad(hair)
    return LossValue(1.0 - value, -grad, {"ori": 1.0 - value})


def loss_cur(hair: Hairstyle, c_target: float) -> LossValue:
    state = _curvature_state(hair.points)
    diff = float(state[2].mean()) - c_target
    grad = np.sign(diff) * _c_mean_grad(hair.points, state)
    return LossValue(abs(diff), grad, {"cur": abs(diff)})


def loss_fit(hair: Hairstyle, target: Hairstyle, lambda_ori_fit: float = 5e-2,
             lambda_cur_fit: float = 1.0) -> LossValue:
    """Strand fitting loss: point distance plus orientation and curvature agreement.

    Orientation terms run over the ``n_p - 1`` segments and curvature terms
    over the ``n_p - 2`` interior points of each strand.
    """
    if hair.points.shape != target.points.shape:
        raise ValueError(f"shape mismatch: {hair.points.shape} vs target {target.points.shape}")
    diff = hair.points - target.points
    dist = np.linalg.norm(diff, axis=-1)
    pos = float(np.sum(dist))
    g_pos = np.where(dist[..., None] > 0, diff / np.where(dist > 0, dist, 1.0)[..., None], 0.0)

    o, length, c, u = _curvature_state(hair.points)
    o_t, _, c_t, _ = _curvature_state(target.points)
    # 1 - o.o_t written as |o - o_t|^2 / 2 (equal for unit vectors) so coincident strands give exactly 0
    d_o = o - o_t
    ori = float(0.5 * np.sum(d_o * d_o))
    cur = float(np.sum(np.abs(c - c_t)))
    g_o = lambda_ori_fit * d_o + curvature_vjp(c, u, lambda_cur_fit * np.sign(c - c_t))
    grad = g_pos + orientation_vjp(o, length, g_o)
    terms = {"position": pos, "orientation": lambda_ori_fit * ori, "curvature": lambda_cur_fit * cur}
    return LossValue(pos + lambda_ori_fit * ori + lambda_cur_fit * cur, grad, terms)


# -- SDF penalties -------------------------------------------------------------

def _hinge(hair: Hairstyle, source: SdfSource, sign: float, name: str) -> LossValue:
    s, g = source.value_and_grad(hair.points)
    s = sign * s
    active = s > 0
    value = float(np.sum(np.where(active, s, 0.0)))
    grad = np.where(active[..., None], sign * g, 0.0)
    return LossValue(value, grad, {name: value})


def loss_bbox(hair: Hairstyle, bbox: SdfSource) -> LossValue:
    """Sum of distances by which points leave the bounding region."""
    return _hinge(hair, bbox, 1.0, "bbox")


def loss_face(hair: Hairstyle, face_region: SdfSource) -> LossValue:
    """Sum of penetration depths into the protected frontal region."""
    return _hinge(hair, face_region, -1.0, "face")


def loss_colli(hair: Hairstyle, head: SdfSource) -> LossValue:
    """Sum of penetration depths into the head."""
    return _hinge(hair, head, -1.0, "colli")


def loss_hair_geo(hair: Hairstyle, cfg: LossConfig, sources: GeometrySources | dict | None = None) -> LossValue:
    """Weighted geometry objective over orientation, curvature and SDF terms.

    Terms whose weight is zero or whose SDF source is missing are skipped.
    ``terms`` holds the weighted contributions, which sum to ``value``.
    """
    if isinstance(sources, dict):
        sources = GeometrySources(**sources)
    sources = sources or GeometrySources()
    total = LossValue(0.0, np.zeros_like(hair.points), {})
    parts = [
        ("ori", cfg.lambda_ori, lambda: loss_ori(hair)),
        ("cur", cfg.lambda_cur, lambda: loss_cur(hair, cfg.c_target)),
        ("bbox", cfg.lambda_bbox if sources.bbox is not None else 0.0, lambda: loss_bbox(hair, sources.bbox)),
        ("face", cfg.lambda_face if sources.face is not None else 0.0, lambda: loss_face(hair, sources.face)),
        ("colli", cfg.lambda_colli if sources.head is not None else 0.0, lambda: loss_colli(hair, sources.head)),
    ]
    for name, weight, fn in parts:
        if weight > 0:
            total = total + fn().scaled(weight, name)
    return total


# -- template mesh losses ------------------------------------------------------

@dataclass(frozen=True)
class SurfaceSamples:
    """Fixed barycentric sample sites: face index and barycentric weights."""

    face: np.ndarray
    bary: np.ndarray

    def points(self, vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
        return np.einsum("nk,nkd->nd", self.bary, vertices[triangles[self.face]])

    def pullback(self, g_points: np.ndarray, triangles: np.ndarray, n_vertices: int) -> np.ndarray:
        g = np.zeros((n_vertices, 3))
        tri = triangles[self.face]
        for k in range(3):
            np.add.at(g, tri[:, k], self.bary[:, k, None] * g_points)
        return g


def sample_surface(mesh: TriMesh, n: int = 2048, seed: int = 0) -> SurfaceSamples:
    """Area-weighted uniform samples on a triangle mesh."""
    if mesh.n_triangles == 0:
        raise ValueError("cannot sample an empty mesh")
    rng = np.random.default_rng(seed)
    area = mesh.face_areas()
    face = rng.choice(mesh.n_triangles, size=n, p=area / area.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    bary = np.stack([1.0 - s, s * (1.0 - r2), s * r2], axis=1)
    return SurfaceSamples(face, bary)


@dataclass(frozen=True)
class _Topology:
    edges: np.ndarray
    face_pairs: np.ndarray
    laplacian: csr_matrix


@lru_cache(maxsize=16)
def _topology_cached(tri_bytes: bytes, n_faces: int, n_vertices: int) -> _Topology:
    tri = np.frombuffer(tri_bytes, dtype=np.int64).reshape(n_faces, 3)
    e = np.sort(tri[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    edges, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    face_of = np.repeat(np.arange(n_faces), 3)
    order = np.argsort(inverse, kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    shared = counts == 2
    face_pairs = np.stack([face_of[order[starts[shared]]], face_of[order[starts[shared] + 1]]], axis=1)

    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_vertices, n_vertices)).tocsr()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv_deg = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
    lap = (coo_matrix((np.ones(n_vertices), (np.arange(n_vertices), np.arange(n_vertices))),
                      shape=(n_vertices, n_vertices)).tocsr()
           - coo_matrix(adj.multiply(inv_deg[:, None])).tocsr())
    return _Topology(edges, face_pairs, lap.tocsr())


def _topology(triangles: np.ndarray, n_vertices: int) -> _Topology:
    tri = np.ascontiguousarray(triangles, dtype=np.int64)
    return _topology_cached(tri.tobytes(), tri.shape[0], n_vertices)


def chamfer(x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Symmetric squared-distance Chamfer between point sets and its gradient w.r.t. ``x``."""
    _, ixy = cKDTree(y).query(x)
    _, iyx = cKDTree(x).query(y)
    dxy = x - y[ixy]
    dyx = y - x[iyx]
    value = float(np.mean(np.sum(dxy ** 2, axis=1)) + np.mean(np.sum(dyx ** 2, axis=1)))
    g = 2.0 * dxy / len(x)
    np.add.at(g, iyx, -2.0 * dyx / len(y))
    return value, g


def edge_length_term(vertices, rest_vertices, edges) -> tuple[float, np.ndarray]:
    d = vertices[edges[:, 0]] - vertices[edges[:, 1]]
    length = np.linalg.norm(d, axis=1)
    rest = np.linalg.norm(rest_vertices[edges[:, 0]] - rest_vertices[edges[:, 1]], axis=1)
    dev = length - rest
    value = float(np.mean(dev ** 2))
    coef = np.where(length > 0, 2.0 * dev / (len(edges) * np.where(length > 0, length, 1.0)), 0.0)
    g_d = coef[:, None] * d
    g = np.zeros_like(vertices)
    np.add.at(g, edges[:, 0], g_d)
    np.add.at(g, edges[:, 1], -g_d)
    return value, g


def normal_consistency_term(vertices, triangles, face_pairs) -> tuple[float, np.ndarray]:
    g = np.zeros_like(vertices)
    if len(face_pairs) == 0:
        return 0.0, g
    c = vertices[triangles]
    e1, e2 = c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]
    m = np.cross(e1, e2)
    norm = np.maximum(np.linalg.norm(m, axis=1), 1e-12)
    n = m / norm[:, None]
    a, b = face_pairs[:, 0], face_pairs[:, 1]
    value = float(np.mean(1.0 - np.sum(n[a] * n[b], axis=1)))
    g_n = np.zeros_like(n)
    np.add.at(g_n, a, -n[b] / len(face_pairs))
    np.add.at(g_n, b, -n[a] / len(face_pairs))
    g_m = (g_n - n * np.sum(n * g_n, axis=1, keepdims=True)) / norm[:, None]
    g_e1 = np.cross(e2, g_m)
    g_e2 = np.cross(g_m, e1)
    np.add.at(g, triangles[:, 1], g_e1)
    np.add.at(g, triangles[:, 2], g_e2)
    np.add.at(g, triangles[:, 0], -(g_e1 + g_e2))
    return value, g


def laplacian_term(vertices, laplacian: csr_matrix) -> tuple[float, np.ndarray]:
    lv = laplacian @ vertices
    value = float(np.mean(np.sum(lv ** 2, axis=1)))
    return value, 2.0 * (laplacian.T @ lv) / vertices.shape[0]


def loss_meshfit(mesh_a: DeformableMesh, mesh_b: TriMesh | None, weights: LossConfig | None = None,
                 samples_a: SurfaceSamples | None = None, samples_b: SurfaceSamples | None = None,
                 n_samples: int = 2048, seed: int = 0) -> LossValue:
    """Template fitting objective; gradient w.r.t. ``mesh_a`` vertices.

    Chamfer compares fixed barycentric samples of both surfaces (drawn from
    ``mesh_a``'s rest shape and from ``mesh_b`` with the same seed unless
    given). The edge term penalizes squared deviation of edge lengths from the
    rest shape, the normal term ``1 - cos`` between faces sharing an edge, and
    the Laplacian term the mean squared uniform-Laplacian vector.
    ``mesh_b`` may be None when the Chamfer weight is zero.
    """
    w = weights or LossConfig()
    if mesh_a.triangles.shape[0] == 0:
        raise ValueError("meshfit needs a non-empty deformable mesh")
    if w.lambda_chamf > 0 and (mesh_b is None or mesh_b.n_triangles == 0):
        raise ValueError("meshfit needs a non-empty target mesh when lambda_chamf > 0")
    verts = mesh_a.vertices
    tris = mesh_a.triangles
    topo = _topology(tris, verts.shape[0])
    grad = np.zeros_like(verts)
    terms = {}
    if w.lambda_chamf > 0:
        sa = samples_a or sample_surface(TriMesh(mesh_a.rest_vertices, tris), n_samples, seed)
        sb = samples_b or sample_surface(mesh_b, n_samples, seed)
        x = sa.points(verts, tris)
        y = sb.points(mesh_b.vertices, mesh_b.triangles)
        v, gx = chamfer(x, y)
        terms["chamfer"] = w.lambda_chamf * v
        grad += w.lambda_chamf * sa.pullback(gx, tris, verts.shape[0])
    if w.lambda_edge > 0:
        v, g = edge_length_term(verts, mesh_a.rest_vertices, topo.edges)
        terms["edge"] = w.lambda_edge * v
        grad += w.lambda_edge * g
    if w.lambda_nor > 0:
        v, g = normal_consistency_term(verts, tris, topo.face_pairs)
        terms["normal"] = w.lambda_nor * v
        grad += w.lambda_nor * g
    if w.lambda_lap > 0:
        v, g = laplacian_term(verts, topo.laplacian)
        terms["laplacian"] = w.lambda_lap * v
        grad += w.lambda_lap * g
    return LossValue(float(sum(terms.values())), grad, terms)


def loss_sdf_prior(shape_a: SdfSource | None, shape_b: SdfSource, sample_points=None,
                   n_samples: int = 4096, seed: int = 0) -> LossValue:
    """Sum of squared SDF differences at sample points; gradient w.r.t. the points.

    Without ``sample_points``, samples are drawn uniformly in the union of both
    sources' bounds. ``shape_a=None`` means the samples lie on ``shape_a``'s
    surface, where its SDF is zero, so only ``shape_b`` is evaluated.
    """
    if sample_points is None:
        boxes = [s.bounds() for s in (shape_a, shape_b) if s is not None]
        if not boxes or any(b is None for b in boxes):
            raise ValueError("sample points required for unbounded SDF sources")
        lo = np.min([b[0] for b in boxes], axis=0)
        hi = np.max([b[1] for b in boxes], axis=0)
        sample_points = np.random.default_rng(seed).uniform(lo, hi, size=(n_samples, 3))
    p = np.asarray(sample_points, dtype=np.float64).reshape(-1, 3)
    sb, gb = shape_b.value_and_grad(p)
    if shape_a is None:
        sa, ga = np.zeros_like(sb), np.zeros_like(gb)
    else:
        sa, ga = shape_a.value_and_grad(p)
    r = sa - sb
    value = float(np.sum(r ** 2))
    return LossValue(value, 2.0 * r[:, None] * (ga - gb), {"prior": value})

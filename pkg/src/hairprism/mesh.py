"""Triangle mesh containers, validation and a few mesh primitives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError("triangle references a vertex out of range")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", f)

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def corners(self) -> np.ndarray:
        """Triangle corner positions, shape ``(F, 3, 3)``."""
        return self.vertices[self.triangles]

    def face_areas(self) -> np.ndarray:
        c = self.corners()
        return 0.5 * np.linalg.norm(np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0]), axis=1)

    def signed_volume(self) -> float:
        c = self.corners()
        return float(np.sum(np.einsum("ij,ij->i", c[:, 0], np.cross(c[:, 1], c[:, 2]))) / 6.0)

    def edges(self) -> np.ndarray:
        """Unique undirected edges as sorted vertex pairs."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)


@dataclass(frozen=True)
class DeformableMesh:
    """Frozen rest shape plus learnable per-vertex offsets."""

    rest_vertices: np.ndarray
    triangles: np.ndarray
    offsets: np.ndarray = None

    def __post_init__(self):
        rest = np.asarray(self.rest_vertices, dtype=np.float64).reshape(-1, 3)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        off = np.zeros_like(rest) if self.offsets is None else np.asarray(self.offsets, dtype=np.float64)
        if off.shape != rest.shape:
            raise ValueError(f"offsets shape {off.shape} does not match vertices {rest.shape}")
        if tris.size and (tris.min() < 0 or tris.max() >= len(rest)):
            raise ValueError("triangle references a vertex out of range")
        object.__setattr__(self, "rest_vertices", rest)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def from_mesh(cls, mesh: TriMesh) -> "DeformableMesh":
        return cls(mesh.vertices, mesh.triangles)

    @property
    def vertices(self) -> np.ndarray:
        return self.rest_vertices + self.offsets

    def with_offsets(self, offsets: np.ndarray) -> "DeformableMesh":
        return DeformableMesh(self.rest_vertices, self.triangles, offsets)

    def to_mesh(self) -> TriMesh:
        return TriMesh(self.vertices, self.triangles)


@dataclass
class ComponentReport:
    vertices: int
    triangles: int
    edges: int
    boundary_edges: int
    nonmanifold_edges: int
    inconsistent_edges: int
    euler: int
    signed_volume: float

    @property
    def consistent_winding(self) -> bool:
        return self.inconsistent_edges == 0

    @property
    def watertight(self) -> bool:
        return (self.boundary_edges == 0 and self.nonmanifold_edges == 0
                and self.consistent_winding and self.signed_volume > 0)


@dataclass
class ValidationReport:
    components: list[ComponentReport] = field(default_factory=list)
    degenerate_triangles: int = 0

    @property
    def boundary_edges(self) -> int:
        return sum(c.boundary_edges for c in self.components)

    @property
    def nonmanifold_edges(self) -> int:
        return sum(c.nonmanifold_edges for c in self.components)

    @property
    def watertight(self) -> bool:
        return self.degenerate_triangles == 0 and all(c.watertight for c in self.components)

    def to_dict(self) -> dict:
        return {
            "watertight": self.watertight,
            "components": len(self.components),
            "boundary_edges": self.boundary_edges,
            "nonmanifold_edges": self.nonmanifold_edges,
            "inconsistent_edges": sum(c.inconsistent_edges for c in self.components),
            "degenerate_triangles": self.degenerate_triangles,
            "euler": [c.euler for c in self.components],
            "signed_volume": [c.signed_volume for c in self.components],
        }


def validate_mesh(mesh: TriMesh) -> ValidationReport:
    """Per-component manifoldness, winding and volume checks.

    A component is watertight when every edge is shared by exactly two
    triangles that traverse it in opposite directions and its signed volume
    is positive (outward winding).
    """
    f = mesh.triangles
    report = ValidationReport()
    if f.shape[0] == 0:
        return report
    degenerate = (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])
    report.degenerate_triangles = int(degenerate.sum())

    directed = f[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    face_of = np.repeat(np.arange(f.shape[0]), 3)
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(undirected, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    forward = (directed[:, 0] < directed[:, 1]).astype(np.int64)
    n_forward = np.bincount(inverse, weights=forward, minlength=len(keys))

    # face adjacency through shared edges, plus vertex sharing for pinched components
    n_faces = f.shape[0]
    rows = np.concatenate([face_of, np.arange(n_faces)])
    cols = np.concatenate([n_faces + f.reshape(-1), np.arange(n_faces)])
    size = n_faces + mesh.n_vertices
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(size, size))
    _, labels = connected_components(graph, directed=False)
    face_label = labels[:n_faces]
    edge_label = np.zeros(len(keys), dtype=np.int64)
    edge_label[inverse] = face_label[face_of]

    corners = mesh.corners()
    vol = np.einsum("ij,ij->i", corners[:, 0], np.cross(corners[:, 1], corners[:, 2])) / 6.0
    for lab in np.unique(face_label):
        fm = face_label == lab
        em = edge_label == lab
        c = counts[em]
        nf = n_forward[em]
        n_verts = len(np.unique(f[fm]))
        report.components.append(ComponentReport(
            vertices=n_verts,
            triangles=int(fm.sum()),
            edges=int(em.sum()),
            boundary_edges=int(np.sum(c == 1)),
            nonmanifold_edges=int(np.sum(c > 2)),
            inconsistent_edges=int(np.sum((c == 2) & (nf != 1))),
            euler=int(n_verts - em.sum() + fm.sum()),
            signed_volume=float(np.sum(vol[fm])),
        ))
    return report


def icosphere(subdivisions: int = 2, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriMesh:
    """Subdivided icosahedron with outward winding."""
    t = (1.0 + 5 ** 0.5) / 2.0
    v = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
         (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    f = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
         (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
         (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return TriMesh(np.array(verts) * radius + np.asarray(center, dtype=np.float64), np.array(faces))

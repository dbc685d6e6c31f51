"""Central finite-difference checks of every analytic gradient in the package.

Each check builds a random instance, then compares the analytic gradient of a
scalar function with a full central-difference gradient. The relative error
is ``|a - n| / max(|a|, |n|, floor)`` over the flattened vectors.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Collection

import numpy as np
from scipy.spatial import cKDTree

from .losses import (LossConfig, laplacian_term, edge_length_term, loss_bbox, loss_colli, loss_cur,
                     loss_face, loss_fit, loss_meshfit, loss_ori, loss_sdf_prior, sample_surface,
                     c_mean, _topology, normal_consistency_term)
from .mesh import DeformableMesh, icosphere
from .prism import PrismParams, backprop_vertices, prism_vertices, prismatize_hairstyle
from .sdf import BoxSdf, HalfSpaceSdf, MeshSdf
from .strands import Hairstyle

STEP = 1e-5
TOLERANCE = 1e-4
ERROR_FLOOR = 1e-8
MAX_STRANDS = 10
MAX_POINTS = 20
MESH_SAMPLES = 256
PRIOR_POINTS = 48
KINK_MARGIN = 1e-3  # hinge instances keep every point this far from the SDF zero set
NN_MARGIN = 1e-4    # Chamfer instances keep nearest-neighbor distance ties at least this far apart


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ERROR_FLOOR) -> float:
    a, n = np.ravel(analytic), np.ravel(numeric)
    scale = max(np.linalg.norm(a), np.linalg.norm(n), floor)
    return float(np.linalg.norm(a - n) / scale)


def numeric_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64, copy=True)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


@dataclass(frozen=True)
class CheckResult:
    name: str
    instance: int
    size: int
    rel_error: float
    passed: bool


@dataclass
class GradcheckReport:
    tolerance: float
    results: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return bool(self.results) and all(r.passed for r in self.results)

    def summary(self) -> dict[str, dict]:
        out: dict[str, dict] = {}
        for r in self.results:
            row = out.setdefault(r.name, {"instances": 0, "max_rel_error": 0.0, "failures": 0})
            row["instances"] += 1
            row["max_rel_error"] = max(row["max_rel_error"], r.rel_error)
            row["failures"] += int(not r.passed)
        return out


# -- random instances ---------------------------------------------------------------

def random_hair_points(rng: np.random.Generator, n_s: int, n_p: int, root_radius: float = 1.0) -> np.ndarray:
    """Smoothly bending strands growing outward from roots near a sphere of ``root_radius``."""
    d = rng.normal(size=(n_s, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    pts = np.empty((n_s, n_p, 3))
    pts[:, 0] = root_radius * d
    heading = d + 0.5 * rng.normal(size=(n_s, 3))
    for j in range(1, n_p):
        heading = heading / np.linalg.norm(heading, axis=1, keepdims=True) + 0.3 * rng.normal(size=(n_s, 3))
        step = heading / np.linalg.norm(heading, axis=1, keepdims=True)
        pts[:, j] = pts[:, j - 1] + rng.uniform(0.05, 0.12, size=(n_s, 1)) * step
    return pts


def _sizes(rng, min_strands=1):
    return int(rng.integers(min_strands, MAX_STRANDS + 1)), int(rng.integers(3, MAX_POINTS + 1))


# Each builder returns (f, analytic_grad, x0).

def _hair_check(loss_fn, min_strands=1, root_radius=1.0):
    def build(rng):
        while True:
            n_s, n_p = _sizes(rng, min_strands)
            base = Hairstyle.from_points(random_hair_points(rng, n_s, n_p, root_radius))
            fn = loss_fn(rng, base)
            sdf = getattr(fn, "sdf", None)
            if sdf is None or np.min(np.abs(sdf(base.points))) > KINK_MARGIN:
                break
        return (lambda x: fn(base.with_points(x)).value,
                lambda x: fn(base.with_points(x)).grad, base.points.copy())
    return build


def _fit(rng, base):
    target = Hairstyle.from_points(base.points + 0.05 * rng.normal(size=base.points.shape))
    return lambda h: loss_fit(h, target, 5e-2, 1.0)


def _ori(rng, base):
    return loss_ori


def _cur(rng, base):
    target = max(c_mean(base) + rng.choice([-1.0, 1.0]) * 0.02, 0.0)
    return lambda h: loss_cur(h, target)


def _with_sdf(fn, sdf):
    fn.sdf = sdf
    return fn


def _bbox(rng, base):
    center = base.points.reshape(-1, 3).mean(axis=0)
    box = BoxSdf(center, rng.uniform(0.3, 0.8, size=3))
    return _with_sdf(lambda h: loss_bbox(h, box), box)


def _face(rng, base):
    n = rng.normal(size=3)
    plane = HalfSpaceSdf(base.points.reshape(-1, 3).mean(axis=0), n / np.linalg.norm(n))
    return _with_sdf(lambda h: loss_face(h, plane), plane)


_HEAD = None


def _head() -> MeshSdf:
    global _HEAD
    if _HEAD is None:
        _HEAD = MeshSdf(icosphere(2))
    return _HEAD


def _colli(rng, base):
    head = _head()
    return _with_sdf(lambda h: loss_colli(h, head), head)


def _nn_gap(x, y) -> float:
    """Smallest margin between first and second nearest neighbor distances."""
    d, _ = cKDTree(y).query(x, k=2)
    return float(np.min(d[:, 1] - d[:, 0]))


def _mesh_check(term: str):
    def build(rng):
        ico = icosphere(1)
        tmpl = DeformableMesh(ico.vertices, ico.triangles, 0.05 * rng.normal(size=ico.vertices.shape))
        tris = ico.triangles
        topo = _topology(tris, ico.n_vertices)
        if term == "chamfer":
            cfg = LossConfig(lambda_chamf=1.0, lambda_edge=0.0, lambda_nor=0.0, lambda_lap=0.0)
            while True:
                target = icosphere(1, rng.uniform(0.8, 1.2), rng.normal(scale=0.1, size=3))
                sa = sample_surface(ico, MESH_SAMPLES, int(rng.integers(1 << 31)))
                sb = sample_surface(target, MESH_SAMPLES, int(rng.integers(1 << 31)))
                x = sa.points(tmpl.vertices, tris)
                y = sb.points(target.vertices, target.triangles)
                if min(_nn_gap(x, y), _nn_gap(y, x)) > NN_MARGIN:
                    break

            def evaluate(v):
                lv = loss_meshfit(DeformableMesh(v, tris), target, cfg, sa, sb)
                return lv.value, lv.grad
        elif term == "edge":
            rest = ico.vertices

            def evaluate(v):
                return edge_length_term(v, rest, topo.edges)
        elif term == "normal":
            def evaluate(v):
                return normal_consistency_term(v, tris, topo.face_pairs)
        else:
            def evaluate(v):
                return laplacian_term(v, topo.laplacian)
        return (lambda v: evaluate(v)[0], lambda v: evaluate(v)[1], tmpl.vertices.copy())
    return build


def _prior(rng):
    box = BoxSdf(rng.normal(scale=0.1, size=3), rng.uniform(0.6, 1.0, size=3))
    head = _head()
    pts = rng.uniform(-1.3, 1.3, size=(PRIOR_POINTS, 3))

    def evaluate(p):
        return loss_sdf_prior(box, head, p)
    return (lambda p: evaluate(p).value, lambda p: evaluate(p).grad, pts)


def _prism_check(frame: str):
    def build(rng):
        n_s, n_p = _sizes(rng)
        hair = Hairstyle(random_hair_points(rng, n_s, n_p))
        params = PrismParams(int(rng.choice([3, 4, 6, 8])), float(rng.uniform(0.005, 0.05)), frame=frame)
        g = rng.normal(size=(n_s * n_p * params.k_edges, 3))

        def f(x):
            return float(np.sum(g * prism_vertices(x, params).reshape(-1, 3)))

        def grad(x):
            h = hair.with_points(x)
            return backprop_vertices(prismatize_hairstyle(h, params), g, h, params)
        return f, grad, hair.points.copy()
    return build


CHECKS: dict[str, Callable] = {
    "fit": _hair_check(_fit),
    "ori": _hair_check(_ori, min_strands=2),
    "cur": _hair_check(_cur),
    "bbox": _hair_check(_bbox),
    "face": _hair_check(_face),
    "colli": _hair_check(_colli, root_radius=0.85),
    "meshfit_chamfer": _mesh_check("chamfer"),
    "meshfit_edge": _mesh_check("edge"),
    "meshfit_normal": _mesh_check("normal"),
    "meshfit_laplacian": _mesh_check("laplacian"),
    "meshfit_prior": _prior,
    "prism_cross": _prism_check("cross"),
    "prism_transport": _prism_check("transport"),
}


def run_gradcheck(seed: int = 0, instances: int = 20, tolerance: float = TOLERANCE,
                  names: Collection[str] | None = None, flip: Collection[str] = ()) -> GradcheckReport:
    """Run every check ``instances`` times.

    ``flip`` negates the analytic gradient of the named checks; it exists so
    tests can confirm that a wrong gradient is caught.
    """
    if instances < 1:
        raise ValueError("instances must be >= 1")
    names = list(CHECKS) if names is None else list(names)
    unknown = set(names) - set(CHECKS) | set(flip) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}; have {sorted(CHECKS)}")
    report = GradcheckReport(tolerance)
    order = list(CHECKS)
    for name in names:
        # keyed on registry position so a subset run sees the same instances as a full run
        rng = np.random.default_rng([seed, order.index(name)])
        for inst in range(instances):
            f, grad, x0 = CHECKS[name](rng)
            a = grad(x0)
            if name in flip:
                a = -a
            err = relative_error(a, numeric_gradient(f, x0))
            report.results.append(CheckResult(name, inst, x0.size, err, err <= tolerance))
    return report

from collections import defaultdict

import numpy as np
import pytest

from hairprism.losses import LossConfig, LossValue
from hairprism.mesh import DeformableMesh, TriMesh, icosphere
from hairprism.meshfit import evolve_template
from hairprism.optimize import OptimSchedule, OptimizationError
from hairprism.sdf import MeshSdf, SdfSource

SCHED = OptimSchedule(300, 1e-2, log_every=0)


def umbrella_norms(mesh: TriMesh) -> np.ndarray:
    """|v - mean(neighbors)| per vertex, by explicit adjacency loops."""
    nb = defaultdict(set)
    for a, b, c in mesh.triangles.tolist():
        nb[a] |= {b, c}
        nb[b] |= {a, c}
        nb[c] |= {a, b}
    v = mesh.vertices
    return np.array([np.linalg.norm(v[i] - v[sorted(nb[i])].mean(axis=0)) for i in range(len(v))])


@pytest.fixture(scope="module")
def template():
    return DeformableMesh.from_mesh(icosphere(2))


def test_identity_target_keeps_offsets_small(template):
    out, tr = evolve_template(template, icosphere(2), sched=SCHED)
    # regularizers are not zero on the rest sphere, so offsets drift only slightly
    assert np.abs(out.offsets).max() < 5e-3
    assert tr.records[0]["term_chamfer"] == 0.0
    assert tr.records[-1]["term_chamfer"] < 1e-4


@pytest.mark.parametrize("kind", ["mesh", "sdf"])
def test_sphere_growth(template, kind):
    target = icosphere(3, 1.2)
    out, tr = evolve_template(template, target if kind == "mesh" else MeshSdf(target), sched=SCHED)
    radial = np.linalg.norm(out.vertices, axis=1) - 1.0
    assert radial.mean() == pytest.approx(0.2, abs=0.02)
    if kind == "mesh":
        assert tr.records[-1]["term_chamfer"] <= tr.records[0]["term_chamfer"]
    else:
        assert tr.records[-1]["term_prior"] <= tr.records[0]["term_prior"]


def test_laplacian_smooths_noisy_target(template):
    rng = np.random.default_rng(0)
    ico = icosphere(2)
    noisy = TriMesh(ico.vertices * (1 + 0.03 * rng.normal(size=(ico.n_vertices, 1))), ico.triangles)
    stats, lap_terms = [], []
    for lam in (0.0, 0.1, 1.0):
        out, tr = evolve_template(template, noisy, LossConfig(lambda_lap=lam), OptimSchedule(500, 1e-2, log_every=0))
        stats.append(np.var(umbrella_norms(out.to_mesh())))
        probe = evolve_template.__globals__["loss_meshfit"](
            out, None, LossConfig(lambda_chamf=0, lambda_edge=0, lambda_nor=0, lambda_lap=1.0))
        lap_terms.append(probe.terms["laplacian"])
    assert stats[1] < stats[0]
    assert lap_terms[0] >= lap_terms[1] >= lap_terms[2]


def test_small_rigid_copy_recovered():
    ico = icosphere(2)
    ell = TriMesh(ico.vertices * [1.0, 0.8, 0.6], ico.triangles)
    th = 0.02
    rot = np.array([[np.cos(th), -np.sin(th), 0], [np.sin(th), np.cos(th), 0], [0, 0, 1]])
    target = TriMesh(ell.vertices @ rot.T + [0.01, 0.0, 0.005], ell.triangles)
    out, tr = evolve_template(DeformableMesh.from_mesh(ell), target,
                              sched=OptimSchedule(1000, 3e-3, log_every=0))
    assert tr.records[-1]["term_chamfer"] / LossConfig().lambda_chamf < 1e-4


def test_degenerate_warning():
    # a template whose first face is collapsed stays degenerate under zero-weight fitting
    ico = icosphere(1)
    v = ico.vertices.copy()
    a, b, c = ico.triangles[0]
    v[c] = 0.5 * (v[a] + v[b])
    tmpl = DeformableMesh(v, ico.triangles)
    cfg = LossConfig(lambda_chamf=1e-12, lambda_edge=0, lambda_nor=0, lambda_lap=0)
    _, tr = evolve_template(tmpl, icosphere(1), cfg, OptimSchedule(1, 1e-12))
    assert any("degenerate" in w for w in tr.warnings)


def test_nan_target_aborts(template):
    class NanSdf(SdfSource):
        def value_and_grad(self, points):
            p = np.asarray(points).reshape(-1, 3)
            return np.full(len(p), np.nan), np.zeros_like(p)

    with pytest.raises(OptimizationError):
        evolve_template(template, NanSdf(), sched=OptimSchedule(5))


def test_bad_inputs(template):
    with pytest.raises(TypeError):
        evolve_template(template, "sphere")
    with pytest.raises(ValueError):
        evolve_template(DeformableMesh(np.zeros((3, 3)), np.zeros((0, 3), dtype=int)), icosphere(1))

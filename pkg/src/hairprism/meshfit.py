"""Template mesh evolution: fit per-vertex offsets of a deformable template.

The target is either a triangle mesh, compared through sampled Chamfer
distance, or an SDF, compared through the squared target SDF at samples on
the template surface (where the template's own SDF is zero). Edge-length,
normal-consistency and Laplacian terms regularize the offsets in both cases.
"""
from __future__ import annotations

import numpy as np

from .losses import LossConfig, LossValue, loss_meshfit, loss_sdf_prior, sample_surface
from .mesh import DeformableMesh, TriMesh
from .optimize import OptimSchedule, OptimTrace, run_adam
from .sdf import SdfSource

DEGENERATE_AREA = 1e-14


def evolve_template(template: DeformableMesh, target: TriMesh | SdfSource,
                    cfg: LossConfig = LossConfig(),
                    sched: OptimSchedule = OptimSchedule(step_count=1000, learning_rate=1e-2),
                    n_samples: int = 2048, seed: int = 0) -> tuple[DeformableMesh, OptimTrace]:
    if template.triangles.shape[0] == 0:
        raise ValueError("template mesh is empty")
    rest = TriMesh(template.rest_vertices, template.triangles)
    samples_a = sample_surface(rest, n_samples, seed)
    if isinstance(target, TriMesh):
        samples_b = sample_surface(target, n_samples, seed)

        def objective(offsets):
            return loss_meshfit(template.with_offsets(offsets), target, cfg, samples_a, samples_b)
    elif isinstance(target, SdfSource):
        regularizers = cfg.replace(lambda_chamf=0.0)

        def objective(offsets):
            mesh = template.with_offsets(offsets)
            lv = loss_meshfit(mesh, None, regularizers)
            x = samples_a.points(mesh.vertices, mesh.triangles)
            prior = loss_sdf_prior(None, target, x)
            g = cfg.lambda_prior * samples_a.pullback(prior.grad, mesh.triangles, mesh.vertices.shape[0])
            return lv + LossValue(cfg.lambda_prior * prior.value, g, {"prior": cfg.lambda_prior * prior.value})
    else:
        raise TypeError(f"target must be a TriMesh or SdfSource, got {type(target).__name__}")

    trace = OptimTrace()
    offsets, trace = run_adam(template.offsets, objective, sched, trace=trace)
    result = template.with_offsets(offsets)
    areas = result.to_mesh().face_areas()
    if np.any(areas < DEGENERATE_AREA):
        trace.warnings.append(f"{int(np.sum(areas < DEGENERATE_AREA))} degenerate triangle(s) after deformation")
    trace.result = result
    return result, trace

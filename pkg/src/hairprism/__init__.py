"""Strand hair geometry: statistics, differentiable prism meshes, SDF penalties and fitting."""
from .strands import (DegenerateSegmentError, Hairstyle, Strand, StrandFrameField, build_neighbors,
                      curvatures, frame_field, orientations, resample_strand, synth_hairstyle)
from .mesh import DeformableMesh, TriMesh, ValidationReport, icosphere, validate_mesh
from .prism import (PrismMesh, PrismParams, backprop_vertices, default_radius, initial_normal,
                    prismatize_hairstyle, prismatize_strand)
from .sdf import BoxSdf, HalfSpaceSdf, MeshSdf, SdfSource, sdf_eval, sdf_grad
from .losses import (C_TARGETS, GeometrySources, LossConfig, LossValue, c_mean, cs_ori, loss_bbox,
                     loss_colli, loss_cur, loss_face, loss_fit, loss_hair_geo, loss_meshfit, loss_ori,
                     loss_sdf_prior)
from .optimize import OptimSchedule, OptimTrace, OptimizationError, fit_hairstyle, optimize_geometry
from .meshfit import evolve_template
from .kernels import get_num_threads, set_num_threads

__version__ = "0.1.0"

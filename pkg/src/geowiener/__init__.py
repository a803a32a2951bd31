"""Finite-dimensional approximations of Wiener measure on Riemannian manifolds.

Piecewise-geodesic paths are sampled by rolling Gaussian piecewise-linear
paths onto the manifold; Jacobi-determinant weights, a curvature-corrected
heat-kernel Euler scheme and integration-by-parts identities are provided
alongside, with exact models for flat space and the unit sphere.
"""
from .errors import (
    BudgetExceeded,
    CapabilityError,
    ConfigError,
    CutLocusError,
    DevelopmentRangeError,
    DomainError,
    GeowienerError,
    PartitionError,
)
from .manifolds import Flat, Frame, LevelSetHypersurface, Manifold, Sphere, ellipsoid, get_manifold, rk4_sphere
from .pathspace import (
    DrivingPath,
    GeodesicPath,
    Partition,
    PathTangent,
    antidevelop,
    antidevelop_vertices,
    develop,
    e_p_vertices,
    energy,
    jacobi_tangent,
    pullback_differential,
    pushforward,
    q_form,
    tangent_from_values,
)
from .jacobi import DensityReport, SegmentJacobi, psi_det, rho_p, segment_jacobi
from .montecarlo import (
    McEstimate,
    RngStream,
    expectation_nu0,
    expectation_nu1,
    gaussian_identity_check,
    normalization_constants,
    sample_bp,
    sweep,
    tail_fraction,
    wz_rate,
)
from .ibp import (
    DirectionSpec,
    ZField,
    dE,
    divergence_nu1,
    finite_ibp_check,
    g_metrics,
    kp_transport,
    limit_ibp_check,
    onb_frame,
    z_field,
)
from .heat import HeatKernelGrid, build_grid, q_iterate, q_kernel, reference_heat

__version__ = "0.1.0"

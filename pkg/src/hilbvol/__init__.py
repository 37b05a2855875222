"""Hilbertian volumes, John forms, stable norms and Besicovitch-type
volume checks on discretized metric spaces."""
from .banach import (
    PartitionOfUnity,
    PolytopeNorm,
    QuadForm,
    dual_norm_eval,
    l1_norm,
    linf_norm,
    norm_eval,
    regular_polygon_norm,
    simplex_partition,
)
from .dilation import hadamard_check, hs_norm, inverse_lip_identity, lq_dilation, singular_values
from .john import john_form, john_volume_of_unit_ball, lowner_mvee
from .grids import FiniteMetricSpace, GridMetric, calibrate, cube_grid, torus_grid
from .lipschitz import busemann, center_of_mass, mcshane_extend, separated_net, straighten_via_net
from .periodic import PeriodicMetric, ball_growth, burago_ivanov_report, stable_norm, stable_unit_ball
from .besicovitch import (
    cube_inequality_check,
    filling_extremality_check,
    simplex_inequality_check,
    simplex_product_check,
)
from .acute import HPolytope, dihedral_angles, enumerate_vertices, is_acute, simplex_product_factorization

__version__ = "0.1.0"

"""affineflow: central affine curve flows and the matrix KdV hierarchy.

Exact symbolic generation of the commuting flows from the loop-algebra
recursion, pseudo-spectral time evolution on curvature fields and on closed
curves, Backlund transformations with explicit solution families, and the
bi-Hamiltonian structure with its induced two-forms on curve space.
"""

__version__ = "0.1.0"

from .diffalg import DiffPoly, DVar, densities_equivalent, dp_add, dp_derive, \
    dp_int_zero_mean_part, dp_mul, u_var
from .dpmatrix import DPMatrix, LaurentDPMatrix, ad_connection, j_power
from .gridfn import GridFunction, dp_eval
from .looplax import (ConservedDensity, FlowSpec, conserved_density,
                      conserved_via_Y, kdv_rhs, solve_Y, y_coeff, y_power,
                      z_matrix, zeta)
from .curvegeo import (CurvatureField, CurveSample, base_closed_curve,
                       curvature_map, det_normalize, frame_reconstruct,
                       p_u, perturbed_closed_curve, phi_n, reparametrize,
                       tangency_residual, tangent_complete)
from .hierarchy import (casimir_check, flow_vector_field,
                        hamiltonian_vector_check, j1_apply, j1_components,
                        j1_inverse_apply, j2_apply, j2_components,
                        recursion_apply, w2_determinant, w2_loop,
                        w3_determinant, w3_loop)
from .dynamics import (EvolutionConfig, NumericsError, TrajectoryRecord,
                       cfl_dt, evolve_curve, evolve_field_complex, evolve_u,
                       reconstruct_from_u)
from .backlund import (BTSymbols, ExplicitSolution, HSolution, VacuumFrame,
                       bt_symbols, bt_time_poly, flow_residual_curve,
                       flow_residual_u, permutability_pair, solution_factory,
                       transform_curve_k0, transform_curve_window,
                       transform_u_grid, transform_u_jets)
from .jets import Jet

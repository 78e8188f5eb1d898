"""Saddle-point solver for a ferrofluid free-boundary energy on a cylinder.

The library computes saddle points of a convex-concave objective coupling a
magnetic potential (convex side) to the fluid indicator (concave side) on a
discretized container, certifies them with duality-gap bounds, and verifies
the qualitative estimates the model guarantees (norm bound, bottom distance,
linear-case duality identities, interface residuals).
"""

from .energies import (PhysicalParams, cyl_norm, drive_integral, dual_energy,
                       dual_field_from_potential, field_energy, gain_field,
                       graph_objective, gravity_perimeter_cost,
                       saddle_objective, stored_energy, total_energy,
                       weak_divergence_residual)
from .grid import (DomainSpec, NotAGraphError, cell_gradient, graph_from_indicator,
                   indicator_from_graph, total_variation, volume)
from .inner import (IllPosedError, InnerReport, NonConvergenceError,
                    minimize_potential, objective_and_gradient)
from .maglaw import (MagnetizationLaw, coenergy, coenergy_slope,
                     fenchel_conjugate, growth_constant, permeability,
                     pressure_constant)
from .outer import (InfeasibleVolumeError, OuterNonConvergenceError, OuterReport,
                    bathtub_fill, binarize, maximize_gain, project_to_volume)
from .saddle import (CheckResult, SaddleOptions, SaddleState, VerifyReport,
                     bubble_census, check_bottom_distance,
                     check_energy_minimality, check_linear_duality,
                     check_nontrivial_potential, check_norm_bound,
                     free_surface_residual, interface_potential_jump,
                     probe_saddle, solve_saddle)

__version__ = "0.1.0"

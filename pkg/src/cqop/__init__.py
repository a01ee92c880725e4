"""Quantum operators for a particle confined to a curved surface.

Builds the momentum, Hamiltonian, force, and torque operators of
thin-layer-confined quantum mechanics on a sphere, cylinder, or ring as
dense spectral matrices, and verifies the operator identities they satisfy:
Hermiticity under the surface measure, the Heisenberg-equation force,
torque cancellation, radiality of the confining force, and conservation
laws.
"""

from .expr import Expr, differentiate, evaluate, parse
from .geometry import (Chart, CurvatureData, PhysParams, builtin_chart,
                       curvature_data, gaussian_curvature, geometric_potential,
                       load_chart, mean_curvature)
from .grids import Grid, SurfaceState, build_grid, deriv_op, inner_product, mult_op
from .operators import (ScalarOp, VectorOp, angular_momentum, cross, dot,
                        force_closed_form, force_heisenberg, hamiltonian,
                        position_op, read_operator, surface_gradient,
                        surface_momentum, symmetrized_tangential_contraction,
                        torque, velocity_squared, write_operator)
from .verify import Report, convergence_study, run_suite
from .dynamics import EvolutionRun, expectation, gaussian_packet, propagate

__version__ = "0.1.0"

"""Multiplier-free nonholonomic dynamics in group frames, with loop-integral invariants."""

from .constraints import ConstraintSet, a_holder, a_star, admissible_omega, complete_eta, k_coefficients
from .dynamics import (HamiltonRHS, LagrangeRHS, LagrangeState, LagrangianModel, PhaseState,
                       dalembert_residual, eom_rhs_hamilton, eom_rhs_lagrange, hamiltonian_reduced,
                       legendre_invert, quadratic_lagrangian, reduced_lagrangian, reduced_momenta)
from .errors import *  # noqa: F401,F403
from .frame import (GroupFrame, VariationProbe, apply_operator, asynchronous_parameters,
                    eta_from_velocity, structure_coefficients, velocity_from_eta)
from .integrate import IntegratorConfig, Trajectory, integrate
from .invariants import (LoopSpec, TubeSlice, drift_report, harmonic_loop, poincare_cartan_integral,
                         poincare_linear_integral, propagate_tube, tube_slices)
from .transposition import verify_transposition
from .zoo import get_model, model_names, oracle_trajectory

__version__ = "0.1.0"

"""comgreen: propagators for quadratic Hamiltonians built from
time-dependent constants of motion linear in position and momentum,
with independent numerical verification (grid evolution, quadrature,
finite-difference residuals, imaginary-time spectroscopy)."""

from ._kernels import BACKEND
from .catalog import (
    catalog_hamiltonian,
    catalog_kernel,
    catalog_observable,
    catalog_set,
    system_window,
)
from .conservation import (
    check_commuting_complete_set,
    conservation_residual,
    eigenvalue_constancy_check,
)
from .eigenstates import (
    EigenFamily,
    KernelSpec,
    QuadraticPhaseState,
    apply_observable_to_state,
    assemble_kernel,
    eigensolve,
    gaussian_state,
    integrate_phase_factor,
    kernel_evaluate,
    schrodinger_residual_coefficients,
    smear_kernel_with_gaussian,
    state_integral,
)
from .gridsim import (
    Axis,
    GridState,
    evolve,
    gaussian_packet,
    imaginary_time_ground_state,
    kernel_convolve,
    l2_distance,
    pde_residual,
)
from .modelparse import lower, parse, render
from .phasespace import (
    LinearObservable,
    QuadraticHamiltonian,
    SymplecticForm,
    TimeScalar,
    commutator_with_hamiltonian,
    observable_time_derivative,
    symplectic_matrix,
    symplectic_product,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Axis",
    "EigenFamily",
    "GridState",
    "KernelSpec",
    "LinearObservable",
    "QuadraticHamiltonian",
    "QuadraticPhaseState",
    "SymplecticForm",
    "TimeScalar",
    "apply_observable_to_state",
    "assemble_kernel",
    "catalog_hamiltonian",
    "catalog_kernel",
    "catalog_observable",
    "catalog_set",
    "check_commuting_complete_set",
    "commutator_with_hamiltonian",
    "conservation_residual",
    "eigensolve",
    "eigenvalue_constancy_check",
    "evolve",
    "gaussian_packet",
    "gaussian_state",
    "imaginary_time_ground_state",
    "integrate_phase_factor",
    "kernel_convolve",
    "kernel_evaluate",
    "l2_distance",
    "lower",
    "observable_time_derivative",
    "parse",
    "pde_residual",
    "render",
    "schrodinger_residual_coefficients",
    "smear_kernel_with_gaussian",
    "state_integral",
    "symplectic_matrix",
    "symplectic_product",
    "system_window",
]

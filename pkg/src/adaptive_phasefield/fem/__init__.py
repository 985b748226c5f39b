from .assembly import (LinearSystem, NumericalFailure, apply_dirichlet, assemble_elasticity,
                       assemble_phasefield, cell_strain_energy, elasticity_matrix, energy_parts,
                       internal_forces, phasefield_residual, reaction_force, solve_spd,
                       total_energy)
from .quadrature import quadrature_rule
from .spaces import (FieldState, FunctionSpaces, interpolate_p1_vector, interpolate_p2,
                     spaces_for)

__all__ = [
    "FieldState", "FunctionSpaces", "LinearSystem", "NumericalFailure", "apply_dirichlet",
    "assemble_elasticity", "assemble_phasefield", "cell_strain_energy", "elasticity_matrix",
    "energy_parts", "internal_forces", "interpolate_p1_vector", "interpolate_p2",
    "phasefield_residual", "quadrature_rule", "reaction_force", "solve_spd", "spaces_for",
    "total_energy",
]

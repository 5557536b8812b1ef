"""Numerical verification toolkit for Benjamin-Ono multi-solitons."""
from .spectral import Grid, RealField, ComplexField, make_grid, default_grid
from .solitons import SolitonParams, nsoliton_tau, nsoliton_scattering, one_soliton
from .functionals import conserved_tower, recursion_gradient, fd_gradient, trace_identity
from .variational import vieta_multipliers, el_residual, multiplier_oracle, hessian_D
from .operators import assemble_L1, assemble_LN, assemble_LNj, inertia, negative_eigenvalue_scaling
from .evolution import EvolutionConfig, evolve, orbital_distance, stability_experiment

__all__ = [
    "Grid", "RealField", "ComplexField", "make_grid", "default_grid",
    "SolitonParams", "nsoliton_tau", "nsoliton_scattering", "one_soliton",
    "conserved_tower", "recursion_gradient", "fd_gradient", "trace_identity",
    "vieta_multipliers", "el_residual", "multiplier_oracle", "hessian_D",
    "assemble_L1", "assemble_LN", "assemble_LNj", "inertia", "negative_eigenvalue_scaling",
    "EvolutionConfig", "evolve", "orbital_distance", "stability_experiment",
]

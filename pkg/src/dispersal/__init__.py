"""Numerics for a mutation-selection model of dispersal-rate evolution.

Populations structured by position ``x`` and diffusion rate ``alpha``
concentrate near the slowest rate as the mutation rate ``eps^2`` vanishes,
in a boundary layer of width ``eps^(2/3)`` with an Airy-function profile.
"""
from .airy import A0, AiryProfile, airy_ai, airy_ai_prime, build_eta_star, find_A0
from .asymptotics import (SweepRecord, SweepReport, TheoryProfile, build_theory_profile,
                          concentration_mass, profile_error, run_sweep, scaling_fits, tail_decay_fit,
                          uhat_error)
from .discrete import DiscreteTraitSystem, evolve_discrete, nearest_neighbor_mutation, steady_discrete
from .eigen import (EigenPair, SigmaCurve, eigen_derivative_alpha, principal_eigenpair, rayleigh_quotient,
                    sigma_star_curve)
from .errors import (BlowUp, BracketFailure, ConfigError, DispersalError, GridMismatch, InsufficientData,
                     InsufficientTail, InvalidA1, NegativeSolution, NonConvergence, NonExistence,
                     NonPositive, OutOfRange, ZeroField)
from .grid import (LinearOperator, SpatialField, SpatialGrid, StateField, TraitGrid,
                   build_spatial_laplacian, build_trait_laplacian, dirichlet_energy, habitat,
                   integrate_spatial, integrate_trait, trait_moment)
from .logistic import LogisticSolution, solve_theta
from .solver import (ModelConfig, SteadyState, evolve, existence_mu1, load_checkpoint, save_checkpoint,
                     solve_steady_state, steady_state_checks)

__version__ = "0.1.0"

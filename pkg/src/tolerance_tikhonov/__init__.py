"""Tikhonov regularization with an epsilon-insensitive (tolerance) penalty."""

__version__ = "0.1.0"

from .core import (
    Grid,
    IntegrationOperator,
    LinearOperator,
    Signal,
    apply,
    apply_adjoint,
    data_norm,
    integration_operator,
    make_grid,
    matrix_operator,
    weighted_inner,
    weighted_norm,
)
from .penalty import (
    PenaltySpec,
    Subgradient,
    ToleranceProfile,
    bregman_distance,
    eps_measure,
    eps_modulus,
    penalty_subgradient,
    penalty_value,
)
from .solver import (
    SolveResult,
    SolverConfig,
    SolverError,
    TikhonovProblem,
    classical_tikhonov,
    minimize,
    objective,
    objective_subgradient,
    residual_norm,
)

"""Truncated formal mappings, their composition algebra, and the
Euler-Maruyama triangular solver for stochastic flow coefficients."""

__version__ = "0.1.0"

from .algebra import (
    CompositionIndex,
    FormalMapping,
    MultilinearMap,
    NonFiniteError,
    ShapeError,
    add,
    apply_to_tuple,
    compose,
    enumerate_compositions,
    evaluate,
    identity,
    scale,
    symmetrize,
)
from .chain import (
    BlowupError,
    BrownianPath,
    ChainSolution,
    CoefficientFamily,
    DiffusionFamily,
    DiffusionMap,
    EvolutionReport,
    TimeGrid,
    evolution_check,
    forcing_terms,
    one_step_map,
    sample_path,
    simulate_direct,
    solve_chain,
)
from .explicit import FundamentalSolution, UnsupportedCaseError, fundamental, variation_of_constants
from .verification import (
    ConvergenceReport,
    ScalingReport,
    bernoulli_closed_form,
    estimate_order,
    gbm_closed_form,
    polynomial_oracle_compose,
    quadratic_chain_s2_closed_form,
    truncation_scaling,
)

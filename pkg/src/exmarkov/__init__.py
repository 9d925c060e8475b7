"""Exchangeable Markov processes: simplex paths, mean-field chains, empirical
projections and minimal compatible matrix semigroups."""

__version__ = "0.1.0"

from .simplex import (  # noqa: E402
    GeneratorMatrix,
    SimplexError,
    SimplexPath,
    SimplexPoint,
    StochasticMatrix,
    matrix_exp,
    path_total_variation,
    tv_distance,
)
from .ensemble import EnsembleError, EnsemblePath, read_jsonl, write_jsonl  # noqa: E402
from .meanfield import (  # noqa: E402
    IsingParams,
    RateBoundError,
    RateField,
    ReedFrostParams,
    constant_field,
    glauber_field,
    reed_frost_field,
    simulate_finite,
    simulate_limit,
    solve_ode,
)
from .projection import (  # noqa: E402
    ProjectionError,
    classify_discontinuities,
    estimate_transition,
    mass_transfer,
    project,
)
from .semigroup import (  # noqa: E402
    SemigroupError,
    SemigroupTable,
    build_minimal_semigroup,
    check_semigroup,
    feller_flow_check,
    jump_transport_matrix,
    sample_inhomogeneous_chain,
)
from .discrete import MatrixLawSampler, simulate_discrete, verify_discrete  # noqa: E402
from . import fixtures  # noqa: E402

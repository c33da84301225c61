"""Multiplicative stochastic heat equation on discrete metric measure spaces.

Build a space (interval grid, metric graph, Sierpinski pre-gasket), take its
spectral calculus under Dirichlet or Neumann conditions, sample the colored
driving noise, and study the moments of the Ito-mild solution by Monte
Carlo, by the exact two-point recursion, and by path-interaction estimators.
"""

from .errors import PamlabError
from .noise import (
    NoiseIncrement,
    NoiseModel,
    covariance_check,
    increment_covariance,
    make_noise_model,
    neumann_shift,
    sample_increment,
    sample_increment_matrix,
)
from .pam import (
    LyapunovReport,
    MomentEstimate,
    MomentField,
    PamState,
    cell_beta_factor,
    cell_beta_factor_consistent,
    interaction_kernel,
    lyapunov_fit,
    make_state,
    mc_moments,
    scaling_check_gasket,
    second_moment_picard,
    second_moment_volterra,
    step,
    white_noise_kernel,
)
from .rates import (
    RatePrediction,
    dirichlet_decay_floor,
    exponent_from_sweep,
    phi_inverse,
    regime_and_exponents,
    rho_c_solve,
)
from .rng import substream
from .spaces import (
    CellWord,
    Space,
    ahlfors_check,
    build_gasket,
    build_interval,
    build_metric_graph,
    space_from_json,
    space_to_json,
    subcell_extract,
)
from .spectral import (
    DIRICHLET,
    NEUMANN,
    HeatKernel,
    RieszKernel,
    SpectralData,
    apply_semigroup,
    assemble_laplacian,
    decay_slope,
    eigendecompose,
    heat_check,
    heat_kernel,
    restricted_lambda1,
    riesz_from_heat_quadrature,
    riesz_kernel,
    weyl_fit,
)
from .walkers import (
    FkEstimate,
    SurvivalCurve,
    WalkPath,
    exit_time_tail,
    fk_moment,
    simulate_walk,
    walk_positions_at,
)

__version__ = "0.1.0"

"""Constructive interpolation of finite datasets with feedforward networks."""

__version__ = "0.1.0"

from .activations import Activation, compose_chain, parse_activation, polynomial
from .analysis import (
    DerivativeCertificate,
    MollifiedActivation,
    find_nonvanishing_point,
    poly_degree_test,
    truncation_level,
)
from .core import (
    ComposedNet,
    Dataset,
    ShallowNet,
    forward,
    load_model,
    loss_and_residuals,
    read_csv,
    save_model,
)
from .errors import (
    ConditioningError,
    InfeasibleEstimate,
    InputError,
    InterplabError,
    NotFound,
    PreconditionError,
)
from .hessian import loss_hessian, residual_jacobian, spectrum_at_minimum
from .interpolation import (
    construct_deep_interpolant,
    construct_shallow_interpolant,
    fit_classifier,
    interpolate_multi_output,
    poly_feasibility,
    required_depth,
)
from .random_features import (
    chernoff_failure_bound,
    estimate_sigma_tilde,
    fit_output_weights,
    numerical_rank,
    recommend_width,
    sample_features,
)

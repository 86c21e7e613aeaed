"""Spatial function-on-function regression.

A functional response observed over spatial units is regressed on a functional
predictor while a spatially lagged response term captures dependence between
units. Curves are smoothed onto a B-spline basis, decomposed by spatial
(response) and classical (predictor) functional principal components, and the
resulting score matrices follow a multivariate spatial autoregression
estimated by least squares. The fitted score-space matrices map back to the
bivariate surfaces rho(u, t) and beta(s, t).
"""

from .exceptions import (
    ConstraintError,
    DataError,
    DivergenceError,
    DomainError,
    GenerationError,
    NumericalError,
    ParameterError,
    PreconditionError,
    SfofrError,
    SingularityError,
    UndefinedStatisticError,
)
from .fdbasis import (
    BasisCoefficients,
    BSplineBasis,
    FunctionalDataset,
    center,
    evaluate_basis,
    make_bspline_basis,
    smooth_curves,
    trapezoid_weights,
)
from .fpca import (
    FpcDecomposition,
    choose_k,
    fit_fpc,
    fit_sfpc,
    project,
    reconstruct,
)
from .msar import (
    MsarData,
    MsarFit,
    MsarParams,
    apply_S,
    fit_msar,
    gradient,
    objective,
    preconditioner_m,
    reduced_form_solve,
    spectral_radius,
)
from .pipeline import (
    SfofrFit,
    SurfaceEstimate,
    contraction_diagnostic,
    fit_fofr_fpc,
    fit_sfofr,
    fitted_values,
    ise_surface,
    mse_curves,
    mspe_curves,
    predict,
    r_squared,
    reconstruct_beta,
    reconstruct_rho,
    represent_response,
)
from .simgen import (
    SimConfig,
    SimTruth,
    gen_predictors,
    gen_response,
    generate,
    run_benchmark,
    run_replication,
    summarize_benchmark,
    true_beta,
    true_rho,
)
from .spatial import (
    GeoCoordinates,
    SpatialWeights,
    exponential_weights,
    functional_morans_i,
    haversine_km,
    inverse_distance_weights,
    knn_weights,
    morans_i,
    row_normalize,
)

__version__ = "0.1.0"

__all__ = [
    "BSplineBasis",
    "BasisCoefficients",
    "ConstraintError",
    "DataError",
    "DivergenceError",
    "DomainError",
    "FpcDecomposition",
    "FunctionalDataset",
    "GenerationError",
    "GeoCoordinates",
    "MsarData",
    "MsarFit",
    "MsarParams",
    "NumericalError",
    "ParameterError",
    "PreconditionError",
    "SfofrError",
    "SfofrFit",
    "SimConfig",
    "SimTruth",
    "SingularityError",
    "SpatialWeights",
    "SurfaceEstimate",
    "UndefinedStatisticError",
    "apply_S",
    "center",
    "choose_k",
    "contraction_diagnostic",
    "evaluate_basis",
    "exponential_weights",
    "fit_fofr_fpc",
    "fit_fpc",
    "fit_msar",
    "fit_sfofr",
    "fit_sfpc",
    "fitted_values",
    "functional_morans_i",
    "gen_predictors",
    "gen_response",
    "generate",
    "gradient",
    "haversine_km",
    "inverse_distance_weights",
    "ise_surface",
    "knn_weights",
    "make_bspline_basis",
    "morans_i",
    "mse_curves",
    "mspe_curves",
    "objective",
    "preconditioner_m",
    "predict",
    "project",
    "r_squared",
    "reconstruct",
    "reconstruct_beta",
    "reconstruct_rho",
    "reduced_form_solve",
    "represent_response",
    "row_normalize",
    "run_benchmark",
    "run_replication",
    "smooth_curves",
    "spectral_radius",
    "summarize_benchmark",
    "trapezoid_weights",
    "true_beta",
    "true_rho",
]

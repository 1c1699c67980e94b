from .engine import (
    FitError,
    FitProblem,
    FitResult,
    Parameter,
    SingularMatrixError,
    least_squares,
)
from .problems import (
    CASCADE_BASES,
    SCALAR_MODELS,
    cascade_fidelities,
    fit_cascade_global,
    fit_g2,
    fit_scalar_model,
    normalize_histogram,
    scalar_model,
)

"""Spectra of polynomials in free random variables and their matrix models."""

__version__ = "0.1.0"

from .linearize import (  # noqa: E402
    LinearPencil,
    linearize,
    linearize_monomial,
    linearize_selfadjoint,
    linearize_sum,
    schur_check,
)
from .ncpoly import NCPolynomial, PolynomialSyntaxError, adjoint, evaluate, is_selfadjoint, parse  # noqa: E402
from .spectra import (  # noqa: E402
    ScalarMeasure,
    SpectralPoint,
    levy_distance,
    matrix_cauchy,
    quantile_diagonal,
)
from .subordination import (  # noqa: E402
    eta_continuation,
    fixed_point_solve,
    h_transform,
    newton_refine,
    polynomial_density,
    regularity_check,
)

__all__ = [
    "LinearPencil",
    "NCPolynomial",
    "PolynomialSyntaxError",
    "ScalarMeasure",
    "SpectralPoint",
    "adjoint",
    "eta_continuation",
    "evaluate",
    "fixed_point_solve",
    "h_transform",
    "is_selfadjoint",
    "levy_distance",
    "linearize",
    "linearize_monomial",
    "linearize_selfadjoint",
    "linearize_sum",
    "matrix_cauchy",
    "newton_refine",
    "parse",
    "polynomial_density",
    "quantile_diagonal",
    "regularity_check",
    "schur_check",
]

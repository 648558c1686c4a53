"""Classical, boolean, free and conditionally free additive convolutions of
probability measures on the line, computed through Cauchy transforms."""

from .arrays import (ArrayRow, RowParams, center, f_nk, infinitesimality_check, row_convolve,
                     row_convolve_cfree, row_params, array_limit_harness)
from .convolution import (CFreePair, boolean_conv, cfree_conv, classical_conv, free_conv,
                          free_subordination, solve_subordination)
from .errors import NumericalError, PreconditionError
from .infdiv import (CFreeGeneratorPair, LevyHincinParams, boolean_id_law, cfree_limit_law, check_infdiv,
                     classical_id_law, extract_generators, free_id_law, nevanlinna_E, semigroup_at)
from .measure import (AffineMap, Measure, arcsine, bernoulli_sym, free_poisson, gaussian, levy_distance,
                      make_family, moment, point_mass, push_affine, semicircle, stieltjes_invert)
from .stable import StableFunction, check_stability, eval_stable, make_stable_pair
from .transforms import (TransformContext, TruncatedCone, cauchy_G, e_transform, f_transform, invert_F,
                         make_context, phi_transform, validate_cone)

__version__ = "0.1.0"

__all__ = [
    "AffineMap", "arcsine", "array_limit_harness", "ArrayRow", "bernoulli_sym", "boolean_conv",
    "boolean_id_law", "cauchy_G", "center", "cfree_conv", "cfree_limit_law", "CFreeGeneratorPair",
    "CFreePair", "check_infdiv", "check_stability", "classical_conv", "classical_id_law", "e_transform",
    "eval_stable", "extract_generators", "f_nk", "f_transform", "free_conv", "free_id_law", "free_poisson",
    "free_subordination", "gaussian", "infinitesimality_check", "invert_F", "levy_distance",
    "LevyHincinParams", "make_context", "make_family", "make_stable_pair", "Measure", "moment",
    "nevanlinna_E", "NumericalError", "phi_transform", "point_mass", "PreconditionError", "push_affine",
    "row_convolve", "row_convolve_cfree", "row_params", "RowParams", "semicircle", "semigroup_at",
    "solve_subordination", "StableFunction", "stieltjes_invert", "TransformContext", "TruncatedCone",
    "validate_cone",
]

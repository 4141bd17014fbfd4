"""Exact calculus of finite ultrametric measure spaces and random forests."""

from .dendrogram import (
    NULL,
    PRECISION,
    SCALE,
    CanonicalEncoding,
    Dendrogram,
    Leaf,
    Node,
    ValidationReport,
    as_mass,
    canonicalize,
    from_distance_matrix,
    is_isomorphic,
    leaf,
    make,
    node,
    scale_mass,
    scale_metric,
    singleton,
    star,
    to_distance_matrix,
    to_ticks,
    validate,
)
from .errors import BudgetExceeded, DomainError, MalformedDendrogram, NotUltrametric, UmforestError
from .semigroup import (
    concat,
    count_balls,
    decompose,
    is_subforest,
    mass_fragmentation_path,
    modulus_mass,
    tops_path,
    truncate,
    trunk,
)
from .polynomials import (
    MonomialSpec,
    PolynomialSpec,
    distance_matrix_measure,
    eval_monomial,
    eval_polynomial,
    generator_apply,
    laplace_estimate,
    power_sum_monomial,
    test_function,
)

__version__ = "0.1.0"

__all__ = [
    "NULL", "PRECISION", "SCALE", "CanonicalEncoding", "Dendrogram", "Leaf", "Node", "ValidationReport",
    "as_mass", "canonicalize", "from_distance_matrix", "is_isomorphic", "leaf", "make", "node",
    "scale_mass", "scale_metric", "singleton", "star", "to_distance_matrix", "to_ticks", "validate",
    "BudgetExceeded", "DomainError", "MalformedDendrogram", "NotUltrametric", "UmforestError",
    "concat", "count_balls", "decompose", "is_subforest", "mass_fragmentation_path", "modulus_mass",
    "tops_path", "truncate", "trunk",
    "MonomialSpec", "PolynomialSpec", "distance_matrix_measure", "eval_monomial", "eval_polynomial",
    "generator_apply", "laplace_estimate", "power_sum_monomial", "test_function",
]

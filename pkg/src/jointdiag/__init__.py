"""Approximate joint diagonalization of matrix collections by similarity.

Minimizes ``f(Q) = 1/2 sum_k ||J o (Q^{-1} A_k Q)||^2`` over invertible Q,
with exact derivatives of every order, descent solvers, and finite-scale
well-posedness diagnostics.
"""

__version__ = "0.1.0"

from .matcore import (  # noqa: E402
    DimensionError,
    Field,
    MatrixCollection,
    SingularTransformError,
    TransformPoint,
    gersgorin_check,
    offdiag_cost,
)
from .calculus import (  # noqa: E402
    gradient,
    gradient_via_base_change,
    hessian_apply,
    jth_differential_f,
)
from .solvers import (  # noqa: E402
    Method,
    SolverOptions,
    SolverResult,
    Termination,
    closest_unitary,
    gradient_descent,
    newton_cg,
    solve,
    unitary_descent,
)
from .problems import generate_jointly_diagonalizable, load, random_collection, save  # noqa: E402
from .wellposed import (  # noqa: E402
    RankDeficientTarget,
    divergence_probe,
    invariant_subspace_witness,
    sylvester_discriminant,
)

__all__ = [
    "__version__",
    "DimensionError",
    "Field",
    "MatrixCollection",
    "SingularTransformError",
    "TransformPoint",
    "gersgorin_check",
    "offdiag_cost",
    "gradient",
    "gradient_via_base_change",
    "hessian_apply",
    "jth_differential_f",
    "Method",
    "SolverOptions",
    "SolverResult",
    "Termination",
    "closest_unitary",
    "gradient_descent",
    "newton_cg",
    "solve",
    "unitary_descent",
    "generate_jointly_diagonalizable",
    "load",
    "random_collection",
    "save",
    "RankDeficientTarget",
    "divergence_probe",
    "invariant_subspace_witness",
    "sylvester_discriminant",
]

"""Randomized sketching for Krylov linear solvers and eigensolvers.

The sketched GMRES solver (:mod:`sketchy.sgmres`) and sketched Rayleigh-Ritz
(:mod:`sketchy.srr`) work with bases built by cheap, loosely orthogonalized
recurrences (:mod:`sketchy.basis`) and use a random subspace embedding
(:mod:`sketchy.sketch`) to solve the small projected problems stably.
"""

from .basis import (
    KrylovBasis,
    SpectralBox,
    block_basis,
    chebyshev_basis,
    estimate_spectral_box,
    lanczos,
    monomial_basis,
    newton_basis,
    partial_arnoldi,
)
from .errors import (
    ArgumentError,
    BreakdownError,
    ConditioningError,
    ConditioningWarning,
    ConvergenceError,
    DegenerateBoxError,
    ParseError,
    SingularMatrixError,
    StagnationWarning,
)
from .operators import laplacian_2d, planted_diagonal, read_matrix_market, trs_operator
from .sgmres import SgmresConfig, SgmresResult, gmres_baseline, sgmres_iterative, sgmres_solve
from .sketch import Embedding, apply, apply_adjoint, make_embedding, whiten
from .srr import SrrConfig, SrrResult, lowrank_approx, rr_baseline, sketch_gep, srr, srr_stabilized

__version__ = "0.1.0"

"""Low-rank updates of matrix square roots and inverse square roots.

Given implicit access to ``A^{1/2}`` and ``A^{-1/2}`` of a symmetric positive
definite ``A`` and a thin ``Z``, the library finds ``U`` with

    (A + alpha Z Z^T)^{beta/2}  ~  A^{beta/2} + alpha*beta U U^T

for ``alpha, beta = +-1`` by solving a low-rank algebraic Riccati equation.
"""

from .analysis import (
    DecayBoundParams,
    ErrorReport,
    decay_bound_factor,
    dense_residual,
    error_report,
    exact_delta,
    exact_delta_spectrum,
    kappa_hat,
    residual_norm_fro,
)
from .apps import (
    PolarState,
    ShampooTracker,
    SpikedCovariance,
    StepReport,
    gaussian_sample,
    gls_solve,
    gls_weight_root,
    polar_downdate,
    polar_update,
    shampoo_precondition,
    shampoo_step,
    zca_apply,
    zca_fit,
)
from .exceptions import (
    InfeasibleDowndateError,
    NoPSDSolutionError,
    NotPSDError,
    SingularOperatorError,
    SolverConfigError,
)
from .operators import (
    DenseSymmetric,
    DiagonalOperator,
    DiagonalPlusLowRank,
    InverseOperator,
    LowRankFactor,
    PerturbedOperator,
    SymmetricOperator,
    compress,
    dense_principal_root,
    smw_apply_inverse,
)
from .riccati import (
    RiccatiProblem,
    RiccatiSolution,
    dense_riccati_oracle,
    riccati_gradient,
    riccati_lr_solve,
    riccati_objective,
    riccati_residual_norm,
)
from .sqrtupdate import (
    CorrectionResult,
    Feasibility,
    UpdateRequest,
    build_v_for_inverse,
    check_downdate_feasible,
    corrected_operators,
    smw_convert,
    update_correction,
    update_indefinite,
)

__version__ = "0.1.0"

"""Low-rank corrections of ``A^{1/2}`` and ``A^{-1/2}`` after ``A -> A + alpha Z Z^T``.

For ``alpha, beta = +-1`` we look for ``U`` (n x r) with

    (A + alpha Z Z^T)^{beta/2}  ~  A^{beta/2} + alpha*beta U U^T.

The two cases with ``alpha*beta = +1`` reduce to one Riccati solve each.
The mixed cases go through the opposite power and a Woodbury inversion, so
that the corrected operator is positive definite by construction.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .analysis import residual_norm_fro
from .exceptions import InfeasibleDowndateError, SolverConfigError
from .operators import InverseOperator, LowRankFactor, PerturbedOperator, SymmetricOperator
from .riccati import RiccatiProblem, RiccatiSolution, riccati_lr_solve

__all__ = [
    "UpdateRequest",
    "CorrectionResult",
    "Feasibility",
    "check_downdate_feasible",
    "build_v_for_inverse",
    "smw_convert",
    "update_correction",
    "update_indefinite",
    "corrected_operators",
]

log = logging.getLogger(__name__)

FEASIBILITY_MARGIN = 1e-10


@dataclass
class UpdateRequest:
    """One correction problem.

    Attributes
    ----------
    sqrt_op, inv_sqrt_op : SymmetricOperator, optional
        ``A^{1/2}`` and ``A^{-1/2}``.  ``(+1, +1)`` needs only `sqrt_op`,
        ``(-1, -1)`` only `inv_sqrt_op`; the mixed cases need both.
    Z : ndarray, shape (n, k)
    alpha, beta : {+1, -1}
        Update (+1) or downdate (-1); square root (+1) or inverse square root (-1).
    rank : int
        Target width of ``U``.
    tol, max_inner, seed, preconditioner
        Passed to the Riccati solver.
    feasibility_margin : float
        Downdates require ``lambda_min(I - Z^T A^{-1} Z)`` above this.
    refine : bool
        Polish the converted factor in the mixed cases (see :func:`_polish`).
    """

    Z: np.ndarray
    alpha: int
    beta: int
    rank: int
    sqrt_op: Optional[SymmetricOperator] = None
    inv_sqrt_op: Optional[SymmetricOperator] = None
    tol: float = 1e-8
    max_inner: int = 500
    seed: int = 0
    preconditioner: str = "block"
    feasibility_margin: float = FEASIBILITY_MARGIN
    refine: bool = True

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        self.Z = Z
        if self.alpha not in (1, -1) or self.beta not in (1, -1):
            raise ValueError("alpha and beta must be +1 or -1")
        need_sqrt = (self.alpha, self.beta) != (-1, -1)
        need_inv = (self.alpha, self.beta) != (1, 1)
        if need_sqrt and self.sqrt_op is None:
            raise SolverConfigError(f"case alpha={self.alpha}, beta={self.beta} needs sqrt_op")
        if need_inv and self.inv_sqrt_op is None:
            raise SolverConfigError(f"case alpha={self.alpha}, beta={self.beta} needs inv_sqrt_op")
        for op in (self.sqrt_op, self.inv_sqrt_op):
            if op is not None and op.dim != Z.shape[0]:
                raise ValueError(f"dimension mismatch: operator {op.dim}, Z has {Z.shape[0]} rows")

    @property
    def n(self):
        return self.Z.shape[0]


@dataclass
class CorrectionResult:
    """``correction`` holds ``U`` with sign ``alpha*beta``.

    ``residual_norm`` is ``||R(C)||_F`` for ``C = U U^T`` in the requested
    ``(alpha, beta)`` case.  ``V`` is the factor with
    ``(A + alpha Z Z^T)^beta = A^beta + alpha*beta V V^T``.
    """

    correction: LowRankFactor
    alpha: int
    beta: int
    residual_norm: float
    riccati: Optional[RiccatiSolution] = None
    V: Optional[np.ndarray] = field(default=None, repr=False)
    min_eig: Optional[float] = None

    @property
    def U(self):
        return self.correction.factor

    @property
    def converged(self):
        return self.riccati is None or self.riccati.converged


class Feasibility(NamedTuple):
    feasible: bool
    min_eig: float


def check_downdate_feasible(inv_apply, Z, margin: float = FEASIBILITY_MARGIN) -> Feasibility:
    """Test whether ``A - Z Z^T`` is positive definite via ``I_k - Z^T A^{-1} Z``.

    `inv_apply` maps an ``(n, k)`` block ``X`` to ``A^{-1} X``.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    K = np.eye(Z.shape[1]) - Z.T @ np.asarray(inv_apply(Z))
    min_eig = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min()) if Z.shape[1] else 1.0
    return Feasibility(min_eig > margin, min_eig)


def _inv_sqrt_half(K):
    w, Q = np.linalg.eigh(0.5 * (K + K.T))
    return (Q / np.sqrt(w)) @ Q.T


def build_v_for_inverse(inv_sqrt_op: SymmetricOperator, Z, alpha: int,
                        margin: float = FEASIBILITY_MARGIN):
    """``V = A^{-1} Z (I + alpha Z^T A^{-1} Z)^{-1/2}``.

    Then ``(A + alpha Z Z^T)^{-1} = A^{-1} - alpha V V^T``.  ``A^{-1}`` is
    reached by applying `inv_sqrt_op` twice.  Raises
    :class:`InfeasibleDowndateError` when ``alpha = -1`` and the downdate
    is not positive definite.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    Gt = inv_sqrt_op.apply(Z)
    K = np.eye(Z.shape[1]) + alpha * (Gt.T @ Gt)
    if Z.shape[1] == 0:
        return np.zeros_like(Z)
    min_eig = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    if alpha == -1 and min_eig <= margin:
        raise InfeasibleDowndateError(min_eig)
    return inv_sqrt_op.apply(Gt) @ _inv_sqrt_half(K)


DIRECTIONS = ("inv_sqrt->sqrt", "sqrt->inv_sqrt")


def _woodbury_factor(P: SymmetricOperator, U1):
    PU = P.apply(U1)
    K = np.eye(U1.shape[1]) + U1.T @ PU
    return PU @ _inv_sqrt_half(K)


def smw_convert(base_op: SymmetricOperator, U1, direction: str = "inv_sqrt->sqrt"):
    """Move a positive correction of `base_op` to the inverse side.

    Returns ``U`` with ``(base_op + U1 U1^T)^{-1} = base_op^{-1} - U U^T``,
    computed as ``P U1 (I + U1^T P U1)^{-1/2}`` with ``P = base_op^{-1}``.
    When `base_op` is ``A^{-1/2}`` (direction ``"inv_sqrt->sqrt"``) this
    gives a correction of ``A^{1/2}``; pass ``InverseOperator(sqrt_op)`` to
    avoid any actual inversion.  Width is preserved.
    """
    if direction not in DIRECTIONS:
        raise ValueError(f"direction must be one of {DIRECTIONS}")
    U1 = np.asarray(U1, dtype=float)
    if U1.ndim == 1:
        U1 = U1[:, None]
    if U1.shape[0] != base_op.dim:
        raise ValueError(f"dimension mismatch: operator {base_op.dim}, U1 has {U1.shape[0]} rows")
    if U1.shape[1] == 0:
        return U1.copy()
    return _woodbury_factor(base_op.inverse(), U1)


def _solve(req: UpdateRequest, E, V):
    p = RiccatiProblem(E, V.T, 1, min(req.rank, req.n), tol=req.tol, max_inner=req.max_inner,
                       seed=req.seed, preconditioner=req.preconditioner)
    sol = riccati_lr_solve(p)
    if not sol.converged:
        log.info("riccati solver stopped at relative residual %.3e (tol %.1e)", sol.residual, req.tol)
    return sol


def _downdate_inverse(req: UpdateRequest):
    # alpha = -1, beta = -1
    inv = req.inv_sqrt_op
    Gt = inv.apply(req.Z)
    K = np.eye(req.Z.shape[1]) - Gt.T @ Gt
    min_eig = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
    if min_eig <= req.feasibility_margin:
        raise InfeasibleDowndateError(min_eig)
    V = inv.apply(Gt) @ _inv_sqrt_half(K)
    return _solve(req, inv, V), V, min_eig


def update_correction(req: UpdateRequest) -> CorrectionResult:
    """Compute the low-rank correction for one ``(alpha, beta)`` case.

    A solver that stops short of ``req.tol`` still returns its best factor;
    check ``result.converged`` / ``result.riccati.residual``.
    """
    a, b = req.alpha, req.beta
    n = req.n
    if req.Z.shape[1] == 0 or not np.any(req.Z) or req.rank == 0:
        if a == -1 and req.Z.shape[1]:
            # still reject an infeasible downdate even when the rank budget is zero
            feas = check_downdate_feasible(lambda X: req.inv_sqrt_op.apply(req.inv_sqrt_op.apply(X)), req.Z,
                                           req.feasibility_margin)
            if not feas.feasible:
                raise InfeasibleDowndateError(feas.min_eig)
        empty = LowRankFactor.empty(n, a * b)
        V = req.Z if b == 1 else np.zeros_like(req.Z)
        res = 0.0 if not np.any(req.Z) else float(np.linalg.norm(V.T @ V))
        return CorrectionResult(empty, a, b, res, None, V)

    min_eig = None
    if (a, b) == (1, 1):
        V = req.Z
        sol = _solve(req, req.sqrt_op, V)
        U = sol.Y
        E = req.sqrt_op
    elif (a, b) == (-1, -1):
        sol, V, min_eig = _downdate_inverse(req)
        U = sol.Y
        E = req.inv_sqrt_op
    elif (a, b) == (-1, 1):
        sol, _, min_eig = _downdate_inverse(req)
        U = smw_convert(InverseOperator(req.sqrt_op), sol.Y, "inv_sqrt->sqrt")
        V = req.Z
        E = req.sqrt_op
    else:
        sol = _solve(req, req.sqrt_op, req.Z)
        U = smw_convert(InverseOperator(req.inv_sqrt_op), sol.Y, "sqrt->inv_sqrt")
        V = build_v_for_inverse(req.inv_sqrt_op, req.Z, 1)
        E = req.inv_sqrt_op
    res = residual_norm_fro(E, LowRankFactor(U, 1), V, a * b)
    if a * b == -1 and req.refine:
        U, res, sol = _polish(req, E, V, U, res, sol)
    return CorrectionResult(LowRankFactor(U, a * b), a, b, res, sol, V, min_eig)


def _polish(req: UpdateRequest, E, V, U, res, sol):
    """Refine a converted factor on the target side, keeping the result PD.

    The Woodbury conversion is exact for the factor it is given, but it
    amplifies the truncation error of the opposite-side solve.  A few
    Gauss-Newton steps on ``E C + C E - C^2 = V V^T`` started from the
    converted factor usually recover that loss.  The refined factor is kept
    only if it lowers the residual and ``E - U U^T`` stays positive
    definite, which is tested through ``I - U^T E^{-1} U`` using the
    operator for the opposite power.
    """
    if U.shape[1] == 0:
        return U, res, sol
    p = RiccatiProblem(E, V.T, -1, U.shape[1], tol=req.tol, max_inner=req.max_inner,
                       seed=req.seed, preconditioner=req.preconditioner, Y0=U)
    try:
        ref = riccati_lr_solve(p)
    except np.linalg.LinAlgError:
        return U, res, sol
    U2 = ref.Y
    res2 = residual_norm_fro(E, LowRankFactor(U2, 1), V, -1)
    if not res2 < res:
        return U, res, sol
    inv_E = req.inv_sqrt_op if req.beta == 1 else req.sqrt_op
    K = np.eye(U2.shape[1]) - U2.T @ inv_E.apply(U2)
    if np.linalg.eigvalsh(0.5 * (K + K.T)).min() <= req.feasibility_margin:
        log.info("refined factor rejected: corrected operator would not be positive definite")
        return U, res, sol
    sol.residual_history.extend(ref.residual_history)
    sol.iterations += ref.iterations
    sol.e_applies += ref.e_applies
    sol.converged = sol.converged or ref.converged
    return U2, res2, sol


def corrected_operators(sqrt_op, inv_sqrt_op, result: CorrectionResult):
    """Operators for the new ``B^{1/2}`` and ``B^{-1/2}`` after a correction.

    The corrected power is ``A^{beta/2} + alpha*beta U U^T``; the other one
    is its Woodbury inverse (and needs the matching operator).
    """
    if result.beta == 1:
        new_sqrt = PerturbedOperator(sqrt_op, result.correction)
        new_inv = new_sqrt.inverse() if inv_sqrt_op is not None else None
    else:
        new_inv = PerturbedOperator(inv_sqrt_op, result.correction)
        new_sqrt = new_inv.inverse() if sqrt_op is not None else None
    return new_sqrt, new_inv


def update_indefinite(sqrt_op, inv_sqrt_op, F, signs, beta: int, rank: int, **solver_kw):
    """Correct ``A^{beta/2}`` for an indefinite ``D = F diag(signs) F^T``.

    ``D`` is split into its positive and negative parts through the small
    Gram structure of ``F``; the update is applied first, then the downdate
    on the updated operators.

    Returns
    -------
    (new_sqrt, new_inv_sqrt, results)
        Operators for ``(A + D)^{+-1/2}`` and the list of per-part results.
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    s = np.asarray(signs, dtype=float).ravel()
    if s.size != F.shape[1]:
        raise ValueError("need one sign per column of F")
    results = []
    if F.shape[1] == 0:
        return sqrt_op, inv_sqrt_op, results
    Q, R = np.linalg.qr(F)
    lam, W = np.linalg.eigh((R * s) @ R.T)
    tol = 1e-14 * max(np.abs(lam).max(), 1e-300)
    parts = [(1, lam > tol), (-1, lam < -tol)]
    for alpha, mask in parts:
        if not np.any(mask):
            continue
        Z = Q @ (W[:, mask] * np.sqrt(np.abs(lam[mask])))
        req = UpdateRequest(Z, alpha, beta, rank, sqrt_op=sqrt_op, inv_sqrt_op=inv_sqrt_op, **solver_kw)
        res = update_correction(req)
        results.append(res)
        sqrt_op, inv_sqrt_op = corrected_operators(sqrt_op, inv_sqrt_op, res)
    return sqrt_op, inv_sqrt_op, results

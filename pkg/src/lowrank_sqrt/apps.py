"""Applications of low-rank square-root corrections.

ZCA whitening under a spiked covariance, row updates of a polar
decomposition, sampling with a perturbed precision matrix, tracking of the
inverse fourth root in Shampoo, and generalized least squares with a spiked
noise covariance.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import InfeasibleDowndateError
from .operators import (
    DenseSymmetric,
    DiagonalOperator,
    DiagonalPlusLowRank,
    InverseOperator,
    LowRankFactor,
    PerturbedOperator,
    SymmetricOperator,
)
from .sqrtupdate import CorrectionResult, UpdateRequest, update_correction

__all__ = [
    "SpikedCovariance",
    "zca_fit",
    "zca_apply",
    "PolarState",
    "polar_downdate",
    "polar_update",
    "gaussian_sample",
    "ShampooTracker",
    "StepReport",
    "shampoo_step",
    "shampoo_precondition",
    "gls_weight_root",
    "gls_solve",
]

log = logging.getLogger(__name__)


def _cols(Z):
    Z = np.asarray(Z, dtype=float)
    return Z[:, None] if Z.ndim == 1 else Z


# -- ZCA whitening -----------------------------------------------------------


@dataclass(frozen=True)
class SpikedCovariance:
    """``Sigma = sigma2 I_p + Z Z^T``."""

    sigma2: float
    Z: np.ndarray

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        object.__setattr__(self, "Z", _cols(self.Z))

    @property
    def p(self) -> int:
        return self.Z.shape[0]

    def to_dense(self):
        return self.sigma2 * np.eye(self.p) + self.Z @ self.Z.T


def zca_fit(cov: SpikedCovariance, rank: int, tol: float = 1e-10, seed: int = 0) -> LowRankFactor:
    """Correction ``U`` (sign -1) with ``Sigma^{-1/2} ~ sigma^{-1} I - U U^T``."""
    sigma = np.sqrt(cov.sigma2)
    ones = np.ones(cov.p)
    req = UpdateRequest(cov.Z, 1, -1, min(rank, cov.p), sqrt_op=DiagonalOperator(sigma * ones),
                        inv_sqrt_op=DiagonalOperator(ones / sigma), tol=tol, seed=seed)
    res = update_correction(req)
    if not res.converged:
        log.warning("zca_fit: solver stopped at relative residual %.2e", res.riccati.residual)
    return res.correction


def zca_apply(whitener: Tuple[float, LowRankFactor], data):
    """Whiten the rows of `data` (n x p) with ``sigma^{-1} I - U U^T``.

    `whitener` is ``(sigma, U)`` where `U` is a :class:`LowRankFactor` (its
    sign is honoured) or a plain array taken with sign -1.  Costs two thin
    products, ``O(n p r)``.
    """
    sigma, U = whitener
    if not isinstance(U, LowRankFactor):
        U = LowRankFactor(U, -1)
    if data.ndim != 2 or data.shape[1] != U.dim:
        raise ValueError(f"dimension mismatch: data {data.shape}, whitener acts on {U.dim}")
    out = data / sigma
    if U.width:
        out = out + U.sign * ((data @ U.factor) @ U.factor.T)
    return out


# -- polar decomposition -------------------------------------------------------


@dataclass
class PolarState:
    """Polar factors ``X = U_factor P`` with ``P`` and ``P^{-1}`` held implicitly.

    Attributes
    ----------
    U_factor : ndarray, shape (n, d)
        Orthonormal columns (approximately, after updates).
    P, P_inverse : SymmetricOperator
        ``(X^T X)^{1/2}`` and its inverse.
    rank : int
        Width of each correction.
    tol : float
        Riccati tolerance used for the corrections.
    """

    U_factor: np.ndarray
    P: SymmetricOperator
    P_inverse: SymmetricOperator
    rank: int = 4
    tol: float = 1e-10
    history: List[CorrectionResult] = field(default_factory=list, repr=False)

    @classmethod
    def from_matrix(cls, X, rank: int = 4, tol: float = 1e-10) -> "PolarState":
        """Exact polar decomposition by a thin SVD. `X` must have full column rank."""
        X = np.asarray(X, dtype=float)
        W, s, Vt = np.linalg.svd(X, full_matrices=False)
        if s[-1] <= s[0] * 1e-14 * max(X.shape):
            raise ValueError("X must have full column rank")
        P = (Vt.T * s) @ Vt
        Pinv = (Vt.T / s) @ Vt
        return cls(W @ Vt, DenseSymmetric(0.5 * (P + P.T), check=False),
                   DenseSymmetric(0.5 * (Pinv + Pinv.T), check=False), rank, tol)

    @property
    def X(self):
        """The tracked data matrix ``U_factor P``."""
        return self.P.apply(self.U_factor.T).T

    def row(self, i):
        return self.P.apply(self.U_factor[i])


def _polar_step(state: PolarState, x, alpha: int):
    d = state.P.dim
    req = UpdateRequest(x, alpha, 1, min(state.rank, d), sqrt_op=state.P,
                        inv_sqrt_op=state.P_inverse, tol=state.tol)
    res = update_correction(req)
    U = res.U
    if U.shape[1] == 0:
        return res, state.P, state.P_inverse, None
    PiU = state.P_inverse.apply(U)
    # (P + a U U^T)^{-1} = P^{-1} - a P^{-1}U (I + a U^T P^{-1} U)^{-1} U^T P^{-1}
    K = np.eye(U.shape[1]) + alpha * (U.T @ PiU)
    w, Q = np.linalg.eigh(0.5 * (K + K.T))
    if w.min() <= 0:
        raise InfeasibleDowndateError(w.min(), "corrected P is not positive definite")
    P_new = PerturbedOperator(state.P, LowRankFactor(U, alpha))
    Pinv_new = PerturbedOperator(state.P_inverse, LowRankFactor(PiU @ (Q / np.sqrt(w)) @ Q.T, -alpha))
    # right factor of the change of P^{-1}: U_new = Y (I - a U K^{-1} U^T P^{-1}) for the kept rows Y
    return res, P_new, Pinv_new, (U, np.linalg.solve(K, PiU.T))


def polar_downdate(state: PolarState, removed_row_index: int) -> PolarState:
    """Polar decomposition after deleting one row of ``X``.

    ``P_- ~ P - U U^T`` comes from a square-root downdate of ``X^T X``; the
    new orthonormal factor reuses the kept rows of ``X P^{-1}`` and costs
    ``O(n d r)``.  Raises :class:`InfeasibleDowndateError` if the remaining
    rows do not have full rank.
    """
    n = state.U_factor.shape[0]
    i = int(removed_row_index)
    if not -n <= i < n:
        raise IndexError("row index out of range")
    x = state.row(i)
    res, P_new, Pinv_new, parts = _polar_step(state, x, -1)
    Y = np.delete(state.U_factor, i, axis=0)
    if parts is not None:
        U, KinvUtPi = parts
        Y = Y + (Y @ U) @ KinvUtPi
    return replace(state, U_factor=Y, P=P_new, P_inverse=Pinv_new, history=state.history + [res])


def polar_update(state: PolarState, new_row) -> PolarState:
    """Polar decomposition after appending `new_row` to ``X``."""
    x = np.asarray(new_row, dtype=float).ravel()
    if x.size != state.P.dim:
        raise ValueError("new_row has the wrong length")
    res, P_new, Pinv_new, parts = _polar_step(state, x, 1)
    Y = np.vstack([state.U_factor, state.P_inverse.apply(x)[None, :]])
    if parts is not None:
        U, KinvUtPi = parts
        Y = Y - (Y @ U) @ KinvUtPi
    return replace(state, U_factor=Y, P=P_new, P_inverse=Pinv_new, history=state.history + [res])


# -- sampling ----------------------------------------------------------------


def gaussian_sample(mu, Q0_inv_sqrt: SymmetricOperator, Z, rank: int, count: int, seed: int = 0,
                    Q0_sqrt: Optional[SymmetricOperator] = None, tol: float = 1e-10):
    """Draw `count` samples of ``N(mu, Q^{-1})`` with ``Q = Q0 + Z Z^T``.

    The inverse square root is approximated by ``Q0^{-1/2} - U U^T``.
    ``Q0^{1/2}`` is taken as the inverse of `Q0_inv_sqrt` unless given.

    Returns
    -------
    ndarray, shape (count, n)
    """
    n = Q0_inv_sqrt.dim
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (n,))
    Z = _cols(Z)
    sqrt_op = Q0_sqrt if Q0_sqrt is not None else InverseOperator(Q0_inv_sqrt)
    res = update_correction(UpdateRequest(Z, 1, -1, min(rank, n), sqrt_op=sqrt_op,
                                          inv_sqrt_op=Q0_inv_sqrt, tol=tol, seed=seed))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((count, n))
    U = res.U
    # operators act on columns; samples are rows, and every map here is symmetric
    x = Q0_inv_sqrt.apply(z.T).T - (z @ U) @ U.T
    return mu + x


# -- Shampoo -----------------------------------------------------------------


@dataclass(frozen=True)
class StepReport:
    t: int
    accepted: bool
    residual_inv_sqrt: float = 0.0
    residual_inv_fourth: float = 0.0
    min_eig: Optional[float] = None
    message: str = ""


@dataclass(frozen=True)
class ShampooTracker:
    """Implicit ``L_t^{-1/2}`` and ``L_t^{-1/4}`` for ``L_t = eps I + sum G_s G_s^T``.

    Both operators are diagonal plus low rank; each accepted step appends one
    negative term of width `step_rank` to each.
    """

    eps: float
    inv_sqrt: DiagonalPlusLowRank
    inv_fourth: DiagonalPlusLowRank
    step_rank: int = 5
    tol: float = 1e-8
    t: int = 0
    seed: int = 0
    reports: Tuple[StepReport, ...] = ()

    @classmethod
    def create(cls, m: int, eps: float = 1e-3, step_rank: int = 5, tol: float = 1e-8,
               compression_cap: Optional[int] = None, seed: int = 0) -> "ShampooTracker":
        """Tracker for ``L_0 = eps I_m``.  The cap defaults to `m` (no loss)."""
        if eps <= 0:
            raise ValueError("eps must be positive")
        cap = m if compression_cap is None else compression_cap
        ones = np.ones(m)
        return cls(eps, DiagonalPlusLowRank(DiagonalOperator(ones * eps ** -0.5), (), cap),
                   DiagonalPlusLowRank(DiagonalOperator(ones * eps ** -0.25), (), cap),
                   step_rank, tol, 0, seed)

    @property
    def m(self) -> int:
        return self.inv_sqrt.dim


def shampoo_step(tr: ShampooTracker, G_t) -> ShampooTracker:
    """Fold ``G_t G_t^T`` into the tracked roots.

    Step one updates ``L^{-1/2}`` (sign -1, ``L^{1/2}`` reached through the
    inverse of the tracked operator).  Step two treats the new ``L^{-1/2}``
    as a downdate of the old one by ``U_t U_t^T`` and takes its square root,
    starting from the tracked ``L^{-1/4}``.  A failed feasibility check
    rejects the whole step and leaves both operators as they were.
    """
    G = _cols(G_t)
    if G.shape[0] != tr.m:
        raise ValueError("gradient block has the wrong number of rows")
    t = tr.t + 1
    seed = tr.seed + t
    if not np.any(G):
        return replace(tr, t=t, reports=tr.reports + (StepReport(t, True),))
    r = min(tr.step_rank, tr.m)
    try:
        res1 = update_correction(UpdateRequest(G, 1, -1, r, sqrt_op=InverseOperator(tr.inv_sqrt),
                                               inv_sqrt_op=tr.inv_sqrt, tol=tr.tol, seed=seed))
        U_t = res1.U
        res2 = update_correction(UpdateRequest(U_t, -1, 1, r, sqrt_op=tr.inv_fourth,
                                               inv_sqrt_op=InverseOperator(tr.inv_fourth),
                                               tol=tr.tol, seed=seed))
    except InfeasibleDowndateError as exc:
        log.warning("shampoo step %d rejected: %s", t, exc)
        rep = StepReport(t, False, min_eig=exc.min_eig, message=str(exc))
        return replace(tr, t=t, reports=tr.reports + (rep,))
    rep = StepReport(t, True, res1.residual_norm, res2.residual_norm, res2.min_eig)
    return replace(tr, t=t, inv_sqrt=tr.inv_sqrt.append(res1.correction),
                   inv_fourth=tr.inv_fourth.append(res2.correction), reports=tr.reports + (rep,))


def shampoo_precondition(W, G, L_inv_fourth: SymmetricOperator, R_inv_fourth, eta: float):
    """One Shampoo parameter step ``W - eta L^{-1/4} G R^{-1/4}`` (demo only)."""
    left = L_inv_fourth.apply(G)
    right = R_inv_fourth.apply(left.T).T if isinstance(R_inv_fourth, SymmetricOperator) else left @ R_inv_fourth
    return W - eta * right


# -- generalized least squares -----------------------------------------------


def gls_weight_root(D: DiagonalOperator, Z, alpha: int, rank: int, tol: float = 1e-10,
                    seed: int = 0) -> Tuple[DiagonalOperator, LowRankFactor]:
    """``W^{1/2} = C^{-1/2} ~ D^{-1/2} - alpha U U^T`` for ``C = D + alpha Z Z^T``.

    Returns ``(D^{-1/2}, correction)`` where the correction carries the sign
    ``-alpha``.  For ``alpha = -1`` the covariance must stay positive definite.
    """
    Z = _cols(Z)
    req = UpdateRequest(Z, alpha, -1, min(rank, D.dim), sqrt_op=D.power(0.5), inv_sqrt_op=D.power(-0.5),
                        tol=tol, seed=seed)
    res = update_correction(req)
    return D.power(-0.5), res.correction


def gls_solve(X, y, D: DiagonalOperator, Z, alpha: int, rank: int, tol: float = 1e-10, seed: int = 0):
    """GLS coefficients for noise covariance ``C = D + alpha Z Z^T``.

    Whitens ``X`` and ``y`` with the approximate ``C^{-1/2}`` (thin products
    only) and solves the ordinary least-squares problem.  A rank-deficient
    ``X`` gets the least-norm solution and a warning.
    """
    X = _cols(X)
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != D.dim or y.size != D.dim:
        raise ValueError("dimension mismatch")
    Dm, corr = gls_weight_root(D, Z, alpha, rank, tol, seed)
    Xy = np.column_stack([X, y])
    Wxy = Dm.apply(Xy) + corr.apply(Xy)
    w, _, rk, _ = np.linalg.lstsq(Wxy[:, :-1], Wxy[:, -1], rcond=None)
    if rk < X.shape[1]:
        warnings.warn(f"design matrix has rank {rk} < {X.shape[1]}; returning the least-norm solution",
                      RuntimeWarning, stacklevel=2)
    return w

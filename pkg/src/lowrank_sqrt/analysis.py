"""Error and decay diagnostics for square-root corrections.

Residual of an approximate correction ``C = U U^T`` to ``A^{beta/2}``::

    R(C) = V V^T - A^{beta/2} C - C A^{beta/2} - alpha*beta C^2

with ``(A + alpha Z Z^T)^beta = A^beta + alpha*beta V V^T``.  Its Frobenius
norm is exactly the backward error, and bounds the forward error through
the square-root perturbation inequalities.  The decay bounds cap how fast
the singular values of the exact correction must fall off.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import InfeasibleDowndateError, NotPSDError
from .operators import DenseSymmetric, LowRankFactor, SymmetricOperator, dense_principal_root
from .riccati import residual_norm

__all__ = [
    "ErrorReport",
    "DecayBoundParams",
    "residual_norm_fro",
    "error_report",
    "kappa_hat",
    "decay_bound_factor",
    "exact_delta",
    "exact_delta_spectrum",
    "dense_residual",
]


@dataclass(frozen=True)
class ErrorReport:
    residual_fro: float
    backward_fro: float
    forward_fro_bound: float
    forward_two_bound: float
    lambda_min_used: float
    lambda_min_source: str = "user"


@dataclass(frozen=True)
class DecayBoundParams:
    """Spectral data entering the decay bound.

    ``mode="sqrt"`` needs `norm_A`, `norm_D`, `lambda_min_A`.
    ``mode="inv_sqrt"`` needs `norm_D`, `lambda_min_A`, `lambda_max_A` and
    `lambda_min_B`, the smallest eigenvalue of ``B = A + D``.
    """

    mode: str
    norm_A: float = 0.0
    norm_D: float = 0.0
    lambda_min_A: float = 0.0
    lambda_max_A: Optional[float] = None
    lambda_min_B: Optional[float] = None
    k: int = 1

    def __post_init__(self):
        if self.mode not in ("sqrt", "inv_sqrt"):
            raise ValueError("mode must be 'sqrt' or 'inv_sqrt'")
        if self.lambda_min_A <= 0:
            raise ValueError("lambda_min_A must be positive")
        if self.mode == "inv_sqrt":
            if not self.lambda_max_A or self.lambda_max_A <= 0:
                raise ValueError("inv_sqrt mode needs a positive lambda_max_A")
            if not self.lambda_min_B or self.lambda_min_B <= 0:
                raise ValueError("inv_sqrt mode needs a positive lambda_min_B")

    @classmethod
    def from_dense(cls, A, Z, alpha: int = 1, beta: int = 1) -> "DecayBoundParams":
        """Exact spectral quantities for a dense ``A`` and ``D = alpha Z Z^T``."""
        A = np.asarray(A, dtype=float)
        Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
        wA = np.linalg.eigvalsh(A)
        D = alpha * (Z @ Z.T)
        norm_D = float(np.linalg.norm(Z, 2) ** 2)
        if beta == 1:
            return cls("sqrt", norm_A=float(wA[-1]), norm_D=norm_D, lambda_min_A=float(wA[0]), k=Z.shape[1])
        wB = np.linalg.eigvalsh(A + D)
        return cls("inv_sqrt", norm_A=float(wA[-1]), norm_D=norm_D, lambda_min_A=float(wA[0]),
                   lambda_max_A=float(wA[-1]), lambda_min_B=float(wB[0]), k=Z.shape[1])


def residual_norm_fro(sqrt_op_beta: SymmetricOperator, Ctilde: LowRankFactor, V, alpha_beta: int) -> float:
    """``||R(C)||_F`` for ``C = U U^T`` using products with thin blocks only."""
    if Ctilde.sign != 1:
        raise ValueError("Ctilde must be given as a PSD factor")
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[:, None]
    n = sqrt_op_beta.dim
    if Ctilde.dim != n or V.shape[0] != n:
        raise ValueError("dimension mismatch")
    # R(C) = -(E C + C E + ab C^2 - V V^T), the Riccati residual with G = V^T
    return residual_norm(sqrt_op_beta, Ctilde.factor, V, alpha_beta)


def error_report(residual_fro: float, n: int, lambda_min: float, source: str = "user") -> ErrorReport:
    """Backward error and forward error bounds from a residual norm.

    Parameters
    ----------
    residual_fro : float
        ``||R(C)||_F``.
    n : int
        Matrix dimension.
    lambda_min : float
        Smallest eigenvalue of ``(A + alpha Z Z^T)^beta``.
    source : str
        Where `lambda_min` came from, kept for the report.
    """
    if lambda_min <= 0:
        raise ValueError("lambda_min must be positive")
    if residual_fro < 0:
        raise ValueError("residual_fro must be nonnegative")
    fro = math.sqrt(math.sqrt(n) * residual_fro)
    two = min(residual_fro / math.sqrt(lambda_min), fro)
    return ErrorReport(residual_fro, residual_fro, fro, two, float(lambda_min), source)


def kappa_hat(params: DecayBoundParams) -> float:
    if params.mode == "sqrt":
        mu = math.sqrt(params.lambda_min_A)
        delta = math.sqrt(params.norm_A + params.norm_D)
        return 2.0 * (delta + mu / 2.0) / mu
    mu = math.sqrt(1.0 / params.lambda_max_A)
    delta = math.sqrt((1.0 + params.norm_D / params.lambda_min_B) / params.lambda_min_A)
    return 2.0 * (delta + mu / 2.0) / mu


def decay_bound_factor(params: DecayBoundParams, l: int) -> float:
    """``4 exp(-pi^2 l / log(4 kappa_hat))``, so that ``sigma_{j+kl} <= factor * sigma_j``.

    Values above one are returned as is.
    """
    if l < 0:
        raise ValueError("l must be nonnegative")
    kh = kappa_hat(params)
    if kh <= 0.25:
        raise ValueError(f"kappa_hat={kh} gives a nonpositive log(4 kappa_hat)")
    return 4.0 * math.exp(-(math.pi ** 2) * l / math.log(4.0 * kh))


def _dense_pair(A, Z, alpha):
    A = A.entries if isinstance(A, DenseSymmetric) else np.asarray(A, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    B = A + alpha * (Z @ Z.T)
    wB = np.linalg.eigvalsh(0.5 * (B + B.T))
    if wB[0] <= 0:
        raise InfeasibleDowndateError(wB[0] / max(abs(wB[-1]), 1e-300),
                                      f"A + alpha Z Z^T is not positive definite (min eigenvalue {wB[0]:.3e})")
    return A, B


def exact_delta(A, Z, alpha: int, beta: int) -> np.ndarray:
    """Dense ``(A + alpha Z Z^T)^{beta/2} - A^{beta/2}``.

    Subtracting the two roots loses everything below ``eps * ||A^{beta/2}||``,
    which hides the tail of the spectrum.  Instead ``Delta`` is taken from

        A^{1/2} Delta + Delta B^{1/2} = alpha Z Z^T,

    solved entrywise in the eigenbases of ``A`` and ``B`` (all denominators
    positive), and ``B^{-1/2} - A^{-1/2} = -A^{-1/2} Delta B^{-1/2}``.
    """
    A, B = _dense_pair(A, Z, alpha)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    wa, Qa = np.linalg.eigh(0.5 * (A + A.T))
    if wa[0] <= 0:
        raise NotPSDError(f"A is not positive definite (min eigenvalue {wa[0]:.3e})")
    Zt = Qa.T @ Z
    Bt = np.diag(wa) + alpha * (Zt @ Zt.T)
    wb, Qb = np.linalg.eigh(0.5 * (Bt + Bt.T))
    sa, sb = np.sqrt(wa), np.sqrt(wb)
    Y = (alpha * Zt @ (Zt.T @ Qb)) / (sa[:, None] + sb[None, :])
    if beta == -1:
        Y = -(Y / sa[:, None]) / sb[None, :]
    D = Qa @ (Y @ Qb.T) @ Qa.T
    return 0.5 * (D + D.T)


def exact_delta_spectrum(A, Z, alpha: int, beta: int) -> np.ndarray:
    """Singular values of the exact correction, descending."""
    D = exact_delta(A, Z, alpha, beta)
    return np.sort(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T))))[::-1]


def dense_residual(A, Z, alpha: int, beta: int, C) -> np.ndarray:
    """Dense ``R(C)`` for testing; ``V V^T`` is taken as ``alpha*beta (B^beta - A^beta)``."""
    A, B = _dense_pair(A, Z, alpha)
    Ab2 = dense_principal_root(A, 2, beta == -1).entries
    if beta == 1:
        VVt = alpha * (B - A)
    else:
        VVt = -alpha * (np.linalg.inv(B) - np.linalg.inv(A))
    ab = alpha * beta
    return VVt - Ab2 @ C - C @ Ab2 - ab * (C @ C)

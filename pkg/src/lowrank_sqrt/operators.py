"""Implicit symmetric operators and low-rank factors.

Everything in the library talks to matrices through :class:`SymmetricOperator`,
which only promises products with vectors or thin blocks (and optionally
solves).  Diagonal and diagonal-plus-low-rank operators are the workhorses;
:class:`DenseSymmetric` materializes a matrix and is meant as a test oracle.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from .exceptions import NotPSDError, SingularOperatorError

__all__ = [
    "SymmetricOperator",
    "DiagonalOperator",
    "DiagonalPlusLowRank",
    "DenseSymmetric",
    "InverseOperator",
    "PerturbedOperator",
    "LowRankFactor",
    "smw_apply_inverse",
    "compress",
    "dense_principal_root",
]

# Eigenvalues in [-PSD_TOL * ||m||_2, 0] are treated as round-off zeros.
PSD_TOL = 1e-10


def _as_block(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[:, None], True
    if x.ndim != 2:
        raise ValueError(f"expected a vector or a 2-d block, got shape {x.shape}")
    return x, False


class SymmetricOperator:
    """Implicit symmetric linear map on R^n.

    Parameters
    ----------
    dim : int
        Dimension ``n``.
    apply : callable
        Maps an ``(n, m)`` block to an ``(n, m)`` block.
    apply_inverse : callable, optional
        Same contract as `apply` for the inverse map.
    cost_hint : float, optional
        Abstract cost of one product with a vector; used for reporting.

    Both callables only ever receive 2-d blocks; :meth:`apply` and
    :meth:`apply_inverse` accept vectors too and reshape for them.
    """

    def __init__(
        self,
        dim: int,
        apply: Optional[Callable] = None,
        apply_inverse: Optional[Callable] = None,
        cost_hint: Optional[float] = None,
    ):
        if dim <= 0:
            raise ValueError("dim must be positive")
        self.dim = int(dim)
        self._apply_fn = apply
        self._apply_inverse_fn = apply_inverse
        self.cost_hint = float(dim * dim) if cost_hint is None else float(cost_hint)

    # subclasses override these two
    def _apply(self, X):
        if self._apply_fn is None:
            raise NotImplementedError
        return self._apply_fn(X)

    def _apply_inverse(self, X):
        if self._apply_inverse_fn is None:
            raise NotImplementedError("operator has no inverse")
        return self._apply_inverse_fn(X)

    @property
    def has_inverse(self) -> bool:
        return self._apply_inverse_fn is not None

    def _check(self, X):
        if X.shape[0] != self.dim:
            raise ValueError(f"dimension mismatch: operator is {self.dim}, block has {X.shape[0]} rows")

    def apply(self, x):
        X, vec = _as_block(x)
        self._check(X)
        Y = np.asarray(self._apply(X), dtype=float)
        return Y[:, 0] if vec else Y

    def apply_inverse(self, x):
        X, vec = _as_block(x)
        self._check(X)
        Y = np.asarray(self._apply_inverse(X), dtype=float)
        return Y[:, 0] if vec else Y

    def __matmul__(self, x):
        return self.apply(x)

    def diagonal(self) -> Optional[np.ndarray]:
        """Diagonal of the operator if cheaply available, else ``None``."""
        return None

    def inverse(self) -> "SymmetricOperator":
        """The inverse map, as an operator (no work is done up front)."""
        if not self.has_inverse:
            raise NotImplementedError("operator has no inverse")
        return InverseOperator(self)

    def to_dense(self) -> np.ndarray:
        """Materialize by applying to the identity. Test scale only."""
        M = self.apply(np.eye(self.dim))
        return 0.5 * (M + M.T)

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class InverseOperator(SymmetricOperator):
    """View of ``op^{-1}`` that swaps the roles of apply and apply_inverse."""

    def __init__(self, op: SymmetricOperator):
        # op may lack apply_inverse; only apply_inverse of the view is needed then
        super().__init__(op.dim, cost_hint=op.cost_hint)
        self.op = op

    @property
    def has_inverse(self):
        return True

    def _apply(self, X):
        return self.op._apply_inverse(X)

    def _apply_inverse(self, X):
        return self.op._apply(X)

    def diagonal(self):
        d = self.op.diagonal()
        # reciprocal diagonal is only a preconditioning hint, exact for diagonal ops
        return None if d is None else 1.0 / d

    def inverse(self):
        return self.op


@dataclass(frozen=True)
class LowRankFactor:
    """Thin factor ``U`` (n x r) with a sign, representing ``sign * U U^T``."""

    factor: np.ndarray
    sign: int = 1

    def __post_init__(self):
        U = np.asarray(self.factor, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if U.ndim != 2:
            raise ValueError("factor must be 2-d")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if U.shape[1] > U.shape[0]:
            raise ValueError(f"factor is wider than tall: {U.shape}")
        if not np.all(np.isfinite(U)):
            raise ValueError("factor has non-finite entries")
        object.__setattr__(self, "factor", U)

    @classmethod
    def empty(cls, n: int, sign: int = 1) -> "LowRankFactor":
        return cls(np.zeros((n, 0)), sign)

    @property
    def dim(self) -> int:
        return self.factor.shape[0]

    @property
    def width(self) -> int:
        return self.factor.shape[1]

    def apply(self, x):
        U = self.factor
        return self.sign * (U @ (U.T @ x))

    def to_dense(self) -> np.ndarray:
        return self.sign * (self.factor @ self.factor.T)


class DiagonalOperator(SymmetricOperator):
    """Diagonal SPD operator."""

    def __init__(self, entries):
        d = np.asarray(entries, dtype=float).ravel()
        if d.size == 0 or not np.all(d > 0):
            raise ValueError("diagonal entries must be strictly positive")
        super().__init__(d.size, cost_hint=d.size)
        self.entries = d

    @property
    def has_inverse(self):
        return True

    def _apply(self, X):
        return self.entries[:, None] * X

    def _apply_inverse(self, X):
        return X / self.entries[:, None]

    def diagonal(self):
        return self.entries

    def power(self, p: float) -> "DiagonalOperator":
        return DiagonalOperator(self.entries ** p)

    def to_dense(self):
        return np.diag(self.entries)


def _smw_parts(base, f):
    F = f.factor
    BF = base.apply_inverse(F)
    K = np.eye(F.shape[1]) + f.sign * (F.T @ BF)
    try:
        c = scipy.linalg.cho_factor(0.5 * (K + K.T), check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularOperatorError("operator singular or indefinite") from exc
    return BF, c


def _smw_solve(base, f, parts, X):
    BX = base.apply_inverse(X)
    if f.width == 0:
        return BX
    BF, c = parts
    return BX - f.sign * (BF @ scipy.linalg.cho_solve(c, f.factor.T @ BX, check_finite=False))


def smw_apply_inverse(base: SymmetricOperator, f: LowRankFactor, x):
    """Solve ``(base + s F F^T) y = x`` by the Sherman-Morrison-Woodbury formula.

    Uses ``(B + sFF^T)^{-1} = B^{-1} - s B^{-1}F (I + s F^T B^{-1} F)^{-1} F^T B^{-1}``,
    one ``B^{-1}`` product per column plus an ``r x r`` Cholesky solve.
    The inner matrix must be positive definite, otherwise
    :class:`SingularOperatorError` is raised.
    """
    X, vec = _as_block(x)
    if f.dim != base.dim or X.shape[0] != base.dim:
        raise ValueError("dimension mismatch")
    parts = _smw_parts(base, f) if f.width else None
    Y = _smw_solve(base, f, parts, X)
    return Y[:, 0] if vec else Y


class PerturbedOperator(SymmetricOperator):
    """``base + s U U^T`` for an arbitrary base; the inverse goes through Woodbury.

    Needs ``base.apply_inverse`` for :meth:`apply_inverse`.
    """

    def __init__(self, base: SymmetricOperator, term: LowRankFactor):
        if term.dim != base.dim:
            raise ValueError("dimension mismatch")
        super().__init__(base.dim, cost_hint=base.cost_hint + 2 * base.dim * term.width)
        self.base = base
        self.term = term

    @property
    def has_inverse(self):
        return self.base.has_inverse

    def _apply(self, X):
        return self.base.apply(X) + self.term.apply(X)

    @cached_property
    def _parts(self):
        return _smw_parts(self.base, self.term) if self.term.width else None

    def _apply_inverse(self, X):
        return _smw_solve(self.base, self.term, self._parts, X)

    def diagonal(self):
        d = self.base.diagonal()
        if d is None:
            return None
        U = self.term.factor
        return d + self.term.sign * np.einsum("ij,ij->i", U, U)


class DiagonalPlusLowRank(SymmetricOperator):
    """``D + sum_j s_j U_j U_j^T`` with ``D`` diagonal positive.

    Terms are kept as given and only merged by :func:`compress`; appending a
    term through :meth:`append` compresses once the total width would exceed
    `compression_cap`.

    Parameters
    ----------
    base : DiagonalOperator
    terms : sequence of LowRankFactor
    compression_cap : int, optional
        Maximum total number of columns. ``None`` disables compression.
    discarded_mass : float
        Running total of eigenvalue mass dropped by past compressions.
    """

    def __init__(
        self,
        base: DiagonalOperator,
        terms: Sequence[LowRankFactor] = (),
        compression_cap: Optional[int] = None,
        discarded_mass: float = 0.0,
    ):
        super().__init__(base.dim)
        self.base = base
        self.terms = tuple(t for t in terms if t.width > 0)
        for t in self.terms:
            if t.dim != base.dim:
                raise ValueError("term dimension does not match base")
        if compression_cap is not None and compression_cap < 1:
            raise ValueError("compression_cap must be >= 1")
        self.compression_cap = compression_cap
        self.discarded_mass = float(discarded_mass)
        self.cost_hint = float(base.dim * (1 + 2 * self.width))

    @property
    def width(self) -> int:
        return sum(t.width for t in self.terms)

    @property
    def has_inverse(self):
        return True

    @cached_property
    def _stacked(self):
        if not self.terms:
            return np.zeros((self.dim, 0)), np.zeros(0)
        F = np.hstack([t.factor for t in self.terms])
        s = np.concatenate([np.full(t.width, float(t.sign)) for t in self.terms])
        return F, s

    def _apply(self, X):
        Y = self.base._apply(X)
        for t in self.terms:
            Y = Y + t.apply(X)
        return Y

    @cached_property
    def _inverse_parts(self):
        # B^{-1}F and LU of the inner matrix, cached: the operator is immutable
        F, s = self._stacked
        BF = self.base.apply_inverse(F)
        K = np.diag(s) + F.T @ BF
        lu = scipy.linalg.lu_factor(K, check_finite=False)
        scale = max(1.0, np.abs(K).max()) if K.size else 1.0
        if K.size and (not np.all(np.isfinite(lu[0])) or np.min(np.abs(np.diag(lu[0]))) <= 1e-14 * scale):
            raise SingularOperatorError("operator singular or indefinite")
        return F, BF, lu

    def _apply_inverse(self, X):
        BX = self.base.apply_inverse(X)
        if not self.terms:
            return BX
        F, BF, lu = self._inverse_parts
        return BX - BF @ scipy.linalg.lu_solve(lu, F.T @ BX, check_finite=False)

    def diagonal(self):
        F, s = self._stacked
        return self.base.entries + (F * F) @ s

    def append(self, term: LowRankFactor) -> "DiagonalPlusLowRank":
        """New operator with `term` added, compressed if it would exceed the cap."""
        op = DiagonalPlusLowRank(self.base, self.terms + (term,), self.compression_cap, self.discarded_mass)
        if self.compression_cap is not None and op.width > self.compression_cap:
            op, _ = compress(op, self.compression_cap)
        return op

    def to_dense(self):
        M = np.diag(self.base.entries)
        for t in self.terms:
            M = M + t.to_dense()
        return M


def compress(op: DiagonalPlusLowRank, cap: int):
    """Merge the terms of `op` and keep the ``cap`` largest-magnitude eigenpairs.

    The signed sum ``F diag(s) F^T`` is diagonalized through a QR of ``F``
    (so only ``width x width`` eigenproblems are solved) and split back into
    a positive and a negative factor.

    Returns
    -------
    compressed : DiagonalPlusLowRank
    discarded : float
        Sum of absolute values of the dropped eigenvalues; bounds the change
        of the operator in the nuclear (hence also Frobenius and 2-) norm.
    """
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if op.width <= cap:
        return op, 0.0
    F, s = op._stacked
    Q, R = np.linalg.qr(F)
    core = (R * s) @ R.T
    lam, V = np.linalg.eigh(0.5 * (core + core.T))
    order = np.argsort(-np.abs(lam), kind="stable")
    keep, drop = order[:cap], order[cap:]
    discarded = float(np.sum(np.abs(lam[drop])))
    lam_k = lam[keep]
    vecs = Q @ V[:, keep]
    terms = []
    pos, neg = lam_k > 0, lam_k < 0
    if np.any(pos):
        terms.append(LowRankFactor(vecs[:, pos] * np.sqrt(lam_k[pos]), 1))
    if np.any(neg):
        terms.append(LowRankFactor(vecs[:, neg] * np.sqrt(-lam_k[neg]), -1))
    out = DiagonalPlusLowRank(op.base, terms, op.compression_cap, op.discarded_mass + discarded)
    return out, discarded


class DenseSymmetric(SymmetricOperator):
    """Explicit symmetric matrix. Used as the reference oracle in tests."""

    def __init__(self, entries, check: bool = True):
        M = np.asarray(entries, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("expected a square matrix")
        if check:
            scale = max(1.0, np.abs(M).max())
            if np.abs(M - M.T).max() > 1e-14 * scale * M.shape[0]:
                raise ValueError("matrix is not symmetric")
        super().__init__(M.shape[0])
        self.entries = 0.5 * (M + M.T)

    @cached_property
    def eigh(self):
        return np.linalg.eigh(self.entries)

    @property
    def has_inverse(self):
        return True

    def _apply(self, X):
        return self.entries @ X

    def _apply_inverse(self, X):
        w, V = self.eigh
        return V @ ((V.T @ X) / w[:, None])

    def diagonal(self):
        return np.diag(self.entries).copy()

    def to_dense(self):
        return self.entries.copy()

    def eigvalsh(self):
        return self.eigh[0]


def dense_principal_root(m, p: int = 2, inverse: bool = False) -> DenseSymmetric:
    """Principal ``p``-th root (or inverse root) by eigendecomposition.

    Eigenvalues in ``[-1e-10 ||m||_2, 0]`` are clamped to zero. A more negative
    eigenvalue raises :class:`NotPSDError`, as does a zero eigenvalue when
    `inverse` is set.
    """
    if not isinstance(m, DenseSymmetric):
        m = DenseSymmetric(m)
    w, V = m.eigh
    norm = max(np.abs(w).max(), 0.0) if w.size else 0.0
    if w.size and w.min() < -PSD_TOL * norm:
        raise NotPSDError(f"matrix not PSD (min eigenvalue {w.min():.3e})")
    w = np.clip(w, 0.0, None)
    if inverse:
        if np.any(w <= 0):
            raise NotPSDError("matrix not PD, inverse root undefined")
        f = w ** (-1.0 / p)
    else:
        f = w ** (1.0 / p)
    return DenseSymmetric((V * f) @ V.T, check=False)

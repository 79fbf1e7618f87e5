"""Low-rank PSD solutions of ``E X + X E + alpha X^2 = G^T G``.

The unknown is kept as ``X = Y Y^T`` with a thin ``Y`` and the squared
residual ``F(Y) = 0.25 ||S(Y)||_F^2`` is minimized in factor space, where

    S(Y) = E Y Y^T + Y Y^T E + alpha (Y Y^T)^2 - G^T G.

``S`` is never formed.  It is carried as ``W M W^T`` with
``W = [E Y, Y, G^T]`` and a small symmetric core ``M``; norms go through a
QR of ``W`` so they stay accurate when ``S`` is tiny compared to its terms.
The only access to ``E`` is products with thin blocks.

The solver grows the width of ``Y`` one column at a time.  At each width a
damped Gauss-Newton (Levenberg-Marquardt) iteration is run, each step solved
matrix-free by preconditioned CG, and followed by a Galerkin projection onto
``span(Y)``, where the small projected equation has a closed-form solution.
Every accepted step decreases ``F``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .exceptions import NoPSDSolutionError, SolverConfigError
from .operators import DenseSymmetric, PSD_TOL, SymmetricOperator

__all__ = [
    "RiccatiProblem",
    "RiccatiSolution",
    "residual_norm",
    "riccati_residual_norm",
    "riccati_curvature",
    "riccati_objective",
    "riccati_gradient",
    "riccati_lr_solve",
    "dense_riccati_oracle",
    "projected_riccati_solution",
]

log = logging.getLogger(__name__)

CG_MAXITER = 50
CG_RTOL = 0.1


@dataclass
class RiccatiProblem:
    """Inputs of the low-rank Riccati solver.

    Attributes
    ----------
    E : SymmetricOperator
        Symmetric positive definite coefficient.
    G : ndarray, shape (k, n)
        Right-hand side factor; the equation has ``G^T G`` on the right.
    alpha : {+1, -1}
    target_rank : int
        Maximum width of the returned factor.
    tol : float
        Target relative residual ``||S(Y)||_F / ||G^T G||_F``.
    max_outer : int, optional
        Number of width increments; defaults to ``target_rank``.
    max_inner : int
        Gauss-Newton iterations allowed at each width.
    seed : int
        Seeds the perturbation added to each new column.
    preconditioner : {"block", "kronecker", "none"}
        ``"block"`` uses ``E.diagonal()`` (falls back to a scalar estimate);
        ``"kronecker"`` uses ``E^{-2}`` and needs ``E.apply_inverse``.
    Y0 : ndarray, optional
        Warm start.  Rank continuation then starts from its width.
    """

    E: SymmetricOperator
    G: np.ndarray
    alpha: int = 1
    target_rank: int = 1
    tol: float = 1e-8
    max_outer: Optional[int] = None
    max_inner: int = 500
    seed: int = 0
    preconditioner: str = "block"
    Y0: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        G = np.asarray(self.G, dtype=float)
        if G.ndim == 1:
            G = G[None, :]
        self.G = G
        if self.alpha not in (1, -1):
            raise ValueError("alpha must be +1 or -1")
        if G.shape[1] != self.E.dim:
            raise ValueError(f"dimension mismatch: G is {G.shape}, E is {self.E.dim}")
        if G.shape[0] > G.shape[1]:
            raise ValueError("G must have at most n rows")
        if not 0 <= self.target_rank <= self.E.dim:
            raise ValueError("target_rank must lie in [0, n]")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.preconditioner not in ("block", "kronecker", "none"):
            raise SolverConfigError(f"unknown preconditioner {self.preconditioner!r}")
        if self.Y0 is not None:
            Y0 = np.asarray(self.Y0, dtype=float)
            if Y0.ndim == 1:
                Y0 = Y0[:, None]
            if Y0.shape[0] != self.E.dim or Y0.shape[1] > self.target_rank:
                raise ValueError(f"Y0 must be n x (at most target_rank), got {Y0.shape}")
            self.Y0 = Y0

    @property
    def n(self) -> int:
        return self.E.dim


@dataclass
class RiccatiSolution:
    """Factor ``Y`` with ``X = Y Y^T`` and the solver diagnostics.

    ``residual_history`` holds the relative residual after every accepted
    step (it is nonincreasing). ``e_applies`` counts columns multiplied by
    ``E`` (or ``E^{-1}``), the unit of the cost model.
    """

    Y: np.ndarray
    residual_history: List[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    e_applies: int = 0

    @property
    def residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else float("nan")

    @property
    def rank(self) -> int:
        return self.Y.shape[1]


class _CountingE:
    """Wraps E so the solver can report how many columns it pushed through it."""

    def __init__(self, E):
        self.E = E
        self.count = 0

    def apply(self, X):
        self.count += X.shape[1]
        return self.E.apply(X)

    def apply_inverse(self, X):
        self.count += X.shape[1]
        return self.E.apply_inverse(X)


def _residual_factors(EY, Y, Gt, alpha):
    """``S = W M W^T`` with ``W = [EY, Y, G^T]``."""
    r, k = Y.shape[1], Gt.shape[1]
    W = np.hstack([EY, Y, Gt])
    M = np.zeros((2 * r + k, 2 * r + k))
    I = np.eye(r)
    M[:r, r:2 * r] = I
    M[r:2 * r, :r] = I
    M[r:2 * r, r:2 * r] = alpha * (Y.T @ Y)
    M[2 * r:, 2 * r:] = -np.eye(k)
    return W, M


def _lowrank_sym_fro(W, M):
    """``||W M W^T||_F`` through a QR of ``W``."""
    if W.shape[1] == 0:
        return 0.0
    R = np.linalg.qr(W, mode="r")
    return float(np.linalg.norm(R @ M @ R.T))


def _lowrank_sym_eig(W, M):
    """Nonzero eigenpairs of ``W M W^T``."""
    Q, R = np.linalg.qr(W)
    core = R @ M @ R.T
    lam, V = np.linalg.eigh(0.5 * (core + core.T))
    return lam, Q @ V


def _check_factor(p, Y):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != p.n:
        raise ValueError(f"dimension mismatch: factor {Y.shape} for n={p.n}")
    return Y


def residual_norm(E, Y, Gt, alpha) -> float:
    """``||E YY^T + YY^T E + alpha (YY^T)^2 - Gt Gt^T||_F`` from thin blocks.

    Cost is ``Y.shape[1]`` products with ``E`` plus ``O(n (2r + k)^2)``.
    """
    W, M = _residual_factors(E.apply(Y), Y, Gt, alpha)
    return _lowrank_sym_fro(W, M)


def riccati_residual_norm(p: RiccatiProblem, Y) -> float:
    """``||E YY^T + YY^T E + alpha (YY^T)^2 - G^T G||_F`` using thin algebra only."""
    return residual_norm(p.E, _check_factor(p, Y), p.G.T, p.alpha)


def riccati_objective(p: RiccatiProblem, Y) -> float:
    """``F(Y) = 0.25 ||S(Y)||_F^2``."""
    return 0.25 * riccati_residual_norm(p, Y) ** 2


def _gradient_from(E, EY, Y, Gt, EGt, alpha, W=None, M=None):
    # (E S + S E) Y + alpha (S YY^T + YY^T S) Y with S = W M W^T
    if W is None:
        W, M = _residual_factors(EY, Y, Gt, alpha)
    EW = np.hstack([E.apply(EY), EY, EGt])
    SY = W @ (M @ (W.T @ Y))
    ESY = EW @ (M @ (W.T @ Y))
    SEY = W @ (M @ (W.T @ EY))
    g = ESY + SEY
    if alpha:
        YtY = Y.T @ Y
        g = g + alpha * (SY @ YtY + Y @ (Y.T @ SY))
    return g


def riccati_gradient(p: RiccatiProblem, Y) -> np.ndarray:
    """Euclidean gradient of ``0.25 ||S(Y)||_F^2``.

    ``(E S + S E) Y + alpha (S Y Y^T + Y Y^T S) Y``, evaluated without
    forming ``S``.
    """
    Y = _check_factor(p, Y)
    Gt = p.G.T
    return _gradient_from(p.E, p.E.apply(Y), Y, Gt, p.E.apply(Gt), p.alpha)


def riccati_curvature(p: RiccatiProblem, Y, D) -> np.ndarray:
    """Directional derivative of the gradient along ``D`` (Hessian-vector product).

    Exact second-order term included, so this is the full Euclidean Hessian
    applied to ``D``, not the Gauss-Newton approximation.
    """
    Y = _check_factor(p, Y)
    D = _check_factor(p, D)
    E, a, Gt = p.E, p.alpha, p.G.T
    EY, ED = E.apply(Y), E.apply(D)
    W, M = _residual_factors(EY, Y, Gt, a)
    S = lambda X: W @ (M @ (W.T @ X))
    ES = lambda X: np.hstack([E.apply(EY), EY, E.apply(Gt)]) @ (M @ (W.T @ X))
    # dS along D, as T = V N V^T
    V, N = _jacobian_factors(ED, EY, D, Y, a)
    T = lambda X: V @ (N @ (V.T @ X))
    ET = lambda X: np.hstack([E.apply(ED), E.apply(EY), ED, EY]) @ (N @ (V.T @ X))
    YtY, DtY = Y.T @ Y, D.T @ Y
    # d/dt of (ES + SE)Y + a (S YY^T + YY^T S) Y
    out = ET(Y) + T(EY) + ES(D) + S(ED)
    out = out + a * (T(Y) @ YtY + Y @ (Y.T @ T(Y)))
    SY, SD = S(Y), S(D)
    out = out + a * (SD @ YtY + SY @ (DtY + DtY.T) + D @ (Y.T @ SY) + Y @ (D.T @ SY) + Y @ (Y.T @ SD))
    return out


def _jacobian_factors(ED, EY, D, Y, alpha):
    """``J D = V N V^T`` with ``V = [E D, E Y, D, Y]``.

    ``J D = (E + aYY^T)(DY^T + YD^T) + (DY^T + YD^T)(E + aYY^T)``.
    """
    r = Y.shape[1]
    V = np.hstack([ED, EY, D, Y])
    N = np.zeros((4 * r, 4 * r))
    I = np.eye(r)
    b = [slice(i * r, (i + 1) * r) for i in range(4)]
    N[b[0], b[3]] = I
    N[b[3], b[0]] = I
    N[b[1], b[2]] = I
    N[b[2], b[1]] = I
    if alpha:
        YtY = Y.T @ Y
        N[b[2], b[3]] = alpha * YtY
        N[b[3], b[2]] = alpha * YtY
        DtY = D.T @ Y
        N[b[3], b[3]] = alpha * (DtY + DtY.T)
    return V, N


def projected_riccati_solution(E_hat, C_hat, alpha):
    """Closed-form PSD solution of ``E X + X E + alpha X^2 = C`` for small dense data.

    ``X = alpha ((E^2 + alpha C)^{1/2} - E)``, with ``E`` symmetric.  For
    ``alpha = -1`` this needs ``E^2 - C`` PSD and ``E`` PD.
    """
    E_hat = 0.5 * (E_hat + E_hat.T)
    C_hat = 0.5 * (C_hat + C_hat.T)
    H = E_hat @ E_hat + alpha * C_hat
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    scale = max(np.abs(w).max(), 1e-300) if w.size else 1.0
    if w.size and w.min() < -PSD_TOL * scale:
        raise NoPSDSolutionError("no PSD solution: E^2 + alpha G^T G is indefinite")
    root = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    X = alpha * (root - E_hat)
    return 0.5 * (X + X.T)


def dense_riccati_oracle(E, G, alpha: int = 1) -> DenseSymmetric:
    """Exact PSD solution ``alpha ((E^2 + alpha G^T G)^{1/2} - E)`` by dense algebra."""
    E = E if isinstance(E, DenseSymmetric) else DenseSymmetric(np.asarray(E, dtype=float))
    G = np.atleast_2d(np.asarray(G, dtype=float))
    if G.shape[1] != E.dim:
        raise ValueError("dimension mismatch")
    if np.min(E.eigvalsh()) <= 0:
        raise ValueError("E must be positive definite")
    X = projected_riccati_solution(E.entries, G.T @ G, alpha)
    if alpha == -1:
        w = np.linalg.eigvalsh(X)
        if w.min() < -1e-8 * max(1.0, np.abs(w).max()):
            raise NoPSDSolutionError("no PSD solution")
    return DenseSymmetric(X, check=False)


class _Solver:
    """State of one solve; split out of :func:`riccati_lr_solve` for readability."""

    def __init__(self, p: RiccatiProblem):
        self.p = p
        self.E = _CountingE(p.E)
        self.a = p.alpha
        self.Gt = p.G.T.copy()
        self.EGt = self.E.apply(self.Gt)
        self.rhs_norm = float(np.linalg.norm(p.G @ p.G.T))
        self.rng = np.random.default_rng(p.seed)
        self.iterations = 0
        self.cg_steps = 0
        self.history: List[float] = []
        self.diag = None
        if p.preconditioner == "block":
            d = p.E.diagonal()
            self.diag = None if d is None else np.asarray(d, dtype=float)
        elif p.preconditioner == "kronecker" and not p.E.has_inverse:
            raise SolverConfigError("the kronecker preconditioner needs E.apply_inverse")

    # -- evaluation ---------------------------------------------------------

    def evaluate(self, Y):
        EY = self.E.apply(Y)
        W, M = _residual_factors(EY, Y, self.Gt, self.a)
        res = _lowrank_sym_fro(W, M)
        return {"Y": Y, "EY": EY, "W": W, "M": M, "res": res, "F": 0.25 * res * res}

    def rel(self, st):
        return st["res"] / self.rhs_norm

    def record(self, st):
        self.history.append(self.rel(st))

    # -- Galerkin projection ------------------------------------------------

    def galerkin(self, Y):
        Q, _ = np.linalg.qr(Y)
        EQ = self.E.apply(Q)
        E_hat = Q.T @ EQ
        GQ = self.Gt.T @ Q
        try:
            Xh = projected_riccati_solution(E_hat, GQ.T @ GQ, self.a)
        except NoPSDSolutionError:
            return None
        w, V = np.linalg.eigh(Xh)
        w = np.clip(w, 0.0, None)
        return Q @ (V * np.sqrt(w))

    # -- Gauss-Newton pieces ------------------------------------------------

    def gradient(self, st):
        return _gradient_from(self.E, st["EY"], st["Y"], self.Gt, self.EGt, self.a, st["W"], st["M"])

    def gn_matvec(self, st, D):
        Y, EY = st["Y"], st["EY"]
        ED = self.E.apply(D)
        V, N = _jacobian_factors(ED, EY, D, Y, self.a)
        # J^T T = 2 [(E T + T E) Y + a (T YY^T + YY^T T) Y] for T = V N V^T
        EV = np.hstack([self.E.apply(ED), st["E2Y"], ED, EY])
        VtY = V.T @ Y
        TY = V @ (N @ VtY)
        out = EV @ (N @ VtY) + V @ (N @ (V.T @ EY))
        if self.a:
            out = out + self.a * (TY @ st["YtY"] + Y @ (Y.T @ TY))
        return 2.0 * out

    def make_preconditioner(self, st, mu):
        Y = st["Y"]
        r = Y.shape[1]
        YtY = st["YtY"]
        if self.p.preconditioner == "none" or r == 0:
            return lambda R: R
        if self.p.preconditioner == "kronecker":
            lam, U = np.linalg.eigh(YtY)
            lam = np.maximum(lam, 1e-12 * max(lam.max(), 1e-300))

            def kron(R):
                Z = self.E.apply_inverse(self.E.apply_inverse(R @ U))
                return (Z / (4.0 * lam)) @ U.T

            return kron
        # block-diagonal: row i of D sees 4 (e_i^2 M1 + 2 e_i M3 + M2) + mu
        EY = st["EY"] + self.a * (Y @ YtY)
        M1 = YtY
        M3 = Y.T @ EY
        M2 = EY.T @ EY
        if self.diag is not None:
            e = self.diag + self.a * np.einsum("ij,ij->i", Y, Y)
        else:
            e = np.full(Y.shape[0], np.trace(M3) / max(np.trace(M1), 1e-300))
        blocks = 4.0 * (e[:, None, None] ** 2 * M1 + 2.0 * e[:, None, None] * 0.5 * (M3 + M3.T) + M2)
        blocks = blocks + mu * np.eye(r)
        # guard against indefinite blocks from the alpha=-1 shift
        w = np.linalg.eigvalsh(blocks)
        floor = 1e-12 * max(float(np.abs(w).max()), 1e-300)
        if w.min() <= floor:
            blocks = blocks + (floor - w.min(axis=1))[:, None, None] * np.eye(r)
        chol = np.linalg.cholesky(blocks)

        def block(R):
            z = np.linalg.solve(chol, R[:, :, None])
            return np.linalg.solve(np.swapaxes(chol, 1, 2), z)[:, :, 0]

        return block

    def pcg(self, st, g, mu, maxiter, rtol):
        """Approximately solve ``(J^T J + mu I) D = -2 g``."""
        b = -2.0 * g
        prec = self.make_preconditioner(st, mu)
        D = np.zeros_like(b)
        R = b.copy()
        Zr = prec(R)
        P = Zr.copy()
        rz = np.sum(R * Zr)
        bnorm = np.linalg.norm(b)
        for it in range(maxiter):
            AP = self.gn_matvec(st, P) + mu * P
            pap = np.sum(P * AP)
            if pap <= 0:
                break
            self.cg_steps += 1
            step = rz / pap
            D = D + step * P
            R = R - step * AP
            if np.linalg.norm(R) <= rtol * bnorm:
                break
            Zr = prec(R)
            rz_new = np.sum(R * Zr)
            P = Zr + (rz_new / rz) * P
            rz = rz_new
        return D

    def inner(self, st, max_iter, final):
        """Levenberg-Marquardt at fixed width. Returns the last accepted state."""
        mu = None
        stall = 0
        for _ in range(max_iter):
            if self.rel(st) <= self.p.tol:
                break
            Y = st["Y"]
            st["YtY"] = Y.T @ Y
            st["E2Y"] = self.E.apply(st["EY"])
            g = self.gradient(st)
            gnorm = np.linalg.norm(g)
            if gnorm == 0.0:
                break
            if mu is None:
                mu = max(1e-4 * np.linalg.norm(st["YtY"], 2), 1e-300)
            improved = False
            for _ in range(30):
                D = self.pcg(st, g, mu, maxiter=CG_MAXITER, rtol=min(CG_RTOL, np.sqrt(self.rel(st))))
                JD = self.gn_matvec(st, D)
                # model decrease of 0.25||S + J D||^2
                pred = -(np.sum(g * D) + 0.25 * np.sum(D * JD))
                trial = self.evaluate(Y + D)
                self.iterations += 1
                actual = st["F"] - trial["F"]
                if pred > 0 and actual > 0:
                    rho = actual / pred
                    if rho > 0.75:
                        mu = mu / 3.0
                    elif rho < 0.25:
                        mu = mu * 2.0
                    improved = True
                    break
                mu = mu * 4.0
            if not improved:
                break
            gain = (st["res"] - trial["res"]) / max(st["res"], 1e-300)
            st = trial
            self.record(st)
            # at intermediate widths move on once progress slows
            stall = stall + 1 if gain < (1e-6 if final else 5e-2) else 0
            if stall >= (3 if final else 1):
                break
        return st

    def new_column(self, st):
        Y = st["Y"]
        lam, vecs = _lowrank_sym_eig(st["W"], st["M"])
        if lam.size == 0:
            v = self.rng.standard_normal(Y.shape[0])
        else:
            v = vecs[:, np.argmax(np.abs(lam))].copy()
        v = v / max(np.linalg.norm(v), 1e-300)
        z = self.rng.standard_normal(Y.shape[0])
        v = v + 1e-3 * z / np.linalg.norm(z)
        if Y.shape[1]:
            Q, _ = np.linalg.qr(Y)
            v = v - Q @ (Q.T @ v)
            v = v - Q @ (Q.T @ v)
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            v = self.rng.standard_normal(Y.shape[0])
            nv = np.linalg.norm(v)
        return v / nv

    def expand(self, st):
        Y = st["Y"]
        v = self.new_column(st)
        cand = self.galerkin(np.hstack([Y, v[:, None]]))
        if cand is not None:
            trial = self.evaluate(cand)
            if trial["F"] < st["F"]:
                return trial
        # fall back to the best multiple of the new direction (never increases F)
        best = None
        for t in np.sqrt(np.linalg.norm(Y) ** 2 / max(Y.shape[1], 1) + 1e-300) * np.logspace(-6, 0, 13):
            trial = self.evaluate(np.hstack([Y, t * v[:, None]]))
            if best is None or trial["F"] < best["F"]:
                best = trial
        if best["F"] <= st["F"]:
            return best
        return self.evaluate(np.hstack([Y, 1e-8 * v[:, None]]))

    def initial(self, w0):
        Q, R = np.linalg.qr(self.Gt)
        lam, V = np.linalg.eigh(R @ R.T)
        top = np.argsort(lam)[::-1][:w0]
        basis = Q @ V[:, top]
        Y = self.galerkin(basis)
        if Y is None:
            Y = basis * 1e-3
        return self.evaluate(Y)

    def run(self):
        p = self.p
        n, r = p.n, p.target_rank
        if self.rhs_norm == 0.0 or r == 0:
            Y = np.zeros((n, 0))
            res = 0.0 if self.rhs_norm == 0.0 else 1.0
            return RiccatiSolution(Y, [res], self.rhs_norm == 0.0, 0, self.E.count)
        if p.Y0 is not None and p.Y0.shape[1] > 0:
            st = self.evaluate(p.Y0.copy())
        else:
            st = self.initial(min(p.G.shape[0], 2, r))
        self.record(st)
        max_outer = r if p.max_outer is None else p.max_outer
        outer = 0
        while True:
            final = st["Y"].shape[1] >= r or outer >= max_outer
            st = self.inner(st, p.max_inner, final)
            g = self.galerkin(st["Y"])
            if g is not None:
                trial = self.evaluate(g)
                if trial["F"] < st["F"]:
                    st = trial
                    self.record(st)
                    if final and self.rel(st) > p.tol:
                        st = self.inner(st, p.max_inner, True)
            if self.rel(st) <= p.tol or final:
                break
            st = self.expand(st)
            self.record(st)
            outer += 1
        Y = st["Y"]
        log.debug("riccati: width %d, rel residual %.3e, %d iterations", Y.shape[1], self.rel(st), self.iterations)
        return RiccatiSolution(Y, self.history, self.rel(st) <= p.tol, self.iterations, self.E.count)


def riccati_lr_solve(p: RiccatiProblem) -> RiccatiSolution:
    """Low-rank factor ``Y`` (width at most ``p.target_rank``) with ``X = Y Y^T``.

    Deterministic for a given ``p.seed``.  When the tolerance is not reached
    the best factor found is returned with ``converged=False``.
    """
    return _Solver(p).run()

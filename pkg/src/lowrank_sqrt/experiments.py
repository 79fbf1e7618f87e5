"""Experiment drivers: error versus rank, decay bound versus spectrum, tracking.

Every driver returns a list of row dicts and can write them as CSV with a
versioned schema tag on the first line.  Rows are produced in a fixed order
and numbers are formatted with a fixed precision, so a rerun with the same
seed gives a byte-identical file.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.linalg

from .analysis import DecayBoundParams, decay_bound_factor, error_report, exact_delta, exact_delta_spectrum
from .apps import ShampooTracker, shampoo_step
from .exceptions import InfeasibleDowndateError
from .mmio import read_matrix
from .operators import DiagonalOperator, dense_principal_root
from .sqrtupdate import UpdateRequest, update_correction

__all__ = [
    "ExperimentSpec",
    "make_instance",
    "run_synthetic",
    "run_decay",
    "run_tracking",
    "tracking_stream",
    "write_csv",
    "format_csv",
    "SCHEMAS",
    "TRACKING_TOLS",
    "RATIO_FLOOR",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
TRACKING_LIMIT = 500
TRACKING_TOLS = (1e-4, 1e-6, 1e-8)
# sigma_j below this (relative to sigma_1) is too close to rounding for a ratio
RATIO_FLOOR = 1e-8

SCHEMAS = {
    "synthetic": ("lowrank_sqrt.synthetic/1",
                  ["r", "rel_error", "residual", "fwd_bound", "optimal_truncation_error",
                   "optimal_rel_error", "converged", "status"]),
    "decay": ("lowrank_sqrt.decay/1",
              ["l", "index", "actual_sigma_ratio", "max_sigma_ratio", "bound_factor"]),
    "tracking": ("lowrank_sqrt.tracking/1",
                 ["tol", "t", "rel_error_inv_fourth", "width_inv_sqrt", "width_inv_fourth", "accepted"]),
}


@dataclass
class ExperimentSpec:
    """One error-versus-rank (or decay) experiment.

    ``family`` is ``"uniform_diag"`` (diagonal from U(0, 1)),
    ``"logspace_diag"`` (diagonal log-spaced in [1e-3, 1e3]) or ``"file"``
    (an SPD matrix read from `matrix_path`).  ``Z`` has `k` normalized
    Gaussian columns, multiplied by `downdate_scale` when ``alpha = -1``.
    """

    family: str = "uniform_diag"
    n: int = 100
    alpha: int = 1
    beta: int = 1
    rank_sweep: Sequence[int] = field(default_factory=lambda: list(range(1, 21)))
    downdate_scale: float = 0.1
    seed: int = 0
    output_path: Optional[str] = None
    k: int = 1
    tol: float = 1e-10
    matrix_path: Optional[str] = None
    z_scale: float = 1.0

    def __post_init__(self):
        if self.family not in ("uniform_diag", "logspace_diag", "file"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.alpha not in (1, -1) or self.beta not in (1, -1):
            raise ValueError("alpha and beta must be +1 or -1")
        if self.family == "file":
            if self.matrix_path is None:
                raise ValueError("family 'file' needs matrix_path")
            self.n = read_matrix(self.matrix_path).shape[0]
        ranks = [int(r) for r in self.rank_sweep]
        if any(b <= a for a, b in zip(ranks, ranks[1:])):
            raise ValueError("rank_sweep must be strictly increasing")
        if ranks and (ranks[0] < 0 or ranks[-1] > self.n):
            raise ValueError("ranks must lie in [0, n]")
        self.rank_sweep = ranks
        if self.n > DENSE_LIMIT:
            raise ValueError(f"n={self.n} is above the dense-oracle limit {DENSE_LIMIT}")
        if self.k < 0:
            raise ValueError("k must be nonnegative")


@dataclass
class Instance:
    A: np.ndarray
    Z: np.ndarray
    sqrt_op: object
    inv_sqrt_op: object


def make_instance(spec: ExperimentSpec) -> Instance:
    """Test matrix and perturbation for `spec`, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    if spec.family == "uniform_diag":
        a = rng.uniform(0.0, 1.0, n)
    elif spec.family == "logspace_diag":
        a = np.logspace(-3, 3, n)
    else:
        A = read_matrix(spec.matrix_path)
        if A.shape != (n, n):
            raise ValueError("matrix file must hold a square matrix")
        a = None
    Z = rng.standard_normal((n, spec.k))
    if spec.k:
        Z = Z / np.linalg.norm(Z, axis=0)
    Z = Z * spec.z_scale
    if spec.alpha == -1:
        Z = Z * spec.downdate_scale
    if a is not None:
        return Instance(np.diag(a), Z, DiagonalOperator(np.sqrt(a)), DiagonalOperator(1.0 / np.sqrt(a)))
    A = 0.5 * (A + A.T)
    return Instance(A, Z, dense_principal_root(A, 2), dense_principal_root(A, 2, inverse=True))


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float) or isinstance(x, np.floating):
        return "nan" if math.isnan(x) else f"{float(x):.10e}"
    return str(x)


def format_csv(kind: str, rows: List[Dict]) -> str:
    tag, cols = SCHEMAS[kind]
    buf = io.StringIO()
    buf.write(f"# schema: {tag}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def write_csv(kind: str, rows: List[Dict], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(format_csv(kind, rows))


def _dense_target(inst: Instance, alpha, beta):
    B = inst.A + alpha * (inst.Z @ inst.Z.T)
    wB = np.linalg.eigvalsh(B)
    if wB[0] <= 0:
        raise InfeasibleDowndateError(wB[0] / wB[-1])
    Bb = dense_principal_root(B, 2, inverse=beta == -1).entries
    Ab = dense_principal_root(inst.A, 2, inverse=beta == -1).entries
    lam_min = float(wB[0] if beta == 1 else 1.0 / wB[-1])
    return Ab, Bb, lam_min


def _verify_row(inst: Instance, alpha, beta, C, rel_error):
    """Recompute the relative error with scipy's Schur-based square root."""
    B = inst.A + alpha * (inst.Z @ inst.Z.T)
    Bb, Ab = scipy.linalg.sqrtm(B), scipy.linalg.sqrtm(inst.A)
    if beta == -1:
        Bb, Ab = np.linalg.inv(Bb), np.linalg.inv(Ab)
    Bb, Ab = np.real(Bb), np.real(Ab)
    check = np.linalg.norm(Bb - (Ab + C)) / np.linalg.norm(Bb)
    if abs(check - rel_error) > 1e-9 * max(1.0, check):
        raise AssertionError(f"verification failed: reported {rel_error:.6e}, recomputed {check:.6e}")
    return check


def run_synthetic(spec: ExperimentSpec, verify: bool = False) -> List[Dict]:
    """Relative error of the rank-``r`` correction for every ``r`` in the sweep.

    ``rel_error`` and ``optimal_rel_error`` are normalized by
    ``||(A + alpha Z Z^T)^{beta/2}||_F``.  ``residual`` is ``||R(C)||_F``,
    ``fwd_bound`` the Frobenius forward error bound derived from it, and
    ``optimal_truncation_error`` the Frobenius norm of the exact correction
    minus its best rank-``r`` approximation.

    With ``verify=True`` every ``rel_error`` is recomputed through an
    independent dense square root and an ``AssertionError`` is raised on
    disagreement.
    """
    inst = make_instance(spec)
    a, b = spec.alpha, spec.beta
    rows = []
    try:
        _, Bb, lam_min = _dense_target(inst, a, b)
    except InfeasibleDowndateError:
        nan = float("nan")
        return [dict(r=r, rel_error=nan, residual=nan, fwd_bound=nan, optimal_truncation_error=nan,
                     optimal_rel_error=nan, converged=False, status="infeasible") for r in spec.rank_sweep]
    delta = exact_delta(inst.A, inst.Z, a, b)
    sig = np.sort(np.abs(np.linalg.eigvalsh(delta)))[::-1]
    tails = np.sqrt(np.maximum(np.cumsum((sig ** 2)[::-1])[::-1], 0.0))
    norm_B = np.linalg.norm(Bb)
    for r in spec.rank_sweep:
        req = UpdateRequest(inst.Z, a, b, r, sqrt_op=inst.sqrt_op, inv_sqrt_op=inst.inv_sqrt_op,
                            tol=spec.tol, seed=spec.seed)
        try:
            res = update_correction(req)
        except InfeasibleDowndateError:
            nan = float("nan")
            rows.append(dict(r=r, rel_error=nan, residual=nan, fwd_bound=nan, optimal_truncation_error=nan,
                             optimal_rel_error=nan, converged=False, status="infeasible"))
            continue
        err = float(np.linalg.norm(delta - res.correction.to_dense()))
        rep = error_report(res.residual_norm, spec.n, lam_min, "dense")
        if verify:
            _verify_row(inst, a, b, res.correction.to_dense(), err / norm_B)
        opt = float(tails[r]) if r < sig.size else 0.0
        rows.append(dict(r=r, rel_error=err / norm_B, residual=res.residual_norm, fwd_bound=rep.forward_fro_bound,
                         optimal_truncation_error=opt, optimal_rel_error=opt / norm_B,
                         converged=res.converged, status="ok"))
    return rows


def run_decay(spec: ExperimentSpec) -> List[Dict]:
    """Singular value decay of the exact correction against the decay bound.

    For each ``l`` the row holds ``sigma_{1+kl} / sigma_1``, the largest
    ratio ``sigma_{j+kl} / sigma_j`` over all ``j`` whose ``sigma_j`` is above
    well above the rounding level (``sigma_j / sigma_1 > 1e-8``), and the
    bound factor.  Raises ``AssertionError`` if
    some ratio exceeds the bound (``1e-12`` slack relative to ``sigma_1``).
    """
    inst = make_instance(spec)
    k, n = spec.k, spec.n
    if k == 0:
        return []
    sig = exact_delta_spectrum(inst.A, inst.Z, spec.alpha, spec.beta)
    params = DecayBoundParams.from_dense(inst.A, inst.Z, spec.alpha, spec.beta)
    rows = []
    s1 = sig[0]
    for l in range(0, n // k + 1):
        bound = decay_bound_factor(params, l)
        shift = k * l
        if shift >= n:
            ratios = np.zeros(0)
        else:
            ratios = sig[shift:] / s1
        head = sig[: n - shift] / s1
        viol = ratios - bound * head[: ratios.size]
        if ratios.size and viol.max() > 1e-12:
            raise AssertionError(f"decay bound violated at l={l}: excess {viol.max():.3e}")
        keep = head[: ratios.size] > RATIO_FLOOR
        worst = float((ratios[keep] / head[: ratios.size][keep]).max()) if np.any(keep) else 0.0
        rows.append(dict(l=l, index=1 + shift, actual_sigma_ratio=float(ratios[0]) if ratios.size else 0.0,
                         max_sigma_ratio=worst, bound_factor=bound))
    return rows


def tracking_stream(m: int, steps: int, step_rank: int = 5, seed: int = 0, stream: str = "eigen"):
    """Gradient blocks for the tracking experiment.

    ``"eigen"`` builds a seeded accumulated matrix with orthonormal
    eigenvectors (QR of a Gaussian matrix) and eigenvalues log-spaced in
    [0.1, 100], and splits its eigenpairs, largest first, into blocks of
    `step_rank` columns.  ``"gaussian"`` draws independent ``N(0, 1/m)``
    blocks.
    """
    rng = np.random.default_rng(seed)
    if stream == "gaussian":
        return [rng.standard_normal((m, step_rank)) / np.sqrt(m) for _ in range(steps)]
    if stream != "eigen":
        raise ValueError(f"unknown stream {stream!r}")
    total = steps * step_rank
    if total > m:
        raise ValueError("the eigen stream needs steps * step_rank <= m")
    Q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    lam = np.logspace(2, -1, max(total, 1))
    return [Q[:, s * step_rank:(s + 1) * step_rank] * np.sqrt(lam[s * step_rank:(s + 1) * step_rank])
            for s in range(steps)]


def run_tracking(m: int = 200, steps: int = 40, step_rank: int = 5, eps: float = 1e-3, seed: int = 0,
                 tols: Sequence[float] = TRACKING_TOLS, stream: str = "eigen",
                 compression_cap: Optional[int] = None) -> List[Dict]:
    """Track ``L_t^{-1/4}`` and compare with the dense root after every step."""
    if m > TRACKING_LIMIT:
        raise ValueError(f"m={m} is above the dense-oracle limit {TRACKING_LIMIT}")
    blocks = tracking_stream(m, steps, step_rank, seed, stream)
    rows = []
    for tol in tols:
        tr = ShampooTracker.create(m, eps, step_rank, tol, compression_cap, seed)
        L = eps * np.eye(m)
        for G in blocks:
            tr = shampoo_step(tr, G)
            rep = tr.reports[-1]
            # the target always includes G, a rejected step shows up as error
            L = L + G @ G.T
            w, V = np.linalg.eigh(L)
            target = (V * w ** -0.25) @ V.T
            err = np.linalg.norm(tr.inv_fourth.to_dense() - target) / np.linalg.norm(target)
            rows.append(dict(tol=tol, t=tr.t, rel_error_inv_fourth=float(err), width_inv_sqrt=tr.inv_sqrt.width,
                             width_inv_fourth=tr.inv_fourth.width, accepted=rep.accepted))
    return rows

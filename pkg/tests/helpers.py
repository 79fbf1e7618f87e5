"""Shared fixtures-as-functions: random instances and independent dense references.

The references here use scipy's Schur-based ``sqrtm`` and ``solve_continuous_are``
rather than the eigendecomposition used inside the package.
"""

import json
import pathlib

import numpy as np
import scipy.linalg as sl

FROZEN = json.loads((pathlib.Path(__file__).with_name("data") / "frozen.json").read_text())


def rand_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.logspace(0, np.log10(cond), n)
    return (Q * w) @ Q.T


def uniform_instance(seed, n=100, alpha=1):
    """Diagonal from U(0, 1) and a normalized Gaussian z (times 0.1 for downdates)."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, n)
    z = rng.standard_normal(n)
    z /= np.linalg.norm(z)
    if alpha == -1:
        z *= 0.1
    return a, z[:, None]


def ref_root(M, beta=1):
    """``M^{beta/2}`` through scipy's Schur square root."""
    R = np.real(sl.sqrtm(0.5 * (M + M.T)))
    R = 0.5 * (R + R.T)
    return R if beta == 1 else np.linalg.inv(R)


def ref_delta(A, Z, alpha, beta):
    B = A + alpha * (Z @ Z.T)
    return ref_root(B, beta) - ref_root(A, beta)


def ref_riccati(E, G):
    """PSD solution of ``E X + X E + X^2 = G^T G`` via the continuous ARE solver."""
    n = E.shape[0]
    X = sl.solve_continuous_are(-E, np.eye(n), G.T @ G, np.eye(n))
    return 0.5 * (X + X.T)


def rel(a, b):
    nb = np.linalg.norm(b)
    return np.linalg.norm(a - b) / (nb if nb else 1.0)


def tail_norms(D):
    s = np.sort(np.abs(np.linalg.eigvalsh(0.5 * (D + D.T))))[::-1]
    return np.sqrt(np.cumsum((s ** 2)[::-1])[::-1]), s

# %% [markdown]
# # Generalized least squares with a spiked noise covariance
#
# Noise covariance `C = D + Z Z^T`.  Whitening with `C^{-1/2}` turns GLS
# into ordinary least squares, and `C^{-1/2} ~ D^{-1/2} - U U^T` is cheap.

# %%
import numpy as np

from lowrank_sqrt import DiagonalOperator, gls_solve

rng = np.random.default_rng(4)
n, d = 2000, 6
D = rng.uniform(0.5, 2.0, n)
Z = rng.standard_normal((n, 2))
X = rng.standard_normal((n, d))
w_true = rng.standard_normal(d)
noise = np.sqrt(D) * rng.standard_normal(n) + Z @ rng.standard_normal(2)
y = X @ w_true + noise

# %%
w = gls_solve(X, y, DiagonalOperator(D), Z, 1, 10, tol=1e-10)
w_ols = np.linalg.lstsq(X, y, rcond=None)[0]
print("GLS error", np.linalg.norm(w - w_true))
print("OLS error", np.linalg.norm(w_ols - w_true))

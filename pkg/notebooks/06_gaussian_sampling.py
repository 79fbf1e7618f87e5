# %% [markdown]
# # Sampling with a perturbed precision matrix
#
# For `Q = Q0 + Z Z^T` the draw `mu + Q^{-1/2} z` needs the inverse square
# root of the perturbed precision.  With `Q0` diagonal it is
# `Q0^{-1/2} - U U^T`.

# %%
import numpy as np

from lowrank_sqrt import DiagonalOperator, gaussian_sample

rng = np.random.default_rng(3)
n = 50
q0 = rng.uniform(0.5, 2.0, n)
Z = 0.5 * rng.standard_normal((n, 3))
x = gaussian_sample(np.zeros(n), DiagonalOperator(q0 ** -0.5), Z, rank=12, count=40000, seed=0, tol=1e-12)

# %%
target = np.linalg.inv(np.diag(q0) + Z @ Z.T)
S = np.cov(x.T)
print("spectral relative covariance error", np.linalg.norm(S - target, 2) / np.linalg.norm(target, 2))

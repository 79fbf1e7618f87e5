# %% [markdown]
# # Polar decomposition after removing or adding rows
#
# `X = U P` with `P = (X^T X)^{1/2}`.  Removing row `x` is a downdate of
# `P^2` by `x x^T`, so `P` gets a low-rank square-root correction and `U`
# follows from a Woodbury identity.

# %%
import numpy as np

from lowrank_sqrt import PolarState, polar_downdate, polar_update

rng = np.random.default_rng(2)
X = rng.standard_normal((200, 8))
st = PolarState.from_matrix(X, rank=6, tol=1e-12)


def dense_P(M):
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    return (Vt.T * s) @ Vt


# %%
for j in range(5):
    st = polar_downdate(st, st.U_factor.shape[0] - 1)
    Xc = X[: 199 - j]
    err = np.linalg.norm(st.P.apply(np.eye(8)) - dense_P(Xc)) / np.linalg.norm(dense_P(Xc))
    orth = np.linalg.norm(st.U_factor.T @ st.U_factor - np.eye(8))
    print(f"removed {j + 1} rows: P error {err:.1e}, orthogonality {orth:.1e}")

# %%
st = polar_update(st, rng.standard_normal(8))
print("rows after one update:", st.U_factor.shape[0])

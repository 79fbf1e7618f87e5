"""Regenerate tests/data/frozen.json from high-precision references.

Everything here is computed with mpmath at 40 digits and is independent of
the package.  Run from the repository root: ``python3 tests/make_frozen.py``.
"""

import json
import pathlib

import mpmath as mp

mp.mp.dps = 40


def decay_factor(kh, l):
    return 4 * mp.exp(-mp.pi ** 2 * l / mp.log(4 * kh))


def kappa_sqrt(norm_A, norm_D, lmin_A):
    mu = mp.sqrt(lmin_A)
    return 2 * (mp.sqrt(norm_A + norm_D) + mu / 2) / mu


def kappa_inv(norm_D, lmin_A, lmax_A, lmin_B):
    mu = mp.sqrt(1 / mp.mpf(lmax_A))
    delta = mp.sqrt((1 + norm_D / mp.mpf(lmin_B)) / lmin_A)
    return 2 * (delta + mu / 2) / mu


def small_instance():
    # A = diag(1..6)/2, z = (1, -1, 2, 0.5, -0.5, 1)/4, exact in binary
    a = [mp.mpf(i) / 2 for i in range(1, 7)]
    z = [mp.mpf(v) / 4 for v in (1, -1, 2, 0.5, -0.5, 1)]
    return a, z


def deltas():
    a, z = small_instance()
    n = len(a)
    A = mp.diag(a)
    Z = mp.matrix(z)
    out = {}
    for alpha in (1, -1):
        B = A + alpha * Z * Z.T
        for beta in (1, -1):
            if beta == 1:
                D = mp.sqrtm(B) - mp.sqrtm(A)
            else:
                D = mp.inverse(mp.sqrtm(B)) - mp.inverse(mp.sqrtm(A))
            D = (D + D.T) / 2
            ev = mp.eigsy(D)[0]
            sv = sorted([abs(ev[i]) for i in range(n)], reverse=True)
            out[f"{alpha},{beta}"] = {
                "spectrum": [float(s) for s in sv],
                "matrix": [[float(D[i, j]) for j in range(n)] for i in range(n)],
            }
    return out


def riccati_oracle():
    # E = diag(1, 2, 3), G = (1, 1, 1): X = (E^2 + G^T G)^{1/2} - E
    E = mp.diag([1, 2, 3])
    G = mp.matrix([[1, 1, 1]])
    X = mp.sqrtm(E * E + G.T * G) - E
    X = (X + X.T) / 2
    return [[float(X[i, j]) for j in range(3)] for i in range(3)]


def main():
    data = {
        "decay_factor_kappa10_l1": float(decay_factor(10, 1)),
        "decay_factor_kappa10": [float(decay_factor(10, l)) for l in range(6)],
        "kappa_sqrt_example": {"norm_A": 3.0, "norm_D": 0.5, "lmin_A": 0.25,
                               "value": float(kappa_sqrt(3, mp.mpf("0.5"), mp.mpf("0.25")))},
        "kappa_inv_example": {"norm_D": 0.5, "lmin_A": 0.25, "lmax_A": 3.0, "lmin_B": 0.2,
                              "value": float(kappa_inv(mp.mpf("0.5"), mp.mpf("0.25"), 3, mp.mpf("0.2")))},
        "error_report_example": {"residual": 1e-8, "n": 100, "lambda_min": 1.0,
                                 "fro": float(mp.sqrt(mp.sqrt(100) * mp.mpf("1e-8"))),
                                 "two": float(min(mp.mpf("1e-8") / 1, mp.sqrt(mp.sqrt(100) * mp.mpf("1e-8"))))},
        "sqrt2_minus_1": float(mp.sqrt(2) - 1),
        "one_minus_inv_sqrt2": float(1 - 1 / mp.sqrt(2)),
        "small_instance_deltas": deltas(),
        "riccati_diag123_ones": riccati_oracle(),
    }
    path = pathlib.Path(__file__).with_name("data") / "frozen.json"
    path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()

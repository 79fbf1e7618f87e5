import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import rand_spd
from lowrank_sqrt import (
    DenseSymmetric,
    DiagonalOperator,
    DiagonalPlusLowRank,
    InverseOperator,
    LowRankFactor,
    NotPSDError,
    PerturbedOperator,
    SingularOperatorError,
    SymmetricOperator,
    compress,
    dense_principal_root,
    smw_apply_inverse,
)


def random_dplr(rng, n=12, widths=(2, 3), signs=(1, -1), scale=0.3):
    base = DiagonalOperator(rng.uniform(1.0, 2.0, n))
    terms = [LowRankFactor(scale * rng.standard_normal((n, w)), s) for w, s in zip(widths, signs)]
    return DiagonalPlusLowRank(base, terms)


# -- SymmetricOperator contract ---------------------------------------------


def test_callable_operator_linear_symmetric_and_inverse():
    rng = np.random.default_rng(0)
    M = rand_spd(rng, 15)
    Mi = np.linalg.inv(M)
    op = SymmetricOperator(15, apply=lambda X: M @ X, apply_inverse=lambda X: Mi @ X)
    x, y = rng.standard_normal(15), rng.standard_normal(15)
    lhs = op.apply(2.0 * x - 3.0 * y)
    assert np.linalg.norm(lhs - (2.0 * op.apply(x) - 3.0 * op.apply(y))) <= 1e-12 * np.linalg.norm(lhs)
    assert abs(op.apply(x) @ y - x @ op.apply(y)) <= 1e-12 * abs(op.apply(x) @ y)
    assert np.linalg.norm(op.apply(op.apply_inverse(x)) - x) <= 1e-10 * np.linalg.norm(x)
    assert op.apply(x).shape == (15,)
    assert op.apply(np.ones((15, 4))).shape == (15, 4)
    assert np.allclose(op @ x, M @ x)


def test_operator_rejects_bad_shapes_and_missing_inverse():
    op = SymmetricOperator(3, apply=lambda X: X)
    with pytest.raises(ValueError):
        op.apply(np.ones(4))
    with pytest.raises(NotImplementedError):
        op.apply_inverse(np.ones(3))
    assert not op.has_inverse
    with pytest.raises(NotImplementedError):
        op.inverse()
    with pytest.raises(ValueError):
        SymmetricOperator(0, apply=lambda X: X)


def test_inverse_operator_swaps_roles():
    d = DiagonalOperator([1.0, 4.0])
    inv = d.inverse()
    assert isinstance(inv, InverseOperator)
    assert np.allclose(inv.apply([1.0, 1.0]), [1.0, 0.25])
    assert np.allclose(inv.apply_inverse([1.0, 1.0]), [1.0, 4.0])
    assert np.allclose(inv.diagonal(), [1.0, 0.25])
    assert inv.inverse() is d


# -- DiagonalOperator ----------------------------------------------------------


def test_diagonal_operator():
    d = DiagonalOperator([4.0, 9.0])
    assert np.allclose(d.apply([1.0, 1.0]), [4.0, 9.0])
    assert np.allclose(d.apply_inverse([4.0, 9.0]), [1.0, 1.0])
    assert np.allclose(d.power(0.5).entries, [2.0, 3.0])
    with pytest.raises(ValueError):
        DiagonalOperator([1.0, 0.0])
    with pytest.raises(ValueError):
        DiagonalOperator([1.0, -2.0])


# -- LowRankFactor ---------------------------------------------------------


def test_low_rank_factor_validation():
    with pytest.raises(ValueError):
        LowRankFactor(np.ones((2, 3)))
    with pytest.raises(ValueError):
        LowRankFactor(np.array([[np.nan], [1.0]]))
    with pytest.raises(ValueError):
        LowRankFactor(np.ones((3, 1)), sign=2)
    f = LowRankFactor(np.ones(3), -1)
    assert f.width == 1 and f.dim == 3
    assert np.allclose(f.to_dense(), -np.ones((3, 3)))
    e = LowRankFactor.empty(4)
    assert e.width == 0 and np.allclose(e.to_dense(), 0.0)


@given(st.integers(0, 1000), st.sampled_from([1, -1]))
@settings(max_examples=25, deadline=None)
def test_low_rank_factor_definiteness(seed, sign):
    rng = np.random.default_rng(seed)
    f = LowRankFactor(rng.standard_normal((6, 2)), sign)
    w = np.linalg.eigvalsh(f.to_dense())
    assert np.all(sign * w >= -1e-12 * np.abs(w).max())


# -- SMW -------------------------------------------------------------------


def test_smw_empty_factor_is_base_inverse():
    out = smw_apply_inverse(DiagonalOperator(np.ones(3)), LowRankFactor.empty(3), np.array([1.0, 2.0, 3.0]))
    assert np.allclose(out, [1.0, 2.0, 3.0])


def test_smw_rank_one_identity():
    out = smw_apply_inverse(DiagonalOperator(np.ones(2)), LowRankFactor(np.array([1.0, 0.0]), 1),
                            np.array([1.0, 0.0]))
    assert np.allclose(out, [0.5, 0.0], atol=1e-15)


def test_smw_random_against_dense_inverse():
    rng = np.random.default_rng(3)
    d = rng.uniform(0.5, 2.0, 5)
    F = rng.standard_normal((5, 2))
    x = rng.standard_normal(5)
    got = smw_apply_inverse(DiagonalOperator(d), LowRankFactor(F, 1), x)
    want = DenseSymmetric(np.diag(d) + F @ F.T).apply_inverse(x)
    assert np.linalg.norm(got - want) <= 1e-10 * np.linalg.norm(want)


def test_smw_singular_inner_matrix():
    # I - e1 e1^T is singular
    with pytest.raises(SingularOperatorError, match="operator singular or indefinite"):
        smw_apply_inverse(DiagonalOperator(np.ones(2)), LowRankFactor(np.array([1.0, 0.0]), -1), np.ones(2))


def test_smw_round_trip_many_probes():
    rng = np.random.default_rng(4)
    op = random_dplr(rng, n=30, widths=(3, 2), signs=(1, -1), scale=0.2)
    X = rng.standard_normal((30, 100))
    Y = op.apply(op.apply_inverse(X))
    errs = np.linalg.norm(Y - X, axis=0) / np.linalg.norm(X, axis=0)
    assert errs.max() <= 1e-10


def test_perturbed_operator_apply_inverse_and_diagonal():
    rng = np.random.default_rng(5)
    M = rand_spd(rng, 8)
    base = DenseSymmetric(M)
    term = LowRankFactor(0.3 * rng.standard_normal((8, 2)), -1)
    op = PerturbedOperator(base, term)
    dense = M + term.to_dense()
    x = rng.standard_normal(8)
    assert np.allclose(op.apply(x), dense @ x, rtol=1e-13)
    assert np.linalg.norm(op.apply_inverse(x) - np.linalg.solve(dense, x)) <= 1e-10 * np.linalg.norm(x)
    assert np.allclose(op.diagonal(), np.diag(dense))


# -- DiagonalPlusLowRank ------------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_dplr_materializes_to_dense_sum(seed):
    rng = np.random.default_rng(seed)
    op = random_dplr(rng, n=20)
    want = np.diag(op.base.entries) + sum(t.to_dense() for t in op.terms)
    got = op.apply(np.eye(20))
    assert np.linalg.norm(got - want) <= 1e-12 * np.linalg.norm(want)
    assert np.allclose(op.to_dense(), want)
    assert np.allclose(op.diagonal(), np.diag(want))
    assert op.width == 5


def test_dplr_append_respects_cap_and_reports_mass():
    rng = np.random.default_rng(7)
    n = 15
    op = DiagonalPlusLowRank(DiagonalOperator(np.ones(n)), (), compression_cap=4)
    dense = np.eye(n)
    for _ in range(3):
        t = LowRankFactor(0.2 * rng.standard_normal((n, 2)), -1)
        op = op.append(t)
        dense = dense + t.to_dense()
        assert op.width <= 4
    # the change is bounded by the recorded discarded mass (nuclear norm bound)
    assert np.linalg.norm(op.to_dense() - dense, 2) <= op.discarded_mass + 1e-12
    assert op.discarded_mass > 0


def test_compress_noop_when_under_cap():
    rng = np.random.default_rng(8)
    op = DiagonalPlusLowRank(DiagonalOperator(np.ones(6)), [LowRankFactor(rng.standard_normal((6, 3)))])
    out, mass = compress(op, 5)
    assert out is op and mass == 0.0


def test_compress_two_identical_terms():
    u = np.array([1.0, 2.0, 0.0, -1.0])
    op = DiagonalPlusLowRank(DiagonalOperator(np.ones(4)), [LowRankFactor(u), LowRankFactor(u)])
    out, mass = compress(op, 1)
    assert out.width == 1 and abs(mass) <= 1e-12
    f = out.terms[0]
    assert f.sign == 1
    assert np.allclose(np.abs(f.factor[:, 0]), np.sqrt(2.0) * np.abs(u))


def test_compress_matches_dense_truncation():
    rng = np.random.default_rng(9)
    F = rng.standard_normal((20, 8))
    s = np.array([1, -1, 1, 1, -1, 1, -1, -1])
    terms = [LowRankFactor(F[:, j], int(s[j])) for j in range(8)]
    op = DiagonalPlusLowRank(DiagonalOperator(np.ones(20)), terms)
    out, mass = compress(op, 4)
    S = (F * s) @ F.T
    w, V = np.linalg.eigh(S)
    keep = np.argsort(-np.abs(w))[:4]
    S4 = (V[:, keep] * w[keep]) @ V[:, keep].T
    got = out.to_dense() - np.eye(20)
    assert np.linalg.norm(got - S4) <= 1e-10 * np.linalg.norm(S4)
    drop = np.argsort(-np.abs(w))[4:]
    assert mass == pytest.approx(np.abs(w[drop]).sum(), rel=1e-10)
    with pytest.raises(ValueError):
        compress(op, 0)


# -- DenseSymmetric / principal roots -------------------------------------------


def test_dense_symmetric_rejects_asymmetric():
    with pytest.raises(ValueError):
        DenseSymmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_principal_root_examples():
    assert np.allclose(dense_principal_root(np.eye(4), 2).entries, np.eye(4))
    assert np.allclose(dense_principal_root(np.diag([4.0, 9.0]), 2).entries, np.diag([2.0, 3.0]))
    assert np.allclose(dense_principal_root(np.diag([16.0, 81.0]), 4).entries, np.diag([2.0, 3.0]))
    assert np.allclose(dense_principal_root(np.diag([4.0, 9.0]), 2, inverse=True).entries, np.diag([0.5, 1 / 3]))


@pytest.mark.parametrize("p", [2, 4])
def test_principal_root_self_consistency(p):
    rng = np.random.default_rng(10)
    M = rand_spd(rng, 30, cond=1e3)
    R = dense_principal_root(M, p).entries
    assert np.linalg.norm(np.linalg.matrix_power(R, p) - M) <= 1e-10 * np.linalg.norm(M)
    assert np.linalg.eigvalsh(R).min() > 0
    Ri = dense_principal_root(M, p, inverse=True).entries
    Mi = np.linalg.inv(M)
    assert np.linalg.norm(np.linalg.matrix_power(Ri, p) - Mi) <= 1e-10 * np.linalg.norm(Mi)


def test_principal_root_clamps_tiny_negative_and_rejects_indefinite():
    M = np.diag([1.0, -1e-13])
    R = dense_principal_root(M, 2).entries
    assert np.allclose(R, np.diag([1.0, 0.0]))
    with pytest.raises(NotPSDError, match="matrix not PSD"):
        dense_principal_root(np.diag([1.0, -1e-6]), 2)
    with pytest.raises(NotPSDError):
        dense_principal_root(np.diag([1.0, 0.0]), 2, inverse=True)

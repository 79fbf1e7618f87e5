import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helpers import FROZEN, ref_riccati, rel
from lowrank_sqrt import (
    DenseSymmetric,
    DiagonalOperator,
    NoPSDSolutionError,
    RiccatiProblem,
    SolverConfigError,
    SymmetricOperator,
    dense_riccati_oracle,
    riccati_gradient,
    riccati_lr_solve,
    riccati_objective,
    riccati_residual_norm,
)
from lowrank_sqrt.riccati import projected_riccati_solution, riccati_curvature

S2M1 = FROZEN["sqrt2_minus_1"]


def dense_S(E, G, Y, alpha):
    X = Y @ Y.T
    return E @ X + X @ E + alpha * X @ X - G.T @ G


def random_problem(seed, n=30, k=1, r=2, alpha=1):
    rng = np.random.default_rng(seed)
    e = rng.uniform(0.5, 2.0, n)
    G = rng.standard_normal((k, n)) / np.sqrt(n)
    p = RiccatiProblem(DiagonalOperator(e), G, alpha, r)
    Y = 0.3 * rng.standard_normal((n, r))
    return p, np.diag(e), G, Y


def fd_gradient(p, Y, h=1e-5):
    g = np.zeros_like(Y)
    for idx in np.ndindex(*Y.shape):
        d = np.zeros_like(Y)
        d[idx] = h
        g[idx] = (riccati_objective(p, Y + d) - riccati_objective(p, Y - d)) / (2 * h)
    return g


# -- problem validation ------------------------------------------------------


def test_problem_validation():
    E = DiagonalOperator(np.ones(3))
    with pytest.raises(ValueError):
        RiccatiProblem(E, np.ones((1, 4)))
    with pytest.raises(ValueError):
        RiccatiProblem(E, np.ones((1, 3)), alpha=0)
    with pytest.raises(ValueError):
        RiccatiProblem(E, np.ones((1, 3)), target_rank=4)
    with pytest.raises(ValueError):
        RiccatiProblem(E, np.ones((1, 3)), tol=0.0)
    with pytest.raises(SolverConfigError):
        RiccatiProblem(E, np.ones((1, 3)), preconditioner="magic")
    p = RiccatiProblem(E, np.ones(3))
    assert p.G.shape == (1, 3)


# -- residual ---------------------------------------------------------------


def test_residual_zero_cases():
    p = RiccatiProblem(DiagonalOperator(np.ones(4)), np.zeros((1, 4)))
    assert riccati_residual_norm(p, np.zeros((4, 1))) == 0.0
    p = RiccatiProblem(DiagonalOperator(np.ones(2)), np.array([[1.0, 0.0]]))
    Y = np.array([[np.sqrt(S2M1)], [0.0]])
    assert riccati_residual_norm(p, Y) <= 1e-15


@pytest.mark.parametrize("alpha", [1, -1])
def test_residual_matches_dense_materialization(alpha):
    rng = np.random.default_rng(1)
    n, k, r = 40, 2, 3
    M = rng.standard_normal((n, n))
    E = M @ M.T / n + np.eye(n)
    G = rng.standard_normal((k, n))
    Y = rng.standard_normal((n, r))
    p = RiccatiProblem(DenseSymmetric(E), G, alpha, r)
    want = np.linalg.norm(dense_S(E, G, Y, alpha))
    assert riccati_residual_norm(p, Y) == pytest.approx(want, rel=1e-10)


def test_residual_does_not_cancel_near_solution():
    # the thin evaluation must keep relative accuracy when ||S|| << ||G^T G||
    p = RiccatiProblem(DiagonalOperator(np.ones(2)), np.array([[1.0, 0.0]]))
    Y = np.array([[np.sqrt(S2M1) * (1 + 1e-9)], [0.0]])
    x = S2M1 * (1 + 1e-9) ** 2
    want = abs(2 * x + x * x - 1.0)
    assert riccati_residual_norm(p, Y) == pytest.approx(want, rel=1e-5)


def test_residual_dimension_mismatch():
    p = RiccatiProblem(DiagonalOperator(np.ones(3)), np.ones((1, 3)))
    with pytest.raises(ValueError):
        riccati_residual_norm(p, np.ones((4, 1)))


# -- gradient ---------------------------------------------------------------


def test_gradient_zero_factor_and_stationary_point():
    p, *_ = random_problem(0)
    assert np.allclose(riccati_gradient(p, np.zeros((30, 2))), 0.0)
    p = RiccatiProblem(DiagonalOperator(np.ones(2)), np.array([[1.0, 0.0]]))
    Y = np.array([[np.sqrt(S2M1)], [0.0]])
    assert np.abs(riccati_gradient(p, Y)).max() <= 1e-12


def test_gradient_finite_difference_example():
    p, *_, Y = random_problem(2, n=30, k=1, r=2)
    g = riccati_gradient(p, Y)
    assert rel(g, fd_gradient(p, Y)) < 1e-6


def test_gradient_matches_dense_formula():
    p, E, G, Y = random_problem(3, n=20, k=2, r=3, alpha=-1)
    S = dense_S(E, G, Y, -1)
    X = Y @ Y.T
    want = (E @ S + S @ E) @ Y - (S @ X + X @ S) @ Y
    assert rel(riccati_gradient(p, Y), want) < 1e-12


@pytest.mark.parametrize("alpha", [1, -1])
def test_curvature_matches_gradient_differences(alpha):
    p, *_, Y = random_problem(4, n=15, k=2, r=2, alpha=alpha)
    D = np.random.default_rng(5).standard_normal(Y.shape)
    h = 1e-5
    fd = (riccati_gradient(p, Y + h * D) - riccati_gradient(p, Y - h * D)) / (2 * h)
    assert rel(riccati_curvature(p, Y, D), fd) < 1e-6


@given(st.integers(0, 10_000), st.sampled_from([1, -1]), st.integers(1, 3), st.integers(1, 4))
@settings(max_examples=10, deadline=None)
def test_gradient_property(seed, alpha, k, r):
    p, *_, Y = random_problem(seed, n=12, k=k, r=r, alpha=alpha)
    assert rel(riccati_gradient(p, Y), fd_gradient(p, Y)) < 1e-6


# -- dense oracle --------------------------------------------------------------


def test_oracle_examples():
    X = dense_riccati_oracle(np.eye(2), np.array([[1.0, 0.0]])).entries
    assert np.allclose(X, np.array([[S2M1, 0.0], [0.0, 0.0]]), atol=1e-15)
    assert np.allclose(dense_riccati_oracle(np.eye(3), np.zeros((1, 3))).entries, 0.0)
    E = np.diag([1.0, 2.0, 3.0])
    G = np.ones((1, 3))
    X = dense_riccati_oracle(E, G).entries
    assert np.linalg.norm(E @ X + X @ E + X @ X - G.T @ G) < 1e-12
    assert np.allclose(X, FROZEN["riccati_diag123_ones"], atol=1e-14)


def test_oracle_agrees_with_care_solver():
    rng = np.random.default_rng(6)
    M = rng.standard_normal((12, 12))
    E = M @ M.T / 12 + 0.5 * np.eye(12)
    G = rng.standard_normal((2, 12))
    assert rel(dense_riccati_oracle(E, G).entries, ref_riccati(E, G)) < 1e-10


def test_oracle_downdate_mode():
    E = np.diag([2.0, 3.0])
    G = np.array([[1.0, 1.0]])
    X = dense_riccati_oracle(E, G, -1).entries
    assert np.linalg.norm(E @ X + X @ E - X @ X - G.T @ G) < 1e-12
    assert np.linalg.eigvalsh(X).min() > -1e-14
    with pytest.raises(NoPSDSolutionError):
        dense_riccati_oracle(np.eye(2), np.array([[2.0, 0.0]]), -1)


def test_projected_solution_small():
    X = projected_riccati_solution(np.array([[1.0]]), np.array([[1.0]]), 1)
    assert X[0, 0] == pytest.approx(S2M1)


# -- solver -----------------------------------------------------------------


def test_solver_zero_rhs():
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(np.ones(5)), np.zeros((1, 5)), target_rank=3))
    assert sol.Y.shape[1] == 0 and sol.residual == 0.0 and sol.converged


def test_solver_identity_example():
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(np.ones(2)), np.array([[1.0, 0.0]]), target_rank=1))
    X = sol.Y @ sol.Y.T
    assert np.abs(X - np.array([[S2M1, 0.0], [0.0, 0.0]])).max() <= 1e-8
    assert sol.converged


@pytest.mark.parametrize("seed", range(4))
def test_solver_full_rank_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    n = 40
    e = rng.uniform(0.2, 3.0, n)
    G = rng.standard_normal((2, n))
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, n, tol=1e-12))
    X = sol.Y @ sol.Y.T
    assert rel(X, ref_riccati(np.diag(e), G)) <= 1e-6


def test_solver_history_monotone_and_deterministic():
    rng = np.random.default_rng(11)
    e = rng.uniform(0.0, 1.0, 80) ** 0.5
    G = rng.standard_normal((1, 80))
    p = RiccatiProblem(DiagonalOperator(e), G, 1, 10, tol=1e-12, seed=3)
    a, b = riccati_lr_solve(p), riccati_lr_solve(p)
    h = np.array(a.residual_history)
    assert np.all(np.diff(h) <= 0)
    assert a.residual_history == b.residual_history
    assert np.array_equal(a.Y, b.Y)
    assert np.all(np.isfinite(a.Y)) and a.rank <= 10


def test_solver_respects_rank_budget_and_reports_nonconvergence():
    rng = np.random.default_rng(12)
    e = np.logspace(-3, 3, 50)
    G = rng.standard_normal((1, 50))
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, 3, tol=1e-12))
    assert sol.rank <= 3
    assert not sol.converged and sol.residual > 1e-12


def test_kronecker_preconditioner_needs_inverse():
    E = SymmetricOperator(4, apply=lambda X: 2.0 * X)
    with pytest.raises(SolverConfigError):
        riccati_lr_solve(RiccatiProblem(E, np.ones((1, 4)), preconditioner="kronecker"))


@pytest.mark.parametrize("prec", ["block", "kronecker", "none"])
def test_preconditioners_all_converge(prec):
    rng = np.random.default_rng(13)
    e = np.sqrt(rng.uniform(0.0, 1.0, 60))
    G = rng.standard_normal((1, 60)) / 8
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, 12, tol=1e-8, preconditioner=prec))
    assert sol.residual <= 1e-8


def test_solver_without_diagonal_uses_scalar_fallback():
    rng = np.random.default_rng(14)
    e = np.sqrt(rng.uniform(0.0, 1.0, 40))
    E = SymmetricOperator(40, apply=lambda X: e[:, None] * X)
    G = rng.standard_normal((1, 40))
    sol = riccati_lr_solve(RiccatiProblem(E, G, 1, 12, tol=1e-8))
    assert sol.residual <= 1e-8


def test_warm_start_is_used():
    rng = np.random.default_rng(15)
    e = np.sqrt(rng.uniform(0.0, 1.0, 60))
    G = rng.standard_normal((1, 60))
    p = RiccatiProblem(DiagonalOperator(e), G, 1, 10, tol=1e-12)
    first = riccati_lr_solve(p)
    p2 = RiccatiProblem(DiagonalOperator(e), G, 1, 10, tol=1e-12, Y0=first.Y)
    again = riccati_lr_solve(p2)
    assert again.residual_history[0] == pytest.approx(first.residual, rel=1e-8)
    assert again.residual <= first.residual * (1 + 1e-12)
    with pytest.raises(ValueError):
        RiccatiProblem(DiagonalOperator(e), G, 1, 2, Y0=first.Y)


def test_downdate_mode_solver():
    rng = np.random.default_rng(16)
    e = rng.uniform(1.0, 2.0, 30)
    G = 0.2 * rng.standard_normal((1, 30))
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, -1, 6, tol=1e-10))
    X = sol.Y @ sol.Y.T
    want = dense_riccati_oracle(np.diag(e), G, -1).entries
    assert rel(X, want) < 1e-6


def test_cost_is_independent_of_n():
    # products with E per solve stay flat as n grows (same spectrum shape)
    counts = []
    for n in (200, 800, 3200):
        rng = np.random.default_rng(17)
        e = np.sqrt(np.linspace(1e-3, 1.0, n))
        G = rng.standard_normal((1, n)) / np.sqrt(n)
        sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, 8, tol=1e-8))
        counts.append(sol.e_applies)
    assert max(counts) <= 3 * min(counts)
    # and stay within a modest multiple of r^2
    assert max(counts) <= 600 * 8 ** 2


@pytest.mark.xfail(strict=True, reason="rank-12 minimum residual for this instance is about 3e-6; see notes")
def test_logspace_rank12_residual_target():
    rng = np.random.default_rng(0)
    e = np.logspace(-3, 3, 50)
    G = rng.standard_normal((1, 50))
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, 12, tol=1e-6))
    Xs = dense_riccati_oracle(np.diag(e), G).entries
    w, V = np.linalg.eigh(Xs)
    top = np.argsort(w)[::-1][:12]
    X12 = (V[:, top] * w[top]) @ V[:, top].T
    X = sol.Y @ sol.Y.T
    assert sol.residual <= 1e-6
    assert np.linalg.norm(X - X12) <= 1e-5


def test_logspace_rank12_best_effort():
    # what is attainable: within a small factor of the rank-12 minimum found by a dense least-squares fit
    rng = np.random.default_rng(0)
    e = np.logspace(-3, 3, 50)
    G = rng.standard_normal((1, 50))
    sol = riccati_lr_solve(RiccatiProblem(DiagonalOperator(e), G, 1, 12, tol=1e-6))
    assert sol.rank == 12
    assert sol.residual <= 1e-5
    assert not sol.converged

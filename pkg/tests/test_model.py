"""Problem container: cached constants, gradient oracles, step bounds."""

import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp

from snspp.losses import Logistic, Squared, StudentT
from snspp.model import (
    EvaluationError,
    Problem,
    batch_gradient,
    build_problem,
    derive_constants,
    full_gradient,
    objective,
    operator_norm,
    weak_convexity_matvec,
)
from snspp.regularizers import make_regularizer


def random_problem(rng, N=12, n=5, loss="student_t", sparse=False):
    A = rng.standard_normal((N, n))
    if sparse:
        A = sp.csr_matrix(np.where(rng.random((N, n)) < 0.4, A, 0.0))
    if loss == "student_t":
        fam = StudentT(rng.standard_normal(N), nu=1.0)
    elif loss == "squared":
        fam = Squared(rng.standard_normal(N))
    else:
        fam = Logistic()
    return Problem(A, fam, make_regularizer("l1", lam=0.1))


# ---------------------------------------------------------------- operator norm


def test_operator_norm_matches_svd_small():
    rng = np.random.default_rng(0)
    for shape in [(5, 3), (3, 8), (20, 20)]:
        M = rng.standard_normal(shape)
        ref = np.linalg.svd(M, compute_uv=False)[0]
        assert operator_norm(M) == pytest.approx(ref, rel=1e-12)
        assert operator_norm(sp.csr_matrix(M)) == pytest.approx(ref, rel=1e-12)


def test_operator_norm_power_iteration_path():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((150, 120))  # 18000 entries forces the iterative path
    ref = np.linalg.svd(M, compute_uv=False)[0]
    assert operator_norm(M) == pytest.approx(ref, rel=1e-6)
    assert operator_norm(sp.csr_matrix(M)) == pytest.approx(ref, rel=1e-6)


def test_operator_norm_single_row_is_euclidean():
    row = np.array([[3.0, 4.0]])
    assert operator_norm(row) == pytest.approx(5.0, rel=1e-15)
    assert operator_norm(sp.csr_matrix(row)) == pytest.approx(5.0, rel=1e-15)
    col = np.array([[3.0], [4.0]])
    assert operator_norm(col) == pytest.approx(5.0, rel=1e-15)


# ---------------------------------------------------------------- constants


def test_cached_constants_match_per_row_loop():
    rng = np.random.default_rng(2)
    p = random_problem(rng, N=15, n=6)
    L_i = p.smoothness
    g_i = p.gammas
    norms = [np.dot(p.A[i], p.A[i]) for i in range(p.N)]
    assert p.L_bar == pytest.approx(max(L * s for L, s in zip(L_i, norms)), rel=1e-12)
    assert p.A_bar == pytest.approx(max(norms), rel=1e-12)
    assert p.M_bar == pytest.approx(max(g_i) * max(norms), rel=1e-12)
    assert p.L == pytest.approx(sum(L * s for L, s in zip(L_i, norms)) / p.N, rel=1e-12)
    assert p.mu_star == pytest.approx(min(1.0 / (L + g) for L, g in zip(L_i, g_i)), rel=1e-12)


def test_sparse_and_dense_constants_agree():
    rng = np.random.default_rng(3)
    A = np.where(rng.random((10, 4)) < 0.5, rng.standard_normal((10, 4)), 0.0)
    t = rng.standard_normal(10)
    reg = make_regularizer("zero")
    pd = Problem(A, Squared(t), reg)
    ps = Problem(sp.csr_matrix(A), Squared(t), reg)
    for attr in ("L_bar", "A_bar", "M_bar", "L", "mu_star"):
        assert getattr(pd, attr) == pytest.approx(getattr(ps, attr), rel=1e-14)


def test_scaled_identity_constants():
    # rows of 2*I have squared norm 4; squared loss has L_i = 1, gamma = 0
    p = Problem(2.0 * np.eye(3), Squared(np.zeros(3)), make_regularizer("zero"))
    assert p.L_bar == 4.0
    assert p.A_bar == 4.0
    assert p.M_bar == 0.0
    assert p.L == 4.0
    assert p.mu_star == 1.0


def test_step_bound_hand_example():
    # unit row, L_1 = 1, gamma_1 = 1: every constant collapses to 1
    p = Problem(
        np.array([[1.0]]), Squared(np.zeros(1)), make_regularizer("zero"),
        gammas=np.array([1.0]),
    )
    rep = derive_constants(p, b=4, m=10, eta_bar=0.9)
    expect = 0.9 / ((1.0 + 10.0 / math.sqrt(8.0)) + 1.0)
    assert rep.alpha_hat == pytest.approx(expect, rel=1e-14)
    assert rep.alpha_qlinear == pytest.approx(1.0 / (1.0 + math.sqrt(0.5) * 10.0), rel=1e-14)
    assert (rep.b, rep.m, rep.eta_bar) == (4, 10, 0.9)


def test_derive_constants_takes_binding_branch():
    # large M_bar makes 2L + M_bar the max in the stability denominator
    p = Problem(
        np.array([[1.0]]), Squared(np.zeros(1)), make_regularizer("zero"),
        gammas=np.array([50.0]),
    )
    rep = derive_constants(p, b=1000, m=1, eta_bar=0.5)
    assert 2.0 * p.L + p.M_bar > (1.0 + 1.0 / math.sqrt(2000.0)) * p.L_bar + max(p.L, p.M_bar)
    assert rep.alpha_hat == pytest.approx(0.5 / (2.0 * p.L + p.M_bar), rel=1e-14)


def test_derive_constants_validation():
    p = random_problem(np.random.default_rng(4), loss="squared")
    with pytest.raises(ValueError):
        derive_constants(p, b=0)
    flat = Problem(
        np.eye(2), Squared(np.zeros(2)), make_regularizer("zero"),
        smoothness=np.zeros(2),
    )
    assert flat.mu_star is None
    with pytest.raises(ValueError):
        derive_constants(flat, b=1)


# ---------------------------------------------------------------- gradients


def test_full_batch_is_bit_exact_under_permutation():
    rng = np.random.default_rng(5)
    p = random_problem(rng, N=9, n=4)
    x = rng.standard_normal(p.n)
    ref = full_gradient(p, x)
    for order in (np.arange(p.N), np.arange(p.N)[::-1], rng.permutation(p.N)):
        out = batch_gradient(p, x, order)
        assert np.array_equal(out, ref)


def test_batch_gradient_duplicates_average_in():
    rng = np.random.default_rng(6)
    p = random_problem(rng, N=7, n=3, loss="squared")
    x = rng.standard_normal(p.n)
    single = batch_gradient(p, x, [4])
    np.testing.assert_array_equal(batch_gradient(p, x, [4, 4]), single)
    mixed = batch_gradient(p, x, [2, 4, 4, 2])
    ref = 0.5 * (batch_gradient(p, x, [2]) + batch_gradient(p, x, [4]))
    np.testing.assert_allclose(mixed, ref, rtol=1e-14, atol=1e-15)


def test_batch_gradient_unbiased_over_enumeration():
    rng = np.random.default_rng(7)
    p = random_problem(rng, N=3, n=4, loss="student_t")
    x = rng.standard_normal(p.n)
    ref = full_gradient(p, x)
    with_rep = [batch_gradient(p, x, list(s)) for s in itertools.product(range(3), repeat=2)]
    np.testing.assert_allclose(np.mean(with_rep, axis=0), ref, rtol=1e-12, atol=1e-14)
    without = [batch_gradient(p, x, list(s)) for s in itertools.combinations(range(3), 2)]
    np.testing.assert_allclose(np.mean(without, axis=0), ref, rtol=1e-12, atol=1e-14)


def test_sparse_dense_gradients_agree():
    rng = np.random.default_rng(8)
    A = np.where(rng.random((8, 5)) < 0.6, rng.standard_normal((8, 5)), 0.0)
    t = rng.standard_normal(8)
    reg = make_regularizer("zero")
    pd = Problem(A, StudentT(t, nu=2.0), reg)
    ps = Problem(sp.csr_matrix(A), StudentT(t, nu=2.0), reg)
    x = rng.standard_normal(5)
    np.testing.assert_allclose(full_gradient(ps, x), full_gradient(pd, x), rtol=1e-13)
    np.testing.assert_allclose(
        batch_gradient(ps, x, [0, 3, 3]), batch_gradient(pd, x, [0, 3, 3]), rtol=1e-13
    )
    assert objective(ps, x) == pytest.approx(objective(pd, x), rel=1e-13)


def test_gradient_matches_objective_finite_differences():
    rng = np.random.default_rng(9)
    p = random_problem(rng, N=10, n=4, loss="student_t")
    x = rng.standard_normal(4) * 0.5
    # differentiate the smooth part only (phi = l1 is kinked)
    smooth = Problem(p.A, p.loss, make_regularizer("zero"))
    g = full_gradient(smooth, x)
    for j in range(4):
        e = np.zeros(4)
        e[j] = 1e-6
        fd = (objective(smooth, x + e) - objective(smooth, x - e)) / 2e-6
        assert g[j] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_batch_validation_errors():
    p = random_problem(np.random.default_rng(10), loss="squared")
    x = np.zeros(p.n)
    with pytest.raises(ValueError):
        batch_gradient(p, x, [])
    with pytest.raises(ValueError):
        batch_gradient(p, x, [-1])
    with pytest.raises(ValueError):
        batch_gradient(p, x, [p.N])
    with pytest.raises(ValueError):
        batch_gradient(p, np.zeros(p.n + 1), [0])
    with pytest.raises(EvaluationError):
        batch_gradient(p, np.full(p.n, np.nan), [0])


def test_evaluation_error_carries_sample_index():
    A = np.array([[1e-10], [1e300]])
    p = Problem(A, Squared(np.zeros(2)), make_regularizer("zero"))
    with np.errstate(over="ignore"):
        # z = (1, inf): only the second sample is non-finite
        with pytest.raises(EvaluationError) as info:
            objective(p, np.array([1e10]))
        assert info.value.sample == 1
        with pytest.raises(EvaluationError) as info:
            batch_gradient(p, np.array([1e10]), [1, 0])
        assert info.value.sample == 1


def test_oracles_do_not_mutate_inputs():
    rng = np.random.default_rng(11)
    p = random_problem(rng, N=6, n=3, loss="student_t")
    x = rng.standard_normal(3)
    A_copy, x_copy = p.A.copy(), x.copy()
    objective(p, x)
    full_gradient(p, x)
    weak_convexity_matvec(p, [0, 2], x)
    np.testing.assert_array_equal(p.A, A_copy)
    np.testing.assert_array_equal(x, x_copy)


# ---------------------------------------------------------------- weak-convexity operator


def test_weak_convexity_matvec_vs_dense():
    rng = np.random.default_rng(12)
    for sparse in (False, True):
        p = random_problem(rng, N=10, n=4, loss="student_t", sparse=sparse)
        x = rng.standard_normal(4)
        S = np.array([1, 5, 5, 0])
        rows = p.A[S].toarray() if sparse else p.A[S]
        M = sum(
            p.gammas[i] * np.outer(r, r) for i, r in zip(S, rows)
        ) / len(S)
        np.testing.assert_allclose(weak_convexity_matvec(p, S, x), M @ x, rtol=1e-12, atol=1e-14)


def test_weak_convexity_matvec_zero_for_convex_losses():
    p = random_problem(np.random.default_rng(13), loss="squared")
    out = weak_convexity_matvec(p, [0, 1], np.ones(p.n))
    assert out.shape == (p.n,)
    assert np.all(out == 0.0)


# ---------------------------------------------------------------- construction


def test_problem_validation():
    reg = make_regularizer("zero")
    with pytest.raises(ValueError):
        Problem(np.ones(3), Squared(np.zeros(3)), reg)
    with pytest.raises(TypeError):
        Problem(np.eye(2), Squared(np.zeros(2)), object())
    with pytest.raises(ValueError):
        Problem(np.eye(2), Squared(np.zeros(2)), reg, gammas=np.zeros(3))
    with pytest.raises(ValueError):
        Problem(np.eye(2), Squared(np.zeros(2)), reg, gammas=np.array([-0.1, 0.0]))


def test_rows_keeps_duplicates():
    p = random_problem(np.random.default_rng(14), N=5, n=3, loss="squared")
    got = p.rows([1, 1, 0])
    assert got.shape == (3, 3)
    np.testing.assert_array_equal(got[0], p.A[1])
    np.testing.assert_array_equal(got[1], p.A[1])
    np.testing.assert_array_equal(got[2], p.A[0])


def test_build_problem_absorbs_logistic_labels():
    rng = np.random.default_rng(15)
    F = rng.standard_normal((6, 3))
    t = np.array([1.0, -1.0, 1.0, -1.0, -1.0, 1.0])
    p = build_problem(F, t, "logistic", reg_kind="l1", lam=0.2)
    np.testing.assert_allclose(p.A, F * t[:, None], rtol=0, atol=0)
    assert isinstance(p.loss, Logistic)
    assert p.regularizer.kind == "l1" and p.regularizer.lam == 0.2
    ps = build_problem(sp.csr_matrix(F), t, "logistic")
    np.testing.assert_allclose(ps.A.toarray(), F * t[:, None], rtol=1e-15)
    with pytest.raises(ValueError):
        build_problem(F, np.array([0.0, 1, 1, 1, 1, 1]), "logistic")


def test_build_problem_other_losses_keep_features():
    rng = np.random.default_rng(16)
    F = rng.standard_normal((4, 2))
    t = rng.standard_normal(4)
    p = build_problem(F, t, "student_t", reg_kind="l1_plus_ridge", lam=0.1,
                      ridge=0.5, nu=2.0, gamma=0.4)
    np.testing.assert_array_equal(p.A, F)
    assert isinstance(p.loss, StudentT)
    assert p.loss.nu == 2.0 and p.loss.gamma == 0.4
    np.testing.assert_array_equal(p.loss.targets, t)
    assert p.regularizer.mu == 0.5
    psq = build_problem(F, t, "squared")
    assert isinstance(psq.loss, Squared)


def test_objective_hand_value():
    # psi = mean((z-b)^2/2) + lam*|x|_1 on a 2-sample instance
    A = np.array([[1.0, 0.0], [0.0, 2.0]])
    p = Problem(A, Squared(np.array([1.0, -1.0])), make_regularizer("l1", lam=0.5))
    x = np.array([2.0, 1.0])
    # z = (2, 2): losses (0.5, 4.5) -> mean 2.5; phi = 0.5*3
    assert objective(p, x) == pytest.approx(4.0, rel=1e-15)

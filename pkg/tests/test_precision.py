import numpy as np
import pytest
from scipy import stats

from condgraph.core import Graph, ValidationError, graph_equal, validate_data
from condgraph.precision import (
    NotConvergedError,
    PgConfig,
    SingularInputError,
    default_tn,
    glasso,
    glasso_kkt_residual,
    glasso_path,
    glasso_support,
    kendall_tau_matrix,
    lambda_path,
    npn_skeptic,
    pg_select,
    ridge_precision,
    sample_correlation,
    sample_covariance,
)
from condgraph.selection import support_graph
from oracles import glasso_projected_gradient


def random_cov(rng, p, n=None):
    n = n or 2 * p
    A = rng.standard_normal((n, p))
    return A.T @ A / n + 0.1 * np.eye(p)


def test_covariance_identical_rows():
    S = sample_covariance(np.ones((2, 3)))
    assert np.all(S == 0)


def test_covariance_unbiased():
    X = np.array([[0.0, 1.0, 1.0], [2.0, 1.0, 1.0]])
    assert sample_covariance(X)[0, 0] == 2.0


def test_covariance_psd():
    S = sample_covariance(np.random.default_rng(0).standard_normal((10, 8)))
    assert np.linalg.eigvalsh(S).min() >= -1e-10
    assert np.allclose(S, np.cov(np.random.default_rng(0).standard_normal((10, 8)), rowvar=False))


def test_correlation_unit_diag():
    C = sample_correlation(np.random.default_rng(0).standard_normal((20, 4)))
    assert np.allclose(np.diag(C), 1)


def test_kendall_matches_scipy():
    X = np.round(np.random.default_rng(1).standard_normal((40, 4)), 1)
    tau = kendall_tau_matrix(X)
    for a in range(4):
        for b in range(a + 1, 4):
            assert tau[a, b] == pytest.approx(stats.kendalltau(X[:, a], X[:, b]).statistic, abs=1e-12)


def test_skeptic_boundaries():
    x = np.arange(10.0)
    X = np.column_stack([x, x ** 3, np.random.default_rng(0).standard_normal(10)])
    C = npn_skeptic(X)
    assert C[0, 1] == pytest.approx(1.0)
    assert np.allclose(np.diag(C), 1)
    assert np.allclose(C, C.T)
    assert np.all(np.abs(C) <= 1 + 1e-12)


def test_skeptic_zero_tau():
    X = np.array([[1.0, 2.0, 0.0], [2.0, 4.0, 0.5], [3.0, 1.0, 0.2], [4.0, 3.0, 0.1]])
    assert kendall_tau_matrix(X)[0, 1] == 0.0
    assert npn_skeptic(X)[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_skeptic_indefinite_is_repaired():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((4, 12))  # n << p tends to give an indefinite sin-tau matrix
    C = npn_skeptic(X)
    assert np.linalg.eigvalsh(C).min() > -1e-10


def test_skeptic_independent_columns():
    ok = 0
    for s in range(20):
        C = npn_skeptic(np.random.default_rng(s).standard_normal((2000, 3)))
        ok += np.all(np.abs(C[np.triu_indices(3, 1)]) <= 0.1)
    assert ok >= 19


def test_glasso_diagonal_input():
    S = np.diag([1.0, 2.0, 4.0])
    for lam in (0.0, 0.1, 1.0):
        K = glasso(S, PgConfig(lam=lam)).values
        assert np.allclose(K, np.diag([1.0, 0.5, 0.25]))


def test_glasso_identity_zero_lambda():
    assert np.allclose(glasso(np.eye(4), PgConfig(lam=0.0)).values, np.eye(4))


def test_glasso_matches_slow_solver():
    rng = np.random.default_rng(21)
    for _ in range(10):
        S = random_cov(rng, 3)
        K = glasso(S, PgConfig(lam=0.1, tol=1e-10)).values
        assert np.max(np.abs(K - glasso_projected_gradient(S, 0.1))) <= 1e-6


def test_glasso_kkt_and_pd():
    rng = np.random.default_rng(5)
    for _ in range(10):
        S = random_cov(rng, 10)
        for lam in (0.05, 0.3):
            est = glasso(S, PgConfig(lam=lam))
            assert est.kkt_residual <= 1e-4
            assert est.kkt_residual == glasso_kkt_residual(S, est.values, lam)
            assert np.linalg.eigvalsh(est.values).min() > 0
            assert np.allclose(est.values, est.values.T)


def test_glasso_zero_lambda_is_inverse():
    S = random_cov(np.random.default_rng(0), 5)
    assert np.allclose(glasso(S, PgConfig(lam=0.0, tol=1e-10)).values, np.linalg.inv(S), atol=1e-6)


def test_glasso_singular_zero_lambda():
    S = np.ones((3, 3))
    with pytest.raises(SingularInputError):
        glasso(S, PgConfig(lam=0.0))


def test_glasso_singular_positive_lambda_ok():
    S = np.ones((3, 3))
    est = glasso(S, PgConfig(lam=0.2))
    assert np.linalg.eigvalsh(est.values).min() > 0


def test_glasso_not_converged_carries_partial():
    S = random_cov(np.random.default_rng(1), 8)
    with pytest.raises(NotConvergedError) as err:
        glasso(S, PgConfig(lam=0.01, tol=1e-14, max_iter=1))
    assert err.value.partial.values.shape == (8, 8)
    assert err.value.max_iter == 1


def test_glasso_rejects_asymmetric():
    with pytest.raises(ValidationError):
        glasso(np.array([[1.0, 0.2, 0], [0.0, 1, 0], [0, 0, 1]]), PgConfig(lam=0.1))


def test_penalty_support_mostly_nested():
    # Support nesting along the path is not guaranteed for the graphical
    # lasso. Every violation must be a genuine property of the optimum (a
    # cold start agrees) and violations must stay rare.
    rng = np.random.default_rng(9)
    steps = violations = 0
    for _ in range(10):
        S = random_cov(rng, 8)
        path = glasso_path(S, lambda_path(S, 10, 0.1), PgConfig(tol=1e-10))
        supports = [glasso_support(e).edges for e in path]  # decreasing lambda
        for k in range(len(path) - 1):
            steps += 1
            lost = supports[k] - supports[k + 1]
            if lost:
                violations += 1
                cold = glasso(S, PgConfig(lam=path[k + 1].lam, tol=1e-12)).values
                assert all(cold[i, j] == 0 for i, j in lost)
    assert violations <= 0.05 * steps


def test_lambda_path_shape():
    S = random_cov(np.random.default_rng(0), 5)
    lams = lambda_path(S, 10, 0.1)
    off = np.abs(S[~np.eye(5, dtype=bool)]).max()
    assert len(lams) == 10
    assert lams[0] == pytest.approx(off) and lams[-1] == pytest.approx(off / 10)
    assert np.all(np.diff(lams) < 0)


def test_glasso_path_warm_start_matches_cold():
    S = random_cov(np.random.default_rng(4), 6)
    path = glasso_path(S, lambda_path(S, 5, 0.1), PgConfig(tol=1e-10))
    cold = glasso(S, PgConfig(lam=path[-1].lam, tol=1e-10))
    assert np.allclose(path[-1].values, cold.values, atol=1e-6)


def test_ridge_examples():
    assert np.allclose(ridge_precision(np.zeros((3, 3)), 2.0).values, 0.5 * np.eye(3))
    assert np.allclose(ridge_precision(np.eye(3), 1.0).values, 0.5 * np.eye(3))
    with pytest.raises(ValidationError):
        ridge_precision(np.eye(3), 0.0)


def test_ridge_agrees_with_glasso_small_penalty():
    S = random_cov(np.random.default_rng(2), 5)
    a = ridge_precision(S, 1e-8).values
    b = glasso(S, PgConfig(lam=0.0, tol=1e-10)).values
    assert np.max(np.abs(a - b)) <= 1e-4


def test_pg_select_examples():
    assert len(pg_select(np.eye(4), 0.1)) == 0
    K = np.eye(3)
    K[0, 2] = K[2, 0] = 0.5
    assert pg_select(K, 0.4).edges == {(0, 2)}
    p = 8
    ar = np.eye(p) + np.diag(np.full(p - 1, -0.45), 1) + np.diag(np.full(p - 1, -0.45), -1)
    assert pg_select(ar, 0.2).edges == {(k, k + 1) for k in range(p - 1)}
    with pytest.raises(ValidationError):
        pg_select(np.eye(3), 0.0)


def test_pg_select_nesting():
    K = np.random.default_rng(0).uniform(-1, 1, (6, 6))
    K = K + K.T
    for lo, hi in [(0.1, 0.5), (0.3, 0.31), (0.5, 1.5)]:
        assert pg_select(K, hi).edges <= pg_select(K, lo).edges


def test_pg_surrogate():
    rng = np.random.default_rng(8)
    for _ in range(50):
        p = int(rng.integers(3, 9))
        eps = rng.uniform(0.01, 0.1)
        k_min = rng.uniform(2 * eps + 1e-3, 1.0)
        K = np.eye(p)
        iu, ju = np.triu_indices(p, 1)
        keep = rng.random(len(iu)) < 0.4
        K[iu[keep], ju[keep]] = rng.choice([-1, 1], keep.sum()) * rng.uniform(k_min, 1.0, keep.sum())
        K = np.triu(K, 1) + np.triu(K, 1).T + np.eye(p)
        noise = 0.999 * rng.uniform(-eps, eps, (p, p))
        t_n = rng.uniform(eps, k_min - eps)
        assert graph_equal(pg_select(K + (noise + noise.T) / 2, t_n),
                           support_graph(K - np.eye(p)))


def test_default_tn():
    assert default_tn(500, 20) == pytest.approx(2 * np.sqrt(np.log(20) / 500))


def test_pgconfig_validation():
    with pytest.raises(ValidationError):
        PgConfig(t_n=0)
    with pytest.raises(ValidationError):
        PgConfig(lam=-1)

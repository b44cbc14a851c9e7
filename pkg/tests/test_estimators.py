import itertools
import math

import numpy as np
import pytest

from robust_elicit import estimators as est
from robust_elicit import rand


def _reg_instance(seed, n=10, p=2):
    g = np.random.default_rng(seed)
    X = g.normal(size=(n, p))
    y = X @ g.normal(size=p) + g.normal(size=n)
    bad = g.choice(n, size=2, replace=False)
    y[bad] += g.choice([-1, 1], size=2) * g.uniform(5, 20, size=2)
    return X, y


def _cls_instance(seed, n=10):
    g = np.random.default_rng(seed)
    while True:
        X = g.normal(size=(n, 1))
        y = (g.uniform(size=n) < 1 / (1 + np.exp(-1.5 * X[:, 0]))).astype(float)
        if 3 <= y.sum() <= n - 3:
            return X, y


def enumerate_min(n, h, objective):
    best = math.inf
    for H in itertools.combinations(range(n), h):
        val = objective(np.array(H))
        if val is not None:
            best = min(best, val)
    return best


def lts_objective(X, y):
    def f(H):
        coef, _, rank, _ = np.linalg.lstsq(X[H], y[H], rcond=None)
        if rank < X.shape[1]:
            return None
        r = y[H] - X[H] @ coef
        return float(r @ r)
    return f


@pytest.mark.parametrize("alpha", [0.3, 0.5])
def test_lts_matches_enumeration(alpha):
    for seed in range(100):
        n = 10 if alpha == 0.3 else 9
        X, y = _reg_instance(seed, n=n)
        h = n - math.floor(alpha * n)
        assert math.comb(n, h) <= 500
        fit = est.fit_lts(X, y, alpha, n_starts=500)
        assert fit.info["mode"] == "exhaustive"
        oracle = enumerate_min(n, h, lts_objective(X, y))
        assert abs(fit.objective - oracle) <= 1e-9 * max(1.0, oracle)
        assert len(fit.subset) == h


def test_sparse_lts_matches_enumeration():
    for seed in range(100):
        X, y = _reg_instance(seed, n=10, p=3)
        lam = 0.05 * (1 + seed % 4)
        fit = est.fit_sparse_lts(X, y, 0.3, lam, n_starts=500)
        assert fit.info["mode"] == "exhaustive"

        def obj(H):
            return est.fit_lasso(X[H], y[H], lam, 1e-10, 10000, standardize=False).objective

        oracle = enumerate_min(10, 7, obj)
        assert abs(fit.objective - oracle) <= 1e-9 * max(1.0, oracle)


def test_sparse_lts_objective_definition():
    X, y = _reg_instance(3, n=10, p=3)
    lam = 0.1
    fit = est.fit_sparse_lts(X, y, 0.3, lam, n_starts=500)
    H = fit.subset
    r = y[H] - X[H] @ fit.beta_hat
    assert fit.objective == pytest.approx(r @ r / (2 * len(H)) + lam * np.abs(fit.beta_hat).sum(), rel=1e-9)


def test_trimmed_logistic_matches_enumeration():
    for seed in range(100):
        X, y = _cls_instance(seed)
        fit = est.fit_trimmed_logistic(X, y, 0.3, n_starts=500)
        assert fit.info["mode"] == "exhaustive"

        def obj(H):
            if y[H].min() == y[H].max():
                return None
            return est.fit_logistic(X[H], y[H]).objective

        oracle = enumerate_min(10, 7, obj)
        assert abs(fit.objective - oracle) <= 1e-9 * max(1.0, oracle)


def _monotone(trace):
    return all(b <= a for a, b in zip(trace, trace[1:]))


def test_cstep_traces_monotone_all_modes():
    g = rand.derive_stream(5, "traces", 0, "x")
    for seed in range(20):
        X, y = _reg_instance(seed, n=40, p=3)
        for starts in (10, 500):
            fit = est.fit_lts(X, y, 0.25, starts, g.spawn(f"lts-{seed}-{starts}"))
            assert _monotone(fit.trace)
        fit = est.fit_sparse_lts(X, y, 0.25, 0.1, 10, g.spawn(f"slts-{seed}"))
        assert _monotone(fit.trace)
        Xc, yc = _cls_instance(seed, n=40)
        fit = est.fit_trimmed_logistic(Xc, yc, 0.25, 10, g.spawn(f"tl-{seed}"))
        assert _monotone(fit.trace)


def test_lts_modes():
    X, y = _reg_instance(0, n=30, p=2)
    assert est.fit_lts(X, y, 0.5, 500).info["mode"] == "enumerated"  # C(30, 2) = 435
    g = rand.derive_stream(1, "m", 0, "x")
    assert est.fit_lts(X, y, 0.5, 50, g).info["mode"] == "random"
    with pytest.raises(ValueError, match="RngStream"):
        est.fit_lts(X, y, 0.5, 50)
    full = est.fit_lts(X, y, 0.0)
    assert full.info["mode"] == "untrimmed"
    assert np.allclose(full.beta_hat, est.fit_ols(X, y).beta_hat)


def test_lts_resists_gross_outliers():
    g = np.random.default_rng(4)
    X = g.normal(size=(80, 2))
    beta = np.array([1.0, -2.0])
    y = X @ beta + 0.1 * g.normal(size=80)
    y[:20] = 50.0
    fit = est.fit_lts(X, y, 0.5, 100, rand.derive_stream(0, "r", 0, "lts"))
    assert np.allclose(fit.beta_hat, beta, atol=0.1)
    assert not np.allclose(est.fit_ols(X, y).beta_hat, beta, atol=1.0)


def test_ols_gradient_zero():
    for seed in range(100):
        g = np.random.default_rng(seed)
        X = g.normal(size=(50, 5))
        y = X @ g.normal(size=5) + g.normal(size=50)
        fit = est.fit_ols(X, y)
        assert np.max(np.abs(X.T @ (y - X @ fit.beta_hat))) < 1e-8


def test_ols_rank_deficient():
    X = np.ones((5, 2))
    with pytest.raises(est.RankDeficientError, match="1 of 2"):
        est.fit_ols(X, np.arange(5.0))


def test_logistic_gradient_zero():
    for seed in range(100):
        g = np.random.default_rng(seed)
        X = g.normal(size=(200, 3))
        y = (g.uniform(size=200) < 1 / (1 + np.exp(-(X @ np.array([1.0, -0.5, 0.3]) + 0.2)))).astype(float)
        fit = est.fit_logistic(X, y)
        assert fit.converged
        assert np.max(np.abs(est.logistic_gradient(fit, X, y))) < 1e-8


def test_logistic_separation_flagged():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    fit = est.fit_logistic(X, np.array([0.0, 0.0, 1.0, 1.0]))
    assert fit.info["separated"] and not fit.converged
    with pytest.raises(est.EstimationError):
        est.fit_logistic(X, np.ones(4))
    with pytest.raises(ValueError):
        est.fit_logistic(X, np.array([0.0, 2.0, 1.0, 1.0]))


def _lasso_data(seed, n=80, p=30):
    g = np.random.default_rng(seed)
    X = g.normal(1.0, 1.0, size=(n, p))
    y = X[:, :4] @ np.array([3.0, -2.0, 1.5, 1.0]) + g.normal(size=n)
    return X, y


@pytest.mark.parametrize("intercept", [False, True])
def test_lasso_kkt(intercept):
    for seed in range(20):
        X, y = _lasso_data(seed)
        lam = 0.05 * est.lambda_max(X, y, intercept=intercept) * (1 + seed % 5)
        fit = est.fit_lasso(X, y, lam, tol=1e-12, intercept=intercept)
        assert fit.converged
        scale = fit.info["scale"]
        Xc = X - X.mean(axis=0) if intercept else X
        Z = Xc / scale
        b = fit.beta_hat * scale
        resid = y - fit.predict(X)
        grad = Z.T @ resid / len(y)
        active = b != 0
        assert np.max(np.abs(grad[active] - lam * np.sign(b[active]))) < 1e-7
        assert np.all(np.abs(grad[~active]) <= lam + 1e-7)


def test_lasso_orthogonal_design_soft_thresholds():
    n = 64
    Q, _ = np.linalg.qr(np.random.default_rng(0).normal(size=(n, 4)))
    X = Q * math.sqrt(n)  # columns with unit mean square
    y = X @ np.array([2.0, -0.5, 0.05, 0.0]) + 0.01 * np.random.default_rng(1).normal(size=n)
    lam = 0.3
    fit = est.fit_lasso(X, y, lam, standardize=False, tol=1e-14)
    z = X.T @ y / n
    assert np.allclose(fit.beta_hat, np.sign(z) * np.maximum(np.abs(z) - lam, 0.0), atol=1e-12)


def test_lambda_max_zeroes_solution():
    X, y = _lasso_data(2)
    lm = est.lambda_max(X, y)
    assert np.all(est.fit_lasso(X, y, lm * 1.0001).beta_hat == 0)
    assert np.any(est.fit_lasso(X, y, lm * 0.9).beta_hat != 0)


def test_l1_logistic_kkt_and_monotone_in_lambda():
    g = np.random.default_rng(7)
    X = g.normal(size=(150, 10))
    y = (g.uniform(size=150) < 1 / (1 + np.exp(-(X[:, 0] - X[:, 1])))).astype(float)
    sizes = []
    for lam in (0.2, 0.05, 0.01):
        fit = est.fit_l1_logistic(X, y, lam, tol=1e-12, inner_tol=1e-12, standardize=False)
        grad = X.T @ (y - fit.predict_proba(X)) / len(y)
        active = fit.beta_hat != 0
        assert np.max(np.abs(grad[active] - lam * np.sign(fit.beta_hat[active]))) < 1e-5
        assert np.all(np.abs(grad[~active]) <= lam + 1e-5)
        sizes.append(active.sum())
    assert sizes == sorted(sizes)


def test_trimmed_l1_logistic_runs():
    g = np.random.default_rng(8)
    X = g.normal(size=(60, 40))
    y = (X[:, 0] > 0).astype(float)
    y[:6] = 1 - y[:6]
    fit = est.fit_trimmed_l1_logistic(X, y, 0.25, 0.05, 5, rand.derive_stream(0, "t", 0, "x"))
    assert len(fit.subset) == 45 and fit.beta_hat.shape == (40,)


def test_select_lambda_on_grid():
    X, y = _lasso_data(3)
    lam = est.select_lambda(X, y, rand.derive_stream(0, "sel", 0, "x"))
    top = est.lambda_max(X, y)
    grid = top * np.logspace(0, -2, 20)
    assert np.isclose(grid, lam).any()
    assert lam < top

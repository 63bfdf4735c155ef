import numpy as np
import pytest

from glmgof._rng import philox
from glmgof.families import get_family
from glmgof.solvers import (DegenerateDirection, default_lambda_sq,
                            direction_from_sqrt_lasso, glm_lasso,
                            glm_lasso_cv, nodewise_sqrt_lasso, sqrt_lasso)

from _oracles import glm_objective, oracle_glm, oracle_sqrt, sqrt_objective


# ---------------------------------------------------------------- lasso

def test_orthonormal_design_soft_threshold():
    """With X^T X / n = I and no intercept the gaussian lasso solution is
    the soft-thresholded OLS estimate, coordinatewise."""
    rng = philox(3)
    n, p = 400, 5
    Z = rng.standard_normal((n, p))
    Q, _ = np.linalg.qr(Z)
    X = Q * np.sqrt(n)  # columns orthonormal after /sqrt(n) scaling
    beta_true = np.array([2.0, -1.0, 0.3, 0.0, 0.0])
    y = X @ beta_true + 0.1 * rng.standard_normal(n)
    lam = 0.25
    fit = glm_lasso(X, y, "gaussian", lam, intercept=False,
                    standardize=False)
    ols = X.T @ y / n
    expect = np.sign(ols) * np.maximum(np.abs(ols) - lam, 0.0)
    assert np.allclose(fit.beta, expect, atol=1e-8)


def test_penalty_above_lambda_max_gives_null_model():
    rng = philox(4)
    X = rng.standard_normal((60, 8))
    y = X[:, 0] + rng.standard_normal(60)
    lam = float(np.max(np.abs(X.T @ (y - y.mean()) / 60))) * 1.5
    fit = glm_lasso(X, y, "gaussian", lam)
    assert np.all(fit.beta == 0)
    assert fit.intercept == pytest.approx(y.mean(), rel=1e-9)


@pytest.mark.parametrize("family,seed", [("gaussian", 11), ("gaussian", 12),
                                         ("logistic", 13), ("logistic", 14),
                                         ("poisson", 15)])
def test_objective_matches_bruteforce_oracle(family, seed):
    rng = philox(seed)
    n, p = 50, 3
    X = rng.standard_normal((n, p))
    beta_true = np.array([1.0, -0.8, 0.0])
    eta = X @ beta_true * (0.6 if family == "poisson" else 1.0)
    y = get_family(family).sample(eta, rng)
    if family == "logistic" and len(np.unique(y)) < 2:
        pytest.skip("degenerate draw")
    lam = 0.08
    fit = glm_lasso(X, y, family, lam, intercept=True, standardize=False)
    got = glm_objective(X, y, family, lam, fit.beta, fit.intercept)
    ref = oracle_glm(X, y, family, lam, intercept=True)
    assert got <= ref + 1e-6
    assert abs(got - ref) < 1e-5


def test_kkt_violation_small_at_convergence():
    rng = philox(8)
    for trial in range(6):
        n = int(rng.integers(50, 140))
        p = int(rng.integers(5, 30))
        family = ["gaussian", "logistic", "poisson"][trial % 3]
        X = rng.standard_normal((n, p))
        eta = X[:, 0] - 0.5 * X[:, 1]
        if family == "poisson":
            eta *= 0.5
        y = get_family(family).sample(eta, rng)
        if family == "logistic" and len(np.unique(y)) < 2:
            continue
        fit = glm_lasso(X, y, family, 0.05, standardize=False)
        assert fit.converged
        assert fit.kkt_violation <= 1e-6
        # independent stationarity check on the returned coefficients
        fam = get_family(family)
        mu = fam.mu(X @ fit.beta + fit.intercept)
        g = X.T @ (mu - y) / n
        on = np.abs(fit.beta) > 1e-12
        viol = max(np.max(np.abs(g[on] + 0.05 * np.sign(fit.beta[on])),
                          initial=0.0),
                   np.max(np.maximum(np.abs(g[~on]) - 0.05, 0.0),
                          initial=0.0),
                   abs(np.mean(mu - y)))
        assert viol <= 1e-6


def test_objective_trace_is_monotone():
    rng = philox(19)
    X = rng.standard_normal((80, 15))
    y = get_family("logistic").sample(X[:, 0] * 2.0, rng)
    fit = glm_lasso(X, y, "logistic", 0.03)
    tr = np.asarray(fit.objective_trace)
    assert tr.size >= 1
    assert np.all(np.diff(tr) <= 1e-12)


def test_weights_floor_keeps_separated_logistic_finite():
    # perfectly separated data pushes weights to zero; the floor keeps
    # IRLS defined and the fit finite
    X = np.linspace(-3, 3, 40).reshape(-1, 1)
    y = (X[:, 0] > 0).astype(float)
    fit = glm_lasso(X, y, "logistic", 0.01)
    assert np.all(np.isfinite(fit.beta)) and np.isfinite(fit.intercept)


def test_zero_penalty_matches_least_squares():
    rng = philox(23)
    X = rng.standard_normal((50, 3))
    y = X @ np.array([1.0, 2.0, -1.0]) + 3.0 + 0.05 * rng.standard_normal(50)
    fit = glm_lasso(X, y, "gaussian", 0.0, standardize=False)
    A = np.c_[np.ones(50), X]
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    assert fit.intercept == pytest.approx(coef[0], abs=1e-6)
    assert np.allclose(fit.beta, coef[1:], atol=1e-6)


def test_standardize_invariance_of_predictions():
    rng = philox(29)
    X = rng.standard_normal((70, 6)) * np.array([1, 10, 0.1, 1, 5, 1])
    y = X[:, 0] + 0.3 * rng.standard_normal(70)
    # a constant column must not break the scale computation
    X[:, 3] = 2.0
    fit = glm_lasso(X, y, "gaussian", 0.05, standardize=True)
    assert np.all(np.isfinite(fit.beta))
    assert fit.kkt_violation <= 1e-6


def test_input_validation():
    X = np.zeros((10, 2))
    with pytest.raises(ValueError):
        glm_lasso(X, np.zeros(9), "gaussian", 0.1)
    with pytest.raises(ValueError):
        glm_lasso(X, np.zeros(10), "gaussian", -0.1)
    with pytest.raises(ValueError):
        glm_lasso(X, np.full(10, 0.5), "logistic", 0.1)


# ------------------------------------------------------------------- cv

def test_cv_reproducible_and_grid_shape():
    rng = philox(31)
    X = rng.standard_normal((90, 12))
    y = X[:, 0] - X[:, 1] + 0.5 * rng.standard_normal(90)
    a = glm_lasso_cv(X, y, "gaussian", num_folds=5, seed=7)
    b = glm_lasso_cv(X, y, "gaussian", num_folds=5, seed=7)
    assert a.lambda_chosen == b.lambda_chosen
    assert np.array_equal(a.cv_mean, b.cv_mean)
    assert a.lam_grid.size == 100
    assert a.lam_grid[0] > a.lam_grid[-1]
    assert a.lam_grid[-1] == pytest.approx(0.01 * a.lam_grid[0])
    assert a.fit.lam == a.lambda_chosen
    # threads must not change the selection
    c = glm_lasso_cv(X, y, "gaussian", num_folds=5, seed=7, threads=4)
    assert c.lambda_chosen == a.lambda_chosen
    assert np.array_equal(c.cv_mean, a.cv_mean)


def test_cv_one_se_picks_larger_penalty():
    rng = philox(37)
    X = rng.standard_normal((80, 10))
    y = X[:, 0] + rng.standard_normal(80)
    m = glm_lasso_cv(X, y, "gaussian", seed=3, selection_rule="min_deviance")
    o = glm_lasso_cv(X, y, "gaussian", seed=3, selection_rule="one_se")
    assert o.lambda_chosen >= m.lambda_chosen


def test_cv_logistic_rare_class_raises():
    rng = philox(41)
    X = rng.standard_normal((30, 4))
    y = np.zeros(30)
    y[0] = 1.0  # every fold assignment leaves a single-class training set
    with pytest.raises(ValueError):
        glm_lasso_cv(X, y, "logistic", num_folds=10, seed=0)


def test_cv_constant_response_raises():
    rng = philox(43)
    X = rng.standard_normal((30, 4))
    with pytest.raises(ValueError):
        glm_lasso_cv(X, np.ones(30), "logistic", seed=0)


# ----------------------------------------------------------- sqrt lasso

def test_default_lambda_rate():
    assert default_lambda_sq(100, 50) == pytest.approx(
        np.sqrt(2 * np.log(50) / 100))
    # single-column designs still get a positive penalty
    assert default_lambda_sq(100, 1) == pytest.approx(
        np.sqrt(2 * np.log(2) / 100))


@pytest.mark.parametrize("seed", [51, 52, 53])
def test_sqrt_objective_matches_bruteforce_oracle(seed):
    rng = philox(seed)
    n, p = 40, 3
    X = rng.standard_normal((n, p))
    target = X @ np.array([1.2, 0.0, -0.7]) + rng.standard_normal(n)
    lam = 0.15
    fit = sqrt_lasso(X, target, lam=lam)
    got = sqrt_objective(X, target, lam, fit.beta)
    ref = oracle_sqrt(X, target, lam)
    assert got <= ref + 1e-6
    assert abs(got - ref) < 1e-5


def test_sqrt_oracle_with_exempt_coordinate():
    rng = philox(54)
    n, p = 40, 3
    X = rng.standard_normal((n, p))
    target = X @ np.array([0.9, -0.4, 0.2]) + rng.standard_normal(n)
    lam = 0.2
    fit = sqrt_lasso(X, target, lam=lam, exempt_set=[1])
    pf = np.array([1.0, 0.0, 1.0])
    got = sqrt_objective(X, target, lam, fit.beta, pf=pf)
    ref = oracle_sqrt(X, target, lam, pf=pf)
    assert abs(got - ref) < 1e-5


def test_sqrt_scale_equivariance():
    # the square-root objective is scale-free: beta(c y) = c beta(y)
    rng = philox(57)
    X = rng.standard_normal((60, 8))
    target = X[:, 0] + 0.5 * rng.standard_normal(60)
    f1 = sqrt_lasso(X, target, lam=0.1)
    f3 = sqrt_lasso(X, 3.0 * target, lam=0.1)
    assert np.allclose(f3.beta, 3.0 * f1.beta, rtol=1e-5, atol=1e-7)


def test_sqrt_kkt_bound_and_unit_direction():
    rng = philox(59)
    n, p = 100, 20
    X = rng.standard_normal((n, p))
    target = rng.standard_normal(n)
    lam = default_lambda_sq(n, p)
    fit = sqrt_lasso(X, target)
    assert fit.lam == pytest.approx(lam)
    assert not fit.degenerate
    w = direction_from_sqrt_lasso(fit)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    assert np.max(np.abs(X.T @ w)) <= np.sqrt(n) * lam + 1e-6
    assert fit.kkt_sup <= np.sqrt(n) * lam + 1e-6


def test_sqrt_exempt_block_exactly_orthogonal():
    rng = philox(61)
    n, p = 90, 15
    X = rng.standard_normal((n, p))
    target = X[:, 0] * 2 + rng.standard_normal(n)
    d = np.sqrt(rng.uniform(0.2, 1.0, size=n))
    fit = sqrt_lasso(X, target, weights=d, exempt_set=[0, 3, 7])
    assert not fit.degenerate
    w = direction_from_sqrt_lasso(fit)
    Xt = X * d[:, None]
    for j in (0, 3, 7):
        rel = abs(Xt[:, j] @ w) / np.linalg.norm(Xt[:, j])
        assert rel <= 1e-8
    assert fit.exempt_rel <= 1e-8


def test_sqrt_degenerate_detection():
    rng = philox(63)
    X = rng.standard_normal((30, 5))
    target = X @ np.array([1.0, -2.0, 0.5, 0.0, 0.0])  # exactly in span
    fit = sqrt_lasso(X, target, lam=1e-7)
    assert fit.degenerate
    with pytest.raises(DegenerateDirection):
        direction_from_sqrt_lasso(fit)


def test_sqrt_huge_penalty_zeroes_everything():
    rng = philox(67)
    X = rng.standard_normal((40, 6))
    target = X[:, 0] + rng.standard_normal(40)
    fit = sqrt_lasso(X, target, lam=50.0)
    assert np.all(fit.beta == 0)
    assert fit.residual_norm == pytest.approx(np.linalg.norm(target))


def test_sqrt_objective_trace_monotone():
    rng = philox(71)
    X = rng.standard_normal((70, 12))
    target = X[:, 0] + rng.standard_normal(70)
    fit = sqrt_lasso(X, target)
    tr = np.asarray(fit.objective_trace)
    assert np.all(np.diff(tr) <= 1e-10)


def test_nodewise_direction_contract():
    rng = philox(73)
    n = 120
    Xrest = rng.standard_normal((n, 6))
    xj = Xrest[:, 0] * 0.8 + rng.standard_normal(n)
    gamma, w = nodewise_sqrt_lasso(Xrest, xj)
    assert gamma.shape == (6,)
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    # exact collinearity must raise, not return garbage
    with pytest.raises(DegenerateDirection):
        nodewise_sqrt_lasso(Xrest, Xrest[:, 2].copy())

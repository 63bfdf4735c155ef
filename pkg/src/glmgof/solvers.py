"""Penalized estimation: l1-regularized GLM regression, cross-validated
tuning, and the weighted square-root lasso used to build test directions.

The GLM lasso is solved by iteratively reweighted least squares: each
round builds a weighted quadratic approximation of the likelihood at the
current iterate and hands it to a cyclic coordinate-descent kernel, with a
backtracking step on the true penalized objective so the objective never
increases.  The square-root lasso is solved by alternating between the
scale estimate ``sigma = ||D(target - X beta)||_2 / sqrt(n)`` and an
ordinary weighted lasso with effective penalty ``sigma * lam``; exact
block minimization of the jointly convex scaled objective, so it inherits
the same monotonicity guarantee.  Coordinates in the exempt set of a
square-root lasso fit carry no penalty and are polished by a final
least-squares projection, which makes the residual orthogonal to the
exempt columns to near machine precision.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _backend
from ._purekernels import kkt_violation
from ._rng import TAG_FOLDS, philox
from .families import Dataset, Family, get_family, weight_diag

MAX_IRLS = 250
MOVE_TOL = 1e-7
KKT_TOL = 1e-7
ZERO_COEF = 1e-12
SIGMA_TOL = 1e-8
SIGMA_FLOOR = 1e-10
DEGENERATE_REL = 1e-6
MAX_ALTERNATIONS = 100

_MAX_SWEEPS = 1000
_KERNEL_ROUNDS = 8


class DegenerateDirection(RuntimeError):
    """Raised when a residual direction is requested from a fit whose
    residual vanished (the target lies in the relevant column span)."""


def default_lambda_sq(n: int, p: int) -> float:
    """Default square-root-lasso penalty level sqrt(2 log(p) / n).

    ``p`` is floored at 2 so the level stays positive for single-column
    designs.
    """
    return math.sqrt(2.0 * math.log(max(p, 2)) / n)


@dataclass
class LassoFit:
    """Result of an l1-penalized GLM fit.

    ``beta`` is on the scale of the input columns.  When the fit was run
    with internal column standardization, ``objective`` and
    ``kkt_violation`` refer to the optimized (standardized-penalty)
    problem; with ``standardize=False`` they are statements about the raw
    design exactly as written.
    """

    beta: np.ndarray
    intercept: float
    lam: float
    family: str
    kkt_violation: float
    iterations: int
    converged: bool
    objective: float
    objective_trace: np.ndarray = field(repr=False, default=None)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.beta) > ZERO_COEF)

    def predict_eta(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.beta


@dataclass
class SqrtLassoFit:
    """Result of a weighted square-root lasso fit.

    ``residual`` is the weighted residual ``D (target - X beta)``; the
    test direction is ``residual / residual_norm``.  ``degenerate`` is
    true when ``residual_norm`` falls below ``1e-6`` of the weighted
    target norm (with an absolute floor of ``1e-10 * sqrt(n)``).
    """

    beta: np.ndarray
    lam: float
    residual: np.ndarray
    residual_norm: float
    degenerate: bool
    exempt_set: np.ndarray
    iterations: int
    converged: bool
    kkt_sup: float
    exempt_rel: float
    objective_trace: np.ndarray = field(repr=False, default=None)


class CvResult(NamedTuple):
    """Cross-validation output: the refit at the chosen penalty plus the
    deviance curve that selected it."""

    fit: LassoFit
    lambda_chosen: float
    lam_grid: np.ndarray
    cv_mean: np.ndarray
    cv_se: np.ndarray
    selected_index: int


class _CoreFit(NamedTuple):
    beta: np.ndarray  # standardized coordinates
    alpha: float
    objective: float
    kkt: float
    iterations: int
    converged: bool
    trace: np.ndarray


def _standardize(X: np.ndarray, enabled: bool):
    if not enabled:
        return X, np.ones(X.shape[1])
    mean = X.mean(axis=0)
    scale = np.sqrt(np.mean((X - mean) ** 2, axis=0))
    scale = np.where(scale > 0.0, scale, 1.0)
    return X / scale, scale


def _cd_subproblem(Xw, col_ss, zw, beta, pen, inner_tol):
    """Drive the CD kernel to stationarity ``inner_tol``, refreshing the
    residual between kernel calls to shed accumulated rounding drift."""
    n = Xw.shape[0]
    r = zw - Xw @ beta
    kkt = np.inf
    for _ in range(_KERNEL_ROUNDS):
        g = (r @ Xw) / n
        kkt = kkt_violation(g, beta, pen, col_ss)
        if kkt <= inner_tol:
            break
        _backend.cd_solve(Xw, r, beta, col_ss, pen, inner_tol, _MAX_SWEEPS)
        r = zw - Xw @ beta
    else:
        g = (r @ Xw) / n
        kkt = kkt_violation(g, beta, pen, col_ss)
    return r, kkt


def _glm_kkt(Xs, y, fam, beta, alpha, lam, intercept, col_ss):
    """Stationarity violation of the full penalized GLM objective."""
    n = Xs.shape[0]
    eta = alpha + Xs @ beta
    mu = fam.mu(eta)
    g = Xs.T @ (mu - y) / n
    # g is the gradient, so stationarity is -g in lam * subdifferential
    viol = kkt_violation(-g, beta, np.full(Xs.shape[1], lam), col_ss)
    if intercept:
        viol = max(viol, abs(float(np.mean(mu - y))))
    return viol


def _init_intercept(fam: Family, y: np.ndarray) -> float:
    m = float(np.mean(y))
    if fam.name == "logistic":
        m = min(max(m, 1e-6), 1.0 - 1e-6)
        return math.log(m / (1.0 - m))
    if fam.name == "poisson":
        return math.log(max(m, 1e-6))
    return m


def _glm_lasso_core(Xs, y, fam, lam, intercept, max_iter, tol, kkt_tol,
                    beta0=None, alpha0=None) -> _CoreFit:
    n, p = Xs.shape
    col_ss = np.einsum("ij,ij->j", Xs, Xs) / n
    beta = np.zeros(p) if beta0 is None else beta0.astype(np.float64).copy()
    if intercept:
        alpha = _init_intercept(fam, y) if alpha0 is None else float(alpha0)
    else:
        alpha = 0.0
    pen = np.full(p, float(lam))
    inner_tol = max(kkt_tol * 0.1, 1e-12)

    eta = alpha + Xs @ beta
    obj = fam.negloglik(y, eta) + lam * float(np.sum(np.abs(beta)))
    trace = [obj]
    iterations = 0

    for iterations in range(1, max_iter + 1):
        mu = fam.mu(eta)
        w = weight_diag(fam, eta)
        z = eta + (y - mu) / w
        if intercept:
            sw = float(np.sum(w))
            xbar = (w @ Xs) / sw
            zbar = float(w @ z) / sw
            Xc = Xs - xbar
            zc = z - zbar
        else:
            Xc = Xs
            zc = z
        sq = np.sqrt(w)
        Xw = np.asfortranarray(Xc * sq[:, None])
        zw = zc * sq
        css = np.einsum("ij,ij->j", Xw, Xw) / n

        bprop = beta.copy()
        _cd_subproblem(Xw, css, zw, bprop, pen, inner_tol)
        aprop = (zbar - float(xbar @ bprop)) if intercept else 0.0

        d_beta = bprop - beta
        d_alpha = aprop - alpha
        step = 1.0
        accepted = False
        for _ in range(40):
            bt = beta + step * d_beta
            at = alpha + step * d_alpha
            eta_t = at + Xs @ bt
            obj_t = fam.negloglik(y, eta_t) + lam * float(np.sum(np.abs(bt)))
            if obj_t <= obj + 1e-15 * (1.0 + abs(obj)):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no descent direction left at machine precision

        move = max(float(np.max(np.abs(step * d_beta), initial=0.0)),
                   abs(step * d_alpha))
        beta, alpha, eta, obj = bt, at, eta_t, obj_t
        trace.append(obj)
        if move < tol:
            kkt = _glm_kkt(Xs, y, fam, beta, alpha, lam, intercept, col_ss)
            if kkt <= kkt_tol:
                return _CoreFit(beta, alpha, obj, kkt, iterations, True,
                                np.asarray(trace))

    kkt = _glm_kkt(Xs, y, fam, beta, alpha, lam, intercept, col_ss)
    return _CoreFit(beta, alpha, obj, kkt, iterations, kkt <= kkt_tol,
                    np.asarray(trace))


def glm_lasso(X, y, family, lam, *, intercept: bool = True,
              standardize: bool = True, max_iter: int = MAX_IRLS,
              tol: float = MOVE_TOL, kkt_tol: float = KKT_TOL) -> LassoFit:
    """Fit an l1-penalized GLM by IRLS with coordinate descent.

    Parameters
    ----------
    X, y : array-like
        Design matrix (n, p) and response vector (n,).
    family : str or Family
        "logistic", "poisson" or "gaussian".
    lam : float
        Penalty level on the mean negative log-likelihood scale.
    intercept : bool
        Fit an unpenalized intercept (default True).
    standardize : bool
        Scale columns to unit sample standard deviation internally and
        back-transform the coefficients (default True).  Constant columns
        are left unscaled.

    Returns
    -------
    LassoFit
        ``converged`` is true iff the reported ``kkt_violation`` is within
        tolerance; a fit that exhausts ``max_iter`` is returned as-is with
        ``converged=False``.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    data = Dataset(X, y)
    fam = data.check_family(family)
    Xs, scale = _standardize(data.X, standardize)
    core = _glm_lasso_core(Xs, data.y, fam, lam, intercept, max_iter, tol,
                           kkt_tol)
    return LassoFit(beta=core.beta / scale, intercept=core.alpha,
                    lam=float(lam), family=fam.name,
                    kkt_violation=core.kkt, iterations=core.iterations,
                    converged=core.converged, objective=core.objective,
                    objective_trace=core.trace)


def _lambda_max(Xs, y, fam, intercept) -> float:
    n = Xs.shape[0]
    if intercept:
        mu0 = np.full(n, float(np.mean(y)))
    else:
        mu0 = fam.mu(np.zeros(n))
    lam_max = float(np.max(np.abs(Xs.T @ (mu0 - y) / n)))
    if not np.isfinite(lam_max) or lam_max <= 0.0:
        raise ValueError("cannot build a penalty grid: the null-model "
                         "gradient is zero (constant response?)")
    return lam_max


def _path_fit(Xs, y, fam, grid, intercept, max_iter, tol, kkt_tol):
    """Warm-started fits along a descending penalty grid; returns a list
    of _CoreFit, one per grid point."""
    fits = []
    beta = None
    alpha = None
    for lam in grid:
        core = _glm_lasso_core(Xs, y, fam, lam, intercept, max_iter, tol,
                               kkt_tol, beta0=beta, alpha0=alpha)
        beta, alpha = core.beta, core.alpha
        fits.append(core)
    return fits


def _single_class_training_fold(y, fold_id, num_folds) -> bool:
    for k in range(num_folds):
        yt = y[fold_id != k]
        if yt.size == 0 or np.all(yt == yt[0]):
            return True
    return False


def glm_lasso_cv(X, y, family, *, num_folds: int = 10,
                 lambda_grid_size: int = 100, lambda_min_ratio: float = 0.01,
                 selection_rule: str = "min_deviance", seed: int = 0,
                 intercept: bool = True, standardize: bool = True,
                 max_iter: int = MAX_IRLS, tol: float = MOVE_TOL,
                 kkt_tol: float = KKT_TOL, threads: int = 1) -> CvResult:
    """Select the GLM lasso penalty by K-fold cross-validation.

    A geometric grid runs from the data-driven ``lam_max`` (the smallest
    penalty with an all-zero solution) down to ``lam_max *
    lambda_min_ratio``.  Fold assignment is a seeded balanced permutation;
    for the logistic family an assignment leaving a single-class training
    set is redrawn (at most 10 attempts).  Deviance ties select the larger
    penalty.  Fold results are combined in fold-index order, so the choice
    does not depend on ``threads``.

    Returns
    -------
    CvResult
        ``fit`` is the full-data refit at ``lambda_chosen``; the deviance
        curve (``lam_grid``, ``cv_mean``, ``cv_se``) is attached.
    """
    data = Dataset(X, y)
    fam = data.check_family(family)
    n = data.n
    if num_folds < 2:
        raise ValueError("num_folds must be at least 2")
    if num_folds > n:
        raise ValueError("num_folds cannot exceed the number of observations")
    if not (0.0 < lambda_min_ratio < 1.0):
        raise ValueError("lambda_min_ratio must lie in (0, 1)")
    if selection_rule not in ("min_deviance", "one_se"):
        raise ValueError("selection_rule must be 'min_deviance' or 'one_se'")

    Xs, scale = _standardize(data.X, standardize)
    yv = data.y
    lam_max = _lambda_max(Xs, yv, fam, intercept)
    grid = np.geomspace(lam_max, lam_max * lambda_min_ratio,
                        lambda_grid_size)

    rng = philox(seed, TAG_FOLDS)
    fold_id = None
    for _ in range(10):
        perm = rng.permutation(n)
        candidate = np.empty(n, dtype=np.int64)
        candidate[perm] = np.arange(n) % num_folds
        if fam.name == "logistic" and _single_class_training_fold(
                yv, candidate, num_folds):
            continue
        fold_id = candidate
        break
    if fold_id is None:
        raise ValueError("could not draw folds with both response classes "
                         "in every training set after 10 attempts")

    def fold_deviance(k: int) -> np.ndarray:
        train = fold_id != k
        held = ~train
        fits = _path_fit(Xs[train], yv[train], fam, grid, intercept,
                         max_iter, tol, kkt_tol)
        Xh = Xs[held]
        yh = yv[held]
        return np.array([fam.negloglik(yh, c.alpha + Xh @ c.beta)
                         for c in fits])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            dev = np.array(list(pool.map(fold_deviance, range(num_folds))))
    else:
        dev = np.array([fold_deviance(k) for k in range(num_folds)])

    cv_mean = dev.mean(axis=0)
    cv_se = dev.std(axis=0, ddof=1) / math.sqrt(num_folds)

    best = int(np.argmin(cv_mean))  # first minimum = largest lambda on ties
    if selection_rule == "one_se":
        cutoff = cv_mean[best] + cv_se[best]
        best = int(np.flatnonzero(cv_mean <= cutoff)[0])

    full = _path_fit(Xs, yv, fam, grid[:best + 1], intercept, max_iter, tol,
                     kkt_tol)
    core = full[best]
    lam = float(grid[best])
    fit = LassoFit(beta=core.beta / scale, intercept=core.alpha, lam=lam,
                   family=fam.name, kkt_violation=core.kkt,
                   iterations=core.iterations, converged=core.converged,
                   objective=core.objective, objective_trace=core.trace)
    return CvResult(fit=fit, lambda_chosen=lam, lam_grid=grid,
                    cv_mean=cv_mean, cv_se=cv_se, selected_index=best)


def sqrt_lasso(X, target, weights=None, lam=None, exempt_set=(), *,
               max_alternations: int = MAX_ALTERNATIONS,
               sigma_tol: float = SIGMA_TOL) -> SqrtLassoFit:
    """Fit a weighted square-root lasso.

    Minimizes ``||D (target - X beta)||_2 / sqrt(n) + lam * sum_{j not in
    exempt_set} |beta_j|`` where ``D = diag(weights)``.  Solved by
    alternating the scale estimate with ordinary lasso subproblems; the
    exempt block is polished by a final least-squares projection so the
    residual is exactly orthogonal to the exempt weighted columns (up to
    machine precision).

    Parameters
    ----------
    X : (n, p) array-like
    target : (n,) array-like
    weights : (n,) array-like or None
        Positive diagonal weights; defaults to ones.
    lam : float or None
        Penalty level; defaults to ``sqrt(2 log(p) / n)``.
    exempt_set : index iterable
        Coordinates carrying no penalty.

    Returns
    -------
    SqrtLassoFit
        ``degenerate`` is set (never raised) when the residual norm falls
        below ``1e-6`` of the weighted target norm (or below an absolute
        ``1e-10 * sqrt(n)`` floor); callers decide how to proceed.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    n, p = X.shape
    target = np.asarray(target, dtype=np.float64).ravel()
    if target.shape[0] != n:
        raise ValueError("target length does not match X")
    if weights is None:
        d = np.ones(n)
    else:
        d = np.asarray(weights, dtype=np.float64).ravel()
        if d.shape[0] != n:
            raise ValueError("weights length does not match X")
        if np.any(d <= 0) or not np.all(np.isfinite(d)):
            raise ValueError("weights must be positive and finite")
    if lam is None:
        lam = default_lambda_sq(n, p)
    lam = float(lam)
    if lam <= 0:
        raise ValueError("lam must be positive")
    exempt = np.asarray(sorted(set(int(j) for j in np.atleast_1d(
        np.asarray(exempt_set)).ravel())), dtype=np.int64)
    if exempt.size and (exempt.min() < 0 or exempt.max() >= p):
        raise ValueError("exempt_set indices out of range")

    Xt = np.asfortranarray(X * d[:, None])
    yt = target * d
    col_ss = np.einsum("ij,ij->j", Xt, Xt) / n
    if exempt.size and np.any(col_ss[exempt] <= 0.0):
        raise ValueError("exempt_set contains an all-zero weighted column")

    pf = np.ones(p)
    pf[exempt] = 0.0
    root_n = math.sqrt(n)
    target_norm = float(np.linalg.norm(yt))
    # residual vanishing is judged relative to the target scale, with an
    # absolute floor so a zero target is flagged as well
    floor = max(SIGMA_FLOOR * root_n, DEGENERATE_REL * target_norm)
    stop_scale = max(target_norm / root_n, SIGMA_FLOOR)

    beta = np.zeros(p)
    resid = yt.copy()
    sigma = target_norm / root_n
    trace = [sigma]
    degenerate = sigma * root_n < floor
    converged = degenerate
    iterations = 0

    if not degenerate:
        for iterations in range(1, max_alternations + 1):
            pen = (sigma * lam) * pf
            inner_tol = max(1e-9 * sigma, 1e-15)
            resid, _ = _cd_subproblem(Xt, col_ss, yt, beta, pen, inner_tol)
            sigma_new = float(np.linalg.norm(resid)) / root_n
            trace.append(sigma_new + lam * float(pf @ np.abs(beta)))
            if sigma_new * root_n < floor:
                sigma = sigma_new
                degenerate = True
                converged = True
                break
            done = abs(sigma_new - sigma) < sigma_tol * stop_scale
            sigma = sigma_new
            if done:
                converged = True
                break

    if exempt.size and not degenerate:
        E = Xt[:, exempt]
        coef, _, _, _ = np.linalg.lstsq(E, resid, rcond=None)
        beta[exempt] += coef
        resid = resid - E @ coef
        if float(np.linalg.norm(resid)) < floor:
            degenerate = True

    residual_norm = float(np.linalg.norm(resid))
    degenerate = residual_norm < floor

    kkt_sup = 0.0
    exempt_rel = 0.0
    if not degenerate:
        unit = resid / residual_norm
        corr = np.abs(Xt.T @ unit)
        pen_mask = pf > 0.0
        if pen_mask.any():
            kkt_sup = float(corr[pen_mask].max())
        if exempt.size:
            norms = np.sqrt(col_ss[exempt] * n)
            exempt_rel = float(np.max(corr[exempt] / norms))

    return SqrtLassoFit(beta=beta, lam=lam, residual=resid,
                        residual_norm=residual_norm, degenerate=degenerate,
                        exempt_set=exempt, iterations=iterations,
                        converged=converged, kkt_sup=kkt_sup,
                        exempt_rel=exempt_rel,
                        objective_trace=np.asarray(trace))


def direction_from_sqrt_lasso(fit: SqrtLassoFit) -> np.ndarray:
    """Unit-norm test direction ``residual / ||residual||``.

    Raises
    ------
    DegenerateDirection
        When the fit is degenerate (zero residual, direction undefined).
    """
    if fit.degenerate:
        raise DegenerateDirection(
            "square-root lasso residual vanished (norm %.3e); no direction"
            % fit.residual_norm)
    return fit.residual / fit.residual_norm


def nodewise_sqrt_lasso(X_minus_G, X_j, weights=None, lam=None):
    """Regress one column on the non-group block to decorrelate it.

    Returns ``(gamma_hat, w_hat)`` where ``w_hat`` is the unit weighted
    residual direction.  Raises :class:`DegenerateDirection` when ``X_j``
    lies in the span of ``X_minus_G`` (zero residual).
    """
    X_minus_G = np.asarray(X_minus_G, dtype=np.float64)
    n, p_rest = X_minus_G.shape
    if lam is None:
        lam = default_lambda_sq(n, p_rest)
    fit = sqrt_lasso(X_minus_G, X_j, weights=weights, lam=lam)
    if fit.degenerate:
        raise DegenerateDirection(
            "nodewise residual vanished: the column lies in the span of "
            "the non-group block (residual norm %.3e)" % fit.residual_norm)
    return fit.beta, direction_from_sqrt_lasso(fit)

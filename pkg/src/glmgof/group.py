"""Group-significance test: is a block of coordinates jointly irrelevant?

The response is fit on the non-group columns only; each group column is
then decorrelated from that block by a nodewise square-root lasso, giving
one unit direction per group member.  The statistic is the largest
absolute correlation between any direction and the Pearson residuals of
the reduced fit, and its null distribution is approximated by a
multiplier bootstrap: the per-observation products are reweighted by
independent standard normals and the max-statistic recomputed for each
draw.  No sample splitting is needed because the directions depend on the
design only.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._rng import TAG_CV_MAIN, TAG_MULTIPLIER, derive_seed, philox
from .families import Dataset, get_family, weight_diag
from .solvers import (DegenerateDirection, default_lambda_sq, glm_lasso,
                      glm_lasso_cv, nodewise_sqrt_lasso)

B_CAP = 100_000
_CHUNK = 4096


@dataclass
class GroupTestConfig:
    """Tuning for the group test.

    ``lambda_main`` ("cv" or a number) controls the reduced-model fit;
    ``lambda_nw`` defaults to ``sqrt(2 log(p - |G|) / n)``.
    ``bootstrap_draws`` is the multiplier draw count B (at most 100000 so
    all draws can be stored and the p-value is exact over the sample).
    """

    bootstrap_draws: int = 1000
    lambda_main: float | str = "cv"
    lambda_nw: float | str = "default-rate"
    num_folds: int = 10
    selection_rule: str = "min_deviance"
    seed: int = 0
    threads: int = 1


@dataclass
class GroupTestResult:
    """Outcome of one group-significance test."""

    statistic: float
    p_value: float
    per_feature_stats: dict
    bootstrap_stats: np.ndarray
    degenerate_features: np.ndarray
    group: np.ndarray
    lambda_main: float
    lambda_nw: float
    family: str
    n: int
    p: int


def bootstrap_quantile(bootstrap_stats, alpha: float) -> float:
    """Empirical alpha-quantile: smallest order statistic t with
    fraction(stats <= t) >= alpha."""
    stats = np.sort(np.asarray(bootstrap_stats, dtype=np.float64).ravel())
    if stats.size == 0:
        raise ValueError("bootstrap_stats must be nonempty")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    k = math.ceil(alpha * stats.size)
    return float(stats[max(k, 1) - 1])


def group_test(X, y, group, family,
               config: GroupTestConfig | None = None) -> GroupTestResult:
    """Run the multiplier-bootstrap group-significance test.

    Parameters
    ----------
    X, y : array-like
    group : iterable of int
        0-based column indices of the tested block; must be a proper
        nonempty subset of the columns.
    family : str or Family
    config : GroupTestConfig

    Returns
    -------
    GroupTestResult
        ``p_value = (1 + #{b : T^b >= T}) / (B + 1)``.  Group members
        whose nodewise residual vanishes are skipped and recorded in
        ``degenerate_features``; if every member is degenerate the test
        cannot run and a RuntimeError is raised.
    """
    cfg = config if config is not None else GroupTestConfig()
    data = Dataset(X, y)
    fam = data.check_family(family)
    n, p = data.n, data.p

    group = np.unique(np.asarray(list(group), dtype=np.int64))
    if group.size == 0:
        raise ValueError("group must be nonempty")
    if group.min() < 0 or group.max() >= p:
        raise ValueError("group indices out of range [0, %d)" % p)
    if group.size >= p:
        raise ValueError("group must leave at least one non-group column")
    B = int(cfg.bootstrap_draws)
    if not (1 <= B <= B_CAP):
        raise ValueError("bootstrap_draws must lie in [1, %d]" % B_CAP)

    keep = np.setdiff1d(np.arange(p), group)
    Xr = data.X[:, keep]

    if isinstance(cfg.lambda_main, str):
        if cfg.lambda_main != "cv":
            raise ValueError("lambda_main must be a positive number or 'cv'")
        res = glm_lasso_cv(Xr, data.y, fam, num_folds=cfg.num_folds,
                           selection_rule=cfg.selection_rule,
                           seed=derive_seed(cfg.seed, TAG_CV_MAIN),
                           threads=cfg.threads)
        fit = res.fit
    else:
        fit = glm_lasso(Xr, data.y, fam, float(cfg.lambda_main))

    eta = fit.predict_eta(Xr)
    dvec = np.sqrt(weight_diag(fam, eta))
    rhat = (data.y - fam.mu(eta)) / dvec

    if isinstance(cfg.lambda_nw, str):
        if cfg.lambda_nw != "default-rate":
            raise ValueError("lambda_nw must be a positive number or "
                             "'default-rate'")
        lam_nw = default_lambda_sq(n, keep.size)
    else:
        lam_nw = float(cfg.lambda_nw)

    def nodewise(j: int):
        try:
            _, w = nodewise_sqrt_lasso(Xr, data.X[:, j], weights=dvec,
                                       lam=lam_nw)
            return w
        except DegenerateDirection:
            return None

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(nodewise, group))
    else:
        results = [nodewise(j) for j in group]

    kept, directions, degenerate = [], [], []
    for j, w in zip(group, results):
        if w is None:
            degenerate.append(int(j))
        else:
            kept.append(int(j))
            directions.append(w)
    if not kept:
        raise RuntimeError("all %d group features produced degenerate "
                           "nodewise directions; the group lies in the "
                           "span of the non-group columns" % group.size)

    W = np.stack(directions)  # (k, n)
    per_stats = np.abs(W @ rhat)
    statistic = float(per_stats.max())

    rng = philox(cfg.seed, TAG_MULTIPLIER)
    boot = np.empty(B)
    filled = 0
    while filled < B:
        b = min(_CHUNK, B - filled)
        # row-major (b, n) fill: draw order matches one draw of B*n
        E = rng.standard_normal((b, n))
        prods = (E * rhat) @ W.T
        boot[filled:filled + b] = np.abs(prods).max(axis=1)
        filled += b

    count = int(np.sum(boot >= statistic))
    p_value = (1.0 + count) / (B + 1.0)

    return GroupTestResult(
        statistic=statistic, p_value=p_value,
        per_feature_stats={j: float(v) for j, v in zip(kept, per_stats)},
        bootstrap_stats=boot,
        degenerate_features=np.asarray(degenerate, dtype=np.int64),
        group=group, lambda_main=fit.lam, lambda_nw=lam_nw,
        family=fam.name, n=n, p=p)

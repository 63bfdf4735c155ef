"""Residual predictors: a from-scratch CART regression forest plus the
trivial predictors used to exercise degenerate code paths.

Trees are grown on bootstrap resamples; each internal node draws ``mtry``
candidate features, considers thresholds at midpoints between consecutive
sorted distinct values, and keeps the split maximizing variance reduction
(ties resolve to the lowest feature index, then the smallest threshold).
All randomness is a splitmix64 counter stream expanded from one root seed
into per-tree seeds, so growing order and thread scheduling cannot change
the result.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from ._rng import tree_seeds

_UNLIMITED_DEPTH = 2 ** 31 - 1


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``mtry=None`` means the regression default ``max(1, p // 3)``;
    ``max_depth=None`` means unlimited.  ``bootstrap_fraction`` scales the
    resample size (drawn with replacement).
    """

    num_trees: int = 500
    max_depth: int | None = None
    min_leaf: int = 5
    mtry: int | None = None
    bootstrap_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_trees < 1:
            raise ValueError("num_trees must be at least 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be at least 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be non-negative or None")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be at least 1")
        if not (0.0 < self.bootstrap_fraction):
            raise ValueError("bootstrap_fraction must be positive")


class RegressionForest:
    """CART regression forest; the built-in residual predictor."""

    def __init__(self, config: ForestConfig | None = None):
        self.config = config if config is not None else ForestConfig()
        self._trees = None
        self._p = None

    def fit(self, X, r, threads: int = 1) -> "RegressionForest":
        """Grow the forest on targets ``r``.

        Per-tree seeds come from a counter expansion of ``config.seed``,
        so the result is identical for any ``threads`` value.
        """
        X = np.asarray(X, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64).ravel()
        if X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        n, p = X.shape
        if r.shape[0] != n:
            raise ValueError("target length does not match X")
        if n < 2:
            raise ValueError("need at least 2 observations")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(X)):
            raise ValueError("inputs must be finite")
        cfg = self.config
        mtry = cfg.mtry if cfg.mtry is not None else max(1, p // 3)
        if mtry > p:
            raise ValueError("mtry cannot exceed the number of features")
        depth = _UNLIMITED_DEPTH if cfg.max_depth is None else int(cfg.max_depth)
        m = max(1, int(round(cfg.bootstrap_fraction * n)))
        Xf = np.asfortranarray(X)
        seeds = tree_seeds(cfg.seed, cfg.num_trees)

        def grow(t: int):
            out = _backend.tree_fit(Xf, r, int(seeds[t]), mtry, cfg.min_leaf,
                                    depth, m)
            return out[:5]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                self._trees = list(pool.map(grow, range(cfg.num_trees)))
        else:
            self._trees = [grow(t) for t in range(cfg.num_trees)]
        self._p = p
        return self

    def predict(self, X, threads: int = 1) -> np.ndarray:
        """Average the per-tree leaf means for each row of ``X``."""
        if self._trees is None:
            raise RuntimeError("predict called before fit")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self._p:
            raise ValueError("X must have the training column count (%d)"
                             % self._p)
        Xc = np.ascontiguousarray(X)

        def route(t: int):
            return _backend.tree_predict(Xc, *self._trees[t])

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                preds = list(pool.map(route, range(len(self._trees))))
        else:
            preds = [route(t) for t in range(len(self._trees))]
        # pairwise accumulation over the tree axis: order-independent
        return np.mean(np.stack(preds, axis=0), axis=0)


class ZeroPredictor:
    """Predicts zero everywhere; forces the degenerate branch of the
    goodness-of-fit pipeline (zero target annihilates the residual)."""

    def fit(self, X, r, threads: int = 1) -> "ZeroPredictor":
        self._p = np.asarray(X).shape[1]
        return self

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return np.zeros(np.asarray(X).shape[0])


class LinearPredictor:
    """Interceptless least-squares refit of the residuals.

    Its fitted values lie in the column span of the design, so the
    near-orthogonalization step can remove them entirely; exercises the
    degenerate path end to end on real data.
    """

    def fit(self, X, r, threads: int = 1) -> "LinearPredictor":
        X = np.asarray(X, dtype=np.float64)
        r = np.asarray(r, dtype=np.float64).ravel()
        self._coef, _, _, _ = np.linalg.lstsq(X, r, rcond=None)
        return self

    def predict(self, X, threads: int = 1) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self._coef


def _forest_factory(*, seed=0, num_trees=500, min_leaf=5, mtry=None,
                    max_depth=None, bootstrap_fraction=1.0):
    return RegressionForest(ForestConfig(
        num_trees=num_trees, max_depth=max_depth, min_leaf=min_leaf,
        mtry=mtry, bootstrap_fraction=bootstrap_fraction, seed=seed))


_PREDICTORS = {
    "forest": _forest_factory,
    "zero": lambda **kwargs: ZeroPredictor(),
    "linear": lambda **kwargs: LinearPredictor(),
}


def register_predictor(name: str, factory) -> None:
    """Register a predictor factory under ``name``; the factory must
    accept keyword hyperparameters and return an object with
    ``fit(X, r, threads)`` and ``predict(X, threads)``."""
    _PREDICTORS[name] = factory


def predictor_names() -> tuple:
    return tuple(sorted(_PREDICTORS))


def make_predictor(name: str, **params):
    """Instantiate a registered residual predictor by name."""
    try:
        factory = _PREDICTORS[name]
    except KeyError:
        raise ValueError("unknown predictor %r; available: %s"
                         % (name, ", ".join(predictor_names()))) from None
    return factory(**params)


def forest_fit(X, r, config: ForestConfig | None = None,
               threads: int = 1) -> RegressionForest:
    """Grow a regression forest on ``(X, r)``; functional form of
    :meth:`RegressionForest.fit`."""
    return RegressionForest(config).fit(X, r, threads=threads)


def forest_predict(predictor, X_new, threads: int = 1) -> np.ndarray:
    """Evaluate a fitted residual predictor on new rows."""
    return predictor.predict(X_new, threads=threads)

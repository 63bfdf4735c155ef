"""GLM families with canonical links and the residual plumbing shared by
the test pipelines.

Every family exposes the mean function ``mu``, its derivative ``mu_prime``
(the conditional variance under the canonical link), the cumulant ``b`` of
the log-likelihood, and a deviance-style negative log-likelihood.  All of
them are overflow-safe over the full float range: logistic terms route
through ``log1p(exp(-|u|))`` and the Poisson mean is evaluated in a form
that never produces spurious infinities for the linear predictors a
penalized fit can reach.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Conditional-variance floor.  Pearson residuals divide by sqrt(mu') and
# the IRLS weights divide by mu'; saturated logistic predictors would
# otherwise produce exact zeros.
WEIGHT_FLOOR = 1e-10

_POISSON_ETA_CAP = 700.0  # exp overflows just above 709


def _log1pexp(u: np.ndarray) -> np.ndarray:
    """log(1 + exp(u)), elementwise, without overflow."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u > 0
    # u > 0:  u + log1p(exp(-u));  u <= 0:  log1p(exp(u))
    out[pos] = u[pos] + np.log1p(np.exp(-u[pos]))
    out[~pos] = np.log1p(np.exp(u[~pos]))
    return out


def _sigmoid(u: np.ndarray) -> np.ndarray:
    """Logistic function, elementwise, without overflow."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


@dataclass(frozen=True)
class Family:
    """A one-parameter exponential family under its canonical link.

    Attributes
    ----------
    name : str
        One of ``"logistic"``, ``"poisson"``, ``"gaussian"``.
    """

    name: str

    def mu(self, eta):
        """Inverse link: conditional mean as a function of the linear
        predictor."""
        eta = np.asarray(eta, dtype=np.float64)
        if self.name == "logistic":
            return _sigmoid(eta)
        if self.name == "poisson":
            return np.exp(np.minimum(eta, _POISSON_ETA_CAP))
        return eta.copy()

    def mu_prime(self, eta):
        """Derivative of the inverse link (conditional variance)."""
        eta = np.asarray(eta, dtype=np.float64)
        if self.name == "logistic":
            m = _sigmoid(eta)
            return m * (1.0 - m)
        if self.name == "poisson":
            return np.exp(np.minimum(eta, _POISSON_ETA_CAP))
        return np.ones_like(eta)

    def cumulant(self, eta):
        """Cumulant function b(eta) of the family log-likelihood."""
        eta = np.asarray(eta, dtype=np.float64)
        if self.name == "logistic":
            return _log1pexp(eta)
        if self.name == "poisson":
            return np.exp(np.minimum(eta, _POISSON_ETA_CAP))
        return 0.5 * eta * eta

    def negloglik(self, y, eta):
        """Mean negative log-likelihood, dropping terms constant in eta.

        The retained part is ``mean(b(eta) - y * eta)`` up to the constant
        that makes the gaussian case the familiar half mean squared error.
        """
        y = np.asarray(y, dtype=np.float64)
        eta = np.asarray(eta, dtype=np.float64)
        if self.name == "gaussian":
            d = y - eta
            return float(np.mean(d * d)) / 2.0
        return float(np.mean(self.cumulant(eta) - y * eta))

    def validate_response(self, y) -> None:
        """Raise ValueError when the response is outside the family domain."""
        y = np.asarray(y, dtype=np.float64)
        if not np.all(np.isfinite(y)):
            raise ValueError("response contains non-finite values")
        if self.name == "logistic":
            if not np.all((y == 0.0) | (y == 1.0)):
                raise ValueError("logistic family requires a 0/1 response")
        elif self.name == "poisson":
            if np.any(y < 0) or np.any(y != np.floor(y)):
                raise ValueError(
                    "poisson family requires non-negative integer response")

    def sample(self, eta, rng: np.random.Generator) -> np.ndarray:
        """Draw a response vector with mean ``mu(eta)``.

        Gaussian noise has unit variance; logistic draws compare one
        uniform per observation against the mean, so a replication's
        response costs exactly ``len(eta)`` draws from ``rng``.
        """
        eta = np.asarray(eta, dtype=np.float64)
        if self.name == "logistic":
            return (rng.random(eta.shape) < _sigmoid(eta)).astype(np.float64)
        if self.name == "poisson":
            return rng.poisson(self.mu(eta)).astype(np.float64)
        return eta + rng.standard_normal(eta.shape)


_FAMILIES = {name: Family(name) for name in ("logistic", "poisson", "gaussian")}


def get_family(name) -> Family:
    """Look up a family by name; passes Family instances through."""
    if isinstance(name, Family):
        return name
    try:
        return _FAMILIES[name]
    except KeyError:
        raise ValueError(
            "unknown family %r; expected one of %s"
            % (name, sorted(_FAMILIES))) from None


def weight_diag(family, eta) -> np.ndarray:
    """Conditional-variance diagonal with the numerical floor applied."""
    fam = get_family(family)
    return np.maximum(fam.mu_prime(eta), WEIGHT_FLOOR)


def pearson_residuals(family, y, eta_mean, eta_var=None) -> np.ndarray:
    """Pearson residuals ``(y - mu(eta_mean)) / sqrt(mu'(eta_var))``.

    ``eta_var`` defaults to ``eta_mean``; the goodness-of-fit pipeline
    standardizes main-sample residuals with variances evaluated at the
    auxiliary fit, which is why the two linear predictors are separate
    arguments.
    """
    fam = get_family(family)
    if eta_var is None:
        eta_var = eta_mean
    y = np.asarray(y, dtype=np.float64)
    return (y - fam.mu(eta_mean)) / np.sqrt(weight_diag(fam, eta_var))


@dataclass
class Dataset:
    """Validated (X, y) pair; converts inputs to float64 arrays."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d array")
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError(
                "X has %d rows but y has %d entries"
                % (self.X.shape[0], self.y.shape[0]))
        if self.X.shape[0] < 2:
            raise ValueError("need at least 2 observations")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("X contains non-finite values")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def check_family(self, family) -> Family:
        fam = get_family(family)
        fam.validate_response(self.y)
        return fam

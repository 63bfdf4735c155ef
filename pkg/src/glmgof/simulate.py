"""Synthetic-data generation and Monte Carlo orchestration.

Designs are zero-mean Gaussian with Toeplitz covariance ``rho^|i-j|``,
generated by the exact AR(1) recursion; responses are drawn from a GLM
whose linear predictor is ``X beta0 + sigma * g(X)`` for a scenario
misspecification ``g``.  Replication ``r`` of a run derives every stream
(design, response, test-internal randomness) from ``(seed, r)`` alone, so
results are identical for any thread count or completion order.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._rng import TAG_DESIGN, TAG_RESPONSE, TAG_TEST, derive_seed, philox
from .families import get_family
from .gof import GofConfig, gof_test
from .group import GroupTestConfig, group_test

_FAILURE_CAP = 0.10


@dataclass(frozen=True)
class Misspec:
    """Model misspecification g added to the linear predictor.

    Kinds (indices are 1-based feature positions):
      - ``none``
      - ``quad(k)``:      g(u) = 2 * u_k^2
      - ``quad_half(k)``: g(u) = u_k^2 / 2
      - ``interact(k,l)``: g(u) = u_k * u_l
    """

    kind: str = "none"
    indices: tuple = ()

    def __post_init__(self) -> None:
        arity = {"none": 0, "quad": 1, "quad_half": 1, "interact": 2}
        if self.kind not in arity:
            raise ValueError("unknown misspecification kind %r" % self.kind)
        if len(self.indices) != arity[self.kind]:
            raise ValueError("%s takes %d index argument(s)"
                             % (self.kind, arity[self.kind]))
        if any(k < 1 for k in self.indices):
            raise ValueError("misspecification indices are 1-based")

    def evaluate(self, X: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(X.shape[0])
        if max(self.indices) > X.shape[1]:
            raise ValueError("misspecification index exceeds column count")
        u = X[:, self.indices[0] - 1]
        if self.kind == "quad":
            return 2.0 * u * u
        if self.kind == "quad_half":
            return u * u / 2.0
        return u * X[:, self.indices[1] - 1]


@dataclass(frozen=True)
class McScenario:
    """One named Monte Carlo setting.

    ``beta0`` fills the first coefficients of the p-vector (rest zero);
    for group scenarios ``theta`` is written at 1-based ``theta_index``
    and the tested group is ``{group_start, ..., p}`` (1-based).
    """

    name: str
    n_total: int
    p: int
    rho: float
    beta0: tuple
    family: str = "logistic"
    misspec: Misspec = field(default_factory=Misspec)
    sigma: float = 0.0
    test: str = "gof"
    group_start: int | None = None
    theta: float = 0.0
    theta_index: int | None = None
    bootstrap_draws: int = 500
    split_fraction: float = 0.5

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")
        if self.test not in ("gof", "group"):
            raise ValueError("test must be 'gof' or 'group'")
        if self.misspec.indices and max(self.misspec.indices) > self.p:
            raise ValueError("misspecification index exceeds p")
        if len(self.beta0) > self.p:
            raise ValueError("beta0 longer than p")
        if self.test == "group" and self.group_start is None:
            raise ValueError("group scenarios need group_start")

    def beta_full(self) -> np.ndarray:
        beta = np.zeros(self.p)
        beta[:len(self.beta0)] = self.beta0
        if self.theta_index is not None:
            beta[self.theta_index - 1] = self.theta
        return beta

    def group_indices(self) -> np.ndarray:
        return np.arange(self.group_start - 1, self.p, dtype=np.int64)

    def with_overrides(self, **changes) -> "McScenario":
        return dataclasses.replace(self, **changes)


@dataclass
class McReport:
    """Aggregated Monte Carlo results.

    ``reps`` counts completed replications; failed ones are excluded from
    the p-value rows and counted in ``failures``.  Degenerate runs carry
    a NaN p-value and count as non-rejections.
    """

    scenario: McScenario
    reps: int
    level: float
    seed: int
    rejection_rate: float
    p_values: np.ndarray
    rep_ids: np.ndarray
    degenerate_flags: np.ndarray
    degenerate_count: int
    failures: int
    failure_messages: list
    wall_time: float


def gen_toeplitz_design(n: int, p: int, rho: float, seed=0) -> np.ndarray:
    """Draw n rows from N(0, Sigma) with Sigma_ij = rho^|i-j|.

    Uses the AR(1) recursion ``x_{j+1} = rho x_j + sqrt(1-rho^2) z``,
    which realizes the Toeplitz covariance exactly.  ``seed`` may be an
    integer or a numpy Generator.
    """
    if not (0.0 <= rho < 1.0):
        raise ValueError("rho must lie in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) \
        else philox(int(seed), TAG_DESIGN)
    Z = rng.standard_normal((n, p))
    X = np.empty((n, p))
    X[:, 0] = Z[:, 0]
    c = math.sqrt(1.0 - rho * rho)
    for j in range(1, p):
        X[:, j] = rho * X[:, j - 1] + c * Z[:, j]
    return X


def gen_glm_response(X, family, beta0, g=None, sigma: float = 0.0,
                     seed=0) -> np.ndarray:
    """Draw a response with mean ``mu(X beta0 + sigma * g(X))``.

    ``g`` may be a :class:`Misspec`, any callable of X, or None.
    ``seed`` may be an integer or a numpy Generator.
    """
    X = np.asarray(X, dtype=np.float64)
    beta0 = np.asarray(beta0, dtype=np.float64)
    fam = get_family(family)
    rng = seed if isinstance(seed, np.random.Generator) \
        else philox(int(seed), TAG_RESPONSE)
    eta = X @ beta0
    if g is not None and sigma != 0.0:
        gx = g.evaluate(X) if isinstance(g, Misspec) else np.asarray(g(X))
        eta = eta + sigma * gx
    return fam.sample(eta, rng)


def _replicate(scenario: McScenario, r: int, seed: int, level: float,
               gof_config, group_config):
    X = gen_toeplitz_design(scenario.n_total, scenario.p, scenario.rho,
                            philox(seed, TAG_DESIGN, unit=r))
    y = gen_glm_response(X, scenario.family, scenario.beta_full(),
                         g=scenario.misspec, sigma=scenario.sigma,
                         seed=philox(seed, TAG_RESPONSE, unit=r))
    test_seed = derive_seed(seed, TAG_TEST, unit=r)
    if scenario.test == "gof":
        base = gof_config if gof_config is not None else GofConfig(
            split_fraction=scenario.split_fraction)
        cfg = dataclasses.replace(base, seed=test_seed)
        res = gof_test(X, y, scenario.family, cfg)
        return float(res.p_value), bool(res.degenerate)
    base = group_config if group_config is not None else GroupTestConfig(
        bootstrap_draws=scenario.bootstrap_draws)
    cfg = dataclasses.replace(base, seed=test_seed)
    res = group_test(X, y, scenario.group_indices(), scenario.family, cfg)
    return float(res.p_value), False


def run_mc(scenario: McScenario, reps: int, level: float = 0.05,
           seed: int = 0, threads: int = 1, gof_config=None,
           group_config=None, log=None) -> McReport:
    """Run ``reps`` independent replications of a scenario's test.

    Per-replication errors are counted as failures; more than 10% of
    ``reps`` failing aborts with the first error as context.  Rejection
    uses ``p <= level``; degenerate replications never reject.

    ``gof_config`` / ``group_config`` override test tuning (their
    ``seed`` field is replaced by the per-replication derived seed).
    """
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not (0.0 <= level <= 1.0):
        raise ValueError("level must lie in [0, 1]")
    start = time.perf_counter()
    cap = int(_FAILURE_CAP * reps)

    results: list = [None] * reps
    failures: list = []

    def attempt(r: int):
        try:
            return _replicate(scenario, r, seed, level, gof_config,
                              group_config)
        except Exception as exc:  # counted and capped below
            return ("failed", "rep %d: %s: %s"
                    % (r, type(exc).__name__, exc))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(attempt, r) for r in range(reps)]
            for r, fut in enumerate(futures):
                out = fut.result()
                if isinstance(out, tuple) and out and out[0] == "failed":
                    failures.append(out[1])
                    if len(failures) > cap:
                        pool.shutdown(cancel_futures=True)
                        raise RuntimeError(
                            "aborted: %d of %d replications failed "
                            "(cap %d); first failure: %s"
                            % (len(failures), reps, cap, failures[0]))
                else:
                    results[r] = out
                if log is not None:
                    log(r + 1, reps)
    else:
        for r in range(reps):
            out = attempt(r)
            if isinstance(out, tuple) and out and out[0] == "failed":
                failures.append(out[1])
                if len(failures) > cap:
                    raise RuntimeError(
                        "aborted: %d of %d replications failed (cap %d); "
                        "first failure: %s"
                        % (len(failures), reps, cap, failures[0]))
            else:
                results[r] = out
            if log is not None:
                log(r + 1, reps)

    rep_ids = np.array([r for r in range(reps) if results[r] is not None],
                       dtype=np.int64)
    if rep_ids.size == 0:
        raise RuntimeError("no replication completed")
    p_values = np.array([results[r][0] for r in rep_ids])
    degenerate = np.array([results[r][1] for r in rep_ids], dtype=bool)
    with np.errstate(invalid="ignore"):
        rejects = int(np.sum(p_values <= level))
    return McReport(
        scenario=scenario, reps=int(rep_ids.size), level=level, seed=seed,
        rejection_rate=rejects / rep_ids.size, p_values=p_values,
        rep_ids=rep_ids, degenerate_flags=degenerate,
        degenerate_count=int(degenerate.sum()), failures=len(failures),
        failure_messages=failures[:10],
        wall_time=time.perf_counter() - start)


def emit_report(report: McReport, path=None, fmt: str = "csv",
                include_timing: bool = True) -> str:
    """Serialize a report to CSV (per-replication rows) or JSON.

    CSV columns are ``scenario,rep,p_value,reject,degenerate`` with
    p-values written in shortest round-trip form.  The JSON document
    mirrors the report fields with p-values sorted ascending (NaNs from
    degenerate runs become nulls).  ``include_timing=False`` drops the
    wall-time field so equal-seed runs serialize identically.
    """
    import csv

    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario", "rep", "p_value", "reject",
                         "degenerate"])
        for rep, p, dg in zip(report.rep_ids, report.p_values,
                              report.degenerate_flags):
            with np.errstate(invalid="ignore"):
                rej = int(p <= report.level)
            writer.writerow([report.scenario.name, int(rep), repr(float(p)),
                             rej, int(dg)])
        text = buf.getvalue()
    elif fmt == "json":
        finite = [None if math.isnan(p) else float(p)
                  for p in sorted(report.p_values)]
        doc = {
            "scenario": report.scenario.name,
            "test": report.scenario.test,
            "n_total": report.scenario.n_total,
            "p": report.scenario.p,
            "rho": report.scenario.rho,
            "sigma": report.scenario.sigma,
            "theta": report.scenario.theta,
            "family": report.scenario.family,
            "reps": report.reps,
            "level": report.level,
            "seed": report.seed,
            "rejection_rate": report.rejection_rate,
            "degenerate_count": report.degenerate_count,
            "failures": report.failures,
            "p_values": finite,
        }
        if include_timing:
            doc["wall_time_s"] = report.wall_time
        text = json.dumps(doc, indent=2) + "\n"
    else:
        raise ValueError("fmt must be 'csv' or 'json'")

    if path is not None:
        try:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            raise OSError("cannot write report to %r: %s" % (path, exc)) \
                from exc
    return text


def _catalog() -> dict:
    scenarios = {}

    def add(s: McScenario) -> None:
        scenarios[s.name] = s

    # small logistic designs, three active coefficients
    for name, mis in [
        ("small-a", Misspec("quad", (1,))),
        ("small-b", Misspec("quad", (5,))),
        ("small-c", Misspec("interact", (1, 2))),
        ("small-d", Misspec("interact", (1, 3))),
        ("small-f", Misspec("interact", (1, 4))),
        ("small-g", Misspec("interact", (4, 7))),
    ]:
        add(McScenario(name=name, n_total=300, p=10, rho=0.6,
                       beta0=(1.0, 1.0, 1.0), misspec=mis))

    # full-scale designs, five active coefficients
    for tag, rho in [("rho04", 0.4), ("rho06", 0.6), ("rho08", 0.8)]:
        add(McScenario(name="full-%s-quad" % tag, n_total=800, p=500,
                       rho=rho, beta0=(1.0,) * 5,
                       misspec=Misspec("quad_half", (1,))))
        add(McScenario(name="full-%s-inter" % tag, n_total=800, p=500,
                       rho=rho, beta0=(1.0,) * 5,
                       misspec=Misspec("interact", (1, 2))))

    # desk-scale variants for CI
    add(McScenario(name="desk-gof-null", n_total=300, p=50, rho=0.6,
                   beta0=(1.0, 1.0, 1.0)))
    add(McScenario(name="desk-quad-p100", n_total=300, p=100, rho=0.6,
                   beta0=(1.0,) * 5, misspec=Misspec("quad_half", (1,))))
    add(McScenario(name="desk-inter-p100", n_total=300, p=100, rho=0.6,
                   beta0=(1.0,) * 5, misspec=Misspec("interact", (1, 2))))

    # group-significance designs: theta at position 5, group {5..p}
    add(McScenario(name="grp44-p100", n_total=500, p=100, rho=0.6,
                   beta0=(1.0,) * 4, test="group", group_start=5,
                   theta=0.0, theta_index=5, bootstrap_draws=500))
    add(McScenario(name="grp44-p800", n_total=600, p=800, rho=0.6,
                   beta0=(1.0,) * 4, test="group", group_start=5,
                   theta=0.0, theta_index=5, bootstrap_draws=500))
    return scenarios


SCENARIOS = _catalog()

# default sigma grids for the misspecification families
SIGMA_GRID_QUAD = (0.0, 0.5, 1.0, 1.5)
SIGMA_GRID_INTERACT = (0.0, 1.0, 2.0, 3.0)


def scenario_names() -> tuple:
    return tuple(sorted(SCENARIOS))


def get_scenario(name: str) -> McScenario:
    """Look up a catalog scenario by name."""
    try:
        return SCENARIOS[name]
    except KeyError:
        raise ValueError("unknown scenario %r; available: %s"
                         % (name, ", ".join(scenario_names()))) from None

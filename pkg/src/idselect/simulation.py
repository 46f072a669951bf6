"""Gaussian sampling and the Monte Carlo variance harness.

Every replication draws from its own generator, seeded from the spawn key
``(size, strategy index, replication)`` under the user seed, so a table is
reproducible bit for bit whatever the order or the number of threads used to
fill it.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import IdSelectError, SimulationError
from .estimators import estimate, plug_in_tau
from .gaussian import COND_LIMIT, CovarianceMatrix, implied_covariance
from .graph import PathDiagram
from .strategy import Strategy

__all__ = [
    "Sample",
    "sample_mvn",
    "sample_sem",
    "replication_rng",
    "SimulationCell",
    "SimulationTable",
    "monte_carlo_variances",
    "MAX_EXCLUDED_FRACTION",
]

MAX_EXCLUDED_FRACTION = 0.01
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Sample:
    """``n`` rows of jointly observed variables."""

    labels: tuple[str, ...]
    values: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.labels.index(name)]

    def covariance(self) -> CovarianceMatrix:
        """Unbiased sample covariance (divisor ``n - 1``)."""
        if self.n < 2:
            raise IdSelectError("sample covariance needs at least two rows")
        return CovarianceMatrix(self.labels, np.cov(self.values, rowvar=False))


def _check_size(n):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise IdSelectError(f"sample size must be a positive integer, got {n!r}")
    return int(n)


def _matrix_sqrt(cov: CovarianceMatrix) -> np.ndarray:
    w, V = np.linalg.eigh(cov.entries)
    return (V * np.sqrt(w)) @ V.T


def _rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def replication_rng(seed: int, size: int, strategy_index: int, replication: int) -> np.random.Generator:
    """Independent generator for one Monte Carlo replication."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(size), int(strategy_index), int(replication)))
    return _rng(ss)


def sample_mvn(cov: CovarianceMatrix, n: int, seed: int) -> Sample:
    """``n`` independent N(0, cov) rows via the symmetric square root of ``cov``."""
    n = _check_size(n)
    z = _rng(np.random.SeedSequence(int(seed))).standard_normal((n, cov.dim))
    return Sample(cov.labels, z @ _matrix_sqrt(cov))


def _sem_layout(G: PathDiagram):
    if not G.is_parameterized:
        raise IdSelectError("sampling a path diagram needs every coefficient and error variance")
    order = [G.index(v) for v in G.topological_order]
    parents = {
        G.index(v): [(G.index(p), G.coefficient(p, v)) for p in G.parents(v)] for v in G.vertices
    }
    scale = np.sqrt([G.error_variances[v] for v in G.vertices])
    return order, parents, scale


def _ancestral(eps: np.ndarray, layout) -> np.ndarray:
    order, parents, scale = layout
    out = np.empty_like(eps)
    for i in order:
        col = eps[..., i] * scale[i]
        for j, coef in parents[i]:
            col = col + coef * out[..., j]
        out[..., i] = col
    return out


def sample_sem(G: PathDiagram, n: int, seed: int) -> Sample:
    """Draw ``n`` rows by evaluating the structural equations in topological order."""
    n = _check_size(n)
    layout = _sem_layout(G)
    eps = _rng(np.random.SeedSequence(int(seed))).standard_normal((n, len(G.vertices)))
    return Sample(G.vertices, _ancestral(eps, layout))


# --------------------------------------------------------------------------
# Monte Carlo harness


@dataclass(frozen=True)
class SimulationCell:
    strategy: Strategy
    n: int
    replications: int
    used: int
    excluded: int
    mean_tau: float
    mean_tau_se: float
    empirical_var: float
    empirical_var_se: float
    mad: float
    finite_var: float | None
    avar: float | None

    def as_dict(self) -> dict:
        return {
            "strategy": self.strategy.label,
            "n": self.n,
            "replications": self.replications,
            "used": self.used,
            "excluded": self.excluded,
            "mean_tau": self.mean_tau,
            "mean_tau_se": self.mean_tau_se,
            "empirical_var": self.empirical_var,
            "empirical_var_se": self.empirical_var_se,
            "mad": self.mad,
            "finite_var": self.finite_var,
            "avar": self.avar,
        }


@dataclass
class SimulationTable:
    """Empirical and analytic variances for every (strategy, size) pair."""

    strategies: tuple[Strategy, ...]
    sizes: tuple[int, ...]
    replications: int
    seed: int
    cells: list[SimulationCell]
    raw: list[tuple[str, int, int, float]] | None = field(default=None, repr=False)

    def cell(self, strategy: Strategy, n: int) -> SimulationCell:
        for c in self.cells:
            if c.strategy == strategy and c.n == n:
                return c
        raise KeyError((strategy.label, n))

    def write_raw_csv(self, path) -> None:
        """Per-replication estimates: ``strategy,n,replication,tau_hat`` (blank when excluded)."""
        if self.raw is None:
            raise IdSelectError("table was built without keep_raw=True")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["strategy", "n", "replication", "tau_hat"])
            for label, n, r, tau in self.raw:
                w.writerow([label, n, r, "" if math.isnan(tau) else repr(tau)])


def _draw_stack(seed, size, si, reps, p):
    z = np.empty((len(reps), size, p))
    for k, r in enumerate(reps):
        z[k] = replication_rng(seed, size, si, r).standard_normal((size, p))
    return z


def _run_cell(source, labels, strategy, si, size, replications, seed, keep_raw):
    p = len(labels)
    root = layout = None
    if isinstance(source, CovarianceMatrix):
        root = _matrix_sqrt(source)
    else:
        layout = _sem_layout(source)
    taus = np.empty(replications)
    bad = np.zeros(replications, dtype=bool)
    for start in range(0, replications, _CHUNK):
        reps = range(start, min(start + _CHUNK, replications))
        z = _draw_stack(seed, size, si, reps, p)
        data = z @ root if root is not None else _ancestral(z, layout)
        data -= data.mean(axis=1, keepdims=True)
        covs = np.einsum("rni,rnj->rij", data, data) / max(size - 1, 1)
        tau, cond = plug_in_tau(strategy, covs, labels)
        sl = slice(reps.start, reps.stop)
        bad[sl] = ~(cond <= COND_LIMIT)
        taus[sl] = np.where(bad[sl], np.nan, tau)

    excluded = int(bad.sum())
    if excluded > MAX_EXCLUDED_FRACTION * replications:
        raise SimulationError(
            f"{strategy.label} at n={size}: {excluded} of {replications} replications had "
            f"singular sample blocks (limit {MAX_EXCLUDED_FRACTION:.0%})"
        )
    good = taus[~bad]
    m = good.size
    mean = float(np.mean(good))
    var = float(np.var(good, ddof=1)) if m > 1 else math.nan
    dev = good - mean
    m4 = float(np.mean(dev**4))
    var_se = math.sqrt(max(m4 - var**2, 0.0) / m) if m > 1 else math.nan
    mad = float(np.median(np.abs(good - np.median(good))))

    pop = source if isinstance(source, CovarianceMatrix) else implied_covariance(source)
    try:
        rep = estimate(pop, strategy, size)
        finite, avar = rep.finite_var, rep.avar
    except IdSelectError:
        finite = avar = None

    cell = SimulationCell(
        strategy=strategy,
        n=size,
        replications=replications,
        used=m,
        excluded=excluded,
        mean_tau=mean,
        mean_tau_se=math.sqrt(var / m) if m > 1 else math.nan,
        empirical_var=var,
        empirical_var_se=var_se,
        mad=mad,
        finite_var=finite,
        avar=avar,
    )
    raw = [(strategy.label, size, r, float(t)) for r, t in enumerate(taus)] if keep_raw else None
    return cell, raw


def monte_carlo_variances(
    source,
    strategies,
    sizes,
    replications: int = 1000,
    seed: int = 0,
    workers: int = 1,
    keep_raw: bool = False,
) -> SimulationTable:
    """Empirical variance of each plug-in estimator across independent datasets.

    ``source`` is a :class:`CovarianceMatrix` (multivariate normal draws) or a
    fully parameterised :class:`PathDiagram` (ancestral sampling).  Each cell
    also carries the analytic finite-sample and asymptotic variances computed
    on the population covariance, where defined.

    Replications whose sample blocks are numerically singular are excluded and
    counted; more than 1% excluded in a cell raises :class:`SimulationError`.
    """
    if replications < 2:
        raise IdSelectError("replications must be at least 2")
    strategies = tuple(strategies)
    sizes = tuple(_check_size(n) for n in sizes)
    if isinstance(source, CovarianceMatrix):
        labels = source.labels
    elif isinstance(source, PathDiagram):
        labels = source.vertices
    else:
        raise IdSelectError("source must be a CovarianceMatrix or a PathDiagram")
    for s in strategies:
        needed = [s.treatment, s.outcome, *s.variables] + ([s.instrument] if s.instrument else [])
        missing = [v for v in needed if v not in labels]
        if missing:
            raise IdSelectError(f"{s.label} uses unknown variables {missing}")

    jobs = [(si, s, n) for n in sizes for si, s in enumerate(strategies)]

    def run(job):
        si, s, n = job
        return _run_cell(source, labels, s, si, n, replications, seed, keep_raw)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    raw = None
    if keep_raw:
        raw = [row for _, rows in results for row in rows]
    return SimulationTable(strategies, sizes, replications, int(seed), [c for c, _ in results], raw)

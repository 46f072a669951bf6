"""Total-effect estimates and their sampling variances.

Each criterion has one array-level "core" that maps a stack of covariance
matrices to the estimate (and, for population matrices, the variance
ingredients).  The labelled functions wrap the cores for a single
:class:`~idselect.gaussian.CovarianceMatrix`; the simulation harness feeds the
same cores a stack of sample covariances.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import CovarianceError, IdSelectError, SingularBlockError, WeakInstrumentError
from .gaussian import COND_LIMIT, CovarianceMatrix, ordered, regress, schur
from .graph import PathDiagram, directed_paths
from .strategy import BACK_DOOR, CONDITIONAL_IV, FRONT_DOOR, Strategy

__all__ = [
    "EstimateReport",
    "EstimationWarning",
    "Comparison",
    "VarianceRatio",
    "total_effect_paths",
    "back_door",
    "conditional_iv",
    "front_door",
    "estimate",
    "compare_estimators",
    "plug_in_tau",
    "WEAK_INSTRUMENT",
]

WEAK_INSTRUMENT = 1e-8


class EstimationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate and variances for one strategy.

    ``avar`` is the asymptotic variance already divided by ``n``;
    ``n_times_avar`` is the size-free quantity usually quoted.  ``finite_var``
    is the exact finite-sample variance where a formula exists.
    """

    kind: str
    strategy: Strategy | None
    tau_hat: float
    avar: float
    n_times_avar: float
    n: int
    finite_var: float | None = None
    q: int | None = None
    r: int | None = None
    tau_source: str | None = None
    warnings: tuple[str, ...] = field(default_factory=tuple)

    @property
    def label(self) -> str:
        return self.strategy.label if self.strategy else self.kind

    def sets(self) -> dict:
        return self.strategy.sets() if self.strategy else {}

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "strategy": self.label,
            "tau_hat": self.tau_hat,
            "avar": self.avar,
            "n_times_avar": self.n_times_avar,
            "finite_var": self.finite_var,
            "n": self.n,
            "sets": self.sets(),
            "q": self.q,
            "r": self.r,
            "tau_source": self.tau_source,
        }


def _check_n(n) -> int:
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise IdSelectError(f"sample size must be a positive integer, got {n!r}")
    return int(n)


def _disjoint(cov: CovarianceMatrix, singles, *groups):
    names = list(singles)
    for g in groups:
        names += list(g)
    cov.index(names)
    if len(set(names)) != len(names):
        raise CovarianceError(f"variables must be distinct and the sets disjoint: {names}")


def _guard(cond, what):
    c = float(np.max(cond))
    if not c <= COND_LIMIT:
        raise SingularBlockError(f"{what} is numerically singular (condition number {c:.3g})")


# --------------------------------------------------------------------------
# cores (stack-aware)


def _back_door_core(S, ix, iy, iS):
    block, cond = schur(S, [ix, iy], [ix, iy], iS)
    sxx = block[..., 0, 0]
    sxy = block[..., 0, 1]
    syy = block[..., 1, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = sxy / sxx
        syy_x = syy - sxy * tau
    return tau, syy_x, sxx, cond


def _civ_core(S, ix, iy, iz, iT):
    block, cond = schur(S, [ix, iy, iz], [ix, iy, iz], iT)
    sxx, sxy, sxz = block[..., 0, 0], block[..., 0, 1], block[..., 0, 2]
    syy, syz, szz = block[..., 1, 1], block[..., 1, 2], block[..., 2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        tau = syz / sxz
        rho = sxz / np.sqrt(sxx * szz)
    return tau, rho, syy / sxx, sxy / sxx, cond


def _front_door_core(S, ix, iy, iZ):
    # b_Zx: each mediator on x;  b_yZ.x: y on the mediators given x
    sxx = S[..., ix, ix]
    with np.errstate(divide="ignore", invalid="ignore"):
        b_zx = S[..., iZ, ix] / sxx[..., None]
    b_yz_x, cond = regress(S, iy, iZ, [ix])
    tau = np.sum(b_yz_x * b_zx, axis=-1)
    return tau, b_yz_x, cond


def plug_in_tau(strategy: Strategy, stack: np.ndarray, labels) -> tuple[np.ndarray, np.ndarray]:
    """Estimate for every covariance matrix in ``stack`` (shape ``(R, p, p)``).

    Returns the estimates and a per-matrix conditioning measure; callers drop
    entries whose measure exceeds :data:`~idselect.gaussian.COND_LIMIT`.  A
    conditional-IV replication with ``|rho_xz.T| < 1e-8`` is reported as
    infinitely ill-conditioned.
    """
    pos = {v: i for i, v in enumerate(labels)}
    ix, iy = pos[strategy.treatment], pos[strategy.outcome]
    iv = [pos[v] for v in strategy.variables]
    if strategy.kind == BACK_DOOR:
        tau, _, _, cond = _back_door_core(stack, ix, iy, iv)
    elif strategy.kind == CONDITIONAL_IV:
        tau, rho, _, _, cond = _civ_core(stack, ix, iy, pos[strategy.instrument], iv)
        cond = np.where(np.abs(rho) < WEAK_INSTRUMENT, np.inf, cond)
    else:
        tau, _, cond = _front_door_core(stack, ix, iy, iv)
    cond = np.where(np.isfinite(tau), cond, np.inf)
    return tau, cond


# --------------------------------------------------------------------------
# labelled estimators


def total_effect_paths(G: PathDiagram, x: str, y: str) -> float:
    """Sum over directed paths from ``x`` to ``y`` of the product of path coefficients."""
    total = 0.0
    for path in directed_paths(G, x, y):
        prod = 1.0
        for a, b in zip(path, path[1:]):
            prod *= G.coefficient(a, b)
        total += prod
    return total


def back_door(cov: CovarianceMatrix, x: str, y: str, S=(), n: int = 1) -> EstimateReport:
    """Covariate-adjusted regression coefficient of ``y`` on ``x``.

    The asymptotic variance is ``s_yy.xS / (n s_xx.S)``; the exact variance of
    the OLS coefficient under joint normality replaces ``n`` by ``n - q - 3``
    with ``q = |S|``.
    """
    n = _check_n(n)
    S = ordered(cov, S)
    _disjoint(cov, [x, y], S)
    tau, syy_x, sxx, cond = _back_door_core(cov.entries, *cov.index([x, y]), cov.index(S))
    _guard(cond, f"adjustment block {S}")
    q = len(S)
    ratio = float(syy_x / sxx)
    notes = []
    finite = None
    if n > q + 3:
        finite = ratio / (n - q - 3)
    else:
        msg = f"finite-sample variance needs n > |S| + 3 = {q + 3}; omitted"
        warnings.warn(msg, EstimationWarning, stacklevel=2)
        notes.append(msg)
    return EstimateReport(
        kind=BACK_DOOR,
        strategy=Strategy.back_door(x, y, S),
        tau_hat=float(tau),
        avar=ratio / n,
        n_times_avar=ratio,
        n=n,
        finite_var=finite,
        q=q,
        warnings=tuple(notes),
    )


def conditional_iv(
    cov: CovarianceMatrix, x: str, y: str, z: str, T=(), n: int = 1, tau: float | None = None
) -> EstimateReport:
    """Ratio ``s_yz.T / s_xz.T`` with its delta-method asymptotic variance

    ``(s_yy.T / s_xx.T - 2 b_yx.T tau + tau^2) / (n rho_xz.T^2)``.

    The variance is stated at the true effect; when ``tau`` is not supplied
    the estimate itself is plugged in and ``tau_source`` says so.
    """
    n = _check_n(n)
    T = ordered(cov, T)
    _disjoint(cov, [x, y, z], T)
    ix, iy, iz = cov.index([x, y, z])
    est, rho, syy_over_sxx, b_yx, cond = _civ_core(cov.entries, ix, iy, iz, cov.index(T))
    _guard(cond, f"conditioning block {T}")
    rho = float(rho)
    if not abs(rho) >= WEAK_INSTRUMENT:
        raise WeakInstrumentError(
            f"{z} is a weak instrument for {x} given {T}: |rho| = {abs(rho):.3g} < {WEAK_INSTRUMENT}"
        )
    est = float(est)
    t = est if tau is None else float(tau)
    ratio = float((syy_over_sxx - 2.0 * b_yx * t + t * t) / rho**2)
    return EstimateReport(
        kind=CONDITIONAL_IV,
        strategy=Strategy.conditional_iv(x, y, z, T),
        tau_hat=est,
        avar=ratio / n,
        n_times_avar=ratio,
        n=n,
        q=len(T),
        tau_source="tau_hat" if tau is None else "supplied",
    )


def front_door(cov: CovarianceMatrix, x: str, y: str, Z, n: int) -> EstimateReport:
    """Product of the mediator-on-treatment and outcome-on-mediator coefficients.

    With ``r = |Z|`` the exact variance is

        (1/((n-r-3) s_xx.Z) - 1/((n-3) s_xx)) s_yy.xZ
            + b_yZ.x S_ZZ.x b_yZ.x' / ((n-3) s_xx)

    and ``n_times_avar`` is its limit after multiplying by ``n``.
    """
    n = _check_n(n)
    Z = ordered(cov, Z)
    if not Z:
        raise IdSelectError("front-door estimation needs at least one mediator")
    _disjoint(cov, [x, y], Z)
    r = len(Z)
    if n <= r + 3:
        raise IdSelectError(f"front-door variance needs n > |Z| + 3 = {r + 3}, got n = {n}")
    ix, iy = cov.index([x, y])
    iZ = cov.index(Z)
    tau, b_yz_x, cond = _front_door_core(cov.entries, ix, iy, iZ)
    _guard(cond, f"mediator block {Z} given {x}")
    sxx = float(cov.entries[ix, ix])
    blk, c1 = schur(cov.entries, [ix], [ix], iZ)
    _guard(c1, f"mediator block {Z}")
    sxx_z = float(blk[0, 0])
    blk, c2 = schur(cov.entries, [iy], [iy], [ix] + iZ)
    _guard(c2, f"block {[x] + Z}")
    syy_xz = float(blk[0, 0])
    szz_x, _ = schur(cov.entries, iZ, iZ, [ix])
    quad = float(b_yz_x @ szz_x @ b_yz_x)
    finite = (1.0 / ((n - r - 3) * sxx_z) - 1.0 / ((n - 3) * sxx)) * syy_xz + quad / ((n - 3) * sxx)
    ratio = (1.0 / sxx_z - 1.0 / sxx) * syy_xz + quad / sxx
    return EstimateReport(
        kind=FRONT_DOOR,
        strategy=Strategy.front_door(x, y, Z),
        tau_hat=float(tau),
        avar=ratio / n,
        n_times_avar=ratio,
        n=n,
        finite_var=finite,
        r=r,
    )


def estimate(cov: CovarianceMatrix, strategy: Strategy, n: int, tau: float | None = None) -> EstimateReport:
    x, y = strategy.treatment, strategy.outcome
    if strategy.kind == BACK_DOOR:
        return back_door(cov, x, y, strategy.variables, n)
    if strategy.kind == CONDITIONAL_IV:
        return conditional_iv(cov, x, y, strategy.instrument, strategy.variables, n, tau)
    return front_door(cov, x, y, strategy.variables, n)


@dataclass(frozen=True)
class VarianceRatio:
    worse: str
    better: str
    ratio: float


@dataclass(frozen=True)
class Comparison:
    rows: tuple[EstimateReport, ...]
    ratios: tuple[VarianceRatio, ...]


def compare_estimators(cov: CovarianceMatrix, n: int, strategies) -> Comparison:
    """Estimate every strategy and order them by ``n_times_avar`` (ties by label).

    ``ratios`` lists each pair as worse/better so every ratio is at least 1.
    """
    rows = [estimate(cov, s, n) for s in strategies]
    rows.sort(key=lambda r: (r.n_times_avar, r.strategy.sort_key()))
    ratios = []
    for better, worse in combinations(rows, 2):
        ratio = worse.n_times_avar / better.n_times_avar if better.n_times_avar > 0 else math.inf
        ratios.append(VarianceRatio(worse.label, better.label, ratio))
    return Comparison(tuple(rows), tuple(ratios))

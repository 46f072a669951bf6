"""Embedded matrices and diagrams, and the published figures checked against them.

``uai-eq7`` and ``paint-table2`` are transcribed to the printed three
decimals.  The two ``*-template`` diagrams are reconstructions: they satisfy
the d-separation statements made about the original figures but are not
copies of them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import IdSelectError
from .estimators import EstimateReport, estimate
from .gaussian import CovarianceMatrix, implied_covariance
from .graph import PathDiagram, parse_path_diagram
from .strategy import BACK_DOOR, CONDITIONAL_IV, Strategy

__all__ = [
    "EmbeddedDataset",
    "DATASET_NAMES",
    "embedded_dataset",
    "template_text",
    "PublishedFigure",
    "PUBLISHED",
    "ClaimedOrdering",
    "CLAIMED_ORDERINGS",
    "published_checks",
    "deviation_warnings",
    "published_report",
]

_EQ7_LABELS = ("Y", "X", "Z", "T", "S")
_EQ7 = [
    [1.000, 0.277, 0.184, 0.248, 0.626],
    [0.277, 1.000, 0.800, 0.640, 0.128],
    [0.184, 0.800, 1.000, 0.200, 0.040],
    [0.248, 0.640, 0.200, 1.000, 0.200],
    [0.626, 0.128, 0.040, 0.200, 1.000],
]

_PAINT_LABELS = tuple(f"X{i}" for i in range(1, 11)) + ("Y",)
_PAINT = [
    [1.000, -0.736, -0.152, 0.148, 0.028, -0.042, 0.324, 0.216, 0.283, -0.496, -0.091],
    [-0.736, 1.000, 0.210, -0.331, -0.063, 0.095, -0.479, -0.684, -0.635, 0.684, 0.326],
    [-0.152, 0.210, 1.000, -0.091, -0.017, 0.026, 0.195, -0.134, -0.175, 0.307, 0.134],
    [0.148, -0.331, -0.091, 1.000, 0.191, -0.286, 0.184, 0.397, 0.521, -0.298, -0.614],
    [0.028, -0.063, -0.017, 0.191, 1.000, 0.291, 0.035, 0.076, 0.099, -0.057, -0.277],
    [-0.042, 0.095, 0.026, -0.286, 0.291, 1.000, -0.053, -0.114, -0.149, 0.085, -0.250],
    [0.324, -0.479, 0.195, 0.184, 0.035, -0.053, 1.000, 0.396, 0.353, -0.146, -0.044],
    [0.216, -0.684, -0.134, 0.397, 0.076, -0.114, 0.396, 1.000, 0.761, -0.435, -0.493],
    [0.283, -0.635, -0.175, 0.521, 0.099, -0.149, 0.353, 0.761, 1.000, -0.571, -0.475],
    [-0.496, 0.684, 0.307, -0.298, -0.057, 0.085, -0.146, -0.435, -0.571, 1.000, 0.283],
    [-0.091, 0.326, 0.134, -0.614, -0.277, -0.250, -0.044, -0.493, -0.475, 0.283, 1.000],
]


@dataclass(frozen=True)
class EmbeddedDataset:
    name: str
    covariance: CovarianceMatrix
    graph: PathDiagram | None
    notes: str


def template_text(name: str) -> str:
    """Source text of a bundled diagram (``fig1_template`` or ``fig2_template``)."""
    fname = name.replace("-", "_") + ".dag"
    try:
        return resources.files("idselect.data").joinpath(fname).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise IdSelectError(f"no bundled diagram named {name!r}") from None


@lru_cache(maxsize=None)
def _load(name: str) -> EmbeddedDataset:
    if name == "uai-eq7":
        return EmbeddedDataset(
            name,
            CovarianceMatrix(_EQ7_LABELS, np.array(_EQ7)),
            parse_path_diagram(template_text("fig1_template")),
            "Five-variable correlation matrix over (Y, X, Z, T, S) as printed to three "
            "decimals. The attached diagram is the reconstructed fig1 template.",
        )
    if name == "paint-table2":
        return EmbeddedDataset(
            name,
            CovarianceMatrix(_PAINT_LABELS, np.array(_PAINT)),
            None,
            "Estimated correlation matrix of the car-body painting study (n = 38), "
            "as printed to three decimals. No diagram is embedded.",
        )
    if name == "fig1-template":
        return EmbeddedDataset(
            name,
            CovarianceMatrix(_EQ7_LABELS, np.array(_EQ7)),
            parse_path_diagram(template_text("fig1_template")),
            "Reconstructed diagram (not the published figure) satisfying: T d-separates X "
            "from S; {S,X} d-separates T from Y; {S} and {T} are back-door sets; Z is a "
            "conditional IV given {T} and given {S}. Paired with the uai-eq7 matrix, "
            "whose conditional independencies it matches to rounding.",
        )
    if name == "fig2-template":
        g = parse_path_diagram(template_text("fig2_template"))
        return EmbeddedDataset(
            name,
            implied_covariance(g),
            g,
            "Reconstructed diagram (not the published figure) in which Z1 and Z2 are both "
            "conditional IVs given {T} and {Z1,T} d-separates X from Z2. The covariance is "
            "implied by the bundled default coefficients.",
        )
    raise IdSelectError(f"unknown dataset {name!r}; expected one of {', '.join(DATASET_NAMES)}")


DATASET_NAMES = ("uai-eq7", "paint-table2", "fig1-template", "fig2-template")


def embedded_dataset(name: str) -> EmbeddedDataset:
    return _load(name)


# --------------------------------------------------------------------------
# published figures


@dataclass(frozen=True)
class PublishedFigure:
    """A number printed in the source for one strategy on one dataset.

    ``quantity`` is ``n_times_avar``, ``avar`` or ``finite_var``; the last two
    are tied to a sample size ``n``.  A deviation larger than one unit in the
    last printed digit is reported.
    """

    dataset: str
    strategy: Strategy
    quantity: str
    value: float
    decimals: int
    source: str
    n: int | None = None

    @property
    def tolerance(self) -> float:
        return 10.0 ** -self.decimals


def _bd(x, y, S):
    return Strategy.back_door(x, y, S)


def _civ(x, y, z, T):
    return Strategy.conditional_iv(x, y, z, T)


def _eq7_figures():
    out = [
        PublishedFigure("uai-eq7", _bd("X", "Y", ["T"]), "n_times_avar", 1.550, 3, "counterexample text"),
        PublishedFigure("uai-eq7", _civ("X", "Y", "Z", ["S"]), "n_times_avar", 0.900, 3, "counterexample text"),
    ]
    rows = {
        _bd("X", "Y", ["T"]): ("finite_var", [0.097, 0.043, 0.028, 0.020, 0.016]),
        _bd("X", "Y", ["S"]): ("finite_var", [0.036, 0.016, 0.010, 0.008, 0.006]),
        _civ("X", "Y", "Z", ["T"]): ("avar", [0.081, 0.041, 0.027, 0.020, 0.016]),
        _civ("X", "Y", "Z", ["S"]): ("avar", [0.045, 0.022, 0.015, 0.011, 0.009]),
    }
    for strat, (qty, values) in rows.items():
        for n, v in zip((20, 40, 60, 80, 100), values):
            out.append(PublishedFigure("uai-eq7", strat, qty, v, 3, "simulation table", n))
    return out


def _paint_figures():
    p = "paint-table2"
    x78 = ["X7", "X8"]
    return [
        PublishedFigure(p, _bd("X4", "Y", ["X9"]), "n_times_avar", 0.810, 3, "application, X4"),
        PublishedFigure(p, _bd("X4", "Y", x78), "n_times_avar", 0.615, 3, "application, X4"),
        PublishedFigure(p, _bd("X4", "Y", x78), "n_times_avar", 0.709, 3, "application, X4 (second printing)"),
        PublishedFigure(p, _civ("X4", "Y", "X9", x78), "n_times_avar", 5.2732, 4, "application, X4"),
        PublishedFigure(p, _civ("X4", "Y", "X10", x78), "n_times_avar", 26.3532, 4, "application, X4"),
        PublishedFigure(p, _civ("X2", "Y", "X1", ["X10"]), "n_times_avar", 7.576, 3, "application, X2"),
        PublishedFigure(p, _bd("X2", "Y", ["X8", "X10"]), "n_times_avar", 1.456, 3, "application, X2"),
        PublishedFigure(p, _bd("X6", "Y", ["X4"]), "n_times_avar", 0.932, 3, "application, X6"),
        PublishedFigure(p, _civ("X6", "Y", "X5", ["X4"]), "n_times_avar", 3.963, 3, "application, X6"),
    ]


PUBLISHED: tuple[PublishedFigure, ...] = tuple(_eq7_figures() + _paint_figures())


@dataclass(frozen=True)
class ClaimedOrdering:
    """An ordering of asymptotic variances asserted in the source on graphical grounds."""

    dataset: str
    better: Strategy
    worse: Strategy
    rule: str


def _claims():
    p = "paint-table2"
    x78 = ["X7", "X8"]
    out = []
    for i in (1, 2, 3, 9, 10):
        out.append(ClaimedOrdering(p, _bd("X4", "Y", x78), _civ("X4", "Y", f"X{i}", x78), "prop2"))
    for i in (1, 2, 3, 10):
        out.append(ClaimedOrdering(p, _civ("X4", "Y", "X9", x78), _civ("X4", "Y", f"X{i}", x78), "prop1"))
    out.append(ClaimedOrdering(p, _bd("X4", "Y", x78), _bd("X4", "Y", ["X9"]), "lemma3"))
    out.append(ClaimedOrdering(p, _bd("X6", "Y", ["X4"]), _civ("X6", "Y", "X5", ["X4"]), "prop2"))
    return out


CLAIMED_ORDERINGS: tuple[ClaimedOrdering, ...] = tuple(_claims())


def _quantity(report: EstimateReport, qty: str):
    return {"n_times_avar": report.n_times_avar, "avar": report.avar, "finite_var": report.finite_var}[qty]


def published_checks(dataset: str, report: EstimateReport) -> list[tuple[PublishedFigure, float, bool]]:
    """Published figures matching ``report``: (figure, computed value, agrees)."""
    out = []
    for fig in PUBLISHED:
        if fig.dataset != dataset or fig.strategy != report.strategy:
            continue
        if fig.n is not None and fig.n != report.n:
            continue
        value = _quantity(report, fig.quantity)
        if value is None:
            continue
        out.append((fig, value, abs(value - fig.value) <= fig.tolerance + 1e-12))
    return out


def _deviation_message(fig: PublishedFigure, value: float) -> str:
    at = f" at n={fig.n}" if fig.n is not None else ""
    return (
        f"{fig.strategy.label} {fig.quantity}{at}: computed {value:.{fig.decimals + 1}f} "
        f"differs from published {fig.value:.{fig.decimals}f} ({fig.source})"
    )


def deviation_warnings(dataset: str, report: EstimateReport) -> list[str]:
    return [_deviation_message(fig, v) for fig, v, ok in published_checks(dataset, report) if not ok]


def published_report(dataset: str) -> dict:
    """Recompute every published figure and claimed ordering for ``dataset``.

    Returns ``{"figures": [...], "orderings": [...], "warnings": [...]}`` with
    entries in a fixed order, so repeated calls give identical output.
    """
    cov = embedded_dataset(dataset).covariance
    cache: dict[tuple[Strategy, int], EstimateReport] = {}

    def est(s, n):
        if (s, n) not in cache:
            cache[(s, n)] = estimate(cov, s, n)
        return cache[(s, n)]

    figures, warnings_ = [], []
    for fig in PUBLISHED:
        if fig.dataset != dataset:
            continue
        rep = est(fig.strategy, fig.n or 100)
        value = _quantity(rep, fig.quantity)
        ok = abs(value - fig.value) <= fig.tolerance + 1e-12
        figures.append(
            {
                "strategy": fig.strategy.label,
                "quantity": fig.quantity,
                "n": fig.n,
                "published": fig.value,
                "computed": value,
                "deviation": value - fig.value,
                "agrees": ok,
                "source": fig.source,
            }
        )
        if not ok:
            warnings_.append(_deviation_message(fig, value))
    orderings = []
    for c in CLAIMED_ORDERINGS:
        if c.dataset != dataset:
            continue
        b, w = est(c.better, 100).n_times_avar, est(c.worse, 100).n_times_avar
        orderings.append(
            {
                "better": c.better.label,
                "worse": c.worse.label,
                "rule": c.rule,
                "better_n_times_avar": b,
                "worse_n_times_avar": w,
                "holds": b <= w,
            }
        )
        if b > w:
            warnings_.append(f"claimed ordering {c.better.label} <= {c.worse.label} fails on computed values")
    return {"dataset": dataset, "figures": figures, "orderings": orderings, "warnings": warnings_}

"""Random graphs, SEMs and covariance matrices shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from idselect import PathDiagram
from idselect.gaussian import CovarianceMatrix


def random_dag(rng: np.random.Generator, n_vertices: int, p_edge: float) -> PathDiagram:
    names = [f"V{i}" for i in range(n_vertices)]
    perm = rng.permutation(n_vertices)
    arrows = [
        (names[perm[i]], names[perm[j]])
        for i, j in itertools.combinations(range(n_vertices), 2)
        if rng.random() < p_edge
    ]
    return PathDiagram(tuple(names), tuple(arrows))


def bounded_coef(rng: np.random.Generator, low: float = 0.05) -> float:
    """Uniform on [-1, 1] with (-low, low) removed."""
    return float(rng.choice([-1.0, 1.0]) * rng.uniform(low, 1.0))


def random_sem(rng: np.random.Generator, n_vertices: int, p_edge: float) -> PathDiagram:
    g = random_dag(rng, n_vertices, p_edge)
    return parameterise(g, rng)


def parameterise(g: PathDiagram, rng: np.random.Generator, unit_variance: bool = False) -> PathDiagram:
    coefs = {a: bounded_coef(rng) for a in g.arrows}
    var = {v: 1.0 if unit_variance else float(rng.uniform(0.5, 1.5)) for v in g.vertices}
    return g.with_parameters(coefs, var)


def random_pd(rng: np.random.Generator, labels) -> CovarianceMatrix:
    p = len(labels)
    a = rng.standard_normal((p, p + 2))
    return CovarianceMatrix(tuple(labels), a @ a.T / (p + 2) + 0.1 * np.eye(p))


def reachability_closure(g: PathDiagram) -> dict[str, set[str]]:
    """Descendant sets by repeated edge relaxation (independent of the library)."""
    reach = {v: {c for p, c in g.arrows if p == v} for v in g.vertices}
    changed = True
    while changed:
        changed = False
        for v in g.vertices:
            extra = set().union(*(reach[c] for c in reach[v])) - reach[v] if reach[v] else set()
            if extra:
                reach[v] |= extra
                changed = True
    return reach

"""Path diagrams: parsing, ancestry, graph surgery and d-separation.

A :class:`PathDiagram` is an immutable DAG over named variables that may
carry linear structural coefficients on its arrows and error variances on its
vertices.  Two d-separation engines are provided: a reachability search over
(vertex, direction) states, and an exhaustive enumeration of simple paths that
applies the blocking rules literally.  The second one is slow and exists to
check the first.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import NamedTuple

from .errors import (
    CycleError,
    GraphError,
    GraphParseError,
    OverlappingSetsError,
    PathBudgetExceeded,
)

__all__ = [
    "PathDiagram",
    "VertexRelations",
    "varset",
    "parse_path_diagram",
    "read_path_diagram",
    "format_path_diagram",
    "vertex_relations",
    "surgery",
    "remove_outgoing",
    "remove_incoming",
    "d_separated",
    "directed_paths",
    "PATH_BUDGET",
]

PATH_BUDGET = 10_000

_NAME = re.compile(r"^[A-Za-z0-9_]+$")

Arrow = tuple[str, str]


def varset(names) -> frozenset[str]:
    """Normalise a variable-set argument.

    ``None`` is the empty set and a bare string is a single name (so that
    ``varset("T")`` does not become ``{"T"}`` by accident of iteration).
    """
    if names is None:
        return frozenset()
    if isinstance(names, str):
        return frozenset([names])
    return frozenset(names)


@dataclass(frozen=True)
class PathDiagram:
    """Directed acyclic graph with optional linear-SEM parameters.

    Parameters
    ----------
    vertices : sequence of str
        Variable names, in the order used for matrices built from the diagram.
    arrows : sequence of (parent, child)
        Directed edges.
    coefficients : mapping (parent, child) -> float, optional
        Path coefficients.  Each must be nonzero.  A partial map is allowed;
        operations that need every coefficient check for completeness.
    error_variances : mapping vertex -> float, optional
        Variances of the independent Gaussian disturbances, strictly positive.
    """

    vertices: tuple[str, ...]
    arrows: tuple[Arrow, ...]
    coefficients: Mapping[Arrow, float] | None = None
    error_variances: Mapping[str, float] | None = None
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        vertices = tuple(self.vertices)
        arrows = tuple((str(a), str(b)) for a, b in self.arrows)
        index = {}
        for v in vertices:
            if not isinstance(v, str) or not _NAME.match(v):
                raise GraphError(f"invalid vertex name {v!r}")
            if v in index:
                raise GraphError(f"duplicate vertex {v!r}")
            index[v] = len(index)
        seen = set()
        for a, b in arrows:
            for v in (a, b):
                if v not in index:
                    raise GraphError(f"arrow {a} -> {b} uses unknown vertex {v!r}")
            if a == b:
                raise GraphError(f"self-loop on {a!r}")
            if (a, b) in seen:
                raise GraphError(f"duplicate arrow {a} -> {b}")
            seen.add((a, b))
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "arrows", arrows)
        object.__setattr__(self, "_index", MappingProxyType(index))

        if self.coefficients is not None:
            coefs = {}
            for arrow, value in dict(self.coefficients).items():
                arrow = (str(arrow[0]), str(arrow[1]))
                if arrow not in seen:
                    raise GraphError(f"coefficient given for missing arrow {arrow[0]} -> {arrow[1]}")
                value = float(value)
                if value == 0.0:
                    raise GraphError(f"path coefficient of {arrow[0]} -> {arrow[1]} must be nonzero")
                coefs[arrow] = value
            object.__setattr__(self, "coefficients", MappingProxyType(coefs))
        if self.error_variances is not None:
            evars = {}
            for v, value in dict(self.error_variances).items():
                if v not in index:
                    raise GraphError(f"error variance given for unknown vertex {v!r}")
                value = float(value)
                if not value > 0.0:
                    raise GraphError(f"error variance of {v!r} must be positive, got {value}")
                evars[v] = value
            object.__setattr__(self, "error_variances", MappingProxyType(evars))
        # raises CycleError
        self.topological_order

    @cached_property
    def _parents(self) -> dict[str, tuple[str, ...]]:
        out = {v: [] for v in self.vertices}
        for a, b in self.arrows:
            out[b].append(a)
        return {v: tuple(sorted(ps)) for v, ps in out.items()}

    @cached_property
    def _children(self) -> dict[str, tuple[str, ...]]:
        out = {v: [] for v in self.vertices}
        for a, b in self.arrows:
            out[a].append(b)
        return {v: tuple(sorted(cs)) for v, cs in out.items()}

    @cached_property
    def _arrow_set(self) -> frozenset[Arrow]:
        return frozenset(self.arrows)

    @cached_property
    def topological_order(self) -> tuple[str, ...]:
        """Vertices ordered parents-first (Kahn's algorithm, ties by declaration order)."""
        indeg = {v: 0 for v in self.vertices}
        for _, b in self.arrows:
            indeg[b] += 1
        ready = [v for v in self.vertices if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in self._children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=self._index.__getitem__)
        if len(order) != len(self.vertices):
            stuck = sorted(v for v in self.vertices if indeg[v] > 0)
            raise CycleError(f"graph contains a directed cycle through {', '.join(stuck)}")
        return tuple(order)

    def __contains__(self, v) -> bool:
        return v in self._index

    def index(self, v: str) -> int:
        self.require(v)
        return self._index[v]

    def require(self, *names: str) -> None:
        for v in names:
            if v not in self._index:
                raise GraphError(f"unknown vertex {v!r}")

    def parents(self, v: str) -> tuple[str, ...]:
        self.require(v)
        return self._parents[v]

    def children(self, v: str) -> tuple[str, ...]:
        self.require(v)
        return self._children[v]

    def has_arrow(self, a: str, b: str) -> bool:
        return (a, b) in self._arrow_set

    def coefficient(self, a: str, b: str) -> float:
        if self.coefficients is None or (a, b) not in self.coefficients:
            raise GraphError(f"no coefficient for arrow {a} -> {b}")
        return self.coefficients[(a, b)]

    @property
    def is_parameterized(self) -> bool:
        """True when every arrow has a coefficient and every vertex an error variance."""
        coefs = self.coefficients or {}
        return (
            len(coefs) == len(self.arrows)
            and self.error_variances is not None
            and len(self.error_variances) == len(self.vertices)
        )

    def with_parameters(self, coefficients=None, error_variances=None) -> "PathDiagram":
        """Copy of the diagram with the given parameter maps replacing the current ones."""
        return PathDiagram(
            self.vertices,
            self.arrows,
            self.coefficients if coefficients is None else coefficients,
            self.error_variances if error_variances is None else error_variances,
        )

    @cached_property
    def _descendants(self) -> dict[str, frozenset[str]]:
        out: dict[str, frozenset[str]] = {}
        for v in reversed(self.topological_order):
            acc = set()
            for c in self._children[v]:
                acc.add(c)
                acc |= out[c]
            out[v] = frozenset(acc)
        return out

    @cached_property
    def _ancestors(self) -> dict[str, frozenset[str]]:
        out: dict[str, frozenset[str]] = {}
        for v in self.topological_order:
            acc = set()
            for p in self._parents[v]:
                acc.add(p)
                acc |= out[p]
            out[v] = frozenset(acc)
        return out

    def descendants(self, v: str) -> frozenset[str]:
        """Proper descendants of ``v`` (``v`` itself excluded)."""
        self.require(v)
        return self._descendants[v]

    def ancestors(self, v: str) -> frozenset[str]:
        """Proper ancestors of ``v``."""
        self.require(v)
        return self._ancestors[v]


class VertexRelations(NamedTuple):
    ancestors: frozenset[str]
    descendants: frozenset[str]
    nondescendants: frozenset[str]


def vertex_relations(G: PathDiagram, v: str) -> VertexRelations:
    """Ancestors, descendants and nondescendants of ``v``.

    Nondescendants are ``V \\ (de(v) | {v})``, so they include the ancestors.
    """
    de = G.descendants(v)
    nd = frozenset(G.vertices) - de - {v}
    return VertexRelations(G.ancestors(v), de, nd)


# --------------------------------------------------------------------------
# parsing

_ATTRS = re.compile(r"^(?P<body>.*?)\s*\[(?P<attrs>[^\]]*)\]\s*$")


def _parse_attrs(text: str, lineno: int) -> dict[str, str]:
    attrs = {}
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            raise GraphParseError(f"malformed attribute {item!r}", lineno)
        key, value = (s.strip() for s in item.split("=", 1))
        attrs[key] = value
    return attrs


def _attr_float(attrs, key, lineno):
    try:
        return float(attrs[key])
    except ValueError:
        raise GraphParseError(f"{key} must be a number, got {attrs[key]!r}", lineno) from None


def parse_path_diagram(text: str) -> PathDiagram:
    """Parse the line-oriented edge-list format.

    Each non-blank line is one of::

        A -> B
        A -> B [coef=0.8]
        A                 # declares a vertex (needed for isolated ones)
        A [var=1.5]       # error variance of A

    ``#`` starts a comment.  Vertices are numbered in order of first mention.
    """
    vertices: dict[str, None] = {}
    arrows: list[Arrow] = []
    arrow_lines: dict[Arrow, int] = {}
    coefficients: dict[Arrow, float] = {}
    error_variances: dict[str, float] = {}

    def name(token, lineno):
        token = token.strip()
        if not _NAME.match(token):
            raise GraphParseError(f"invalid vertex name {token!r}", lineno)
        vertices.setdefault(token, None)
        return token

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        attrs = {}
        m = _ATTRS.match(line)
        if m:
            line = m.group("body")
            attrs = _parse_attrs(m.group("attrs"), lineno)
        if "->" in line:
            parts = line.split("->")
            if len(parts) != 2:
                raise GraphParseError("expected exactly one '->' per line", lineno)
            a = name(parts[0], lineno)
            b = name(parts[1], lineno)
            if a == b:
                raise GraphParseError(f"self-loop on {a!r}", lineno)
            if (a, b) in arrow_lines:
                raise GraphParseError(
                    f"duplicate arrow {a} -> {b} (first at line {arrow_lines[(a, b)]})", lineno
                )
            unknown = set(attrs) - {"coef"}
            if unknown:
                raise GraphParseError(f"unknown arrow attribute(s) {sorted(unknown)}", lineno)
            arrow_lines[(a, b)] = lineno
            arrows.append((a, b))
            if "coef" in attrs:
                coef = _attr_float(attrs, "coef", lineno)
                if coef == 0.0:
                    raise GraphParseError(f"coefficient of {a} -> {b} must be nonzero", lineno)
                coefficients[(a, b)] = coef
        else:
            v = name(line, lineno)
            unknown = set(attrs) - {"var"}
            if unknown:
                raise GraphParseError(f"unknown vertex attribute(s) {sorted(unknown)}", lineno)
            if "var" in attrs:
                var = _attr_float(attrs, "var", lineno)
                if not var > 0:
                    raise GraphParseError(f"error variance of {v!r} must be positive", lineno)
                error_variances[v] = var

    return PathDiagram(
        tuple(vertices),
        tuple(arrows),
        coefficients or None,
        error_variances or None,
    )


def read_path_diagram(path) -> PathDiagram:
    with open(path, encoding="utf-8") as fh:
        return parse_path_diagram(fh.read())


def format_path_diagram(G: PathDiagram) -> str:
    """Inverse of :func:`parse_path_diagram` (up to comments and whitespace)."""
    lines = []
    evars = G.error_variances or {}
    coefs = G.coefficients or {}
    # vertex declarations first keep the original vertex order on re-parse
    for v in G.vertices:
        lines.append(f"{v} [var={evars[v]!r}]" if v in evars else v)
    for a, b in G.arrows:
        lines.append(f"{a} -> {b} [coef={coefs[(a, b)]!r}]" if (a, b) in coefs else f"{a} -> {b}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# surgery

REMOVE_OUTGOING = "remove_outgoing"
REMOVE_INCOMING = "remove_incoming"


def surgery(G: PathDiagram, mode: str, X) -> PathDiagram:
    """Delete every arrow leaving (``remove_outgoing``) or entering
    (``remove_incoming``) a vertex of ``X``."""
    X = varset(X)
    G.require(*sorted(X))
    if mode == REMOVE_OUTGOING:
        keep = tuple(e for e in G.arrows if e[0] not in X)
    elif mode == REMOVE_INCOMING:
        keep = tuple(e for e in G.arrows if e[1] not in X)
    else:
        raise ValueError(f"unknown surgery mode {mode!r}")
    coefs = None
    if G.coefficients is not None:
        kept = set(keep)
        coefs = {e: c for e, c in G.coefficients.items() if e in kept}
    return PathDiagram(G.vertices, keep, coefs, G.error_variances)


def remove_outgoing(G: PathDiagram, X) -> PathDiagram:
    return surgery(G, REMOVE_OUTGOING, X)


def remove_incoming(G: PathDiagram, X) -> PathDiagram:
    return surgery(G, REMOVE_INCOMING, X)


# --------------------------------------------------------------------------
# d-separation


def _check_query(G, A, B, Z):
    A, B, Z = varset(A), varset(B), varset(Z)
    G.require(*sorted(A | B | Z))
    if not A or not B:
        raise GraphError("d-separation needs nonempty endpoint sets")
    if A & B or A & Z or B & Z:
        raise OverlappingSetsError(
            f"endpoint and conditioning sets must be disjoint: "
            f"A={sorted(A)}, B={sorted(B)}, Z={sorted(Z)}"
        )
    return A, B, Z


def _reachable(G: PathDiagram, sources: frozenset[str], Z: frozenset[str]) -> set[str]:
    """Vertices joined to ``sources`` by a path that ``Z`` does not block.

    States are (vertex, direction): ``up`` when the vertex was entered from a
    child, ``down`` when entered from a parent.  A vertex entered downward acts
    as a collider for the next step toward a parent, which is allowed only if
    it is in ``Z`` or has a descendant in ``Z``.
    """
    opens_collider = set(Z)
    for z in Z:
        opens_collider |= G._ancestors[z]
    reached = set()
    seen = set()
    stack = [(s, "up") for s in sources]
    while stack:
        state = stack.pop()
        if state in seen:
            continue
        seen.add(state)
        v, direction = state
        if v not in Z:
            reached.add(v)
        if direction == "up":
            if v in Z:
                continue
            stack.extend((p, "up") for p in G._parents[v])
            stack.extend((c, "down") for c in G._children[v])
        else:
            if v not in Z:
                stack.extend((c, "down") for c in G._children[v])
            if v in opens_collider:
                stack.extend((p, "up") for p in G._parents[v])
    return reached


def _skeleton_paths(G: PathDiagram, a: str, b: str, budget: list[int]):
    """Yield every simple path between ``a`` and ``b`` ignoring arrow direction."""
    neighbours = {v: sorted(set(G._parents[v]) | set(G._children[v])) for v in G.vertices}
    path = [a]
    on_path = {a}

    def walk(v):
        for w in neighbours[v]:
            if w in on_path:
                continue
            if w == b:
                budget[0] -= 1
                if budget[0] < 0:
                    raise PathBudgetExceeded("path budget exceeded during path enumeration")
                yield path + [b]
                continue
            path.append(w)
            on_path.add(w)
            yield from walk(w)
            path.pop()
            on_path.discard(w)

    yield from walk(a)


def _blocked(G: PathDiagram, path: list[str], Z: frozenset[str]) -> bool:
    for prev, v, nxt in zip(path, path[1:], path[2:]):
        collider = G.has_arrow(prev, v) and G.has_arrow(nxt, v)
        if collider:
            if v not in Z and not (G._descendants[v] & Z):
                return True
        elif v in Z:
            return True
    return False


def _d_separated_oracle(G, A, B, Z, budget_size):
    budget = [budget_size]
    for a in sorted(A):
        for b in sorted(B):
            for path in _skeleton_paths(G, a, b, budget):
                if not _blocked(G, path, Z):
                    return False
    return True


def d_separated(G: PathDiagram, A, B, Z=(), engine: str = "fast", budget: int = PATH_BUDGET) -> bool:
    """Whether ``Z`` blocks every path between a vertex of ``A`` and one of ``B``.

    Parameters
    ----------
    engine : {"fast", "oracle"}
        ``fast`` runs the reachability search; ``oracle`` enumerates simple
        paths and applies the blocking rules to each (capped at ``budget``
        paths, after which :class:`PathBudgetExceeded` is raised).
    """
    A, B, Z = _check_query(G, A, B, Z)
    if engine == "fast":
        return not (_reachable(G, A, Z) & B)
    if engine == "oracle":
        return _d_separated_oracle(G, A, B, Z, budget)
    raise ValueError(f"unknown d-separation engine {engine!r}")


def directed_paths(G: PathDiagram, x: str, y: str, budget: int = PATH_BUDGET) -> list[list[str]]:
    """All simple directed paths from ``x`` to ``y`` in lexicographic order."""
    G.require(x, y)
    if x == y:
        raise GraphError("directed_paths needs two distinct vertices")
    out: list[list[str]] = []
    can_reach = G._ancestors[y] | {y}

    def walk(v, path):
        for c in G._children[v]:
            if c not in can_reach:
                continue
            if c == y:
                out.append(path + [y])
                if len(out) > budget:
                    raise PathBudgetExceeded(f"more than {budget} directed paths from {x} to {y}")
                continue
            walk(c, path + [c])

    walk(x, [x])
    out.sort()
    return out

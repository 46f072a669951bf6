import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idselect import (
    CycleError,
    GraphParseError,
    PathBudgetExceeded,
    PathDiagram,
    d_separated,
    directed_paths,
    embedded_dataset,
    format_path_diagram,
    parse_path_diagram,
    remove_incoming,
    remove_outgoing,
    surgery,
    vertex_relations,
)
from idselect.errors import GraphError, OverlappingSetsError
from idselect.graph import varset
from support import random_dag, reachability_closure


@pytest.fixture(scope="module")
def fig1():
    return embedded_dataset("fig1-template").graph


@st.composite
def dags(draw, max_vertices=7):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(1, max_vertices))
    p = draw(st.floats(0.0, 0.7))
    return random_dag(np.random.default_rng(seed), n, p)


# parsing


def test_parse_arrows_coefficients_and_declarations():
    g = parse_path_diagram(
        """
        # a comment
        U
        X [var=2.0]
        X -> Y [coef=0.5]
        M -> Y   # trailing comment
        X -> M [coef=-1e-1]
        """
    )
    assert set(g.vertices) == {"U", "X", "Y", "M"}
    assert g.coefficient("X", "Y") == 0.5
    assert g.coefficient("X", "M") == -0.1
    assert g.error_variances == {"X": 2.0}
    assert not g.is_parameterized
    assert g.parents("Y") == ("M", "X")


@pytest.mark.parametrize(
    "text, line",
    [
        ("X -> Y\nY ->\n", 2),
        ("X -> Y [coef=abc]\n", 1),
        ("X -> Y\nA B\n", 2),
        ("X -> Y\nX -> Y\n", 2),
        ("X -> X\n", 1),
        ("X -> Y [weight=2]\n", 1),
    ],
)
def test_parse_errors_name_the_line(text, line):
    with pytest.raises(GraphParseError) as exc:
        parse_path_diagram(text)
    assert exc.value.line == line
    assert str(exc.value).startswith(f"line {line}:")


def test_cycle_rejected():
    with pytest.raises(CycleError):
        parse_path_diagram("A -> B\nB -> C\nC -> A\n")


def test_invalid_names_and_parameters():
    with pytest.raises(GraphError):
        PathDiagram(("X", "bad name"), ())
    with pytest.raises(GraphError):
        PathDiagram(("X", "Y"), (("X", "Y"),), {("X", "Y"): 0.0})
    with pytest.raises(GraphError):
        PathDiagram(("X",), (), None, {"X": -1.0})


def test_format_round_trip(fig1):
    text = format_path_diagram(fig1)
    again = parse_path_diagram(text)
    assert again.vertices == fig1.vertices and set(again.arrows) == set(fig1.arrows)
    g2 = embedded_dataset("fig2-template").graph
    back = parse_path_diagram(format_path_diagram(g2))
    assert back.coefficients == g2.coefficients and back.error_variances == g2.error_variances


def test_varset_treats_string_as_one_name():
    assert varset("XY") == {"XY"}
    assert varset(None) == frozenset()
    assert varset(["A", "B"]) == {"A", "B"}


# relations and surgery


@settings(max_examples=60, deadline=None)
@given(dags())
def test_descendants_match_closure(g):
    closure = reachability_closure(g)
    for v in g.vertices:
        rel = vertex_relations(g, v)
        assert rel.descendants == frozenset(closure[v])
        assert rel.ancestors == frozenset(u for u in g.vertices if v in closure[u])
        assert rel.nondescendants == frozenset(g.vertices) - rel.descendants - {v}
        assert set(g.parents(v)) == {p for p, c in g.arrows if c == v}


def test_vertex_relations_of_fig1(fig1):
    rel = vertex_relations(fig1, "T")
    assert set(fig1.children("T")) == {"Z", "X", "S"}
    assert rel.ancestors == frozenset() and rel.nondescendants == frozenset()
    assert rel.descendants == {"Z", "X", "S", "Y"}
    assert vertex_relations(fig1, "Y").ancestors == {"T", "Z", "X", "S"}


@settings(max_examples=40, deadline=None)
@given(dags(), st.data())
def test_surgery_idempotent_and_one_sided(g, data):
    X = data.draw(st.sets(st.sampled_from(g.vertices)))
    out = remove_outgoing(g, X)
    assert remove_outgoing(out, X) == out
    assert not any(p in X for p, _ in out.arrows)
    inc = remove_incoming(g, X)
    assert remove_incoming(inc, X) == inc
    assert not any(c in X for _, c in inc.arrows)
    assert surgery(g, "remove_outgoing", X) == out


def test_surgery_rejects_unknown_mode(fig1):
    with pytest.raises(ValueError):
        surgery(fig1, "sideways", ["X"])


# d-separation


def test_fig1_separations(fig1):
    assert d_separated(fig1, "X", "S", "T")
    assert d_separated(fig1, "T", "Y", ["S", "X"])
    assert not d_separated(fig1, "X", "S")
    assert not d_separated(fig1, "Z", "S", ["T", "Y"])  # Y is a common descendant


def test_collider_and_descendant():
    g = parse_path_diagram("A -> C\nB -> C\nC -> D\n")
    assert d_separated(g, "A", "B")
    assert not d_separated(g, "A", "B", "C")
    assert not d_separated(g, "A", "B", "D")


def test_query_validation(fig1):
    with pytest.raises(OverlappingSetsError):
        d_separated(fig1, "X", "S", ["X"])
    with pytest.raises(GraphError):
        d_separated(fig1, [], "S")
    with pytest.raises(GraphError):
        d_separated(fig1, "X", "nope")


@settings(max_examples=80, deadline=None)
@given(dags(), st.data())
def test_fast_engine_matches_oracle_on_set_queries(g, data):
    vs = list(g.vertices)
    if len(vs) < 2:
        return
    A = data.draw(st.sets(st.sampled_from(vs), min_size=1, max_size=min(2, len(vs) - 1)))
    rest = [v for v in vs if v not in A]
    B = data.draw(st.sets(st.sampled_from(rest), min_size=1, max_size=2))
    free = [v for v in rest if v not in B]
    Z = data.draw(st.sets(st.sampled_from(free), max_size=3)) if free else set()
    fast = d_separated(g, A, B, Z)
    assert fast == d_separated(g, A, B, Z, engine="oracle")
    assert fast == d_separated(g, B, A, Z)


def test_oracle_budget():
    # every V0 ... V8 path meets an unconditioned collider, so none ends the search early
    mids = [f"A{i}" for i in range(6)]
    arrows = [("V0", m) for m in mids] + [("V8", m) for m in mids] + list(itertools.combinations(mids, 2))
    g = PathDiagram(("V0", "V8", *mids), tuple(arrows))
    assert d_separated(g, "V0", "V8", engine="oracle")
    with pytest.raises(PathBudgetExceeded):
        d_separated(g, "V0", "V8", engine="oracle", budget=50)


def test_directed_paths_sorted_and_budgeted(fig1):
    assert directed_paths(fig1, "T", "Y") == [["T", "S", "Y"], ["T", "X", "Y"], ["T", "Z", "X", "Y"]]
    assert directed_paths(fig1, "Y", "T") == []
    with pytest.raises(PathBudgetExceeded):
        directed_paths(fig1, "T", "Y", budget=2)

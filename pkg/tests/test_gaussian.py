import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idselect import (
    CovarianceMatrix,
    conditional_cov,
    d_separated,
    embedded_dataset,
    implied_covariance,
    parse_covariance_csv,
    parse_path_diagram,
    partial_corr,
    regression_coeffs,
    regression_identity_residuals,
)
from idselect.errors import CovarianceError
from idselect.gaussian import (
    COND_LIMIT,
    conditional_var,
    format_covariance_csv,
    ordered,
    regress,
    schur,
    spd_solve,
)
from support import random_pd, random_sem

LABELS = ("a", "b", "c", "d", "e")
seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def eq7():
    return embedded_dataset("uai-eq7").covariance


def test_validation():
    with pytest.raises(CovarianceError):
        CovarianceMatrix(("a", "b"), np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(CovarianceError):
        CovarianceMatrix(("a", "b"), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(CovarianceError):
        CovarianceMatrix(("a", "a"), np.eye(2))
    with pytest.raises(CovarianceError):
        CovarianceMatrix(("a",), np.eye(2))


def test_symmetrised_on_ingest_and_read_only():
    m = CovarianceMatrix(("a", "b"), np.array([[1.0, 0.2], [0.2 + 5e-10, 1.0]]))
    assert m.entries[0, 1] == m.entries[1, 0]
    with pytest.raises(ValueError):
        m.entries[0, 0] = 2.0


def test_hand_schur_complements(eq7):
    assert conditional_var(eq7, "Y", ["X"]) == pytest.approx(1 - 0.277**2, abs=1e-12)
    assert conditional_cov(eq7, ["X"], ["Z"], ["T"])[0, 0] == pytest.approx(0.672, abs=1e-12)
    assert np.array_equal(conditional_cov(eq7, ["X"], ["Y"]), np.array([[0.277]]))


def test_hand_regression_coefficients(eq7):
    b_s = regression_coeffs(eq7, "Y", ["X"], ["S"])[0]
    b_t = regression_coeffs(eq7, "Y", ["X"], ["T"])[0]
    assert b_s == pytest.approx((0.277 - 0.128 * 0.626) / (1 - 0.128**2), abs=1e-12)
    assert round(b_s, 5) == 0.20015
    assert round(b_t, 5) == 0.20034


def test_ordering_of_sets(eq7):
    assert ordered(eq7, {"S", "Z"}) == ["Z", "S"]
    assert ordered(eq7, ["S", "Z"]) == ["S", "Z"]
    assert ordered(eq7, "T") == ["T"]


def test_singular_blocks_flagged_at_array_level():
    # validated matrices cannot hold a singular principal block, but sample stacks can
    x = np.array([1.0, 2.0, 3.0])
    rank_one = np.outer(x, x)
    _, cond = schur(rank_one, [0], [0], [1, 2])
    assert not cond <= COND_LIMIT
    stack = np.stack([np.eye(3), rank_one])
    _, cond = regress(stack, 0, [1], [2])
    assert cond[0] == 1.0 and not cond[1] <= COND_LIMIT
    X, cond = spd_solve(np.diag([2.0, 4.0]), np.ones((2, 1)))
    assert np.allclose(X[:, 0], [0.5, 0.25]) and cond == pytest.approx(2.0)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_schur_agrees_with_precision_matrix(seed):
    cov = random_pd(np.random.default_rng(seed), LABELS)
    prec = np.linalg.inv(cov.entries)
    # s_ab.rest = -P_ab / (P_aa P_bb - P_ab^2) for the 2x2 block of the precision matrix
    block = np.linalg.inv(prec[:2, :2])
    assert np.allclose(conditional_cov(cov, ["a", "b"], ["a", "b"], ["c", "d", "e"]), block, atol=1e-9)
    r = partial_corr(cov, "a", "b", ["c", "d", "e"])
    assert r == pytest.approx(-prec[0, 1] / np.sqrt(prec[0, 0] * prec[1, 1]), abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_vector_regression_matches_least_squares(seed):
    cov = random_pd(np.random.default_rng(seed), LABELS)
    beta = regression_coeffs(cov, "a", ["b", "c"], ["d"])
    full = np.linalg.solve(cov.entries[1:4, 1:4], cov.entries[1:4, 0])
    assert np.allclose(beta, full[:2], atol=1e-9)


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_uncorrelated_covariate_leaves_coefficient_unchanged(seed):
    # build a matrix with s_tx.S = 0 by construction: t = noise independent of (x, S)
    rng = np.random.default_rng(seed)
    base = random_pd(rng, ("y", "x", "s"))
    e = np.zeros((4, 4))
    e[:3, :3] = base.entries
    e[3, 3] = 1.0 + rng.random()
    lam = rng.normal()
    # y also depends on t, which is independent of (x, s)
    e[0, 3] = e[3, 0] = lam * e[3, 3]
    e[0, 0] += lam**2 * e[3, 3]
    cov = CovarianceMatrix(("y", "x", "s", "t"), e)
    assert abs(conditional_cov(cov, ["t"], ["x"], ["s"])[0, 0]) < 1e-12
    b1 = regression_coeffs(cov, "y", ["x"], ["s"])[0]
    b2 = regression_coeffs(cov, "y", ["x"], ["s", "t"])[0]
    assert b1 == pytest.approx(b2, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_uncorrelated_with_outcome_leaves_residual_variance_unchanged(seed):
    # t correlated with x only through S, and y independent of t given x, S
    g = parse_path_diagram("S -> X\nS -> Y\nX -> Y\nS -> T\n")
    rng = np.random.default_rng(seed)
    coefs = {a: float(rng.uniform(0.2, 1.0)) for a in g.arrows}
    cov = implied_covariance(g.with_parameters(coefs, dict.fromkeys(g.vertices, 1.0)))
    assert abs(conditional_cov(cov, ["T"], ["X"], ["S"])[0, 0]) < 1e-12
    assert regression_coeffs(cov, "Y", ["X"], ["S", "T"])[0] == pytest.approx(
        regression_coeffs(cov, "Y", ["X"], ["S"])[0], abs=1e-9
    )
    assert conditional_var(cov, "Y", ["X", "S", "T"]) == pytest.approx(conditional_var(cov, "Y", ["X", "S"]), abs=1e-9)


def test_implied_covariance_small_cases():
    g = parse_path_diagram("X -> Y [coef=0.7]\nX [var=1]\nY [var=1]\n")
    cov = implied_covariance(g)
    assert np.allclose(cov.entries, [[1, 0.7], [0.7, 1.49]])
    chain = parse_path_diagram("X -> M [coef=0.5]\nM -> Y [coef=-2]\nX [var=1]\nM [var=1]\nY [var=1]\n")
    assert implied_covariance(chain)["X", "Y"] == pytest.approx(-1.0)
    empty = parse_path_diagram("A [var=2]\nB [var=3]\n")
    assert np.array_equal(implied_covariance(empty).entries, np.diag([2.0, 3.0]))


def test_implied_covariance_needs_parameters():
    with pytest.raises(Exception):
        implied_covariance(parse_path_diagram("X -> Y\n"))


def test_d_separation_implies_vanishing_partial_covariance():
    rng = np.random.default_rng(21)
    for _ in range(40):
        g = random_sem(rng, 6, 0.4)
        cov = implied_covariance(g)
        vs = g.vertices
        for i, a in enumerate(vs):
            for b in vs[i + 1 :]:
                for z in [()] + [(v,) for v in vs if v not in (a, b)]:
                    if d_separated(g, a, b, z):
                        assert abs(conditional_cov(cov, [a], [b], z)[0, 0]) < 1e-9


def test_identity_residuals_on_eq7(eq7):
    res = regression_identity_residuals(eq7, "X", "Y", ["S"], ["T"])
    assert max(map(abs, res)) <= 1e-10
    assert regression_identity_residuals(eq7, "X", "Y").omitted_variable == 0
    with pytest.raises(CovarianceError):
        regression_identity_residuals(eq7, "X", "Y", ["S"], ["S"])


def test_csv_round_trip_is_bit_exact(eq7):
    rng = np.random.default_rng(0)
    for cov in (eq7, embedded_dataset("paint-table2").covariance, random_pd(rng, LABELS)):
        back = parse_covariance_csv(format_covariance_csv(cov))
        assert back.labels == cov.labels
        assert np.array_equal(back.entries, cov.entries)


@pytest.mark.parametrize(
    "text",
    ["", "a,b\n1,0\n", "a,b\n1,0,0\n0,1\n", "a,b\n1,x\n0,1\n"],
)
def test_csv_errors(text):
    with pytest.raises(CovarianceError):
        parse_covariance_csv(text)

import csv

import numpy as np
import pytest

from idselect import (
    CovarianceMatrix,
    Strategy,
    embedded_dataset,
    implied_covariance,
    monte_carlo_variances,
    parse_path_diagram,
    sample_mvn,
    sample_sem,
)
from idselect.errors import IdSelectError, SimulationError
from idselect.simulation import replication_rng


@pytest.fixture(scope="module")
def eq7():
    return embedded_dataset("uai-eq7").covariance


BD_T = Strategy.back_door("X", "Y", ["T"])
BD_S = Strategy.back_door("X", "Y", ["S"])
IV_S = Strategy.conditional_iv("X", "Y", "Z", ["S"])
IV_T = Strategy.conditional_iv("X", "Y", "Z", ["T"])


def test_mvn_law_of_large_numbers():
    cov = CovarianceMatrix(("a", "b"), np.eye(2))
    s = sample_mvn(cov, 100_000, seed=1)
    assert np.abs(s.covariance().entries - np.eye(2)).max() < 0.02


def test_single_row_and_determinism(eq7):
    assert sample_mvn(eq7, 1, seed=3).values.shape == (1, 5)
    a, b = sample_mvn(eq7, 50, seed=3), sample_mvn(eq7, 50, seed=3)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, sample_mvn(eq7, 50, seed=4).values)


def test_sem_sampling_matches_implied_covariance():
    g = parse_path_diagram("X -> Y [coef=0.8]\nX [var=1]\nY [var=0.5]\n")
    s = sample_sem(g, 100_000, seed=2)
    assert s.covariance()["X", "Y"] == pytest.approx(0.8, abs=0.02)
    direct = sample_mvn(implied_covariance(g), 100_000, seed=5).covariance()
    assert np.abs(s.covariance().entries - direct.entries).max() < 0.02
    lone = sample_sem(parse_path_diagram("A [var=1]\n"), 1000, seed=0)
    assert lone.values.shape == (1000, 1)


def test_sem_sampling_needs_parameters():
    with pytest.raises(IdSelectError):
        sample_sem(parse_path_diagram("X -> Y\n"), 10, seed=0)


def test_replication_streams_are_independent_of_order():
    a = replication_rng(7, 20, 1, 5).standard_normal(3)
    replication_rng(7, 20, 1, 4).standard_normal(3)
    assert np.array_equal(a, replication_rng(7, 20, 1, 5).standard_normal(3))
    assert not np.array_equal(a, replication_rng(7, 20, 2, 5).standard_normal(3))


def test_table_shape_and_tiny_replication_count(eq7):
    t = monte_carlo_variances(eq7, [BD_T, IV_S], [20, 40], replications=2, seed=0)
    assert len(t.cells) == 4
    for c in t.cells:
        assert np.isfinite(c.empirical_var) and c.empirical_var >= 0
    with pytest.raises(IdSelectError):
        monte_carlo_variances(eq7, [BD_T], [20], replications=1)


def test_thread_count_does_not_change_results(eq7):
    args = (eq7, [BD_T, BD_S, IV_S, IV_T], [20, 60])
    one = monte_carlo_variances(*args, replications=300, seed=11, workers=1, keep_raw=True)
    four = monte_carlo_variances(*args, replications=300, seed=11, workers=4, keep_raw=True)
    assert [c.as_dict() for c in one.cells] == [c.as_dict() for c in four.cells]
    assert one.raw == four.raw


def test_back_door_matches_finite_sample_variance(eq7):
    t = monte_carlo_variances(eq7, [BD_S], [40, 100], replications=10_000, seed=8)
    for n in (40, 100):
        c = t.cell(BD_S, n)
        assert c.empirical_var == pytest.approx(c.finite_var, rel=0.10)
        assert abs(c.mean_tau - 0.2) < 3 * c.mean_tau_se + 0.005  # tau from the rounded matrix


def test_iv_variance_approaches_asymptotic(eq7):
    t = monte_carlo_variances(eq7, [IV_S, IV_T], [100], replications=10_000, seed=9)
    for s in (IV_S, IV_T):
        ratio = t.cell(s, 100).empirical_var / t.cell(s, 100).avar
        assert 0.8 <= ratio <= 1.6
        assert t.cell(s, 100).mad > 0


def test_sem_source(eq7):
    g = parse_path_diagram("U -> X [coef=0.8]\nU -> Y [coef=0.5]\nX -> Y [coef=0.3]\nU [var=1]\nX [var=1]\nY [var=1]\n")
    s = Strategy.back_door("X", "Y", ["U"])
    c = monte_carlo_variances(g, [s], [200], replications=2000, seed=1).cell(s, 200)
    assert abs(c.mean_tau - 0.3) < 4 * c.mean_tau_se


def test_raw_csv(tmp_path, eq7):
    t = monte_carlo_variances(eq7, [BD_T], [20], replications=5, seed=0, keep_raw=True)
    out = tmp_path / "raw.csv"
    t.write_raw_csv(out)
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["strategy", "n", "replication", "tau_hat"]
    assert len(rows) == 6 and rows[1][:3] == ["back-door{T}", "20", "0"]
    with pytest.raises(IdSelectError):
        monte_carlo_variances(eq7, [BD_T], [20], replications=5).write_raw_csv(out)


def test_singular_samples_abort_cell():
    # n = 3 observations with two conditioning variables leaves no residual degrees of freedom
    cov = CovarianceMatrix(("X", "Y", "A", "B"), np.eye(4) + 0.1)
    s = Strategy.back_door("X", "Y", ["A", "B"])
    with pytest.raises(SimulationError):
        monte_carlo_variances(cov, [s], [3], replications=50, seed=0)


def test_unknown_variables_rejected(eq7):
    with pytest.raises(IdSelectError):
        monte_carlo_variances(eq7, [Strategy.back_door("X", "Y", ["Q"])], [20], replications=5)

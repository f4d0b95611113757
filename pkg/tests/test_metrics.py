import math
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mtimpute.errors import StructuralError
from mtimpute.metrics import covariance, covariance_drift, rmse_sum, summarize, summarize_values


@dataclass
class FakeRun:
    imputed: np.ndarray


def brute_rmse_sum(truth, imputed, mask):
    total = 0.0
    for i in range(truth.shape[0]):
        squared, count = 0.0, 0
        for j in range(truth.shape[1]):
            if mask[i, j]:
                squared += (imputed[i, j] - truth[i, j]) ** 2
                count += 1
        if count:
            total += math.sqrt(squared / count)
    return total


def brute_covariance(values):
    n_rows, n_cols = values.shape
    means = [sum(values[r, c] for r in range(n_rows)) / n_rows for c in range(n_cols)]
    cov = np.zeros((n_cols, n_cols))
    for i in range(n_cols):
        for j in range(n_cols):
            cov[i, j] = sum((values[r, i] - means[i]) * (values[r, j] - means[j]) for r in range(n_rows)) / n_rows
    return cov


def brute_drift(truth, imputed):
    a, b = brute_covariance(truth), brute_covariance(imputed)
    n = truth.shape[1]
    squared = sum((a[i, j] - b[i, j]) ** 2 for i in range(n) for j in range(n) if i != j)
    return math.sqrt(squared) / (n * (n - 1))


def test_metrics_match_brute_force_on_random_tables():
    rng = np.random.default_rng(2024)
    for _ in range(50):
        rows, cols = rng.integers(2, 9), rng.integers(2, 6)
        truth = rng.normal(size=(rows, cols))
        imputed = truth + rng.normal(scale=0.5, size=(rows, cols))
        mask = rng.random((rows, cols)) < 0.35
        assert rmse_sum(truth, imputed, mask) == pytest.approx(brute_rmse_sum(truth, imputed, mask), abs=1e-10)
        assert covariance_drift(truth, imputed) == pytest.approx(brute_drift(truth, imputed), abs=1e-10)


def test_rmse_sum_examples(rng):
    truth = rng.normal(size=(4, 3))
    mask = rng.random((4, 3)) < 0.5
    assert rmse_sum(truth, truth, mask) == 0.0

    truth = np.zeros((2, 3))
    imputed = np.array([[3.0, 4.0, 100.0], [7.0, 7.0, 7.0]])
    mask = np.array([[True, True, False], [False, False, False]])
    assert rmse_sum(truth, imputed, mask) == pytest.approx(math.sqrt(12.5))


def test_rmse_sum_shape_mismatch():
    with pytest.raises(StructuralError):
        rmse_sum(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 3), dtype=bool))


def test_two_column_drift_closed_form(rng):
    truth = rng.normal(size=(30, 2))
    imputed = truth.copy()
    imputed[:, 1] = rng.normal(size=30)
    delta = abs(covariance(truth)[0, 1] - covariance(imputed)[0, 1])
    assert covariance_drift(truth, imputed) == pytest.approx(delta / math.sqrt(2))


def test_drift_is_shift_invariant(rng):
    truth = rng.normal(size=(20, 3))
    # a constant shift leaves every covariance unchanged
    shifted = truth + 5.0
    assert covariance_drift(truth, shifted) == pytest.approx(0.0, abs=1e-12)
    assert covariance_drift(truth, truth) == 0.0


def test_drift_needs_two_columns():
    with pytest.raises(StructuralError):
        covariance_drift(np.zeros((4, 1)), np.zeros((4, 1)))
    with pytest.raises(StructuralError):
        covariance_drift(np.zeros((4, 2)), np.zeros((4, 3)))


finite = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(1, 6).flatmap(
        lambda rows: st.integers(1, 5).flatmap(
            lambda cols: st.tuples(
                arrays(np.float64, (rows, cols), elements=finite),
                arrays(np.float64, (rows, cols), elements=finite),
                arrays(np.float64, (rows, cols), elements=finite),
                arrays(np.bool_, (rows, cols)),
            )
        )
    ),
    st.floats(0.1, 10.0),
)
def test_rmse_sum_properties(tables, k):
    truth, imputed, noise, mask = tables
    base = rmse_sum(truth, imputed, mask)
    assert base >= 0.0
    # observed cells do not count
    assert rmse_sum(truth, np.where(mask, imputed, noise), mask) == base
    # errors scaled by k scale the sum by k
    scaled = truth + k * (imputed - truth)
    assert rmse_sum(truth, scaled, mask) == pytest.approx(k * base, rel=1e-9, abs=1e-9)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 3), elements=finite), arrays(np.float64, (6, 3), elements=finite))
def test_drift_non_negative_and_symmetric(truth, imputed):
    drift = covariance_drift(truth, imputed)
    assert drift >= 0.0
    assert drift == pytest.approx(covariance_drift(imputed, truth))


def test_summarize(rng):
    assert summarize_values([1.0, 2.0, 3.0]).model_dump() == {"values": [1.0, 2.0, 3.0], "mean": 2.0, "max": 3.0}
    single = summarize_values([4.5])
    assert single.mean == single.max == 4.5
    with pytest.raises(StructuralError):
        summarize_values([])
    with pytest.raises(StructuralError):
        summarize([], np.zeros((2, 2)), np.zeros((2, 2), dtype=bool))

    truth = rng.normal(size=(10, 3))
    mask = rng.random((10, 3)) < 0.3
    runs = [FakeRun(truth + rng.normal(scale=0.1 * (k + 1), size=truth.shape)) for k in range(5)]
    summary = summarize(runs, truth, mask)
    values = [rmse_sum(truth, run.imputed, mask) for run in runs]
    assert summary.values == values
    assert summary.mean == pytest.approx(np.mean(values))
    assert summary.max == max(values)
    drift = summarize(runs, truth, mask, "covariance_drift")
    assert drift.values == [covariance_drift(truth, run.imputed) for run in runs]
    with pytest.raises(StructuralError):
        summarize(runs, truth, mask, "mae")

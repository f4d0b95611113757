"""Imputation quality measures and their aggregation over multiple imputations."""

from typing import Sequence

import numpy as np
import numpy.typing as npt

from mtimpute.errors import StructuralError
from mtimpute.models import MetricSummary


def rmse_sum(truth: npt.ArrayLike, imputed: npt.ArrayLike, mask: npt.ArrayLike) -> float:
    """Sum over rows of the root mean squared error on that row's missing cells.

    Only missing cells count; rows without missing cells add nothing.
    """
    truth = np.asarray(truth, dtype=np.float64)
    imputed = np.asarray(imputed, dtype=np.float64)
    missing = np.asarray(mask, dtype=bool)
    if not (truth.shape == imputed.shape == missing.shape):
        raise StructuralError(
            f"shapes disagree: truth {truth.shape}, imputed {imputed.shape}, mask {missing.shape}"
        )
    squared = np.where(missing, imputed - truth, 0.0) ** 2
    counts = missing.sum(axis=1)
    rows = counts > 0
    return float(np.sqrt(squared[rows].sum(axis=1) / counts[rows]).sum())


def covariance(values: npt.ArrayLike) -> np.ndarray:
    """Population covariance of the columns."""
    return np.cov(np.asarray(values, dtype=np.float64), rowvar=False, bias=True)


def covariance_drift(truth: npt.ArrayLike, imputed: npt.ArrayLike) -> float:
    """Off-diagonal covariance differences: sqrt of their squared sum over N(N-1)."""
    truth = np.asarray(truth, dtype=np.float64)
    imputed = np.asarray(imputed, dtype=np.float64)
    if truth.shape != imputed.shape:
        raise StructuralError(f"truth {truth.shape} and imputed {imputed.shape} differ in shape")
    if truth.ndim != 2 or truth.shape[1] < 2:
        raise StructuralError("covariance drift needs at least two columns")
    n = truth.shape[1]
    diff = covariance(truth) - covariance(imputed)
    off_diagonal = ~np.eye(n, dtype=bool)
    return float(np.sqrt(np.sum(diff[off_diagonal] ** 2)) / (n * (n - 1)))


def summarize_values(values: Sequence[float]) -> MetricSummary:
    if len(values) == 0:
        raise StructuralError("cannot summarize an empty list of runs")
    values = [float(v) for v in values]
    top = max(values)
    return MetricSummary(values=values, mean=min(float(np.mean(values)), top), max=top)


def summarize(runs, truth: npt.ArrayLike, mask: npt.ArrayLike, metric: str = "rmse_sum") -> MetricSummary:
    """Evaluate ``metric`` on every run's imputed table; report values, mean and max."""
    if not runs:
        raise StructuralError("cannot summarize an empty list of runs")
    if metric == "rmse_sum":
        values = [rmse_sum(truth, run.imputed, mask) for run in runs]
    elif metric == "covariance_drift":
        values = [covariance_drift(truth, run.imputed) for run in runs]
    else:
        raise StructuralError(f"unknown metric {metric!r}")
    return summarize_values(values)

"""Regression-based correction of the rehearsal prediction bias.

Rehearsal CIL predictions are systematically offset from the CILs the real
experiment later realizes (upward for diffuse priors, downward for tight
ones).  Because predictions and realized CILs accumulate side by side while
an experiment runs, the offset can be learned on the fly.  Precision is the
inverse of variance, so both sides of the model live on the 1/CIL**2 scale:

    1/true_cil**2  ~  beta0 + beta1 / pred_cil**2 + beta2 * count + beta3 * horizon

where ``count`` is the sample size the prediction was made at and
``horizon`` is the future size it was made for.  The fitted model estimates
the true CIL behind a prediction; the estimate shifts the whole predicted
distribution so its median lands on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "CalibrationRow",
    "RegressionFit",
    "UNUSABLE_FIT",
    "MIN_TRAINING_PAIRS",
    "fit_regression",
    "fit_regression_realized",
    "calibrate_distribution",
    "write_table",
]

MIN_TRAINING_PAIRS = 8
_PIVOT_TOL = 1e-10
_FLOOR = 1e-9


@dataclass(frozen=True)
class CalibrationRow:
    """Predictions made at one sample count, next to the realized CIL there.

    count: collected sample size when the prediction was made.
    observed_cil: realized CIL of the collected data at that count.
    predicted: future size -> predicted median CIL.
    """

    count: int
    observed_cil: float
    predicted: dict[int, float]

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")
        if not (self.observed_cil > 0):
            raise ValueError(f"observed_cil must be positive, got {self.observed_cil}")
        if any(not (p > 0) for p in self.predicted.values()):
            raise ValueError("all predicted CILs must be positive")


@dataclass(frozen=True)
class RegressionFit:
    beta0: float
    beta1: float
    beta2: float
    beta3: float
    r_squared: float
    n_rows: int
    usable: bool


UNUSABLE_FIT = RegressionFit(
    beta0=0.0, beta1=0.0, beta2=0.0, beta3=0.0, r_squared=0.0, n_rows=0, usable=False
)


def _solve_ols(x: np.ndarray, y: np.ndarray) -> RegressionFit:
    """Ordinary least squares via normal equations with a scaled rank check."""
    n_rows = int(x.shape[0])
    if n_rows < MIN_TRAINING_PAIRS:
        return UNUSABLE_FIT
    gram = x.T @ x
    diag = np.sqrt(np.diag(gram))
    if np.any(diag <= 0) or not np.all(np.isfinite(gram)):
        return UNUSABLE_FIT
    scaled = gram / np.outer(diag, diag)
    if not _full_rank(scaled, _PIVOT_TOL):
        return UNUSABLE_FIT
    beta = np.linalg.solve(gram, x.T @ y)
    resid = y - x @ beta
    ssr = float(resid @ resid)
    centered = y - y.mean()
    sst = float(centered @ centered)
    if sst <= 1e-300:
        r2 = 1.0 if ssr <= 1e-300 else 0.0
    else:
        r2 = 1.0 - ssr / sst
    if not np.all(np.isfinite(beta)):
        return UNUSABLE_FIT
    return RegressionFit(
        beta0=float(beta[0]),
        beta1=float(beta[1]),
        beta2=float(beta[2]),
        beta3=float(beta[3]),
        r_squared=r2,
        n_rows=n_rows,
        usable=True,
    )


def _full_rank(a: np.ndarray, tol: float) -> bool:
    """Gaussian elimination with partial pivoting; all pivots must clear tol."""
    m = a.copy()
    n = m.shape[0]
    for col in range(n):
        p = int(np.argmax(np.abs(m[col:, col]))) + col
        if abs(m[p, col]) < tol:
            return False
        if p != col:
            m[[col, p]] = m[[p, col]]
        m[col + 1 :, col:] -= np.outer(m[col + 1 :, col] / m[col, col], m[col, col:])
    return True


def _design(counts, horizons, preds) -> np.ndarray:
    x = np.empty((len(preds), 4), dtype=float)
    x[:, 0] = 1.0
    x[:, 1] = 1.0 / np.square(preds)
    x[:, 2] = counts
    x[:, 3] = horizons
    return x


def fit_regression(table: Iterable[CalibrationRow], min_count: int = 4) -> RegressionFit:
    """Fit with row pairing: each row's own realized CIL against every one
    of its predicted columns.

    Rows below ``min_count`` samples are excluded as too uncertain.  Returns
    an unusable fit (not an error) when fewer than MIN_TRAINING_PAIRS pairs
    remain or the design is rank-deficient.
    """
    counts, horizons, preds, targets = [], [], [], []
    for row in table:
        if row.count < min_count:
            continue
        for horizon, pred in row.predicted.items():
            counts.append(float(row.count))
            horizons.append(float(horizon))
            preds.append(pred)
            targets.append(row.observed_cil)
    if not targets:
        return UNUSABLE_FIT
    x = _design(counts, horizons, np.asarray(preds))
    y = 1.0 / np.square(np.asarray(targets))
    return _solve_ols(x, y)


def fit_regression_realized(
    table: Iterable[CalibrationRow],
    realized: Mapping[int, float],
    min_count: int = 4,
) -> RegressionFit:
    """Fit with horizon pairing: predictions against the CIL realized at the
    predicted size, once the experiment has actually reached it.

    ``realized`` maps a sample count to the CIL observed there.  Only
    predicted columns whose horizon appears in ``realized`` contribute.
    """
    counts, horizons, preds, targets = [], [], [], []
    for row in table:
        if row.count < min_count:
            continue
        for horizon, pred in row.predicted.items():
            truth = realized.get(horizon)
            if truth is None:
                continue
            counts.append(float(row.count))
            horizons.append(float(horizon))
            preds.append(pred)
            targets.append(truth)
    if not targets:
        return UNUSABLE_FIT
    x = _design(counts, horizons, np.asarray(preds))
    y = 1.0 / np.square(np.asarray(targets))
    return _solve_ols(x, y)


def calibrate_distribution(
    fit: RegressionFit,
    dist: np.ndarray,
    count: int,
    horizon: int,
    floor: float = _FLOOR,
) -> tuple[np.ndarray, bool]:
    """Shift a sorted predicted-CIL distribution onto the regression estimate.

    The fitted model turns the distribution's median into an estimated true
    CIL; the difference shifts every element (clamped at ``floor``).  An
    unusable fit, or an estimated inverse-squared CIL at or below ``floor``
    (where 1/sqrt is meaningless), passes the distribution through
    unchanged with ``calibrated=False``.
    """
    values = np.asarray(dist, dtype=float)
    if values.size == 0:
        raise ValueError("dist must be non-empty")
    if not fit.usable:
        return values, False
    med = _median_sorted(values)
    y_hat = fit.beta0 + fit.beta1 / med**2 + fit.beta2 * count + fit.beta3 * horizon
    if not (y_hat > floor):
        return values, False
    estimated = 1.0 / np.sqrt(y_hat)
    shift = med - estimated
    return np.maximum(values - shift, floor), True


def _median_sorted(values: np.ndarray) -> float:
    n = values.size
    mid = n // 2
    if n % 2 == 1:
        return float(values[mid])
    return float(0.5 * (values[mid - 1] + values[mid]))


def write_table(table: Iterable[CalibrationRow], path) -> None:
    """Export accumulated rows as delimited text for offline inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("i,t_i,k,pred_cil\n")
        for row in table:
            for horizon in sorted(row.predicted):
                fh.write(f"{row.count},{row.observed_cil!r},{horizon},{row.predicted[horizon]!r}\n")

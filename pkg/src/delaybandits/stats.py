"""Summary statistics over seeds and regret-exponent fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError

MIN_FIT_POINTS = 4


def fit_regret_exponent(horizons: Sequence[float], regrets: Sequence[float]) -> float:
    """Least-squares slope of log(regret) against log(T).

    Needs at least four strictly increasing horizons and positive regrets.
    """
    T = np.asarray(horizons, dtype=float)
    R = np.asarray(regrets, dtype=float)
    if T.shape != R.shape or T.ndim != 1:
        raise ConfigurationError("horizons and regrets must be 1-D and equally long")
    if T.size < MIN_FIT_POINTS:
        raise ConfigurationError(f"exponent fit needs >= {MIN_FIT_POINTS} checkpoints, got {T.size}")
    if np.any(np.diff(T) <= 0) or T[0] <= 0:
        raise ConfigurationError("horizons must be positive and strictly increasing")
    if np.any(~np.isfinite(R)) or np.any(R <= 0):
        raise ConfigurationError("regret must be positive at every checkpoint to take logs")
    x = np.log(T)
    y = np.log(R)
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def mean_and_se(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error (ddof=1; zero for a single sample)."""
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    m = v.mean(axis=axis)
    if n < 2:
        return m, np.zeros_like(m)
    return m, v.std(axis=axis, ddof=1) / np.sqrt(n)


@dataclass
class SummaryStats:
    """Per-checkpoint aggregates. Missing quantities are NaN."""

    checkpoints: list[int]
    mean_regret: np.ndarray
    std_error: np.ndarray
    bound: np.ndarray
    drr: np.ndarray
    extra: dict[str, np.ndarray] = field(default_factory=dict)
    exponent: float | None = None

    COLUMNS = ("T", "mean_regret", "std_error", "bound", "discounted_regret_ratio")

    def fit(self) -> float | None:
        if len(self.checkpoints) < MIN_FIT_POINTS:
            return None
        try:
            self.exponent = fit_regret_exponent(self.checkpoints, self.mean_regret)
        except ConfigurationError:
            self.exponent = None
        return self.exponent

    def rows(self) -> tuple[list[str], list[list[float]]]:
        header = list(self.COLUMNS) + sorted(self.extra)
        rows = []
        for i, T in enumerate(self.checkpoints):
            row = [T, self.mean_regret[i], self.std_error[i], self.bound[i], self.drr[i]]
            row += [self.extra[k][i] for k in sorted(self.extra)]
            rows.append(row)
        return header, rows

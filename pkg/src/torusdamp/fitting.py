"""Ordinary least squares on log-log data, shared by every exponent measurement."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np
from scipy import stats

R2_MIN = 0.98


class FitError(ValueError):
    pass


@dataclass
class FitReport:
    slope: float
    intercept: float
    r2: float
    n_points: int
    predicted: Optional[float] = None
    abs_diff: Optional[float] = None
    tolerance: Optional[float] = None
    passed: Optional[bool] = None
    stderr: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    def interval(self, level: float = 0.95) -> tuple:
        """Two-sided confidence interval of the slope (Student t, n - 2 dof)."""
        if self.stderr is None or self.n_points < 3:
            return (-np.inf, np.inf)
        q = stats.t.ppf(0.5 + level / 2, self.n_points - 2)
        return (self.slope - q * self.stderr, self.slope + q * self.stderr)


def linear_fit(x, y):
    """Slope, intercept and coefficient of determination of y ~ slope x + intercept."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), float(r2)


def loglog_fit(points: Iterable, window: Optional[tuple] = None,
               predicted: Optional[float] = None, tolerance: Optional[float] = None,
               min_points: int = 4) -> FitReport:
    """Fit log y = slope * log x + intercept.

    Parameters
    ----------
    points : iterable of (x, y) pairs, all strictly positive.
    window : optional (x_min, x_max); only points inside are used.
    predicted, tolerance : when both are given, ``passed`` is set to
        ``|slope - predicted| <= tolerance and r2 >= 0.98``.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError("points must be a sequence of (x, y) pairs")
    if window is not None:
        lo, hi = window
        pts = pts[(pts[:, 0] >= lo) & (pts[:, 0] <= hi)]
    if len(pts) < min_points:
        raise FitError(f"too few points for a fit: {len(pts)} < {min_points}")
    if np.any(pts <= 0):
        raise FitError("log-log fit needs strictly positive values")
    lx, ly = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept, r2 = linear_fit(lx, ly)
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    ssr = float(np.sum((ly - slope * lx - intercept) ** 2))
    stderr = float(np.sqrt(ssr / (len(pts) - 2) / sxx)) if len(pts) > 2 and sxx > 0 else None
    rep = FitReport(slope=slope, intercept=intercept, r2=r2, n_points=len(pts),
                    predicted=predicted, tolerance=tolerance, stderr=stderr)
    if predicted is not None:
        rep.abs_diff = abs(slope - predicted)
        if tolerance is not None:
            rep.passed = bool(rep.abs_diff <= tolerance and r2 >= R2_MIN)
    return rep

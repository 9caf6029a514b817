"""Ordinary least squares of fitted primary mode against reference duration."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

STRATA = ("single_dominant", "heterogeneous", "all")


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    n: int
    stratum: str

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n": self.n,
            "stratum": self.stratum,
        }


def ols_fit(
    points: Sequence[tuple[float, float]], stratum: str = "all"
) -> RegressionResult:
    """Closed-form simple OLS with R^2 = 1 - SSres/SStot.

    Needs at least 3 points and some variance in the predictor. A constant
    response with zero residuals yields R^2 = 1.
    """
    if len(points) < 3:
        raise ValueError("need at least 3 points")
    arr = np.asarray(points, dtype=np.float64)
    x, y = arr[:, 0], arr[:, 1]
    sxx = float(((x - x.mean()) ** 2).sum())
    if sxx <= 0:
        raise ValueError("no variance in predictor")
    sxy = float(((x - x.mean()) * (y - y.mean())).sum())
    slope = sxy / sxx
    intercept = float(y.mean()) - slope * float(x.mean())
    residuals = y - (slope * x + intercept)
    ss_res = float((residuals**2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot <= 0:
        r_squared = 1.0 if ss_res <= 1e-12 else 0.0
    else:
        r_squared = 1.0 - ss_res / ss_tot
    return RegressionResult(slope, intercept, r_squared, len(points), stratum)

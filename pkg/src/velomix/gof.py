"""Pearson chi-square goodness of fit for discretized duration models.

Bins are the consecutive minutes spanning the observed range, with the
open tails folded into the first and last bin. Adjacent bins are merged
from both tails inward until every expected count reaches the Cochran
threshold of 5.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .distributions import DistFit
from .ingest import PairSample

MIN_EXPECTED = 5.0

TOO_CONCENTRATED = "sample too concentrated for chi-square"


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float
    merged_bins: tuple[tuple[int, int], ...]
    alpha: float
    reject: bool

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "dof": self.dof,
            "p_value": self.p_value,
            "merged_bins": [list(b) for b in self.merged_bins],
            "alpha": self.alpha,
            "reject": self.reject,
        }


def chi_square_sf(x: float, dof: int) -> float:
    """Upper tail P(X >= x) of the chi-square distribution."""
    if x < 0:
        raise ValueError("statistic must be nonnegative")
    if dof < 1:
        raise ValueError("dof must be >= 1")
    return float(special.gammaincc(dof / 2.0, x / 2.0))


def _merge_bins(
    ranges: list[tuple[int, int]],
    observed: list[float],
    expected: list[float],
    min_expected: float,
) -> tuple[list[tuple[int, int]], list[float], list[float]]:
    def merge(i: int, j: int) -> None:
        # merge bin j into bin i (adjacent)
        lo = min(ranges[i][0], ranges[j][0])
        hi = max(ranges[i][1], ranges[j][1])
        ranges[i] = (lo, hi)
        observed[i] += observed[j]
        expected[i] += expected[j]
        del ranges[j], observed[j], expected[j]

    while len(ranges) > 1 and expected[0] < min_expected:
        merge(1, 0)
    while len(ranges) > 1 and expected[-1] < min_expected:
        merge(len(ranges) - 2, len(ranges) - 1)
    # interior sweep, rarely needed for unimodal expected counts
    i = 0
    while len(ranges) > 1 and i < len(ranges):
        if expected[i] < min_expected:
            if i == 0:
                merge(0, 1)
            elif i == len(ranges) - 1 or expected[i - 1] <= expected[i + 1]:
                merge(i - 1, i)
            else:
                merge(i, i + 1)
            i = max(i - 1, 0)
        else:
            i += 1
    return ranges, observed, expected


def chi_square_test(
    sample: PairSample,
    fit: DistFit,
    alpha: float = 0.05,
    min_expected: float = MIN_EXPECTED,
) -> ChiSquareResult:
    """Test the fitted model against the observed minute histogram.

    Degrees of freedom are (#merged bins) - 1 - fit.n_params; the parameter
    count is subtracted even though parameters were estimated on raw data
    rather than on the binned counts, which makes the test approximate.
    Raises ``ValueError`` when merging leaves too few bins to test.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    ks, cs = sample.minute_arrays()
    n = cs.sum()
    kmin, kmax = int(ks[0]), int(ks[-1])
    grid = np.arange(kmin, kmax + 1)
    observed = np.zeros(grid.shape[0])
    observed[ks - kmin] = cs
    expected = n * fit.pmf(grid)
    # fold the open tails into the edge bins so expected counts sum to n
    if kmin >= 1:
        expected[0] += n * float(fit.cdf(np.array([float(kmin)]))[0])
    expected[-1] += n * (1.0 - float(fit.cdf(np.array([kmax + 1.0]))[0]))

    ranges, obs, exp = _merge_bins(
        [(int(k), int(k)) for k in grid],
        list(map(float, observed)),
        list(map(float, expected)),
        min_expected,
    )
    dof = len(ranges) - 1 - fit.n_params
    if len(ranges) < 2 or dof < 1:
        raise ValueError(TOO_CONCENTRATED)
    obs_a = np.array(obs)
    exp_a = np.array(exp)
    statistic = float(((obs_a - exp_a) ** 2 / exp_a).sum())
    p_value = chi_square_sf(statistic, dof)
    return ChiSquareResult(
        statistic=statistic,
        dof=dof,
        p_value=p_value,
        merged_bins=tuple(ranges),
        alpha=alpha,
        reject=bool(p_value < alpha),
    )

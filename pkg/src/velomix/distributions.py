"""Single-family duration models on whole-minute histograms.

A recorded duration of k minutes means a true duration in [k, k+1), so
closed-form estimators use the bin midpoint k + 0.5 and every likelihood
uses the discretized mass F(k+1) - F(k) of the continuous CDF F. For the
Gaussian family the mass below zero is folded into k = 0 so the pmf over
k >= 0 sums to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy import special

from .ingest import PairSample

SIGMA_FLOOR = 1e-6
DEGENERATE_FLAG = "degenerate"

_LOG_TINY = 1e-300


class GammaFitError(RuntimeError):
    """Newton iteration on the gamma shape equation failed to converge."""

    def __init__(self, message: str, last_shape: float, iterations: int):
        super().__init__(message)
        self.last_shape = last_shape
        self.iterations = iterations


@dataclass(frozen=True)
class LogNormalParams:
    mu: float
    sigma: float

    def mode(self) -> float:
        return math.exp(self.mu - self.sigma**2)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "sigma": self.sigma, "mode": self.mode()}


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    sd: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "sd": self.sd}


@dataclass(frozen=True)
class GammaParams:
    shape: float
    rate: float

    def to_dict(self) -> dict:
        return {"shape": self.shape, "rate": self.rate}


Params = Union[LogNormalParams, GaussianParams, GammaParams]


@dataclass(frozen=True)
class DistFit:
    """A fitted single-family model with its discretized log-likelihood."""

    family: str
    params: Params
    loglik: float
    n_params: int
    bic: float
    n: int
    flags: tuple[str, ...] = ()

    def cdf(self, x) -> np.ndarray:
        return family_cdf(self.family, self.params, x)

    def pmf(self, k) -> np.ndarray:
        return discretized_pmf(self, k)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "bic": self.bic,
            "flags": list(self.flags),
        }


def lognormal_cdf(x, mu: float, sigma: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = special.ndtr((np.log(x[pos]) - mu) / sigma)
    return out


def gaussian_cdf(x, mean: float, sd: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return special.ndtr((x - mean) / sd)


def gamma_cdf(x, shape: float, rate: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = special.gammainc(shape, rate * x[pos])
    return out


def family_cdf(family: str, params: Params, x) -> np.ndarray:
    if family == "lognormal":
        return lognormal_cdf(x, params.mu, params.sigma)
    if family == "gaussian":
        return gaussian_cdf(x, params.mean, params.sd)
    if family == "gamma":
        return gamma_cdf(x, params.shape, params.rate)
    raise ValueError(f"unknown family {family!r}")


def discretized_pmf(fit: DistFit, k):
    """Probability of observing k whole minutes under the fitted model.

    Returns F(k+1) - F(k); for the Gaussian family the bin at k = 0 also
    absorbs all mass below zero. Accepts a scalar or an array of minutes.
    """
    arr = np.asarray(k, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr < 0):
        raise ValueError("minutes must be nonnegative")
    upper = family_cdf(fit.family, fit.params, arr + 1.0)
    lower = family_cdf(fit.family, fit.params, arr)
    if fit.family == "gaussian":
        lower = np.where(arr <= 0, 0.0, lower)
    out = np.clip(upper - lower, 0.0, 1.0)
    return float(out[0]) if scalar else out


def lognormal_mode(params: LogNormalParams) -> float:
    """Most likely duration under the continuous model: exp(mu - sigma^2)."""
    return math.exp(params.mu - params.sigma**2)


def _weighted_moments(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    n = weights.sum()
    mean = float(weights @ values) / n
    var = float(weights @ (values - mean) ** 2) / n
    return mean, var


def _loglik(fit_family: str, params: Params, ks: np.ndarray, cs: np.ndarray) -> float:
    probe = DistFit(fit_family, params, 0.0, 0, 0.0, 0)
    pmf = discretized_pmf(probe, ks)
    return float(cs @ np.log(np.clip(pmf, _LOG_TINY, None)))


def _bic(n_params: int, n: float, loglik: float) -> float:
    return n_params * math.log(n) - 2.0 * loglik


def _require_sample(sample: PairSample) -> tuple[np.ndarray, np.ndarray, float]:
    ks, cs = sample.minute_arrays()
    n = cs.sum()
    if n < 2:
        raise ValueError("need at least 2 observations to fit")
    return ks, cs, n


def fit_lognormal(sample: PairSample) -> DistFit:
    """Fit a log-normal by moments of log midpoints, population variance.

    Single-bin samples get the sigma floor and a degeneracy flag instead of
    an error so batch runs never abort.
    """
    ks, cs, n = _require_sample(sample)
    y = np.log(ks + 0.5)
    mu, var = _weighted_moments(y, cs)
    sigma = math.sqrt(var)
    flags: tuple[str, ...] = ()
    if sigma <= SIGMA_FLOOR:
        sigma = SIGMA_FLOOR
        flags = (DEGENERATE_FLAG,)
    params = LogNormalParams(mu, sigma)
    ll = _loglik("lognormal", params, ks, cs)
    return DistFit("lognormal", params, ll, 2, _bic(2, n, ll), int(n), flags)


def fit_gaussian(sample: PairSample) -> DistFit:
    """Fit a Gaussian by moments of bin midpoints, population variance."""
    ks, cs, n = _require_sample(sample)
    m = ks + 0.5
    mean, var = _weighted_moments(m, cs)
    sd = math.sqrt(var)
    flags: tuple[str, ...] = ()
    if sd <= SIGMA_FLOOR:
        sd = SIGMA_FLOOR
        flags = (DEGENERATE_FLAG,)
    params = GaussianParams(mean, sd)
    ll = _loglik("gaussian", params, ks, cs)
    return DistFit("gaussian", params, ll, 2, _bic(2, n, ll), int(n), flags)


def solve_gamma_shape(
    s: float, init: float, max_iters: int = 50, tol: float = 1e-10
) -> tuple[float, int]:
    """Solve log(a) - digamma(a) = s for the gamma shape a by Newton steps.

    ``init`` is the method-of-moments shape. Steps that would leave the
    positive half-line are halved. Raises ``GammaFitError`` after
    ``max_iters`` iterations without the update dropping below ``tol``.
    """
    if s <= 0:
        raise ValueError("shape equation needs log(mean) > mean(log), got s <= 0")
    a = max(init, 1e-8)
    for it in range(1, max_iters + 1):
        f = math.log(a) - special.digamma(a) - s
        fprime = 1.0 / a - special.polygamma(1, a)
        step = f / fprime
        new = a - step
        while new <= 0:
            step *= 0.5
            new = a - step
        if abs(new - a) <= tol:
            return new, it
        a = new
    raise GammaFitError(
        f"gamma shape solve did not converge in {max_iters} iterations", a, max_iters
    )


def gamma_mle(values: np.ndarray, weights: np.ndarray | None = None) -> GammaParams:
    """Maximum-likelihood gamma parameters for positive continuous values."""
    values = np.asarray(values, dtype=np.float64)
    if weights is None:
        weights = np.ones_like(values)
    mean, var = _weighted_moments(values, weights)
    mlog = float(weights @ np.log(values)) / weights.sum()
    s = math.log(mean) - mlog
    shape0 = mean**2 / var if var > 0 else math.inf
    shape, _ = solve_gamma_shape(s, shape0 if math.isfinite(shape0) else 1.0)
    return GammaParams(shape, shape / mean)


_GAMMA_SHAPE_CAP = 1e8


def fit_gamma(sample: PairSample) -> DistFit:
    """Fit a gamma by Newton MLE on bin midpoints, moment-matched start."""
    ks, cs, n = _require_sample(sample)
    m = ks + 0.5
    mean, var = _weighted_moments(m, cs)
    flags: tuple[str, ...] = ()
    if var <= 0:
        # constant sample: moment init blows up, pin a near point mass
        shape = _GAMMA_SHAPE_CAP
        flags = (DEGENERATE_FLAG,)
    else:
        mlog = float(cs @ np.log(m)) / n
        s = math.log(mean) - mlog
        if s <= 0:
            shape = _GAMMA_SHAPE_CAP
            flags = (DEGENERATE_FLAG,)
        else:
            shape, _ = solve_gamma_shape(s, mean**2 / var)
            if shape > _GAMMA_SHAPE_CAP:
                shape = _GAMMA_SHAPE_CAP
                flags = (DEGENERATE_FLAG,)
    params = GammaParams(shape, shape / mean)
    ll = _loglik("gamma", params, ks, cs)
    return DistFit("gamma", params, ll, 2, _bic(2, n, ll), int(n), flags)

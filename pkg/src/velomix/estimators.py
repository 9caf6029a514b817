"""Scikit-learn style wrappers around the duration models.

These adapters let the fitting core compose with sklearn tooling
(pipelines, ``clone``, grid search over EM settings). ``X`` is a 1-D
array-like of whole-minute durations, or the equivalent single column.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin
from sklearn.utils.validation import check_is_fitted

from . import distributions as dist
from .ingest import PairSample
from .mixture import EmConfig, fit_mixture_em, mixture_pmf, responsibilities
from .validation import as_minute_array

_LOG_TINY = 1e-300


class _SingleFamilyEstimator(DensityMixin, BaseEstimator):
    """Shared fit/score plumbing for the single-family models."""

    _fit_function = None
    _family = ""

    def fit(self, X, y=None):
        minutes = as_minute_array(X)
        sample = PairSample.from_minutes("x", "y", minutes)
        self.fit_ = type(self)._fit_function(sample)
        self.loglik_ = self.fit_.loglik
        self.bic_ = self.fit_.bic
        self.n_ = self.fit_.n
        self.flags_ = self.fit_.flags
        return self

    def pmf(self, k) -> np.ndarray:
        check_is_fitted(self)
        return self.fit_.pmf(np.asarray(k))

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self)
        minutes = as_minute_array(X)
        return np.log(np.clip(self.fit_.pmf(minutes), _LOG_TINY, None))

    def score(self, X, y=None) -> float:
        return float(np.mean(self.score_samples(X)))


class DiscretizedLogNormal(_SingleFamilyEstimator):
    """Log-normal model of minute-truncated durations."""

    _fit_function = staticmethod(dist.fit_lognormal)
    _family = "lognormal"

    def fit(self, X, y=None):
        super().fit(X, y)
        self.mu_ = self.fit_.params.mu
        self.sigma_ = self.fit_.params.sigma
        self.mode_ = dist.lognormal_mode(self.fit_.params)
        return self


class DiscretizedGaussian(_SingleFamilyEstimator):
    """Gaussian model of minute-truncated durations."""

    _fit_function = staticmethod(dist.fit_gaussian)
    _family = "gaussian"

    def fit(self, X, y=None):
        super().fit(X, y)
        self.mean_ = self.fit_.params.mean
        self.sd_ = self.fit_.params.sd
        return self


class DiscretizedGamma(_SingleFamilyEstimator):
    """Gamma model of minute-truncated durations."""

    _fit_function = staticmethod(dist.fit_gamma)
    _family = "gamma"

    def fit(self, X, y=None):
        super().fit(X, y)
        self.shape_ = self.fit_.params.shape
        self.rate_ = self.fit_.params.rate
        return self


class DiscretizedLogNormalMixture(DensityMixin, BaseEstimator):
    """Two-component log-normal mixture of minute-truncated durations.

    Components are ordered by descending weight after fitting, so index 0
    is the dominant behavior. ``predict_proba`` returns the per-duration
    posterior over the two components.
    """

    def __init__(
        self,
        n_restarts: int = 8,
        max_iter: int = 500,
        tol: float = 1e-8,
        random_state: int = 0,
        sigma_floor: float = 1e-3,
        weight_floor: float = 0.01,
    ):
        self.n_restarts = n_restarts
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state
        self.sigma_floor = sigma_floor
        self.weight_floor = weight_floor

    def _config(self) -> EmConfig:
        return EmConfig(
            max_iters=self.max_iter,
            tol=self.tol,
            n_restarts=self.n_restarts,
            seed=self.random_state,
            sigma_floor=self.sigma_floor,
            weight_floor=self.weight_floor,
        )

    def fit(self, X, y=None):
        minutes = as_minute_array(X)
        sample = PairSample.from_minutes("x", "y", minutes)
        self.result_ = fit_mixture_em(sample, self._config())
        params = self.result_.params
        self.weights_ = np.array(params.weights)
        self.means_ = np.array([c.mu for c in params.comps])
        self.sigmas_ = np.array([c.sigma for c in params.comps])
        self.modes_ = np.array([c.mode() for c in params.comps])
        self.loglik_ = self.result_.loglik
        self.bic_ = self.result_.bic
        self.n_iter_ = self.result_.n_iters
        self.converged_ = self.result_.converged
        return self

    def pmf(self, k) -> np.ndarray:
        check_is_fitted(self)
        return mixture_pmf(self.result_.params, np.asarray(k))

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self)
        minutes = as_minute_array(X)
        p1 = np.array(
            [responsibilities(self.result_.params, int(k)) for k in minutes]
        )
        return np.column_stack([p1, 1.0 - p1])

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self)
        minutes = as_minute_array(X)
        return np.log(np.clip(self.pmf(minutes), _LOG_TINY, None))

    def score(self, X, y=None) -> float:
        return float(np.mean(self.score_samples(X)))

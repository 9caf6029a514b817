"""Two-component log-normal mixture fitted by EM on log-durations.

A log-normal mixture in duration space is exactly a Gaussian mixture on
log-durations, so EM runs on y = log(k + 0.5) with the histogram counts
as multiplicities. The reported log-likelihood and BIC are recomputed
under the discretized mixture pmf so model selection is comparable with
the single-family fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import LogNormalParams, lognormal_cdf
from .ingest import PairSample

_LOG_TINY = 1e-300
N_MIXTURE_PARAMS = 5  # two (mu, sigma) pairs plus one free weight

INSUFFICIENT_SUPPORT = "insufficient support for mixture"


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    tol: float = 1e-8
    n_restarts: int = 8
    seed: int = 0
    sigma_floor: float = 1e-3
    weight_floor: float = 0.01

    def __post_init__(self):
        if min(self.max_iters, self.n_restarts) < 1:
            raise ValueError("max_iters and n_restarts must be >= 1")
        if min(self.tol, self.sigma_floor, self.weight_floor) <= 0:
            raise ValueError("tol, sigma_floor and weight_floor must be positive")


@dataclass(frozen=True)
class MixtureParams:
    weights: tuple[float, float]
    comps: tuple[LogNormalParams, LogNormalParams]

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "components": [c.to_dict() for c in self.comps],
        }


@dataclass(frozen=True)
class MixtureFit:
    params: MixtureParams
    loglik: float
    bic: float
    n_iters: int
    converged: bool
    restarts_used: int
    responsibilities_summary: dict[int, float]
    n: int
    flags: tuple[str, ...] = ()
    min_loglik_step: float = math.inf

    def to_dict(self) -> dict:
        return {
            "weights": list(self.params.weights),
            "components": [c.to_dict() for c in self.params.comps],
            "loglik": self.loglik,
            "bic": self.bic,
            "n_iters": self.n_iters,
            "converged": self.converged,
            "flags": list(self.flags),
        }


def order_components(params: MixtureParams) -> MixtureParams:
    """Canonical order: dominant weight first, ascending mode on near-ties."""
    w1, w2 = params.weights
    c1, c2 = params.comps
    if abs(w1 - w2) < 1e-6:
        swap = c2.mode() < c1.mode()
    else:
        swap = w2 > w1
    if swap:
        return MixtureParams((w2, w1), (c2, c1))
    return params


def mixture_pmf(params: MixtureParams, k) -> np.ndarray:
    """Discretized mixture mass at whole minutes k."""
    arr = np.atleast_1d(np.asarray(k, dtype=np.float64))
    total = np.zeros_like(arr)
    for w, comp in zip(params.weights, params.comps):
        upper = lognormal_cdf(arr + 1.0, comp.mu, comp.sigma)
        lower = lognormal_cdf(arr, comp.mu, comp.sigma)
        total += w * (upper - lower)
    return total


def responsibilities(params: MixtureParams, k: int) -> float:
    """Posterior probability that a k-minute trip belongs to component 1."""
    if k < 0:
        raise ValueError("minutes must be nonnegative")
    arr = np.array([float(k)])
    masses = []
    for w, comp in zip(params.weights, params.comps):
        upper = lognormal_cdf(arr + 1.0, comp.mu, comp.sigma)
        lower = lognormal_cdf(arr, comp.mu, comp.sigma)
        masses.append(w * float(upper[0] - lower[0]))
    total = masses[0] + masses[1]
    if total <= 0.0:
        raise ValueError(f"zero mixture mass at k={k}")
    return masses[0] / total


def mixture_bic(fit: MixtureFit, n: int) -> float:
    return N_MIXTURE_PARAMS * math.log(n) - 2.0 * fit.loglik


@dataclass(frozen=True)
class _EmRun:
    params: MixtureParams
    objective: float
    n_iters: int
    converged: bool
    flags: tuple[str, ...]
    min_step: float


def _em(
    y: np.ndarray, c: np.ndarray, init: MixtureParams, cfg: EmConfig
) -> _EmRun:
    """One EM run from the given initial parameters.

    The objective is the weighted Gaussian mixture log-likelihood in log
    space; the per-iteration sequence is nondecreasing up to floor clamps.
    """
    n = c.sum()
    w = np.array(init.weights, dtype=np.float64)
    m = np.array([comp.mu for comp in init.comps], dtype=np.float64)
    s = np.maximum(
        np.array([comp.sigma for comp in init.comps], dtype=np.float64),
        cfg.sigma_floor,
    )
    flags: set[str] = set()
    prev_ll = None
    ll = -math.inf
    min_step = math.inf
    converged = False
    n_iters = 0
    for n_iters in range(1, cfg.max_iters + 1):
        # E-step in log space for stability
        z = (y[:, None] - m) / s
        log_comp = -0.5 * z * z - np.log(s) - 0.5 * math.log(2.0 * math.pi)
        log_joint = np.log(w) + log_comp
        row_max = log_joint.max(axis=1)
        log_norm = row_max + np.log(np.exp(log_joint - row_max[:, None]).sum(axis=1))
        ll = float(c @ log_norm)
        if prev_ll is not None:
            step = ll - prev_ll
            min_step = min(min_step, step)
            if abs(step) < cfg.tol:
                converged = True
                break
        prev_ll = ll
        resp = np.exp(log_joint - log_norm[:, None])
        # M-step with counts as multiplicities
        weighted = c[:, None] * resp
        nj = weighted.sum(axis=0)
        w = nj / n
        if w.min() < cfg.weight_floor:
            flags.add("weight_floored")
            w = np.clip(w, cfg.weight_floor, 1.0 - cfg.weight_floor)
            w = w / w.sum()
        m = (weighted * y[:, None]).sum(axis=0) / nj
        var = (weighted * (y[:, None] - m) ** 2).sum(axis=0) / nj
        s = np.sqrt(var)
        if s.min() < cfg.sigma_floor:
            flags.add("sigma_floored")
            s = np.maximum(s, cfg.sigma_floor)
    params = MixtureParams(
        (float(w[0]), float(w[1])),
        (
            LogNormalParams(float(m[0]), float(s[0])),
            LogNormalParams(float(m[1]), float(s[1])),
        ),
    )
    return _EmRun(params, ll, n_iters, converged, tuple(sorted(flags)), min_step)


def _initial_params(
    y: np.ndarray, c: np.ndarray, rng: np.random.Generator, cfg: EmConfig
) -> MixtureParams:
    """Split the sorted log-durations at a jittered quantile."""
    n = c.sum()
    q = float(rng.choice([0.3, 0.4, 0.5, 0.6, 0.7])) + float(rng.uniform(-0.05, 0.05))
    q = min(max(q, 0.1), 0.9)
    cum = np.cumsum(c)
    split = int(np.searchsorted(cum, q * n, side="left"))
    split = min(max(split, 0), y.shape[0] - 2)
    groups = ((y[: split + 1], c[: split + 1]), (y[split + 1 :], c[split + 1 :]))
    weights = []
    comps = []
    for gy, gc in groups:
        gn = gc.sum()
        mean = float(gc @ gy) / gn
        var = float(gc @ (gy - mean) ** 2) / gn
        sigma = max(math.sqrt(var), cfg.sigma_floor)
        weights.append(float(gn / n))
        comps.append(LogNormalParams(mean, sigma))
    w1 = min(max(weights[0], cfg.weight_floor), 1.0 - cfg.weight_floor)
    return MixtureParams((w1, 1.0 - w1), (comps[0], comps[1]))


def _discretized_loglik(params: MixtureParams, ks: np.ndarray, cs: np.ndarray) -> float:
    pmf = mixture_pmf(params, ks)
    return float(cs @ np.log(np.clip(pmf, _LOG_TINY, None)))


def fit_mixture_em(sample: PairSample, cfg: EmConfig | None = None) -> MixtureFit:
    """Best-of-restarts EM fit of the two-component log-normal mixture.

    Each restart is initialized by splitting the sorted log-durations at a
    seeded jittered quantile; the winner is the restart with the highest
    discretized log-likelihood (ties keep the earliest restart). Floor
    clamps are flagged, never fatal.
    """
    cfg = cfg or EmConfig()
    ks, cs = sample.minute_arrays()
    n = cs.sum()
    if n < 20:
        raise ValueError("need at least 20 observations for a mixture fit")
    if ks.shape[0] < 3:
        raise ValueError(INSUFFICIENT_SUPPORT)
    y = np.log(ks + 0.5)

    best_run: _EmRun | None = None
    best_ll = -math.inf
    for restart in range(cfg.n_restarts):
        rng = np.random.default_rng([cfg.seed, restart])
        init = _initial_params(y, cs, rng, cfg)
        run = _em(y, cs, init, cfg)
        ll = _discretized_loglik(run.params, ks, cs)
        if ll > best_ll:
            best_ll = ll
            best_run = run
    assert best_run is not None
    params = order_components(best_run.params)
    resp_summary = {int(k): responsibilities(params, int(k)) for k in ks}
    return MixtureFit(
        params=params,
        loglik=best_ll,
        bic=N_MIXTURE_PARAMS * math.log(n) - 2.0 * best_ll,
        n_iters=best_run.n_iters,
        converged=best_run.converged,
        restarts_used=cfg.n_restarts,
        responsibilities_summary=resp_summary,
        n=int(n),
        flags=best_run.flags,
        min_loglik_step=best_run.min_step,
    )

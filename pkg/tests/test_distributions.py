"""Single-family fits, discretized pmf, and the log-normal mode."""

from __future__ import annotations

import math

import numpy as np
import pytest

from velomix.distributions import (
    DEGENERATE_FLAG,
    DistFit,
    GammaFitError,
    GaussianParams,
    LogNormalParams,
    discretized_pmf,
    fit_gamma,
    fit_gaussian,
    fit_lognormal,
    gamma_mle,
    lognormal_mode,
    solve_gamma_shape,
)
from velomix.ingest import PairSample
from velomix.simulate import GroundTruth, gen_sample


def probe_fit(family, params):
    return DistFit(family, params, 0.0, 2, 0.0, 0)


def sample_from(minutes):
    return PairSample.from_minutes("A", "B", minutes)


# -- fit_lognormal ------------------------------------------------------------


def test_lognormal_single_bin_degenerate():
    fit = fit_lognormal(sample_from([6, 6]))
    assert fit.params.mu == pytest.approx(math.log(6.5))
    assert DEGENERATE_FLAG in fit.flags
    assert fit.params.sigma == 1e-6


def test_lognormal_parameter_recovery():
    truth = LogNormalParams(math.log(8.0), 0.2)
    sample = gen_sample(GroundTruth("single", truth, 5000, 11))
    fit = fit_lognormal(sample)
    assert abs(fit.params.mu - truth.mu) <= 0.02
    assert abs(fit.params.sigma - truth.sigma) <= 0.02


def test_lognormal_beats_alternatives_on_lognormal_data():
    sample = gen_sample(
        GroundTruth("single", LogNormalParams(math.log(8.0), 0.3), 3000, 5)
    )
    ll = fit_lognormal(sample).loglik
    assert ll > fit_gaussian(sample).loglik
    assert ll > fit_gamma(sample).loglik


def test_lognormal_bic_identity():
    sample = gen_sample(
        GroundTruth("single", LogNormalParams(math.log(7.0), 0.25), 400, 2)
    )
    fit = fit_lognormal(sample)
    assert fit.bic == pytest.approx(2 * math.log(fit.n) - 2 * fit.loglik)


def test_fit_requires_two_observations():
    with pytest.raises(ValueError):
        fit_lognormal(sample_from([6]))


# -- fit_gaussian -------------------------------------------------------------


def test_gaussian_symmetric_sample_mean():
    fit = fit_gaussian(sample_from([5] * 10 + [6] * 10))
    assert fit.params.mean == pytest.approx(6.0)  # midpoints 5.5 and 6.5


def test_gaussian_parameter_recovery():
    rng = np.random.default_rng(5)
    x = rng.normal(15.0, 3.0, 5000)
    x = x[x >= 2]
    fit = fit_gaussian(sample_from(np.floor(x).astype(int)))
    assert abs(fit.params.mean - 15.0) / 15.0 <= 0.02
    assert abs(fit.params.sd - 3.0) / 3.0 <= 0.02


def test_gaussian_worse_than_lognormal_on_skewed_data():
    sample = gen_sample(
        GroundTruth("single", LogNormalParams(math.log(6.0), 0.5), 4000, 8)
    )
    assert fit_gaussian(sample).loglik < fit_lognormal(sample).loglik


def test_gaussian_degenerate_flag():
    fit = fit_gaussian(sample_from([9, 9, 9]))
    assert DEGENERATE_FLAG in fit.flags
    assert fit.params.sd == 1e-6


# -- fit_gamma ----------------------------------------------------------------


def test_gamma_mle_recovers_exponential_shape():
    # shape 1, rate 0.2 on continuous draws through the Newton solver
    rng = np.random.default_rng(7)
    x = rng.gamma(1.0, 5.0, 5000)
    params = gamma_mle(x)
    assert abs(params.shape - 1.0) / 1.0 <= 0.05
    assert abs(params.rate - 0.2) / 0.2 <= 0.05


def test_gamma_recovery_on_floored_minutes():
    rng = np.random.default_rng(7)
    x = rng.gamma(9.0, 1.0, 5000)
    fit = fit_gamma(sample_from(np.floor(x).astype(int)))
    assert abs(fit.params.shape - 9.0) / 9.0 <= 0.05
    assert abs(fit.params.rate - 1.0) / 1.0 <= 0.05


def test_gamma_constant_sample_degenerate():
    fit = fit_gamma(sample_from([8] * 30))
    assert DEGENERATE_FLAG in fit.flags


def test_gamma_newton_matches_golden_section_profile_search():
    # golden-section refinement of log(a) - digamma(a) = s to 1e-6 width
    from scipy import special

    def golden_section(s, lo, hi):
        # the profile log-likelihood is unimodal in shape; equivalently
        # minimize |log(a) - digamma(a) - s| which is monotone decreasing
        f = lambda a: math.log(a) - special.digamma(a) - s
        for _ in range(10**6):
            mid = 0.5 * (lo + hi)
            if f(mid) > 0:
                lo = mid
            else:
                hi = mid
            if hi - lo < 1e-9:
                break
        return 0.5 * (lo + hi)

    for s, init in ((0.05, 10.0), (0.2, 2.0), (0.6, 1.0)):
        newton, _ = solve_gamma_shape(s, init)
        oracle = golden_section(s, 1e-6, 1e4)
        assert abs(newton - oracle) <= 1e-6


def test_gamma_nonconvergence_carries_last_iterate():
    with pytest.raises(GammaFitError) as err:
        solve_gamma_shape(0.3, 1e-8, max_iters=1)
    assert err.value.iterations == 1
    assert err.value.last_shape > 0


# -- discretized_pmf ----------------------------------------------------------


@pytest.mark.parametrize(
    "family,params",
    [
        ("lognormal", LogNormalParams(math.log(8.0), 0.4)),
        ("gaussian", GaussianParams(9.0, 3.5)),
        ("gamma", gamma_mle(np.random.default_rng(0).gamma(4.0, 2.0, 500))),
    ],
)
def test_pmf_sums_to_one(family, params):
    fit = probe_fit(family, params)
    ks = np.arange(0, 10001)
    assert abs(float(discretized_pmf(fit, ks).sum()) - 1.0) <= 1e-9


def test_pmf_point_mass_limit():
    # mass concentrated mid-bin: all of it lands on minute 8
    fit = probe_fit("lognormal", LogNormalParams(math.log(8.5), 1e-6))
    assert discretized_pmf(fit, 8) == pytest.approx(1.0, abs=1e-12)
    assert discretized_pmf(fit, 7) == pytest.approx(0.0, abs=1e-12)
    assert discretized_pmf(fit, 9) == pytest.approx(0.0, abs=1e-12)


def test_pmf_point_mass_on_bin_edge_splits():
    # exp(mu) exactly on the bin boundary leaves half the mass either side
    fit = probe_fit("lognormal", LogNormalParams(math.log(8.0), 1e-6))
    assert discretized_pmf(fit, 8) == pytest.approx(0.5, abs=1e-9)
    assert discretized_pmf(fit, 7) == pytest.approx(0.5, abs=1e-9)


def test_pmf_matches_quadrature_oracle():
    # mpmath quadrature of the continuous pdf over [7, 8], frozen value
    fit = probe_fit("lognormal", LogNormalParams(2.0794, 0.25))
    assert discretized_pmf(fit, 7) == pytest.approx(0.20338148025983595, abs=1e-12)


def test_gaussian_pmf_folds_negative_mass():
    fit = probe_fit("gaussian", GaussianParams(1.0, 2.0))
    ks = np.arange(0, 2000)
    pmf = discretized_pmf(fit, ks)
    assert abs(float(pmf.sum()) - 1.0) <= 1e-9
    # bin 0 holds everything below one minute, including negative mass
    from scipy.special import ndtr

    assert pmf[0] == pytest.approx(float(ndtr((1.0 - 1.0) / 2.0)))


def test_pmf_rejects_negative_minutes():
    fit = probe_fit("lognormal", LogNormalParams(2.0, 0.3))
    with pytest.raises(ValueError):
        discretized_pmf(fit, -1)


# -- lognormal_mode -----------------------------------------------------------


def test_mode_point_mass_limit():
    assert lognormal_mode(LogNormalParams(math.log(8.0), 1e-6)) == pytest.approx(
        8.0, abs=1e-4
    )


def test_mode_formula():
    assert lognormal_mode(LogNormalParams(2.0, 0.5)) == pytest.approx(math.exp(1.75))


def test_mode_is_density_argmax():
    rng = np.random.default_rng(17)
    for _ in range(20):
        mu = float(rng.uniform(math.log(3.0), math.log(25.0)))
        sigma = float(rng.uniform(0.05, 0.8))
        mode = lognormal_mode(LogNormalParams(mu, sigma))
        grid = np.arange(max(mode / 2, 1e-3), mode * 2, 0.001)
        pdf = np.exp(-((np.log(grid) - mu) ** 2) / (2 * sigma**2)) / (
            grid * sigma * math.sqrt(2 * math.pi)
        )
        assert abs(grid[int(np.argmax(pdf))] - mode) <= 0.001


def test_likelihood_dominance_across_families():
    # data simulated from family X should score best under family X
    from velomix.ingest import PairSample

    wins = {"lognormal": 0, "gaussian": 0, "gamma": 0}
    reps = 40
    for seed in range(reps):
        s = gen_sample(
            GroundTruth("single", LogNormalParams(math.log(8.0), 0.25), 2000, 6000 + seed)
        )
        ll = fit_lognormal(s).loglik
        if ll >= fit_gaussian(s).loglik and ll >= fit_gamma(s).loglik:
            wins["lognormal"] += 1

        rng = np.random.default_rng(7000 + seed)
        x = rng.normal(15.0, 2.0, 2000)
        s = PairSample.from_minutes("A", "B", np.floor(x[x >= 2]).astype(int))
        ll = fit_gaussian(s).loglik
        if ll >= fit_lognormal(s).loglik and ll >= fit_gamma(s).loglik:
            wins["gaussian"] += 1

        rng = np.random.default_rng(8000 + seed)
        x = rng.gamma(3.0, 3.0, 2000)
        s = PairSample.from_minutes("A", "B", np.floor(x).astype(int))
        ll = fit_gamma(s).loglik
        if ll >= fit_lognormal(s).loglik and ll >= fit_gaussian(s).loglik:
            wins["gamma"] += 1
    for family, count in wins.items():
        assert count >= 0.95 * reps, (family, count)

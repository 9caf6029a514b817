"""Decision tree classification, tree summary, proportion histogram."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_reference
from velomix.classify import (
    HETEROGENEOUS,
    LEAVES,
    MatchConfig,
    PairClassification,
    SINGLE_DOMINANT,
    classify_pair,
    match_modes,
    proportion_histogram,
    summarize_tree,
)
from velomix.distributions import DistFit, LogNormalParams
from velomix.gof import ChiSquareResult
from velomix.mixture import EmConfig
from velomix.simulate import GroundTruth, gen_sample, mixture_from_modes


def fake_classification(behavior, concordant, mode_match, p_first=0.7):
    chi2 = ChiSquareResult(1.0, 5, 0.5, ((5, 10),), 0.05, behavior == HETEROGENEOUS)
    fit = DistFit("lognormal", LogNormalParams(2.0, 0.2), -10.0, 2, 30.0, 100)
    return PairClassification(
        pair=("A", "B"),
        behavior=behavior,
        osm_concordant=concordant,
        chi2=chi2,
        single_fit=fit,
        mixture_fit=None,
        primary_mode_min=7.0,
        secondary_mode_min=None,
        p_first=1.0 if behavior == SINGLE_DOMINANT else p_first,
        mode_match=mode_match,
    )


# -- classify_pair ------------------------------------------------------------


def test_single_behavior_concordant_routes():
    truth = LogNormalParams(math.log(8.0), 0.2)
    sample = gen_sample(GroundTruth("single", truth, 400, 206))
    cls = classify_pair(sample, make_reference(8.2, 8.2), em_cfg=EmConfig(seed=1))
    assert cls.behavior == SINGLE_DOMINANT
    assert cls.osm_concordant
    assert cls.p_first == 1.0
    assert cls.mode_match == "not_applicable"
    assert cls.mixture_fit is None
    assert cls.leaf == "single_concordant"
    assert cls.primary_mode_min == pytest.approx(8.0, abs=0.5)


def test_two_components_match_both_references():
    truth = mixture_from_modes(0.62, 6.5, 0.12, 9.8, 0.15)
    sample = gen_sample(GroundTruth("mixture", truth, 700, 208))
    cls = classify_pair(sample, make_reference(6.5, 9.8), em_cfg=EmConfig(seed=208))
    assert cls.behavior == HETEROGENEOUS
    assert cls.mode_match == "both_matched"
    assert not cls.osm_concordant
    assert cls.leaf == "heterogeneous_matched"
    assert cls.secondary_mode_min is not None


def test_uncaptured_first_component():
    # dominant fast practice invisible to the engine: only the slow
    # component pairs with the fastest reference
    truth = mixture_from_modes(0.56, 6.0, 0.10, 10.0, 0.20)
    sample = gen_sample(GroundTruth("mixture", truth, 999, 102))
    cls = classify_pair(sample, make_reference(9.8, 12.9), em_cfg=EmConfig(seed=102))
    assert cls.behavior == HETEROGENEOUS
    assert cls.mode_match == "fastest_matched"
    assert cls.route_matches["fastest"] == 1  # the slower component
    assert cls.route_matches["shortest"] is None
    assert abs(cls.primary_mode_min - 6.0) < 1.0


def test_fit_errors_propagate():
    from velomix.ingest import PairSample

    sample = PairSample.from_minutes("A", "B", [6] * 60 + [7] * 60)
    with pytest.raises(ValueError):
        classify_pair(sample, make_reference(6.0, 6.2))


# -- match_modes --------------------------------------------------------------


def test_match_absolute_and_relative_rules():
    cfg = MatchConfig()
    # absolute: within 1 minute
    assert match_modes([7.5, 20.0], 7.0, 15.0, cfg)["fastest"] == 0
    # relative: 15% of an 18-minute route is 2.7 minutes
    assert match_modes([16.0, 7.0], 18.0, 5.0, cfg)["fastest"] == 0


def test_match_consumes_components():
    cfg = MatchConfig()
    matches = match_modes([8.0, 8.3], 8.1, 8.2, cfg)
    assert sorted(v for v in matches.values()) == [0, 1]


def test_match_tie_breaks_on_smaller_route_duration():
    cfg = MatchConfig()
    # both routes sit exactly 0.5 from the single close component
    matches = match_modes([8.0, 30.0], 8.5, 7.5, cfg)
    assert matches["shortest"] == 0  # 7.5 < 8.5 wins the tie
    assert matches["fastest"] is None


def test_match_none():
    cfg = MatchConfig()
    matches = match_modes([5.0, 20.0], 10.0, 11.0, cfg)
    assert matches == {"fastest": None, "shortest": None}


def test_concordance_monotone_in_tolerance():
    truth = LogNormalParams(math.log(8.0), 0.2)
    sample = gen_sample(GroundTruth("single", truth, 400, 206))
    ref = make_reference(8.0, 8.4)
    wide = classify_pair(sample, ref, match_cfg=MatchConfig(osm_concordance_tol_min=0.5))
    narrow = classify_pair(sample, ref, match_cfg=MatchConfig(osm_concordance_tol_min=0.1))
    assert wide.osm_concordant and not narrow.osm_concordant


# -- summarize_tree -----------------------------------------------------------


def test_summary_all_single_concordant():
    summary = summarize_tree(
        [fake_classification(SINGLE_DOMINANT, True, "not_applicable")] * 10
    )
    payload = summary.to_dict()
    branch = payload["branches"]["single_dominant"]
    assert branch["pct_of_total"] == 100.0
    assert branch["leaves"]["osm_concordant"]["pct_of_branch"] == 100.0
    assert branch["leaves"]["osm_discordant"]["count"] == 0


def test_summary_single_pair_lands_in_one_leaf():
    summary = summarize_tree([fake_classification(HETEROGENEOUS, False, "both_matched")])
    counts = [
        summary.single_concordant,
        summary.single_discordant,
        summary.heterogeneous_matched,
        summary.heterogeneous_other,
    ]
    assert sorted(counts) == [0, 0, 0, 1]
    assert summary.total == 1


def test_summary_reproduces_planted_proportions():
    rng = np.random.default_rng(123)
    probs = {
        "single_concordant": 0.3818 * 0.8977,
        "single_discordant": 0.3818 * 0.1023,
        "heterogeneous_matched": 0.6182 * 0.3459,
        "heterogeneous_other": 0.6182 * 0.6541,
    }
    names = list(probs)
    draws = rng.choice(len(names), size=4000, p=list(probs.values()))
    population = []
    for d in draws:
        leaf = names[d]
        if leaf.startswith("single"):
            population.append(
                fake_classification(SINGLE_DOMINANT, leaf.endswith("concordant"), "not_applicable")
            )
        else:
            match = "both_matched" if leaf.endswith("matched") else "none_matched"
            population.append(fake_classification(HETEROGENEOUS, False, match))
    summary = summarize_tree(population).to_dict()
    single = summary["branches"]["single_dominant"]
    hetero = summary["branches"]["heterogeneous"]
    assert single["pct_of_total"] == pytest.approx(38.18, abs=3.0)
    assert single["leaves"]["osm_concordant"]["pct_of_branch"] == pytest.approx(89.77, abs=3.0)
    assert hetero["leaves"]["modes_match_references"]["pct_of_branch"] == pytest.approx(34.59, abs=3.0)


def test_summary_leaf_counts_partition_total():
    rng = np.random.default_rng(5)
    population = []
    for _ in range(200):
        behavior = SINGLE_DOMINANT if rng.random() < 0.4 else HETEROGENEOUS
        match = rng.choice(["both_matched", "none_matched", "fastest_matched"])
        population.append(fake_classification(behavior, bool(rng.random() < 0.5), str(match)))
    summary = summarize_tree(population)
    leaf_total = (
        summary.single_concordant
        + summary.single_discordant
        + summary.heterogeneous_matched
        + summary.heterogeneous_other
    )
    assert leaf_total == summary.total == 200
    assert all(cls.leaf in LEAVES for cls in population)


def test_summary_empty_errors():
    with pytest.raises(ValueError):
        summarize_tree([])


# -- proportion_histogram -----------------------------------------------------


def test_histogram_single_bin():
    population = [fake_classification(HETEROGENEOUS, False, "none_matched", p_first=0.8)] * 7
    hist = proportion_histogram(population)
    rows = hist.rows()
    occupied = [(lo, hi, c) for lo, hi, c in rows if c]
    assert occupied == [(pytest.approx(0.80), pytest.approx(0.85), 7)]


def test_histogram_spans_planted_range():
    rng = np.random.default_rng(31)
    population = [
        fake_classification(HETEROGENEOUS, False, "none_matched", p_first=float(p))
        for p in rng.uniform(0.3, 0.95, 4000)
    ]
    hist = proportion_histogram(population)
    rows = hist.rows()
    occupied = [(lo, hi) for lo, hi, c in rows if c]
    assert occupied[0][0] == pytest.approx(0.30)  # first bin [0.30, 0.35)
    assert occupied[-1][1] == pytest.approx(0.95)  # last bin [0.90, 0.95)
    assert sum(hist.counts) == 4000


def test_histogram_matches_recount():
    from fractions import Fraction

    values = [0.31, 0.49, 0.51, 0.74, 0.74, 0.88, 0.97, 1.0]
    population = [
        fake_classification(HETEROGENEOUS, True, "none_matched", p_first=p)
        for p in values
    ]
    hist = proportion_histogram(population)
    width = Fraction(1, 20)
    for i, count in enumerate(hist.counts):
        lo, hi = i * width, (i + 1) * width
        expected = sum(
            1
            for v in values
            if (lo <= Fraction(str(v)) < hi)
            or (i == 19 and Fraction(str(v)) >= hi - width)
        )
        assert count == expected, i


def test_histogram_empty_flag():
    population = [fake_classification(SINGLE_DOMINANT, True, "not_applicable")]
    hist = proportion_histogram(population)
    assert hist.empty
    assert sum(hist.counts) == 0


def test_p_first_bounds():
    population = [
        fake_classification(HETEROGENEOUS, False, "none_matched", p_first=0.55),
        fake_classification(SINGLE_DOMINANT, True, "not_applicable"),
    ]
    for cls in population:
        if cls.behavior == SINGLE_DOMINANT:
            assert cls.p_first == 1.0
        else:
            assert 0.01 <= cls.p_first <= 1.0

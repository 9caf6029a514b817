"""Per-pair decision tree: behavior class, routing concordance, mode matching.

A pair whose duration histogram passes the single log-normal chi-square
test shows one dominant behavior; a rejection sends it to the mixture
fit. Each classified pair lands in exactly one of four leaves:

    single dominant   x  engine concordant / discordant
    heterogeneous     x  component modes match both references / other

Engine concordance means the fastest and shortest reference durations
coincide within tolerance; the heterogeneous "matched" leaf requires the
two component modes to pair off with the two reference durations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .distributions import DistFit, fit_lognormal, lognormal_mode
from .gof import ChiSquareResult, chi_square_test
from .ingest import PairSample
from .mixture import EmConfig, MixtureFit, fit_mixture_em
from .routing import RouteReference

SINGLE_DOMINANT = "single_dominant"
HETEROGENEOUS = "heterogeneous"

MODE_MATCH_VALUES = (
    "fastest_matched",
    "shortest_matched",
    "both_matched",
    "none_matched",
    "not_applicable",
)

LEAVES = (
    "single_concordant",
    "single_discordant",
    "heterogeneous_matched",
    "heterogeneous_other",
)


@dataclass(frozen=True)
class MatchConfig:
    osm_concordance_tol_min: float = 0.5
    mode_match_tol_min: float = 1.0
    mode_match_rel_tol: float = 0.15

    def __post_init__(self):
        if min(
            self.osm_concordance_tol_min,
            self.mode_match_tol_min,
            self.mode_match_rel_tol,
        ) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class PairClassification:
    pair: tuple[str, str]
    behavior: str
    osm_concordant: bool
    chi2: ChiSquareResult
    single_fit: DistFit
    mixture_fit: MixtureFit | None
    primary_mode_min: float
    secondary_mode_min: float | None
    p_first: float
    mode_match: str
    route_matches: dict[str, int | None] = field(
        default_factory=lambda: {"fastest": None, "shortest": None}
    )

    @property
    def leaf(self) -> str:
        if self.behavior == SINGLE_DOMINANT:
            return "single_concordant" if self.osm_concordant else "single_discordant"
        return (
            "heterogeneous_matched"
            if self.mode_match == "both_matched"
            else "heterogeneous_other"
        )

    def to_dict(self) -> dict:
        return {
            "origin": self.pair[0],
            "dest": self.pair[1],
            "behavior": self.behavior,
            "osm_concordant": self.osm_concordant,
            "leaf": self.leaf,
            "chi2": self.chi2.to_dict(),
            "single_fit": self.single_fit.to_dict(),
            "mixture_fit": self.mixture_fit.to_dict() if self.mixture_fit else None,
            "primary_mode_min": self.primary_mode_min,
            "secondary_mode_min": self.secondary_mode_min,
            "p_first": self.p_first,
            "mode_match": self.mode_match,
            "route_matches": dict(self.route_matches),
        }


def match_modes(
    modes: list[float], fastest: float, shortest: float, cfg: MatchConfig
) -> dict[str, int | None]:
    """Greedily pair reference durations with component modes.

    A (route, component) pair is eligible when the gap is within the
    absolute tolerance or within the relative tolerance of the route
    duration. Candidates are consumed smallest gap first; ties go to the
    smaller route duration, then the lower component index. Each route
    matches at most one component and vice versa.
    """
    candidates = []
    for name, duration in (("fastest", fastest), ("shortest", shortest)):
        for idx, mode in enumerate(modes):
            gap = abs(mode - duration)
            if gap <= cfg.mode_match_tol_min or (
                duration > 0 and gap / duration <= cfg.mode_match_rel_tol
            ):
                candidates.append((gap, duration, idx, name))
    candidates.sort()
    assigned: dict[str, int | None] = {"fastest": None, "shortest": None}
    used: set[int] = set()
    for gap, duration, idx, name in candidates:
        if assigned[name] is not None or idx in used:
            continue
        assigned[name] = idx
        used.add(idx)
    return assigned


def _mode_match_label(matches: dict[str, int | None]) -> str:
    fast = matches["fastest"] is not None
    short = matches["shortest"] is not None
    if fast and short:
        return "both_matched"
    if fast:
        return "fastest_matched"
    if short:
        return "shortest_matched"
    return "none_matched"


def classify_pair(
    sample: PairSample,
    routes: RouteReference,
    alpha: float = 0.05,
    match_cfg: MatchConfig | None = None,
    em_cfg: EmConfig | None = None,
) -> PairClassification:
    """Run the full per-pair decision tree."""
    match_cfg = match_cfg or MatchConfig()
    single = fit_lognormal(sample)
    chi2 = chi_square_test(sample, single, alpha=alpha)
    concordant = (
        abs(routes.fastest_duration_min - routes.shortest_duration_min)
        <= match_cfg.osm_concordance_tol_min
    )
    if not chi2.reject:
        return PairClassification(
            pair=(sample.origin, sample.dest),
            behavior=SINGLE_DOMINANT,
            osm_concordant=concordant,
            chi2=chi2,
            single_fit=single,
            mixture_fit=None,
            primary_mode_min=lognormal_mode(single.params),
            secondary_mode_min=None,
            p_first=1.0,
            mode_match="not_applicable",
        )
    mixture = fit_mixture_em(sample, em_cfg or EmConfig())
    modes = [comp.mode() for comp in mixture.params.comps]
    matches = match_modes(
        modes,
        routes.fastest_duration_min,
        routes.shortest_duration_min,
        match_cfg,
    )
    return PairClassification(
        pair=(sample.origin, sample.dest),
        behavior=HETEROGENEOUS,
        osm_concordant=concordant,
        chi2=chi2,
        single_fit=single,
        mixture_fit=mixture,
        primary_mode_min=modes[0],
        secondary_mode_min=modes[1],
        p_first=mixture.params.weights[0],
        mode_match=_mode_match_label(matches),
        route_matches=matches,
    )


@dataclass(frozen=True)
class TreeSummary:
    total: int
    single_count: int
    heterogeneous_count: int
    single_concordant: int
    single_discordant: int
    heterogeneous_matched: int
    heterogeneous_other: int

    def _pct(self, part: int, whole: int) -> float:
        return 100.0 * part / whole if whole else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "branches": {
                "single_dominant": {
                    "count": self.single_count,
                    "pct_of_total": self._pct(self.single_count, self.total),
                    "leaves": {
                        "osm_concordant": {
                            "count": self.single_concordant,
                            "pct_of_branch": self._pct(
                                self.single_concordant, self.single_count
                            ),
                        },
                        "osm_discordant": {
                            "count": self.single_discordant,
                            "pct_of_branch": self._pct(
                                self.single_discordant, self.single_count
                            ),
                        },
                    },
                },
                "heterogeneous": {
                    "count": self.heterogeneous_count,
                    "pct_of_total": self._pct(self.heterogeneous_count, self.total),
                    "leaves": {
                        "modes_match_references": {
                            "count": self.heterogeneous_matched,
                            "pct_of_branch": self._pct(
                                self.heterogeneous_matched, self.heterogeneous_count
                            ),
                        },
                        "other": {
                            "count": self.heterogeneous_other,
                            "pct_of_branch": self._pct(
                                self.heterogeneous_other, self.heterogeneous_count
                            ),
                        },
                    },
                },
            },
        }


def summarize_tree(classifications: list[PairClassification]) -> TreeSummary:
    """Counts and within-branch percentages for the four leaves."""
    if not classifications:
        raise ValueError("no classifications to summarize")
    leaves = {leaf: 0 for leaf in LEAVES}
    for cls in classifications:
        leaves[cls.leaf] += 1
    single = leaves["single_concordant"] + leaves["single_discordant"]
    hetero = leaves["heterogeneous_matched"] + leaves["heterogeneous_other"]
    return TreeSummary(
        total=len(classifications),
        single_count=single,
        heterogeneous_count=hetero,
        single_concordant=leaves["single_concordant"],
        single_discordant=leaves["single_discordant"],
        heterogeneous_matched=leaves["heterogeneous_matched"],
        heterogeneous_other=leaves["heterogeneous_other"],
    )


@dataclass(frozen=True)
class ProportionHistogram:
    """Histogram of the dominant-component share over heterogeneous pairs."""

    bin_width: float
    counts: tuple[int, ...]
    empty: bool

    def rows(self) -> list[tuple[float, float, int]]:
        out = []
        for i, count in enumerate(self.counts):
            out.append((i * self.bin_width, (i + 1) * self.bin_width, count))
        return out


def proportion_histogram(
    classifications: list[PairClassification], bin_width: float = 0.05
) -> ProportionHistogram:
    """Fixed-width histogram of p_first over heterogeneous pairs."""
    n_bins = int(round(1.0 / bin_width))
    counts = [0] * n_bins
    any_hetero = False
    for cls in classifications:
        if cls.behavior != HETEROGENEOUS:
            continue
        any_hetero = True
        # multiply by the integer bin count so exact edges bin upward
        idx = min(int(cls.p_first * n_bins), n_bins - 1)
        counts[idx] += 1
    return ProportionHistogram(bin_width, tuple(counts), not any_hetero)

"""Pipeline orchestration and report writers behind the CLI.

Runs ingest -> fit -> route references -> classify -> regression and
writes plot-ready flat files. Output is deterministic: pairs are
processed in sorted key order, per-pair seeds derive from the pair key,
and every writer funnels through one ordered pass regardless of the
worker pool size.
"""

from __future__ import annotations

import csv
import difflib
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .classify import (
    HETEROGENEOUS,
    MatchConfig,
    PairClassification,
    SINGLE_DOMINANT,
    classify_pair,
    proportion_histogram,
    summarize_tree,
)
from .distributions import fit_gamma, fit_gaussian, fit_lognormal
from .ingest import (
    CleaningConfig,
    PairSample,
    aggregate_pairs,
    clean_trips,
    parse_stations,
    parse_trips,
)
from .mixture import EmConfig, fit_mixture_em
from .regression import ols_fit
from .routing import RoutingClient, RoutingConfig, RouteReference

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Fatal configuration problem; the CLI exits with status 2."""


@dataclass(frozen=True)
class RunConfig:
    trips_path: str
    stations_path: str
    routes_path: str | None = None
    out_dir: str = "out"
    alpha: float = 0.05
    seed: int = 0
    parallelism: int | str = 1
    offline: bool = False
    plot_data: bool = False
    cleaning: CleaningConfig = field(default_factory=CleaningConfig)
    em: EmConfig = field(default_factory=EmConfig)
    match: MatchConfig = field(default_factory=MatchConfig)
    routing: RoutingConfig = field(default_factory=RoutingConfig)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("alpha must be in (0, 1)")

    def workers(self) -> int:
        if self.parallelism == "auto":
            return os.cpu_count() or 1
        n = int(self.parallelism)
        if n < 1:
            raise ConfigError("parallelism must be >= 1 or 'auto'")
        return n


def load_run_config(
    config_file: str | Path | None = None, **overrides
) -> RunConfig:
    """Build a RunConfig with precedence defaults < file < overrides."""
    payload: dict = {}
    if config_file:
        with open(config_file, "r", encoding="utf-8") as fh:
            payload = json.load(fh)

    def pick(key, default=None):
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        return payload.get(key, default)

    def section(cls, key, **extra):
        merged = dict(payload.get(key, {}))
        merged.update({k: v for k, v in extra.items() if v is not None})
        return cls(**merged)

    trips = pick("trips")
    stations = pick("stations")
    if not trips or not stations:
        raise ConfigError("trips and stations paths are required")
    routes = pick("routes")
    routing = section(
        RoutingConfig,
        "routing",
        base_url=pick("routing_url"),
        cache_path=routes,
        offline=bool(pick("offline", False)) or None,
    )
    return RunConfig(
        trips_path=trips,
        stations_path=stations,
        routes_path=routes,
        out_dir=pick("out", "out"),
        alpha=float(pick("alpha", 0.05)),
        seed=int(pick("seed", 0)),
        parallelism=pick("parallelism", 1),
        offline=bool(pick("offline", False)),
        plot_data=bool(pick("plot_data", False)),
        cleaning=section(CleaningConfig, "cleaning"),
        em=section(EmConfig, "em"),
        match=section(MatchConfig, "match"),
        routing=routing,
    )


def pair_seed(base_seed: int, origin: str, dest: str) -> int:
    """Stable per-pair EM seed independent of processing order."""
    digest = hashlib.sha256(f"{base_seed}|{origin}|{dest}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _load_inputs(cfg: RunConfig):
    for label, path in (("trips", cfg.trips_path), ("stations", cfg.stations_path)):
        if not Path(path).exists():
            raise ConfigError(f"{label} file not found: {path}")
    stations = parse_stations(cfg.stations_path)
    parsed = parse_trips(cfg.trips_path)
    cleaned, cleaning_stats = clean_trips(parsed.trips, cfg.cleaning)
    samples = aggregate_pairs(cleaned, cfg.cleaning)
    return stations, parsed, cleaned, cleaning_stats, samples


def _route_references(cfg: RunConfig, stations, samples):
    routing_cfg = replace(
        cfg.routing, cache_path=cfg.routes_path or cfg.routing.cache_path,
        offline=cfg.offline or cfg.routing.offline,
    )
    client = RoutingClient(routing_cfg)
    placeholder = lambda sid: stations.get(sid) or _station_stub(sid)
    pairs = [(placeholder(o), placeholder(d)) for o, d in samples.keys()]
    refs, ledger = client.fetch_pair_references(pairs)
    if routing_cfg.offline and ledger:
        missing = ", ".join(f"({e['origin']}, {e['dest']})" for e in ledger[:5])
        raise ConfigError(f"offline mode is missing fixture entries for: {missing}")
    return refs, ledger


def _station_stub(sid: str):
    from .ingest import Station

    return Station(sid, sid, 0.0, 0.0)


def _classify_one(cfg, key, sample, ref):
    em_cfg = replace(cfg.em, seed=pair_seed(cfg.seed, *key))
    try:
        cls = classify_pair(
            sample, ref, alpha=cfg.alpha, match_cfg=cfg.match, em_cfg=em_cfg
        )
        return key, cls, None
    except (ValueError, RuntimeError) as exc:
        failure = {
            "schema_version": SCHEMA_VERSION,
            "stage": "classify",
            "origin": key[0],
            "dest": key[1],
            "error": str(exc),
        }
        return key, None, failure


def _route_summary(ref: RouteReference) -> dict:
    return {
        "fastest_duration_min": ref.fastest_duration_min,
        "fastest_distance_m": ref.fastest_distance_m,
        "shortest_duration_min": ref.shortest_duration_min,
        "shortest_distance_m": ref.shortest_distance_m,
        "profile": ref.profile,
        "source": ref.source,
    }


def _plot_rows(sample: PairSample, cls: PairClassification) -> list[list]:
    ks, _ = sample.minute_arrays()
    rows = []
    for k in range(int(ks[0]), int(ks[-1]) + 1):
        single_pmf = float(cls.single_fit.pmf(k))
        if cls.mixture_fit is not None:
            from .mixture import mixture_pmf

            mix = float(mixture_pmf(cls.mixture_fit.params, k)[0])
            mix_field = repr(mix)
        else:
            mix_field = ""
        rows.append([k, sample.counts.get(k, 0), repr(single_pmf), mix_field])
    return rows


def _regression_payload(classifications: list[PairClassification], refs) -> tuple[dict, list]:
    points = {"single_dominant": [], "heterogeneous": [], "all": []}
    scatter_rows = []
    for cls in classifications:
        ref = refs[cls.pair]
        x = ref.fastest_duration_min
        y = cls.primary_mode_min
        points[cls.behavior].append((x, y))
        points["all"].append((x, y))
        scatter_rows.append([repr(float(x)), repr(float(y)), cls.behavior])
    strata = {}
    for stratum, pts in points.items():
        try:
            strata[stratum] = ols_fit(pts, stratum).to_dict()
        except ValueError as exc:
            strata[stratum] = {"error": str(exc), "n": len(pts)}
    return {"schema_version": SCHEMA_VERSION, "strata": strata}, scatter_rows


def run_pipeline(cfg: RunConfig) -> dict:
    """Execute the full pipeline and write the output tree."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stations, parsed, cleaned, cleaning_stats, samples = _load_inputs(cfg)
    refs, route_ledger = _route_references(cfg, stations, samples)

    keys = [k for k in samples.keys() if k in refs]
    failures = [
        {
            "schema_version": SCHEMA_VERSION,
            "stage": "routing",
            "origin": e["origin"],
            "dest": e["dest"],
            "error": e["error"],
        }
        for e in route_ledger
    ]
    with ThreadPoolExecutor(max_workers=cfg.workers()) as pool:
        results = list(
            pool.map(
                lambda key: _classify_one(cfg, key, samples[key], refs[key]), keys
            )
        )
    classifications: list[PairClassification] = []
    pair_rows = []
    for key, cls, failure in results:
        if failure is not None:
            failures.append(failure)
            continue
        classifications.append(cls)
        record = cls.to_dict()
        record["schema_version"] = SCHEMA_VERSION
        record["routes"] = _route_summary(refs[key])
        pair_rows.append(record)

    _write_jsonl(out / "pairs.jsonl", pair_rows)
    _write_jsonl(out / "failures.jsonl", failures)

    if classifications:
        summary = summarize_tree(classifications).to_dict()
        summary["schema_version"] = SCHEMA_VERSION
        summary["alpha"] = cfg.alpha
        _write_json(out / "tree_summary.json", summary)

        regression, scatter_rows = _regression_payload(classifications, refs)
        _write_json(out / "regression.json", regression)
        _write_csv(out / "scatter.csv", ["x", "y", "stratum"], scatter_rows)

        hist = proportion_histogram(classifications)
        _write_csv(
            out / "p_first_histogram.csv",
            ["bin_low", "bin_high", "count"],
            [[f"{lo:.2f}", f"{hi:.2f}", c] for lo, hi, c in hist.rows()],
        )

    if cfg.plot_data:
        plots = out / "plots"
        plots.mkdir(exist_ok=True)
        by_key = {cls.pair: cls for cls in classifications}
        for key in keys:
            if key not in by_key:
                continue
            _write_csv(
                plots / f"{key[0]}__{key[1]}.csv",
                ["minute", "observed", "single_pmf", "mixture_pmf"],
                _plot_rows(samples[key], by_key[key]),
            )

    stats = {
        "schema_version": SCHEMA_VERSION,
        "parse": {"n_rows": len(parsed.trips) + parsed.n_rejected,
                  "n_rejected": parsed.n_rejected},
        "cleaning": cleaning_stats.to_dict(),
        "aggregation": _aggregation_stats(cleaned, samples),
    }
    _write_json(out / "cleaning_stats.json", stats)
    return {
        "pairs_classified": len(classifications),
        "failures": len(failures),
        "out_dir": str(out),
    }


def _aggregation_stats(cleaned, samples) -> dict:
    grouped: dict[tuple[str, str], int] = {}
    for rec in cleaned:
        key = (rec.origin_station, rec.dest_station)
        grouped[key] = grouped.get(key, 0) + 1
    kept_records = sum(s.n for s in samples.values())
    outliers = sum(s.n_removed_outliers for s in samples.values())
    return {
        "n_pairs_seen": len(grouped),
        "n_pairs_kept": len(samples),
        "n_pairs_dropped": len(grouped) - len(samples),
        "n_outliers_removed": outliers,
        "n_records_in_dropped_pairs": len(cleaned) - kept_records - outliers,
    }


def _close_matches(target: str, pool) -> list[str]:
    return difflib.get_close_matches(target, sorted(pool), n=3, cutoff=0.4)


def pair_report(cfg: RunConfig, origin: str, dest: str) -> tuple[dict, list[list]]:
    """Full single-pair diagnostic plus plot rows.

    Raises ``ConfigError`` listing the closest station ids when the pair is
    not in the analysis set.
    """
    stations, _, _, _, samples = _load_inputs(cfg)
    key = (origin, dest)
    if key not in samples:
        ids = {sid for pair in samples.keys() for sid in pair}
        hints = []
        if origin not in ids:
            hints.append(f"origin {origin!r}; close: {_close_matches(origin, ids)}")
        if dest not in ids:
            hints.append(f"dest {dest!r}; close: {_close_matches(dest, ids)}")
        if not hints:
            hints.append("both stations exist but the pair fell below thresholds")
        raise ConfigError(f"pair ({origin}, {dest}) not in analysis set: " + "; ".join(hints))
    sample = samples[key]
    refs, ledger = _route_references(cfg, stations, {key: sample})
    if key not in refs:
        raise ConfigError(f"no route reference for pair ({origin}, {dest}): {ledger}")
    ref = refs[key]

    em_cfg = replace(cfg.em, seed=pair_seed(cfg.seed, origin, dest))
    cls = classify_pair(sample, ref, alpha=cfg.alpha, match_cfg=cfg.match, em_cfg=em_cfg)

    fits = {"lognormal": fit_lognormal(sample).to_dict()}
    for name, fn in (("gaussian", fit_gaussian), ("gamma", fit_gamma)):
        try:
            fits[name] = fn(sample).to_dict()
        except (ValueError, RuntimeError) as exc:
            fits[name] = {"error": str(exc)}
    mixture_dict = None
    if cls.mixture_fit is not None:
        mixture_dict = cls.mixture_fit.to_dict()
    else:
        try:
            mixture_dict = fit_mixture_em(sample, em_cfg).to_dict()
            mixture_dict["note"] = "diagnostic fit; single model was not rejected"
        except ValueError as exc:
            mixture_dict = {"error": str(exc)}

    notes = []
    if cls.behavior == SINGLE_DOMINANT and not cls.osm_concordant:
        notes.append(
            "routing engine proposes two distinct routes but the observed "
            "durations show a single behavior"
        )
    if cls.behavior == HETEROGENEOUS and cls.osm_concordant:
        notes.append(
            "observed durations show multiple behaviors but the routing "
            "engine proposes a single route"
        )

    report = {
        "schema_version": SCHEMA_VERSION,
        "origin": origin,
        "dest": dest,
        "sample": sample.to_dict(),
        "fits": fits,
        "chi2": cls.chi2.to_dict(),
        "mixture": mixture_dict,
        "routes": _route_summary(ref),
        "classification": cls.to_dict(),
        "notes": notes,
    }
    return report, _plot_rows(sample, cls)

"""Trip file parsing, cleaning rules, and per-pair duration histograms.

The cleaning pipeline is: parse the raw trip CSV, drop same-station and
sub-2-minute trips, group the remainder by directed station pair, filter
outliers per pair with the 1.5 IQR rule, and keep pairs that still have
at least ``min_pair_count`` observations.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .validation import counts_from_minutes

TRIP_COLUMNS = ("origin_id", "dest_id", "departure", "arrival")
STATION_COLUMNS = ("id", "name", "lat", "lon")


class TripParseError(ValueError):
    """Malformed input row; carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TripRecord:
    """One anonymized trip between two stations, minute precision."""

    origin_station: str
    dest_station: str
    departure: datetime
    arrival: datetime
    duration_min: int


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    lat: float
    lon: float


@dataclass(frozen=True)
class CleaningConfig:
    """Knobs for the cleaning rules applied before any fitting."""

    min_duration_min: int = 2
    iqr_multiplier: float = 1.5
    min_pair_count: int = 100
    quartile_method: str = "linear_interpolation"

    def __post_init__(self):
        if self.iqr_multiplier <= 0:
            raise ValueError("iqr_multiplier must be positive")
        if self.min_pair_count < 1:
            raise ValueError("min_pair_count must be >= 1")
        if self.quartile_method != "linear_interpolation":
            raise ValueError(f"unsupported quartile method {self.quartile_method!r}")


@dataclass(frozen=True)
class CleaningStats:
    """Row-level cleaning tallies, serialized into the run report."""

    n_input: int
    n_same_station: int
    n_short: int
    n_kept: int

    @property
    def fraction_short(self) -> float:
        return self.n_short / self.n_input if self.n_input else 0.0

    @property
    def fraction_removed(self) -> float:
        removed = self.n_same_station + self.n_short
        return removed / self.n_input if self.n_input else 0.0

    def to_dict(self) -> dict:
        return {
            "n_input": self.n_input,
            "n_same_station": self.n_same_station,
            "n_short": self.n_short,
            "n_kept": self.n_kept,
            "fraction_short": self.fraction_short,
            "fraction_removed": self.fraction_removed,
        }


@dataclass
class PairSample:
    """Cleaned minute-duration histogram for one directed station pair."""

    origin: str
    dest: str
    counts: dict[int, int]
    n: int
    outlier_bounds: tuple[float, float]
    n_removed_outliers: int

    @classmethod
    def from_minutes(cls, origin: str, dest: str, minutes) -> "PairSample":
        """Build a sample directly from durations, no outlier filtering."""
        counts = counts_from_minutes(minutes)
        n = sum(counts.values())
        lo, hi = float(min(counts)), float(max(counts))
        return cls(origin, dest, counts, n, (lo, hi), 0)

    def minute_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted unique minutes and their counts as float weights."""
        ks = np.array(sorted(self.counts), dtype=np.int64)
        cs = np.array([self.counts[int(k)] for k in ks], dtype=np.float64)
        return ks, cs

    def to_dict(self) -> dict:
        return {
            "origin": self.origin,
            "dest": self.dest,
            "counts": {str(k): self.counts[k] for k in sorted(self.counts)},
            "n": self.n,
            "outlier_bounds": [self.outlier_bounds[0], self.outlier_bounds[1]],
            "n_removed_outliers": self.n_removed_outliers,
        }


@dataclass(frozen=True)
class ParseResult:
    trips: list[TripRecord]
    n_rejected: int


def _as_text_stream(source) -> TextIO:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline="")
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(source.decode("utf-8"))
    if hasattr(source, "read"):
        probe = source.read(0)
        if isinstance(probe, bytes):
            return io.TextIOWrapper(source, encoding="utf-8")
        return source
    raise TypeError(f"cannot read trips from {type(source)!r}")


def _parse_timestamp(raw: str, line: int, column: str) -> datetime:
    try:
        return datetime.fromisoformat(raw.strip())
    except ValueError as exc:
        raise TripParseError(line, f"bad {column} timestamp {raw!r}") from exc


def parse_trips(source) -> ParseResult:
    """Parse a trip CSV into records, rejecting rows with negative durations.

    ``source`` may be a path, a byte/text stream, or raw bytes. The header
    must contain ``origin_id,dest_id,departure,arrival``; extra columns are
    ignored. Rows whose arrival precedes departure are dropped and tallied
    in ``n_rejected``; any other malformed row raises ``TripParseError``
    with its line number.
    """
    stream = _as_text_stream(source)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise TripParseError(1, "missing header row")
    missing = [c for c in TRIP_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise TripParseError(1, f"missing columns: {', '.join(missing)}")

    trips: list[TripRecord] = []
    rejected = 0
    for row in reader:
        line = reader.line_num
        origin = (row.get("origin_id") or "").strip()
        dest = (row.get("dest_id") or "").strip()
        if not origin or not dest:
            raise TripParseError(line, "empty station id")
        departure = _parse_timestamp(row.get("departure") or "", line, "departure")
        arrival = _parse_timestamp(row.get("arrival") or "", line, "arrival")
        if arrival < departure:
            rejected += 1
            continue
        duration = int(math.floor((arrival - departure).total_seconds() / 60.0))
        trips.append(TripRecord(origin, dest, departure, arrival, duration))
    return ParseResult(trips, rejected)


def parse_stations(source) -> dict[str, Station]:
    """Parse the station CSV (``id,name,lat,lon``) into an id-keyed map."""
    stream = _as_text_stream(source)
    reader = csv.DictReader(stream)
    if reader.fieldnames is None:
        raise TripParseError(1, "missing header row")
    missing = [c for c in STATION_COLUMNS if c not in reader.fieldnames]
    if missing:
        raise TripParseError(1, f"missing columns: {', '.join(missing)}")
    stations: dict[str, Station] = {}
    for row in reader:
        line = reader.line_num
        sid = (row.get("id") or "").strip()
        if not sid:
            raise TripParseError(line, "empty station id")
        try:
            lat = float(row.get("lat") or "")
            lon = float(row.get("lon") or "")
        except ValueError as exc:
            raise TripParseError(line, "bad coordinates") from exc
        if not (-90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0):
            raise TripParseError(line, f"coordinates out of range: {lat}, {lon}")
        stations[sid] = Station(sid, (row.get("name") or "").strip(), lat, lon)
    return stations


def clean_trips(
    records: Sequence[TripRecord], cfg: CleaningConfig | None = None
) -> tuple[list[TripRecord], CleaningStats]:
    """Drop same-station trips and trips shorter than the minimum duration.

    Same-station removal is counted first; a trip violating both rules is
    tallied once, under the same-station rule.
    """
    cfg = cfg or CleaningConfig()
    kept: list[TripRecord] = []
    same_station = 0
    short = 0
    for rec in records:
        if rec.origin_station == rec.dest_station:
            same_station += 1
            continue
        if rec.duration_min < cfg.min_duration_min:
            short += 1
            continue
        kept.append(rec)
    stats = CleaningStats(len(records), same_station, short, len(kept))
    return kept, stats


def iqr_bounds(
    durations: Sequence[int] | np.ndarray, multiplier: float = 1.5
) -> tuple[float, float]:
    """[Q1 - m*IQR, Q3 + m*IQR] with quartiles by linear interpolation."""
    arr = np.asarray(durations, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("empty sample")
    q1, q3 = np.quantile(arr, [0.25, 0.75], method="linear")
    iqr = q3 - q1
    return float(q1 - multiplier * iqr), float(q3 + multiplier * iqr)


def remove_outliers(
    durations: Sequence[int], cfg: CleaningConfig | None = None
) -> tuple[list[int], tuple[float, float], int]:
    """Filter durations outside the IQR fence, preserving input order."""
    cfg = cfg or CleaningConfig()
    if len(durations) == 0:
        raise ValueError("empty sample")
    low, high = iqr_bounds(durations, cfg.iqr_multiplier)
    kept = [d for d in durations if low <= d <= high]
    return kept, (low, high), len(durations) - len(kept)


def aggregate_pairs(
    records: Sequence[TripRecord], cfg: CleaningConfig | None = None
) -> dict[tuple[str, str], PairSample]:
    """Group cleaned trips by directed pair into outlier-filtered histograms.

    Pairs with fewer than ``cfg.min_pair_count`` observations after outlier
    removal are dropped. Keys are sorted for reproducible iteration.
    """
    cfg = cfg or CleaningConfig()
    grouped: dict[tuple[str, str], list[int]] = {}
    for rec in records:
        grouped.setdefault((rec.origin_station, rec.dest_station), []).append(
            rec.duration_min
        )
    out: dict[tuple[str, str], PairSample] = {}
    for key in sorted(grouped):
        kept, bounds, n_removed = remove_outliers(grouped[key], cfg)
        if len(kept) < cfg.min_pair_count:
            continue
        counts = counts_from_minutes(kept)
        out[key] = PairSample(key[0], key[1], counts, len(kept), bounds, n_removed)
    return out

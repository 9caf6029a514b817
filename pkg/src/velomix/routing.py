"""Routing-engine client: fastest/shortest references with cache and fixtures.

The HTTP shape follows the OSRM route API:

    {base_url}/route/v1/{profile}/{lon1},{lat1};{lon2},{lat2}

with the requested preference carried as a ``preference`` query parameter
(engines that ignore it return their default, which is the fastest
route). Durations come back in seconds and are converted to minutes.

The persistent cache and the offline fixture file share one format:
JSON lines, one complete route reference per line. Single-preference
results live in the client's in-memory layer until their sibling
preference arrives, at which point the full reference is appended to the
cache file.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .ingest import Station

SCHEMA_VERSION = 1

PROFILES = ("cycling_regular", "cycling_road", "cycling_mountain", "cycling_electric")
PREFERENCES = ("fastest", "shortest")


class RoutingError(RuntimeError):
    """Routing service failure after retries."""


class UnroutablePairError(RoutingError):
    """The engine found no route between the two stations."""


class FixtureMissError(RoutingError):
    """Offline mode was asked for a pair absent from the fixture file."""


@dataclass(frozen=True)
class RoutingConfig:
    base_url: str = "http://localhost:5000"
    profile: str = "cycling_regular"
    timeout_s: float = 10.0
    max_retries: int = 3
    rate_limit_per_s: float = 10.0
    cache_path: str | Path | None = None
    offline: bool = False

    def __post_init__(self):
        if self.timeout_s <= 0 or self.rate_limit_per_s <= 0:
            raise ValueError("timeout_s and rate_limit_per_s must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")


@dataclass(frozen=True)
class RouteReference:
    """Fastest and shortest reference durations for one directed pair."""

    origin: str
    dest: str
    fastest_duration_min: float
    fastest_distance_m: float
    shortest_duration_min: float
    shortest_distance_m: float
    profile: str
    fetched_at: str
    source: str  # live | cache | fixture
    quality_flags: tuple[str, ...] = ()

    def duration(self, preference: str) -> float:
        if preference == "fastest":
            return self.fastest_duration_min
        if preference == "shortest":
            return self.shortest_duration_min
        raise ValueError(f"unknown preference {preference!r}")

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "origin": self.origin,
            "dest": self.dest,
            "fastest_duration_min": self.fastest_duration_min,
            "fastest_distance_m": self.fastest_distance_m,
            "shortest_duration_min": self.shortest_duration_min,
            "shortest_distance_m": self.shortest_distance_m,
            "profile": self.profile,
            "fetched_at": self.fetched_at,
            "source": self.source,
            "quality_flags": list(self.quality_flags),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "RouteReference":
        return cls(
            origin=payload["origin"],
            dest=payload["dest"],
            fastest_duration_min=float(payload["fastest_duration_min"]),
            fastest_distance_m=float(payload["fastest_distance_m"]),
            shortest_duration_min=float(payload["shortest_duration_min"]),
            shortest_distance_m=float(payload["shortest_distance_m"]),
            profile=payload["profile"],
            fetched_at=payload["fetched_at"],
            source=payload["source"],
            quality_flags=tuple(payload.get("quality_flags", ())),
        )


class LiveTransport:
    """HTTP transport; the only place network requests happen."""

    live_requests = 0  # class-level tally, asserted zero by offline tests

    def get_json(self, url: str, timeout: float) -> dict:
        import requests

        type(self).live_requests += 1
        resp = requests.get(url, timeout=timeout)
        resp.raise_for_status()
        return resp.json()


def load_references(path: str | Path) -> list[RouteReference]:
    refs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                refs.append(RouteReference.from_dict(json.loads(line)))
    return refs


def write_references(path: str | Path, refs: Iterable[RouteReference]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ref in refs:
            fh.write(json.dumps(ref.to_dict(), sort_keys=True) + "\n")


class RoutingClient:
    """Caching client over an injected transport.

    Requests are paced at ``rate_limit_per_s``; the cache supports
    concurrent readers with writes serialized by a lock. In offline mode
    no transport exists, so a miss raises ``FixtureMissError``.
    """

    def __init__(self, cfg: RoutingConfig, transport=None):
        self.cfg = cfg
        if transport is None and not cfg.offline:
            transport = LiveTransport()
        self.transport = transport if not cfg.offline else None
        self._refs: dict[tuple[str, str, str], RouteReference] = {}
        self._partial: dict[tuple[str, str, str, str], tuple[float, float, str]] = {}
        self._lock = threading.Lock()
        self._last_request = 0.0
        if cfg.cache_path and Path(cfg.cache_path).exists():
            for ref in load_references(cfg.cache_path):
                self._refs[(ref.origin, ref.dest, ref.profile)] = ref

    # -- cache layer ------------------------------------------------------

    def cached_reference(self, origin_id: str, dest_id: str) -> RouteReference | None:
        return self._refs.get((origin_id, dest_id, self.cfg.profile))

    def _persist(self, ref: RouteReference) -> None:
        if self.cfg.cache_path:
            with open(self.cfg.cache_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(ref.to_dict(), sort_keys=True) + "\n")

    # -- network layer ----------------------------------------------------

    def _pace(self) -> None:
        interval = 1.0 / self.cfg.rate_limit_per_s
        wait = self._last_request + interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def _route_url(self, origin: Station, dest: Station, preference: str) -> str:
        base = self.cfg.base_url.rstrip("/")
        return (
            f"{base}/route/v1/{self.cfg.profile}/"
            f"{origin.lon},{origin.lat};{dest.lon},{dest.lat}"
            f"?overview=false&preference={preference}"
        )

    def _request_route(
        self, origin: Station, dest: Station, preference: str
    ) -> tuple[float, float]:
        url = self._route_url(origin, dest, preference)
        last_error: Exception | None = None
        for attempt in range(1, self.cfg.max_retries + 1):
            self._pace()
            try:
                payload = self.transport.get_json(url, self.cfg.timeout_s)
            except Exception as exc:  # transport decides what is retryable
                last_error = exc
                continue
            if payload.get("code") not in (None, "Ok") or not payload.get("routes"):
                raise UnroutablePairError(
                    f"unroutable pair ({origin.id}, {dest.id})"
                )
            route = payload["routes"][0]
            return float(route["duration"]) / 60.0, float(route["distance"])
        raise RoutingError(
            f"routing request failed after {self.cfg.max_retries} attempts: "
            f"{last_error}"
        )

    # -- public API -------------------------------------------------------

    def fetch_route(
        self, origin: Station, dest: Station, preference: str
    ) -> tuple[float, float]:
        """Duration (minutes) and distance (meters) for one preference."""
        if preference not in PREFERENCES:
            raise ValueError(f"unknown preference {preference!r}")
        key3 = (origin.id, dest.id, self.cfg.profile)
        with self._lock:
            ref = self._refs.get(key3)
            if ref is not None:
                if preference == "fastest":
                    return ref.fastest_duration_min, ref.fastest_distance_m
                return ref.shortest_duration_min, ref.shortest_distance_m
            partial = self._partial.get(key3 + (preference,))
            if partial is not None:
                return partial[0], partial[1]
        if self.transport is None:
            raise FixtureMissError(
                f"no fixture for pair ({origin.id}, {dest.id})"
            )
        duration, distance = self._request_route(origin, dest, preference)
        fetched_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
        with self._lock:
            self._partial[key3 + (preference,)] = (duration, distance, fetched_at)
            self._assemble(key3)
        return duration, distance

    def _assemble(self, key3: tuple[str, str, str]) -> None:
        # caller holds the lock
        fast = self._partial.get(key3 + ("fastest",))
        short = self._partial.get(key3 + ("shortest",))
        if fast is None or short is None:
            return
        flags: tuple[str, ...] = ()
        if fast[0] > short[0] + 1e-9:
            flags = ("fastest_exceeds_shortest",)
        ref = RouteReference(
            origin=key3[0],
            dest=key3[1],
            fastest_duration_min=fast[0],
            fastest_distance_m=fast[1],
            shortest_duration_min=short[0],
            shortest_distance_m=short[1],
            profile=key3[2],
            fetched_at=max(fast[2], short[2]),
            source="live",
            quality_flags=flags,
        )
        self._refs[key3] = ref
        del self._partial[key3 + ("fastest",)]
        del self._partial[key3 + ("shortest",)]
        self._persist(ref)

    def fetch_reference(self, origin: Station, dest: Station) -> RouteReference:
        """Fetch both preferences and return the assembled reference."""
        key3 = (origin.id, dest.id, self.cfg.profile)
        with self._lock:
            ref = self._refs.get(key3)
        if ref is not None:
            return ref
        self.fetch_route(origin, dest, "fastest")
        self.fetch_route(origin, dest, "shortest")
        with self._lock:
            return self._refs[key3]

    def fetch_pair_references(
        self, pairs: Sequence[tuple[Station, Station]]
    ) -> tuple[dict[tuple[str, str], RouteReference], list[dict]]:
        """Batch fetch; failures land in a ledger instead of aborting.

        Degenerate pairs (zero duration on either preference) are treated
        as unroutable for analysis and put in the ledger too.
        """
        out: dict[tuple[str, str], RouteReference] = {}
        ledger: list[dict] = []
        for origin, dest in pairs:
            try:
                ref = self.fetch_reference(origin, dest)
            except RoutingError as exc:
                ledger.append(
                    {"origin": origin.id, "dest": dest.id, "error": str(exc)}
                )
                continue
            if min(ref.fastest_duration_min, ref.shortest_duration_min) <= 0.0:
                ledger.append(
                    {
                        "origin": origin.id,
                        "dest": dest.id,
                        "error": "degenerate pair: zero reference duration",
                    }
                )
                continue
            out[(origin.id, dest.id)] = ref
        return out, ledger


def fetch_route(
    origin: Station,
    dest: Station,
    preference: str,
    cfg: RoutingConfig,
    client: RoutingClient | None = None,
) -> tuple[float, float]:
    """Convenience wrapper; reuse a ``RoutingClient`` to share its cache."""
    client = client or RoutingClient(cfg)
    return client.fetch_route(origin, dest, preference)


def fetch_pair_references(
    pairs: Sequence[tuple[Station, Station]],
    cfg: RoutingConfig,
    client: RoutingClient | None = None,
) -> tuple[dict[tuple[str, str], RouteReference], list[dict]]:
    client = client or RoutingClient(cfg)
    return client.fetch_pair_references(pairs)

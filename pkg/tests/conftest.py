"""Shared fixtures: network guard, fixture paths, route reference helper."""

from __future__ import annotations

from pathlib import Path

import pytest

from velomix.routing import LiveTransport, RouteReference

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_DIR = DATA_DIR / "fixture12"
GOLDEN_DIR = DATA_DIR / "golden_run"


class NetworkGuard:
    """Counting stub: tallies and blocks any live request attempt."""

    attempts = 0


@pytest.fixture(autouse=True)
def no_live_network(monkeypatch):
    def blocked(self, url, timeout):
        NetworkGuard.attempts += 1
        raise RuntimeError(f"live network request attempted: {url}")

    monkeypatch.setattr(LiveTransport, "get_json", blocked)
    yield


def pytest_sessionfinish(session, exitstatus):
    if NetworkGuard.attempts:
        print(f"\nERROR: {NetworkGuard.attempts} live network attempts during tests")
        session.exitstatus = 1


def make_reference(
    fastest: float,
    shortest: float,
    origin: str = "A",
    dest: str = "B",
    **overrides,
) -> RouteReference:
    payload = dict(
        origin=origin,
        dest=dest,
        fastest_duration_min=fastest,
        fastest_distance_m=fastest * 250.0,
        shortest_duration_min=shortest,
        shortest_distance_m=shortest * 230.0,
        profile="cycling_regular",
        fetched_at="2022-12-31T00:00:00+00:00",
        source="fixture",
    )
    payload.update(overrides)
    return RouteReference(**payload)

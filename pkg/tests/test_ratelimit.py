import random

import pytest

from coursebot.errors import UnknownRouteError
from coursebot.ratelimit import (
    Headers,
    LimiterConfig,
    Permit,
    RateLimiter,
    RouteKey,
    RouteRule,
    TooManyRequests,
    Wait,
)

DM = RouteKey("POST", "channels/dm:alice/messages")
DM2 = RouteKey("POST", "channels/dm:bob/messages")


def limiter(routes=(), global_cap=50, **kw):
    return RateLimiter(
        LimiterConfig(routes=tuple(routes), global_capacity_per_second=global_cap, **kw)
    )


def test_fresh_bucket_capacity():
    lim = limiter()
    for _ in range(5):
        assert isinstance(lim.acquire(DM, 0.0), Permit)
    wait = lim.acquire(DM, 0.0)
    assert isinstance(wait, Wait)
    assert wait.duration == pytest.approx(5.0)


def test_bucket_resets_after_window():
    lim = limiter()
    for _ in range(5):
        lim.acquire(DM, 0.0)
    assert isinstance(lim.acquire(DM, 5.0), Permit)


def test_global_limit_blocks_all_routes():
    lim = limiter(global_cap=3, default_capacity=100)
    for i in range(3):
        assert isinstance(lim.acquire(DM, 0.0), Permit)
    for key in (DM, DM2):
        wait = lim.acquire(key, 0.0)
        assert isinstance(wait, Wait)
        assert wait.duration == pytest.approx(1.0)


def test_global_rolling_window():
    lim = limiter(global_cap=2, default_capacity=100)
    assert isinstance(lim.acquire(DM, 0.0), Permit)
    assert isinstance(lim.acquire(DM2, 0.5), Permit)
    wait = lim.acquire(DM, 0.9)
    assert isinstance(wait, Wait)
    assert wait.duration == pytest.approx(0.1)
    assert isinstance(lim.acquire(DM, 1.0), Permit)  # first grant left the window


def test_headers_resynchronize_bucket():
    lim = limiter()
    lim.acquire(DM, 0.0)
    lim.on_response(DM, Headers(limit=5, remaining=0, reset_after=2.0), 0.0)
    wait = lim.acquire(DM, 0.0)
    assert isinstance(wait, Wait)
    assert wait.duration == pytest.approx(2.0)
    assert isinstance(lim.acquire(DM, 2.0), Permit)


def test_route_429_isolated():
    lim = limiter()
    lim.on_response(DM, TooManyRequests(retry_after=2.5, is_global=False), 0.0)
    wait = lim.acquire(DM, 0.0)
    assert isinstance(wait, Wait)
    assert wait.duration == pytest.approx(2.5)
    assert isinstance(lim.acquire(DM2, 0.0), Permit)


def test_global_429_blocks_everything():
    lim = limiter()
    lim.on_response(DM, TooManyRequests(retry_after=1.0, is_global=True), 0.0)
    for key in (DM, DM2):
        wait = lim.acquire(key, 0.0)
        assert isinstance(wait, Wait)
        assert wait.duration >= 1.0


def test_strict_mode_rejects_unknown_routes():
    lim = limiter(strict=True)
    with pytest.raises(UnknownRouteError):
        lim.acquire(DM, 0.0)


def test_configured_route_and_alias_share_bucket():
    rules = (
        RouteRule("POST", "a", capacity=2, window_seconds=10.0, alias="shared"),
        RouteRule("POST", "b", capacity=2, window_seconds=10.0, alias="shared"),
    )
    lim = limiter(routes=rules)
    assert isinstance(lim.acquire(RouteKey("POST", "a"), 0.0), Permit)
    assert isinstance(lim.acquire(RouteKey("POST", "b"), 0.0), Permit)
    # the two routes drained one shared bucket
    assert isinstance(lim.acquire(RouteKey("POST", "a"), 0.0), Wait)


def test_wait_never_negative_or_unbounded():
    rng = random.Random(5)
    lim = limiter(global_cap=4, default_capacity=3, default_window_seconds=4.0)
    now = 0.0
    for _ in range(500):
        now += rng.random() * 0.4
        key = RouteKey("POST", f"channels/{rng.randrange(3)}/messages")
        decision = lim.acquire(key, now)
        if isinstance(decision, Wait):
            assert 0 <= decision.duration <= 4.0


def test_liveness_retry_at_reported_wait():
    rng = random.Random(11)
    lim = limiter(global_cap=3, default_capacity=2, default_window_seconds=3.0)
    now = 0.0
    for _ in range(300):
        key = RouteKey("POST", f"r{rng.randrange(4)}")
        decision = lim.acquire(key, now)
        if isinstance(decision, Wait):
            decision2 = lim.acquire(key, now + decision.duration)
            assert isinstance(decision2, Permit)
            now += decision.duration
        now += rng.random() * 0.1

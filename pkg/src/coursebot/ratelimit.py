"""Dual-layer admission control for outbound gateway actions.

Every outbound call is gated by two limits checked atomically:

* a per-route bucket (fixed window anchored at the first permit in the
  window; ``capacity`` permits per ``window`` seconds), and
* a global cap on permits across all routes within any rolling 1-second
  window.

The limiter also ingests server feedback: rate headers resynchronize a
bucket to server-reported values, and a 429-style response blocks the
route (or everything, if global) until ``retry_after`` elapses.

All numeric limits are configuration, never constants. Timestamps are
plain float seconds; callers with datetime clocks convert once at the
boundary.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

from .errors import UnknownRouteError


@dataclass(frozen=True)
class RouteKey:
    """Method + route template with the major id substituted."""

    method: str  # GET | POST | PUT | DELETE
    route: str   # e.g. "channels/dm:alice/messages"


@dataclass(frozen=True)
class RouteRule:
    method: str
    route: str
    capacity: int
    window_seconds: float
    alias: str | None = None  # rules sharing an alias share one bucket


@dataclass(frozen=True)
class LimiterConfig:
    routes: tuple[RouteRule, ...] = ()
    global_capacity_per_second: int = 50
    default_capacity: int = 5
    default_window_seconds: float = 5.0
    strict: bool = False  # True: unknown routes are an error


@dataclass(frozen=True)
class Permit:
    pass


@dataclass(frozen=True)
class Wait:
    duration: float  # seconds until a retry could succeed


@dataclass(frozen=True)
class Headers:
    """Server-reported bucket state, used to resynchronize."""

    limit: int
    remaining: int
    reset_after: float


@dataclass(frozen=True)
class TooManyRequests:
    retry_after: float
    is_global: bool


@dataclass
class Bucket:
    capacity: int
    window: float
    remaining: int = -1  # -1: start full
    reset_at: float | None = None  # None: no window open

    def __post_init__(self):
        if self.remaining < 0:
            self.remaining = self.capacity

    def _roll(self, now: float):
        if self.reset_at is not None and now >= self.reset_at:
            self.remaining = self.capacity
            self.reset_at = None

    def ready_at(self, now: float) -> float:
        """Earliest time a permit could be granted."""
        self._roll(now)
        if self.remaining > 0:
            return now
        return self.reset_at if self.reset_at is not None else now

    def take(self, now: float):
        self._roll(now)
        assert self.remaining > 0
        if self.reset_at is None:
            self.reset_at = now + self.window
        self.remaining -= 1


class RateLimiter:
    """Thread-safe acquire/on_response state machine.

    ``acquire`` either grants a :class:`Permit` (decrementing the route
    bucket and counting against the global window atomically) or returns
    :class:`Wait` with the earliest duration after which a retry could
    succeed, reserving nothing.
    """

    def __init__(self, config: LimiterConfig | None = None):
        self.config = config or LimiterConfig()
        self._lock = threading.Lock()
        self._buckets: dict[object, Bucket] = {}
        # exact-match rule table: (method, route) -> rule
        self._rules = {(r.method, r.route): r for r in self.config.routes}
        self._global_grants: deque[float] = deque()
        self._global_block_until = float("-inf")

    # -- internals ---------------------------------------------------------

    def _bucket_id(self, key: RouteKey):
        rule = self._rules.get((key.method, key.route))
        if rule is None:
            if self.config.strict:
                raise UnknownRouteError(f"{key.method} {key.route}")
            return (key.method, key.route)
        return rule.alias or (rule.method, rule.route)

    def _bucket_for(self, key: RouteKey) -> Bucket:
        bid = self._bucket_id(key)
        bucket = self._buckets.get(bid)
        if bucket is None:
            rule = self._rules.get((key.method, key.route))
            if rule is not None:
                bucket = Bucket(rule.capacity, rule.window_seconds)
            else:
                bucket = Bucket(
                    self.config.default_capacity,
                    self.config.default_window_seconds,
                )
            self._buckets[bid] = bucket
        return bucket

    def _global_ready_at(self, now: float) -> float:
        ready = max(now, self._global_block_until)
        while self._global_grants and self._global_grants[0] <= now - 1.0:
            self._global_grants.popleft()
        if len(self._global_grants) >= self.config.global_capacity_per_second:
            oldest_needed = self._global_grants[
                len(self._global_grants)
                - self.config.global_capacity_per_second
            ]
            ready = max(ready, oldest_needed + 1.0)
        return ready

    # -- public API ---------------------------------------------------------

    def acquire(self, key: RouteKey, now: float) -> Permit | Wait:
        with self._lock:
            bucket = self._bucket_for(key)
            ready = max(bucket.ready_at(now), self._global_ready_at(now))
            if ready > now:
                return Wait(duration=ready - now)
            bucket.take(now)
            self._global_grants.append(now)
            return Permit()

    def on_response(
        self, key: RouteKey, outcome: Headers | TooManyRequests, now: float
    ) -> None:
        with self._lock:
            if isinstance(outcome, Headers):
                bucket = self._bucket_for(key)
                bucket.capacity = outcome.limit
                bucket.remaining = outcome.remaining
                bucket.reset_at = now + outcome.reset_after
            elif outcome.is_global:
                self._global_block_until = max(
                    self._global_block_until, now + outcome.retry_after
                )
            else:
                bucket = self._bucket_for(key)
                bucket.remaining = 0
                bucket.reset_at = now + outcome.retry_after

    def snapshot(self) -> dict:
        """Debug view of current bucket state (for logs and the API)."""
        with self._lock:
            return {
                "buckets": {
                    str(bid): {
                        "capacity": b.capacity,
                        "remaining": b.remaining,
                        "reset_at": b.reset_at,
                    }
                    for bid, b in self._buckets.items()
                },
                "global_capacity_per_second": self.config.global_capacity_per_second,
            }


def route_for_action(action) -> RouteKey:
    """Map an outbound action to the route bucket it consumes."""
    from . import model

    if isinstance(action, model.SendDM):
        return RouteKey("POST", f"channels/dm:{action.to}/messages")
    if isinstance(action, model.SendEmbed):
        return RouteKey("POST", f"channels/dm:{action.to}/messages")
    if isinstance(action, model.SendChannel):
        return RouteKey("POST", f"channels/{action.channel}/messages")
    if isinstance(action, model.DisableComponents):
        return RouteKey("PUT", "channels/messages/edit")
    if isinstance(action, model.EphemeralReply):
        return RouteKey("POST", "interactions/replies")
    raise TypeError(f"no route for action {action!r}")

"""The simulated chat platform: a guild with users, channels, DM threads,
messages carrying button components, and a controllable virtual clock.

Inbound events are delivered to the dispatcher strictly serialized;
outbound actions pass through the rate limiter, and deferred actions are
queued and retried transparently once their wait elapses. Everything that
crosses the boundary lands in an append-only transcript, which makes
end-to-end runs deterministic and replayable.

A real platform client would implement the same ``ChatAdapter`` surface
(deliver / apply / now) against the network; only this in-process
simulator ships.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Protocol

from . import model
from .dispatch import DispatchResult
from .errors import NonMonotoneScenarioError, TargetMissingError, UnknownUserError
from .model import (
    ButtonClick,
    DirectMessage,
    DisableComponents,
    EphemeralReply,
    GuildEvent,
    OutboundAction,
    SendChannel,
    SendDM,
    SendEmbed,
    SlashCommand,
    UserRef,
)
from .ratelimit import Permit, RateLimiter, RouteKey, Wait, route_for_action


class VirtualClock:
    """Monotone virtual time; tests compress a semester into milliseconds."""

    def __init__(self, start: datetime):
        self._now = start

    def now(self) -> datetime:
        return self._now

    def advance_to(self, at: datetime) -> None:
        if at < self._now:
            raise ValueError(f"clock cannot go back: {at} < {self._now}")
        self._now = at


@dataclass
class ComponentState:
    component_id: str
    label: str
    enabled: bool = True


@dataclass
class Message:
    message_id: str
    location: str  # "dm:{user_id}" or "channel:{name}"
    body: str
    components: list[ComponentState] = field(default_factory=list)
    embed: model.Embed | None = None
    ephemeral: bool = False

    def component(self, component_id: str) -> ComponentState | None:
        for c in self.components:
            if c.component_id == component_id:
                return c
        return None


class SimGuild:
    """In-memory guild state; message ids are unique and never reused."""

    def __init__(self):
        self.users: dict[str, UserRef] = {}
        self.channels: dict[str, list[str]] = {}
        self.dm_threads: dict[str, list[str]] = {}
        self.messages: dict[str, Message] = {}
        self._message_counter = 0

    def add_user(self, user: UserRef) -> None:
        self.users[user.user_id] = user
        self.dm_threads.setdefault(user.user_id, [])

    def _next_message_id(self) -> str:
        self._message_counter += 1
        return f"m{self._message_counter:06d}"

    def apply(self, action: OutboundAction) -> str:
        """Mutate guild state; returns the touched message id."""
        if isinstance(action, SendDM):
            return self._send_dm(action.to, action.body, action.components)
        if isinstance(action, SendEmbed):
            if action.to not in self.users:
                raise TargetMissingError(action.to)
            message = Message(
                message_id=self._next_message_id(),
                location=f"dm:{action.to}",
                body=action.embed.title,
                embed=action.embed,
            )
            self.messages[message.message_id] = message
            self.dm_threads[action.to].append(message.message_id)
            return message.message_id
        if isinstance(action, SendChannel):
            thread = self.channels.setdefault(action.channel, [])
            message = Message(
                message_id=self._next_message_id(),
                location=f"channel:{action.channel}",
                body=action.body,
                components=[
                    ComponentState(b.component_id, b.label)
                    for b in action.components
                ],
            )
            self.messages[message.message_id] = message
            thread.append(message.message_id)
            return message.message_id
        if isinstance(action, DisableComponents):
            message = self.messages.get(action.message_id)
            if message is None:
                raise TargetMissingError(action.message_id)
            for component in message.components:  # idempotent
                component.enabled = False
            return message.message_id
        if isinstance(action, EphemeralReply):
            if action.to not in self.users:
                raise TargetMissingError(action.to)
            message = Message(
                message_id=self._next_message_id(),
                location=f"dm:{action.to}",
                body=action.text,
                ephemeral=True,
            )
            self.messages[message.message_id] = message
            self.dm_threads[action.to].append(message.message_id)
            return message.message_id
        raise TypeError(f"unsupported action {action!r}")

    def _send_dm(self, to: str, body: str, components) -> str:
        if to not in self.users:
            raise TargetMissingError(to)
        message = Message(
            message_id=self._next_message_id(),
            location=f"dm:{to}",
            body=body,
            components=[
                ComponentState(b.component_id, b.label) for b in components
            ],
        )
        self.messages[message.message_id] = message
        self.dm_threads[to].append(message.message_id)
        return message.message_id


@dataclass(frozen=True)
class TranscriptEntry:
    at: datetime
    direction: str  # "IN" | "OUT"
    payload: dict

    def as_dict(self) -> dict:
        return {
            "at": self.at.astimezone(timezone.utc).isoformat(),
            "direction": self.direction,
            "payload": self.payload,
        }


class Transcript:
    """Append-only record of everything that crossed the boundary."""

    def __init__(self):
        self.entries: list[TranscriptEntry] = []

    def append(self, at: datetime, direction: str, payload: dict) -> None:
        self.entries.append(TranscriptEntry(at, direction, payload))

    def outbound(self) -> list[TranscriptEntry]:
        return [e for e in self.entries if e.direction == "OUT"]

    def to_json(self) -> str:
        return json.dumps(
            [e.as_dict() for e in self.entries], sort_keys=True, indent=1
        )


def event_payload(event: GuildEvent) -> dict:
    if isinstance(event, DirectMessage):
        return {"type": "direct_message", "from": event.sender.user_id,
                "text": event.text}
    if isinstance(event, SlashCommand):
        return {"type": "slash_command", "from": event.sender.user_id,
                "name": event.name, "args": dict(event.args)}
    if isinstance(event, ButtonClick):
        return {"type": "button_click", "from": event.sender.user_id,
                "message_id": event.message_id,
                "component_id": event.component_id}
    raise TypeError(f"unsupported event {event!r}")


def action_payload(action: OutboundAction, message_id: str, route: RouteKey) -> dict:
    base = {"route": f"{route.method} {route.route}", "message_id": message_id}
    if isinstance(action, SendDM):
        return {**base, "action": "send_dm", "to": action.to, "body": action.body,
                "components": [b.component_id for b in action.components]}
    if isinstance(action, SendChannel):
        return {**base, "action": "send_channel", "channel": action.channel,
                "body": action.body,
                "components": [b.component_id for b in action.components]}
    if isinstance(action, SendEmbed):
        return {**base, "action": "send_embed", "to": action.to,
                "title": action.embed.title,
                "fields": [{"name": f.name, "value": f.value}
                           for f in action.embed.fields]}
    if isinstance(action, DisableComponents):
        return {**base, "action": "disable_components"}
    if isinstance(action, EphemeralReply):
        return {**base, "action": "ephemeral_reply", "to": action.to,
                "text": action.text}
    raise TypeError(f"unsupported action {action!r}")


class ChatAdapter(Protocol):
    """The boundary a real platform client implements."""

    def deliver(self, event: GuildEvent) -> list[OutboundAction]: ...

    def apply(self, action: OutboundAction, now: datetime) -> str: ...

    def now(self) -> datetime: ...


class Gateway:
    """Applies outbound actions to the guild under rate-limit admission and
    delivers inbound events to the dispatcher, strictly serialized."""

    def __init__(
        self,
        guild: SimGuild,
        clock: VirtualClock,
        limiter: RateLimiter,
        dispatcher: Callable[[GuildEvent], DispatchResult] | None = None,
        on_message_sent: Callable[[str, OutboundAction], None] | None = None,
    ):
        self.guild = guild
        self.clock = clock
        self.limiter = limiter
        self.dispatcher = dispatcher
        self.on_message_sent = on_message_sent
        self.transcript = Transcript()
        self.advance_hooks: list[Callable[[datetime], None]] = []
        # strict FIFO outbound queue: [due_epoch, action]; actions are
        # applied in submission order, so a deferred head blocks the rest
        self._pending: deque[list] = deque()
        #: dispatch outcome of the most recent deliver (events are
        #: serialized, so callers holding the loop read it safely)
        self.last_result: DispatchResult | None = None

    def now(self) -> datetime:
        return self.clock.now()

    @staticmethod
    def _epoch(at: datetime) -> float:
        return at.timestamp()

    # -- outbound ---------------------------------------------------------------

    def apply(self, action: OutboundAction, now: datetime) -> str:
        """Apply one action immediately; caller must hold a permit."""
        message_id = self.guild.apply(action)
        route = route_for_action(action)
        self.transcript.append(now, "OUT", action_payload(action, message_id, route))
        tag = getattr(action, "tag", None)
        if tag is not None and self.on_message_sent is not None:
            self.on_message_sent(message_id, action)
        return message_id

    def submit(self, action: OutboundAction) -> None:
        """Apply now if the limiter admits it, else queue for retry.

        An already-queued action is never overtaken: one deferred action
        holds everything submitted after it, preserving apply order.
        """
        now = self.clock.now()
        if self._pending:
            self._pending.append([self._epoch(now), action])
            return
        route = route_for_action(action)
        decision = self.limiter.acquire(route, self._epoch(now))
        if isinstance(decision, Permit):
            self.apply(action, now)
        else:
            self._pending.append(
                [self._epoch(now) + decision.duration, action]
            )

    def submit_all(self, actions) -> None:
        for action in actions:
            self.submit(action)

    def pending_count(self) -> int:
        return len(self._pending)

    def _flush_pending(self) -> None:
        now = self.clock.now()
        now_epoch = self._epoch(now)
        while self._pending and self._pending[0][0] <= now_epoch:
            head = self._pending[0]
            action = head[1]
            route = route_for_action(action)
            decision = self.limiter.acquire(route, now_epoch)
            if isinstance(decision, Permit):
                self.apply(action, now)
                self._pending.popleft()
            else:
                head[0] = now_epoch + decision.duration
                break

    # -- time -------------------------------------------------------------------

    def _step_clock_to(self, epoch: float) -> None:
        # float epoch -> datetime can lose a microsecond; round up so the
        # requested instant is never still in the future afterwards
        at = datetime.fromtimestamp(epoch, tz=timezone.utc)
        if at.timestamp() < epoch:
            at += timedelta(microseconds=1)
        if at > self.clock.now():
            self.clock.advance_to(at)

    def advance_to(self, at: datetime) -> None:
        """Advance virtual time, firing due deferred actions and advance
        hooks (scheduler ticks, expiry sweeps) at each intermediate due point."""
        target = self._epoch(at)
        while self._pending and self._pending[0][0] < target:
            self._step_clock_to(self._pending[0][0])
            for hook in self.advance_hooks:
                hook(self.clock.now())
            self._flush_pending()
        if at > self.clock.now():
            self.clock.advance_to(at)
        for hook in self.advance_hooks:
            hook(self.clock.now())
        self._flush_pending()

    def drain(self, max_rounds: int = 1_000_000) -> None:
        """Advance time until no deferred actions remain."""
        rounds = 0
        while self._pending:
            rounds += 1
            if rounds > max_rounds:
                raise RuntimeError("deferred action queue failed to drain")
            self._step_clock_to(self._pending[0][0])
            for hook in self.advance_hooks:
                hook(self.clock.now())
            self._flush_pending()

    # -- inbound -----------------------------------------------------------------

    def deliver(self, event: GuildEvent) -> list[OutboundAction]:
        if event.sender.user_id not in self.guild.users:
            raise UnknownUserError(event.sender.user_id)
        if event.at > self.clock.now():
            self.advance_to(event.at)
        now = self.clock.now()
        self.transcript.append(now, "IN", event_payload(event))

        rejection = self._click_rejection(event)
        if rejection is not None:
            self.last_result = DispatchResult(
                actions=(rejection,), handled_by="gateway", ok=False
            )
            actions: list[OutboundAction] = [rejection]
        else:
            if self.dispatcher is None:
                self.last_result = DispatchResult(actions=(), handled_by="nobody")
                return []
            self.last_result = self.dispatcher(event)
            actions = list(self.last_result.actions)
        self.submit_all(actions)
        return actions

    def _click_rejection(self, event: GuildEvent) -> EphemeralReply | None:
        """The platform refuses clicks on missing or disabled components
        before the bot ever sees them."""
        if not isinstance(event, ButtonClick):
            return None
        message = self.guild.messages.get(event.message_id)
        if message is None:
            return EphemeralReply(event.sender.user_id, "This message no longer exists.")
        if message.location.startswith("dm:") and (
            message.location != f"dm:{event.sender.user_id}"
        ):
            return EphemeralReply(event.sender.user_id, "This message is not yours.")
        component = message.component(event.component_id)
        if component is None:
            return EphemeralReply(event.sender.user_id, "Unknown button.")
        if not component.enabled:
            return EphemeralReply(
                event.sender.user_id, "This interaction is already complete."
            )
        return None

    # -- scripted runs ------------------------------------------------------------

    def run_script(self, scenario: list[tuple[datetime, GuildEvent]]) -> Transcript:
        """Deliver a timed scenario event by event and drain the queue."""
        last = None
        for at, _ in scenario:
            if last is not None and at < last:
                raise NonMonotoneScenarioError(
                    f"{at} arrives after {last}"
                )
            last = at
        for at, event in scenario:
            self.advance_to(max(at, self.clock.now()))
            self.deliver(event)
        self.drain()
        return self.transcript

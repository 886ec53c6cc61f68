"""Slash-command registry with permission checks.

Routes guild events to feature handlers: slash commands go to their
registered handler after permission and argument validation, direct
messages go to the message router (attendance keyword matching with a
help-text fallback), button clicks go to the component router (surveys).

Dispatch is total: every event yields a DispatchResult, never an
unhandled exception; a rejected dispatch is exactly one ephemeral reply
and no side effects.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .errors import CoursebotError, DuplicateCommandError, SchemaOrderError
from .model import (
    ButtonClick,
    DirectMessage,
    EphemeralReply,
    GuildEvent,
    OutboundAction,
    Role,
    SlashCommand,
)

log = logging.getLogger(__name__)


class ArgType(Enum):
    STRING = "STRING"
    INT = "INT"


class Permission(Enum):
    EVERYONE = "EVERYONE"
    INSTRUCTOR_ONLY = "INSTRUCTOR_ONLY"


@dataclass(frozen=True)
class ArgSpec:
    name: str
    type: ArgType
    required: bool


@dataclass(frozen=True)
class CommandSpec:
    name: str
    arg_schema: tuple[ArgSpec, ...]
    permission: Permission
    description: str

    def __post_init__(self):
        if " " in self.name or self.name != self.name.lower() or not self.name:
            raise ValueError(f"bad command name {self.name!r}")
        seen_optional = False
        for arg in self.arg_schema:
            if not arg.required:
                seen_optional = True
            elif seen_optional:
                raise SchemaOrderError(
                    f"{self.name}: required arg {arg.name!r} after an optional one"
                )


@dataclass(frozen=True)
class DispatchResult:
    actions: tuple[OutboundAction, ...]
    handled_by: str
    ok: bool = True


Handler = Callable[..., list[OutboundAction]]


class CommandRegistry:
    """The command processor: registered slash commands plus the DM and
    button-click routers."""

    def __init__(
        self,
        dm_router: Callable[[DirectMessage], list[OutboundAction]] | None = None,
        button_router: Callable[[ButtonClick], list[OutboundAction]] | None = None,
    ):
        self._commands: dict[str, tuple[CommandSpec, Handler]] = {}
        self._dm_router = dm_router
        self._button_router = button_router

    def register(self, spec: CommandSpec, handler: Handler) -> None:
        if spec.name in self._commands:
            raise DuplicateCommandError(spec.name)
        self._commands[spec.name] = (spec, handler)

    def specs(self) -> list[CommandSpec]:
        return [spec for spec, _ in self._commands.values()]

    def render_index(self) -> str:
        """The list shown when a user types '/'."""
        lines = ["Available commands:"]
        for spec, _ in self._commands.values():
            args = " ".join(
                f"<{a.name}>" if a.required else f"[{a.name}]"
                for a in spec.arg_schema
            )
            tag = " (instructors)" if spec.permission is Permission.INSTRUCTOR_ONLY else ""
            lines.append(f"/{spec.name} {args}".rstrip() + f" - {spec.description}{tag}")
        return "\n".join(lines)

    # -- dispatch -------------------------------------------------------------

    def dispatch(self, event: GuildEvent) -> DispatchResult:
        try:
            if isinstance(event, SlashCommand):
                return self._dispatch_command(event)
            if isinstance(event, DirectMessage):
                return self._route(event, self._dm_router, "message-router")
            if isinstance(event, ButtonClick):
                return self._route(event, self._button_router, "survey-engine")
        except CoursebotError as exc:
            return _rejection(event, "dispatch", f"{exc.code}: {exc}")
        except Exception:
            log.exception("handler crashed for %r", event)
            return _rejection(event, "dispatch", "internal error")
        return _rejection(event, "dispatch", "unsupported event")

    def _dispatch_command(self, event: SlashCommand) -> DispatchResult:
        entry = self._commands.get(event.name)
        if entry is None:
            return _rejection(
                event, event.name, f"UNKNOWN_COMMAND: /{event.name} is not a command"
            )
        spec, handler = entry
        if (
            spec.permission is Permission.INSTRUCTOR_ONLY
            and event.sender.role is not Role.INSTRUCTOR
        ):
            return _rejection(
                event, spec.name,
                "PERMISSION_DENIED: only instructors can use this command",
            )
        try:
            args = self._parse_args(spec, event)
        except ValueError as exc:
            return _rejection(event, spec.name, f"ARG_INVALID: {exc}")
        try:
            actions = handler(event.sender, args, event.at)
        except CoursebotError as exc:
            return _rejection(event, spec.name, f"{exc.code}: {exc}")
        except Exception:
            log.exception("command /%s crashed", spec.name)
            return _rejection(event, spec.name, "internal error")
        return DispatchResult(actions=tuple(actions), handled_by=spec.name)

    @staticmethod
    def _parse_args(spec: CommandSpec, event: SlashCommand) -> dict:
        known = {a.name: a for a in spec.arg_schema}
        parsed: dict[str, object] = {}
        for name, raw in event.args:
            arg = known.get(name)
            if arg is None:
                raise ValueError(f"unknown argument {name!r}")
            if arg.type is ArgType.INT:
                try:
                    parsed[name] = int(raw)
                except ValueError:
                    raise ValueError(f"argument {name!r} must be an integer")
            else:
                parsed[name] = raw
        for arg in spec.arg_schema:
            if arg.required and arg.name not in parsed:
                raise ValueError(f"missing required argument {arg.name!r}")
            parsed.setdefault(arg.name, None)
        return parsed

    def _route(self, event, router, label: str) -> DispatchResult:
        if router is None:
            return _rejection(event, label, "no handler configured")
        try:
            actions = router(event)
        except CoursebotError as exc:
            return _rejection(event, label, f"{exc.code}: {exc}")
        except Exception:
            log.exception("%s crashed for %r", label, event)
            return _rejection(event, label, "internal error")
        return DispatchResult(actions=tuple(actions), handled_by=label)


def _rejection(event: GuildEvent, handled_by: str, text: str) -> DispatchResult:
    return DispatchResult(
        actions=(EphemeralReply(to=event.sender.user_id, text=text),),
        handled_by=handled_by,
        ok=False,
    )

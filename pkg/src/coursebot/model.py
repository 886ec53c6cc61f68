"""Shared domain vocabulary: activities, rating scales, participants, and the
inbound-event / outbound-action algebra every other module speaks.

All types here are immutable values, safe to share between tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum, IntEnum

from .errors import OutOfRangeError


class ActivityKind(Enum):
    LECTURE = "LECTURE"
    QUIZ = "QUIZ"
    EXERCISE = "EXERCISE"
    EXAM = "EXAM"
    TUTORIAL_SESSION = "TUTORIAL_SESSION"


class Difficulty(IntEnum):
    """Five-point ordinal difficulty scale."""

    VERY_EASY = 1
    EASY = 2
    MEDIUM = 3
    HARD = 4
    VERY_HARD = 5


#: Display labels are configurable; these are the defaults shown on buttons.
DIFFICULTY_LABELS = {
    Difficulty.VERY_EASY: "Very easy",
    Difficulty.EASY: "Easy",
    Difficulty.MEDIUM: "Medium",
    Difficulty.HARD: "Hard",
    Difficulty.VERY_HARD: "Very hard",
}


class GradeBand(Enum):
    """Five 20-point percentage ranges for expected-grade answers.

    ``B80`` is closed at the top so the bands partition [0, 100].
    """

    B0 = (0, 20)
    B20 = (20, 40)
    B40 = (40, 60)
    B60 = (60, 80)
    B80 = (80, 100)

    @property
    def lower(self) -> int:
        return self.value[0]

    @property
    def upper(self) -> int:
        return self.value[1]

    @property
    def midpoint(self) -> int:
        return (self.value[0] + self.value[1]) // 2

    @property
    def label(self) -> str:
        return f"{self.lower}-{self.upper} %"


GRADE_BANDS_ORDER = tuple(GradeBand)


def grade_band_of(percentage: float) -> GradeBand:
    """Bucket a grade percentage into its band; 100 maps to the top band."""
    if not 0 <= percentage <= 100:
        raise OutOfRangeError(f"percentage {percentage!r} outside [0, 100]")
    if percentage == 100:
        return GradeBand.B80
    return GRADE_BANDS_ORDER[int(percentage // 20)]


def difficulty_ordinal(rating: Difficulty) -> int:
    """Ordinal encoding used by the rank-correlation analytics."""
    return int(rating)


class Role(Enum):
    STUDENT = "STUDENT"
    INSTRUCTOR = "INSTRUCTOR"


@dataclass(frozen=True)
class UserRef:
    user_id: str
    display_name: str
    role: Role


@dataclass(frozen=True)
class ActivityRef:
    """A course activity that surveys and schedules attach to."""

    kind: ActivityKind
    id: str
    title: str
    week: int
    window_start: datetime
    window_end: datetime

    def __post_init__(self):
        if self.week < 1:
            raise ValueError(f"week must be >= 1, got {self.week}")
        if self.window_start >= self.window_end:
            raise ValueError(
                f"activity {self.id}: window_start must precede window_end"
            )


def utc(year, month, day, hour=0, minute=0, second=0) -> datetime:
    """Shorthand for tz-aware UTC timestamps."""
    return datetime(year, month, day, hour, minute, second, tzinfo=timezone.utc)


# ---------------------------------------------------------------------------
# Inbound events
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectMessage:
    sender: UserRef
    text: str
    at: datetime


@dataclass(frozen=True)
class SlashCommand:
    sender: UserRef
    name: str
    args: tuple[tuple[str, str], ...]  # ordered (name, raw value) pairs
    at: datetime

    def arg(self, name: str) -> str | None:
        for k, v in self.args:
            if k == name:
                return v
        return None


@dataclass(frozen=True)
class ButtonClick:
    sender: UserRef
    message_id: str
    component_id: str
    at: datetime


GuildEvent = DirectMessage | SlashCommand | ButtonClick


# ---------------------------------------------------------------------------
# Outbound actions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Button:
    component_id: str
    label: str


@dataclass(frozen=True)
class EmbedField:
    name: str
    value: str


@dataclass(frozen=True)
class Embed:
    title: str
    color: str = "#5865F2"
    fields: tuple[EmbedField, ...] = ()


def _check_unique_components(components: tuple[Button, ...]):
    ids = [b.component_id for b in components]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate component ids in one message: {ids}")


@dataclass(frozen=True)
class SendDM:
    to: str  # user_id
    body: str
    components: tuple[Button, ...] = ()
    # opaque correlation token so the sender can learn the message id
    tag: tuple | None = None

    def __post_init__(self):
        _check_unique_components(self.components)


@dataclass(frozen=True)
class SendChannel:
    channel: str
    body: str
    components: tuple[Button, ...] = ()
    tag: tuple | None = None

    def __post_init__(self):
        _check_unique_components(self.components)


@dataclass(frozen=True)
class SendEmbed:
    to: str  # user_id
    embed: Embed
    tag: tuple | None = None


@dataclass(frozen=True)
class DisableComponents:
    message_id: str


@dataclass(frozen=True)
class EphemeralReply:
    to: str  # user_id
    text: str


OutboundAction = SendDM | SendChannel | SendEmbed | DisableComponents | EphemeralReply

"""Weekly automation: derives the course's calendar triggers (lecture
invites with content previews, post-quiz and post-lecture surveys,
tutorial attendance prompts and surveys, post-deadline exercise surveys)
and fires each exactly once as virtual time passes.

Fired flags persist through the data store so a restart never
double-sends a survey.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

from .datastore import CourseData, DataStore
from .errors import DanglingActivityError, SchemaInvalidError
from .model import ActivityKind, ActivityRef

_STATE_NAME = "scheduler"


@dataclass(frozen=True)
class LectureInvite:
    activity: ActivityRef
    preview_text: str


@dataclass(frozen=True)
class LaunchSurvey:
    activity: ActivityRef


@dataclass(frozen=True)
class AttendancePrompt:
    activity: ActivityRef


TriggerAction = LectureInvite | LaunchSurvey | AttendancePrompt


@dataclass
class Trigger:
    trigger_id: str
    at: datetime
    action: TriggerAction
    fired: bool = False

    @property
    def week(self) -> int:
        return self.action.activity.week


@dataclass(frozen=True)
class WeekPlan:
    week: int
    activities: tuple[ActivityRef, ...]


@dataclass(frozen=True)
class CourseCalendar:
    course_id: str
    timezone: str
    weeks: tuple[WeekPlan, ...]
    triggers: tuple[Trigger, ...]

    def activities(self) -> list[ActivityRef]:
        return [a for week in self.weeks for a in week.activities]


@dataclass(frozen=True)
class TriggerOffsets:
    """Intra-day offsets; the course data gives days, not clock times."""

    quiz_survey_after_start: timedelta = timedelta(minutes=30)
    exercise_survey_after_deadline: timedelta = timedelta(hours=1)


def load_calendar(
    course: CourseData, offsets: TriggerOffsets = TriggerOffsets()
) -> CourseCalendar:
    """Materialize the weekly trigger plan from validated course data.

    Lectures yield an invite at window start and a survey at window end;
    a lecture also synthesizes the companion quiz survey when its week
    has no explicit quiz activity (classes commence with a quiz).
    """
    known_ids = {act.ref.id for act in course.activities}
    triggers: list[Trigger] = []
    weeks: dict[int, list[ActivityRef]] = {}
    quiz_weeks = {
        act.ref.week
        for act in course.activities
        if act.ref.kind is ActivityKind.QUIZ
    }

    for act in course.activities:
        ref = act.ref
        weeks.setdefault(ref.week, []).append(ref)
        kind = ref.kind
        if kind is ActivityKind.LECTURE:
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:invite",
                    at=ref.window_start,
                    action=LectureInvite(ref, act.preview_text or ref.title),
                )
            )
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:survey",
                    at=ref.window_end,
                    action=LaunchSurvey(ref),
                )
            )
            if ref.week not in quiz_weeks:
                quiz_ref = ActivityRef(
                    kind=ActivityKind.QUIZ,
                    id=f"{ref.id}-quiz",
                    title=f"Quiz ({ref.title})",
                    week=ref.week,
                    window_start=ref.window_start,
                    window_end=ref.window_start + offsets.quiz_survey_after_start,
                )
                weeks[ref.week].append(quiz_ref)
                triggers.append(
                    Trigger(
                        trigger_id=f"{quiz_ref.id}:survey",
                        at=quiz_ref.window_end,
                        action=LaunchSurvey(quiz_ref),
                    )
                )
        elif kind is ActivityKind.QUIZ:
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:survey",
                    at=ref.window_start + offsets.quiz_survey_after_start,
                    action=LaunchSurvey(ref),
                )
            )
        elif kind is ActivityKind.TUTORIAL_SESSION:
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:attendance",
                    at=ref.window_start,
                    action=AttendancePrompt(ref),
                )
            )
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:survey",
                    at=ref.window_end,
                    action=LaunchSurvey(ref),
                )
            )
        elif kind is ActivityKind.EXERCISE:
            due = act.deadline or ref.window_end
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:survey",
                    at=due + offsets.exercise_survey_after_deadline,
                    action=LaunchSurvey(ref),
                )
            )
        elif kind is ActivityKind.EXAM:
            triggers.append(
                Trigger(
                    trigger_id=f"{ref.id}:survey",
                    at=ref.window_end,
                    action=LaunchSurvey(ref),
                )
            )

    for i, extra in enumerate(course.extra_triggers):
        if extra.activity_id not in known_ids:
            raise DanglingActivityError(
                f"trigger {i} references unknown activity {extra.activity_id!r}"
            )
        act = course.activity(extra.activity_id)
        ref = act.ref
        action: TriggerAction
        if extra.action == "LECTURE_INVITE":
            action = LectureInvite(ref, act.preview_text or ref.title)
        elif extra.action == "ATTENDANCE_PROMPT":
            action = AttendancePrompt(ref)
        else:
            action = LaunchSurvey(ref)
        triggers.append(
            Trigger(
                trigger_id=f"{ref.id}:extra{i}",
                at=extra.at,
                action=action,
            )
        )

    _check_strict_week_order(triggers)
    triggers.sort(key=lambda t: (t.at, t.trigger_id))
    week_plans = tuple(
        WeekPlan(week=w, activities=tuple(acts))
        for w, acts in sorted(weeks.items())
    )
    return CourseCalendar(
        course_id=course.course_id,
        timezone=course.timezone,
        weeks=week_plans,
        triggers=tuple(triggers),
    )


def _check_strict_week_order(triggers: list[Trigger]) -> None:
    by_week: dict[int, list[Trigger]] = {}
    for t in triggers:
        by_week.setdefault(t.week, []).append(t)
    problems = []
    for week, items in by_week.items():
        seen: dict[datetime, str] = {}
        for t in items:
            if t.at in seen:
                problems.append(
                    f"week {week}: triggers {seen[t.at]!r} and {t.trigger_id!r} "
                    f"share time {t.at.isoformat()}"
                )
            seen[t.at] = t.trigger_id
    if problems:
        raise SchemaInvalidError(problems)


class Scheduler:
    """Fires due triggers in ``at`` order, exactly once each."""

    def __init__(self, calendar: CourseCalendar, store: DataStore | None = None):
        self.calendar = calendar
        self.store = store
        if store is not None:
            state = store.load_state(_STATE_NAME)
            if state:
                fired = set(state.get("fired", []))
                for trigger in self.calendar.triggers:
                    if trigger.trigger_id in fired:
                        trigger.fired = True

    def tick(self, now: datetime) -> list[TriggerAction]:
        due = [
            t for t in self.calendar.triggers if not t.fired and t.at <= now
        ]
        due.sort(key=lambda t: (t.at, t.trigger_id))
        actions = []
        for trigger in due:
            trigger.fired = True
            actions.append(trigger.action)
        if actions and self.store is not None:
            self._persist()
        return actions

    def next_due(self) -> datetime | None:
        """Earliest unfired trigger time (drives simulation advances)."""
        pending = [t.at for t in self.calendar.triggers if not t.fired]
        return min(pending) if pending else None

    def _persist(self) -> None:
        fired = sorted(
            t.trigger_id for t in self.calendar.triggers if t.fired
        )
        self.store.save_state(_STATE_NAME, {"fired": fired})

"""Composition root: wires the guild simulator, rate limiter, command
registry, attendance tracker, survey engine, scheduler and data store
into one running bot.

The bot core is a single-owner state machine: all event handling and
time advancement is serialized under one lock (the in-process stand-in
for the guild event loop). External callers (the HTTP API) interact only
by submitting events and reading snapshots, never by direct mutation.
"""

from __future__ import annotations

import itertools
import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from . import analytics
from .attendance import AttendanceTracker, SubmitOutcome
from .datastore import CourseData, DataStore, load_grades, parse_timestamp
from .dispatch import ArgSpec, ArgType, CommandRegistry, CommandSpec, Permission
from .errors import AmbiguousSessionError, AlreadyLaunchedError, InvalidParamsError
from .gateway import Gateway, SimGuild, VirtualClock
from .model import (
    ActivityKind,
    ActivityRef,
    ButtonClick,
    DirectMessage,
    EphemeralReply,
    GuildEvent,
    Role,
    SendChannel,
    SendDM,
    SendEmbed,
    SlashCommand,
    UserRef,
)
from .ratelimit import LimiterConfig, RateLimiter, RouteRule
from .scheduler import (
    AttendancePrompt,
    LaunchSurvey,
    LectureInvite,
    Scheduler,
    load_calendar,
)
from .survey import SurveyEngine, render_results_embed, standard_survey

ANNOUNCEMENTS_CHANNEL = "announcements"

#: The synthetic instructor the HTTP API acts as inside the guild.
API_USER = UserRef("api", "Instructor API", Role.INSTRUCTOR)


def default_limiter_config() -> LimiterConfig:
    """Defaults sized like public chat-platform docs; all overridable."""
    return LimiterConfig(
        routes=(
            RouteRule("POST", "interactions/replies", capacity=20, window_seconds=5.0),
        ),
        global_capacity_per_second=50,
        default_capacity=5,
        default_window_seconds=5.0,
    )


@dataclass(frozen=True)
class ChangeEvent:
    seq: int
    kind: str
    data: dict

    def as_dict(self) -> dict:
        return {"seq": self.seq, "kind": self.kind, "data": self.data}


class BotApp:
    def __init__(
        self,
        course: CourseData,
        data_dir: str | Path,
        limiter_config: LimiterConfig | None = None,
        start_time: datetime | None = None,
    ):
        self.course = course
        self.store = DataStore(data_dir)
        self.calendar = load_calendar(course)
        self._activities = {a.id: a for a in self.calendar.activities()}

        if start_time is None:
            starts = [a.window_start for a in self.calendar.activities()]
            start_time = min(starts) if starts else datetime.now(timezone.utc)
        self.clock = VirtualClock(start_time)

        self.guild = SimGuild()
        for user in (*course.students, *course.instructors, API_USER):
            self.guild.add_user(user)

        enrolled = {u.user_id for u in course.students}
        self.attendance = AttendanceTracker(
            course.course_id, self.store, enrolled_ids=enrolled
        )
        self.surveys = SurveyEngine(self.store, observer=self._on_survey_event)
        self.scheduler = Scheduler(self.calendar, self.store)

        self.registry = CommandRegistry(
            dm_router=self._route_dm, button_router=self._route_click
        )
        self._register_commands()

        self.limiter = RateLimiter(limiter_config or default_limiter_config())
        self.gateway = Gateway(
            self.guild,
            self.clock,
            self.limiter,
            dispatcher=self.registry.dispatch,
            on_message_sent=self._on_message_sent,
        )
        self.gateway.advance_hooks.append(self._on_advance)

        self._lock = threading.RLock()
        self._changes: list[ChangeEvent] = []
        self._change_cond = threading.Condition(self._lock)
        self._change_seq = itertools.count(1)

    # -- the serialized core --------------------------------------------------

    def submit_event(self, event: GuildEvent) -> list:
        """Enqueue one guild event; safe from any thread."""
        with self._lock:
            return self.gateway.deliver(event)

    def execute_command(self, name: str, args: dict[str, str]):
        """Run a slash command as the API instructor; returns the
        DispatchResult so HTTP callers can surface rejections."""
        with self._lock:
            event = SlashCommand(
                API_USER,
                name,
                tuple((k, v) for k, v in args.items() if v is not None),
                self.clock.now(),
            )
            self.gateway.deliver(event)
            return self.gateway.last_result

    def advance_time(self, at: datetime) -> None:
        with self._lock:
            self.gateway.advance_to(at)

    def drain(self) -> None:
        with self._lock:
            self.gateway.drain()

    def now(self) -> datetime:
        with self._lock:
            return self.clock.now()

    def shutdown(self) -> None:
        """Flush pending sends and CSV appends."""
        with self._lock:
            self.gateway.drain()
            self.store.close()

    # -- change feed ------------------------------------------------------------

    def _record(self, kind: str, **data) -> None:
        self._changes.append(ChangeEvent(next(self._change_seq), kind, data))
        self._change_cond.notify_all()

    def changes_since(self, since: int) -> list[ChangeEvent]:
        with self._lock:
            return [c for c in self._changes if c.seq > since]

    def wait_changes(self, since: int, timeout: float) -> list[ChangeEvent]:
        """Long-poll: block until a change with seq > since exists."""
        with self._change_cond:
            if not self._changes or self._changes[-1].seq <= since:
                self._change_cond.wait(timeout)
            return [c for c in self._changes if c.seq > since]

    def cursor(self) -> int:
        with self._lock:
            return self._changes[-1].seq if self._changes else 0

    # -- command handlers ---------------------------------------------------------

    def _register_commands(self) -> None:
        reg = self.registry
        reg.register(
            CommandSpec(
                "ping", (), Permission.EVERYONE, "check that the bot is alive"
            ),
            lambda sender, args, at: [EphemeralReply(sender.user_id, "pong")],
        )
        reg.register(
            CommandSpec(
                "attendance-start",
                (
                    ArgSpec("keyword", ArgType.STRING, required=True),
                    ArgSpec("activity_id", ArgType.STRING, required=False),
                ),
                Permission.INSTRUCTOR_ONLY,
                "open a keyword-gated attendance session",
            ),
            self._cmd_attendance_start,
        )
        reg.register(
            CommandSpec(
                "attendance-stop",
                (ArgSpec("activity_id", ArgType.STRING, required=False),),
                Permission.INSTRUCTOR_ONLY,
                "close the attendance session and receive the roster",
            ),
            self._cmd_attendance_stop,
        )
        reg.register(
            CommandSpec(
                "survey-launch",
                (ArgSpec("activity_id", ArgType.STRING, required=True),),
                Permission.INSTRUCTOR_ONLY,
                "invite every student to the activity's survey",
            ),
            self._cmd_survey_launch,
        )
        reg.register(
            CommandSpec(
                "survey-results",
                (ArgSpec("activity_id", ArgType.STRING, required=True),),
                Permission.INSTRUCTOR_ONLY,
                "receive the aggregated survey results",
            ),
            self._cmd_survey_results,
        )

    def _resolve_activity(self, activity_id: str | None, at: datetime,
                          kind: ActivityKind | None = None) -> ActivityRef:
        if activity_id is not None:
            activity = self._activities.get(activity_id)
            if activity is None:
                raise InvalidParamsError(f"unknown activity {activity_id!r}")
            return activity
        # no id given: the activity whose window contains `at` wins
        candidates = [
            a for a in self._activities.values()
            if (kind is None or a.kind is kind)
            and a.window_start <= at <= a.window_end
        ]
        if len(candidates) == 1:
            return candidates[0]
        if not candidates:
            raise InvalidParamsError(
                "no activity window contains the current time; pass activity_id"
            )
        raise AmbiguousSessionError(
            "several activity windows contain the current time; pass activity_id: "
            + ", ".join(sorted(a.id for a in candidates))
        )

    def _cmd_attendance_start(self, sender: UserRef, args: dict, at: datetime):
        activity = self._resolve_activity(
            args.get("activity_id"), at, kind=ActivityKind.TUTORIAL_SESSION
        )
        session = self.attendance.start_session(
            sender, activity, args["keyword"], at
        )
        self._record(
            "attendance_started",
            session_id=session.session_id,
            activity_id=activity.id,
            activity_title=activity.title,
            keyword=session.keyword,
        )
        return [
            SendChannel(
                ANNOUNCEMENTS_CHANNEL,
                f"Attendance check started for {activity.title}.",
            ),
            EphemeralReply(
                sender.user_id,
                f"Attendance session {session.session_id} is open.",
            ),
        ]

    def _cmd_attendance_stop(self, sender: UserRef, args: dict, at: datetime):
        summary = self.attendance.stop_session(sender, at, args.get("activity_id"))
        session = summary.session
        self._record(
            "attendance_stopped",
            session_id=session.session_id,
            activity_id=session.activity.id,
            count=len(session.records),
        )
        if summary.lines:
            body = (
                f"Attendance for {session.activity.title}: "
                f"{len(summary.lines)} students\n" + "\n".join(summary.lines)
            )
        else:
            body = f"Attendance for {session.activity.title}: no students recorded."
        return [SendDM(to=sender.user_id, body=body)]

    def _survey_id_for(self, activity_id: str) -> str:
        return f"{activity_id}-survey"

    def _cmd_survey_launch(self, sender: UserRef, args: dict, at: datetime):
        activity = self._resolve_activity(args["activity_id"], at)
        actions = self._launch_survey(activity, at)
        return actions + [
            EphemeralReply(
                sender.user_id,
                f"Survey {self._survey_id_for(activity.id)} launched to "
                f"{len(self.course.students)} students.",
            )
        ]

    def _launch_survey(self, activity: ActivityRef, at: datetime):
        defn = standard_survey(activity, self._survey_id_for(activity.id))
        actions = self.surveys.launch(defn, list(self.course.students), at)
        self._record(
            "survey_launched",
            survey_id=defn.survey_id,
            activity_id=activity.id,
            invited=len(self.course.students),
        )
        return actions

    def _cmd_survey_results(self, sender: UserRef, args: dict, at: datetime):
        survey_id = self._survey_id_for(args["activity_id"])
        results = self.surveys.aggregate(survey_id)
        return [SendEmbed(to=sender.user_id, embed=render_results_embed(results))]

    # -- routers -------------------------------------------------------------------

    def _route_dm(self, event: DirectMessage):
        if event.sender.role is Role.STUDENT:
            result = self.attendance.submit_keyword(
                event.sender, event.text, event.at
            )
            if result.outcome is SubmitOutcome.ACCEPTED:
                self._record(
                    "attendance_recorded",
                    session_id=result.session.session_id,
                    activity_id=result.session.activity.id,
                    student_id=event.sender.user_id,
                    display_name=event.sender.display_name,
                    at=event.at.astimezone(timezone.utc).isoformat(),
                )
                return [
                    SendDM(
                        to=event.sender.user_id,
                        body=(
                            "You have been added to the attendance list for "
                            f"{result.session.activity.title}."
                        ),
                    )
                ]
            if result.outcome is SubmitOutcome.ALREADY_RECORDED:
                return [
                    SendDM(
                        to=event.sender.user_id,
                        body="You are already on the attendance list.",
                    )
                ]
            if result.outcome is SubmitOutcome.KEYWORD_MISMATCH:
                return [
                    SendDM(
                        to=event.sender.user_id,
                        body="That does not match the current attendance keyword.",
                    )
                ]
        return [
            SendDM(to=event.sender.user_id, body=self.registry.render_index())
        ]

    def _route_click(self, event: ButtonClick):
        return self.surveys.on_button(
            event.sender, event.message_id, event.component_id, event.at
        )

    def _on_message_sent(self, message_id: str, action) -> None:
        tag = getattr(action, "tag", None)
        if tag and tag[0] == "survey":
            self.surveys.register_message(message_id, tag)

    def _on_survey_event(self, kind: str, data: dict) -> None:
        self._record(kind, **data)

    # -- scheduler hook ---------------------------------------------------------------

    def _on_advance(self, now: datetime) -> None:
        for action in self.scheduler.tick(now):
            if isinstance(action, LectureInvite):
                self._record(
                    "trigger_fired", trigger="lecture_invite",
                    activity_id=action.activity.id,
                )
                self.gateway.submit(
                    SendChannel(
                        ANNOUNCEMENTS_CHANNEL,
                        f"{action.activity.title} is starting. {action.preview_text}",
                    )
                )
            elif isinstance(action, AttendancePrompt):
                self._record(
                    "trigger_fired", trigger="attendance_prompt",
                    activity_id=action.activity.id,
                )
                self.gateway.submit(
                    SendChannel(
                        ANNOUNCEMENTS_CHANNEL,
                        f"{action.activity.title} is starting; attendance will "
                        "be checked on-site.",
                    )
                )
            elif isinstance(action, LaunchSurvey):
                self._record(
                    "trigger_fired", trigger="launch_survey",
                    activity_id=action.activity.id,
                )
                try:
                    self.gateway.submit_all(
                        self._launch_survey(action.activity, now)
                    )
                except AlreadyLaunchedError:
                    pass  # an instructor already launched it manually
        self.surveys.expire_stale(now)

    # -- snapshots for the HTTP API ------------------------------------------------------

    def attendance_snapshot(self, session_id: str | None = None):
        with self._lock:
            sessions = list(self.attendance.open_sessions.values()) + list(
                self.attendance.closed_sessions
            )
            sessions.sort(key=lambda s: (s.opened_at, s.session_id))
            out = [self._session_dict(s) for s in sessions]
        if session_id is None:
            return out
        return next((s for s in out if s["session_id"] == session_id), None)

    @staticmethod
    def _session_dict(session) -> dict:
        return {
            "session_id": session.session_id,
            "activity_id": session.activity.id,
            "activity_title": session.activity.title,
            "state": session.state.value,
            "keyword": session.keyword,
            "opened_at": session.opened_at.astimezone(timezone.utc).isoformat(),
            "closed_at": (
                session.closed_at.astimezone(timezone.utc).isoformat()
                if session.closed_at
                else None
            ),
            "records": [
                {
                    "student_id": r.student.user_id,
                    "display_name": r.student.display_name,
                    "at": r.at.astimezone(timezone.utc).isoformat(),
                    "enrolled": r.enrolled,
                }
                for r in session.records
            ],
        }

    def survey_snapshot(self, survey_id: str) -> dict:
        with self._lock:
            results = self.surveys.aggregate(survey_id)
        questions = []
        for q in results.questions:
            options = []
            for code, count in q.counts:
                pct = (
                    float(analytics.pct_1dp(count, q.answered))
                    if q.answered
                    else 0.0
                )
                options.append(
                    {"code": code, "count": count, "percentage": pct}
                )
            questions.append(
                {
                    "question_id": q.question_id,
                    "prompt": q.prompt,
                    "answered": q.answered,
                    "options": options,
                }
            )
        return {
            "survey_id": results.survey_id,
            "activity_id": results.activity.id,
            "activity_title": results.activity.title,
            "respondents": results.respondents,
            "questions": questions,
        }

    def report_snapshot(self) -> dict:
        with self._lock:
            grades = load_grades(self.store.root / "grades.csv")
            return analytics.export_report(
                self.course, self.store, grades
            ).document

    def activities_snapshot(self) -> list[dict]:
        with self._lock:
            launched = set(self.surveys.definitions)
        return [
            {
                "activity_id": a.id,
                "kind": a.kind.value,
                "title": a.title,
                "week": a.week,
                "window_start": a.window_start.astimezone(timezone.utc).isoformat(),
                "window_end": a.window_end.astimezone(timezone.utc).isoformat(),
                "survey_id": self._survey_id_for(a.id),
                "survey_launched": self._survey_id_for(a.id) in launched,
            }
            for a in sorted(
                self._activities.values(), key=lambda a: (a.week, a.window_start, a.id)
            )
        ]


# ---------------------------------------------------------------------------
# Scenario files
# ---------------------------------------------------------------------------


def parse_scenario(text: str, users: dict[str, UserRef]) -> list[tuple[datetime, GuildEvent]]:
    """Load a JSON scenario: [{at, event: {type, from, ...}}, ...]."""
    raw = json.loads(text)
    scenario: list[tuple[datetime, GuildEvent]] = []
    for i, item in enumerate(raw):
        at = parse_timestamp(item["at"])
        spec = item["event"]
        sender = users.get(spec["from"])
        if sender is None:
            raise InvalidParamsError(
                f"scenario[{i}]: unknown user {spec['from']!r}"
            )
        etype = spec["type"]
        if etype == "direct_message":
            event: GuildEvent = DirectMessage(sender, spec["text"], at)
        elif etype == "slash_command":
            event = SlashCommand(
                sender, spec["name"], tuple(spec.get("args", {}).items()), at
            )
        elif etype == "button_click":
            event = ButtonClick(
                sender, spec["message_id"], spec["component_id"], at
            )
        else:
            raise InvalidParamsError(f"scenario[{i}]: unknown event type {etype!r}")
        scenario.append((at, event))
    return scenario

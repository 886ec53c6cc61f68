"""Keyword-gated live attendance sessions.

An instructor opens a session with an on-site keyword; students DM the
keyword and are recorded exactly once; closing the session hands the
instructor the roster and appends one CSV row per record.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum

from .datastore import AttendanceRow, DataStore, RecordCategory, RecordType, format_timestamp
from .errors import (
    AmbiguousSessionError,
    EmptyKeywordError,
    InvalidParamsError,
    NoOpenSessionError,
    NotInstructorError,
    SessionAlreadyOpenError,
)
from .model import ActivityKind, ActivityRef, Role, UserRef


def normalize_keyword(text: str) -> str:
    """Trim surrounding whitespace and casefold; forgiving live-classroom matching."""
    return text.strip().casefold()


class SessionState(Enum):
    OPEN = "OPEN"
    CLOSED = "CLOSED"


@dataclass
class AttendanceRecord:
    student: UserRef
    at: datetime
    enrolled: bool = True  # False: sender not on the course roster


@dataclass
class AttendanceSession:
    session_id: str
    activity: ActivityRef
    keyword: str
    opened_by: UserRef
    opened_at: datetime
    state: SessionState = SessionState.OPEN
    closed_at: datetime | None = None
    records: list[AttendanceRecord] = field(default_factory=list)

    def has_student(self, user_id: str) -> bool:
        return any(r.student.user_id == user_id for r in self.records)


class SubmitOutcome(Enum):
    ACCEPTED = "ACCEPTED"
    NO_OPEN_SESSION = "NO_OPEN_SESSION"
    KEYWORD_MISMATCH = "KEYWORD_MISMATCH"
    ALREADY_RECORDED = "ALREADY_RECORDED"


@dataclass(frozen=True)
class SubmitResult:
    outcome: SubmitOutcome
    session: AttendanceSession | None = None

    @property
    def accepted(self) -> bool:
        return self.outcome is SubmitOutcome.ACCEPTED


@dataclass(frozen=True)
class RosterSummary:
    session: AttendanceSession
    lines: tuple[str, ...]  # one per student, submission order


class AttendanceTracker:
    """Owns all attendance sessions for one course.

    State is mutated only from the guild event loop, so recording needs
    no locking; exactly-once falls out of serialized delivery.
    """

    def __init__(self, course_id: str, store: DataStore | None = None,
                 enrolled_ids: set[str] | None = None):
        self.course_id = course_id
        self.store = store
        self.enrolled_ids = enrolled_ids if enrolled_ids is not None else set()
        self.open_sessions: dict[str, AttendanceSession] = {}  # activity_id -> session
        self.closed_sessions: list[AttendanceSession] = []
        self._counter = 0

    def _next_session_id(self, activity_id: str) -> str:
        self._counter += 1
        return f"att-{activity_id}-{self._counter:04d}"

    def find(self, session_id: str) -> AttendanceSession | None:
        for session in self.open_sessions.values():
            if session.session_id == session_id:
                return session
        for session in self.closed_sessions:
            if session.session_id == session_id:
                return session
        return None

    def start_session(
        self, instructor: UserRef, activity: ActivityRef, keyword: str, now: datetime
    ) -> AttendanceSession:
        if instructor.role is not Role.INSTRUCTOR:
            raise NotInstructorError(instructor.user_id)
        if activity.kind is not ActivityKind.TUTORIAL_SESSION:
            raise InvalidParamsError(
                f"attendance is tracked for tutorial sessions, not {activity.kind.value}"
            )
        if not normalize_keyword(keyword):
            raise EmptyKeywordError("attendance keyword must be non-empty")
        if activity.id in self.open_sessions:
            raise SessionAlreadyOpenError(activity.id)
        session = AttendanceSession(
            session_id=self._next_session_id(activity.id),
            activity=activity,
            keyword=normalize_keyword(keyword),
            opened_by=instructor,
            opened_at=now,
        )
        self.open_sessions[activity.id] = session
        return session

    def submit_keyword(self, student: UserRef, text: str, now: datetime) -> SubmitResult:
        if not self.open_sessions:
            return SubmitResult(SubmitOutcome.NO_OPEN_SESSION)
        normalized = normalize_keyword(text)
        # oldest matching session wins if instructors reused a keyword
        matches = sorted(
            (s for s in self.open_sessions.values() if s.keyword == normalized),
            key=lambda s: (s.opened_at, s.session_id),
        )
        if not matches:
            return SubmitResult(SubmitOutcome.KEYWORD_MISMATCH)
        session = matches[0]
        if session.has_student(student.user_id):
            return SubmitResult(SubmitOutcome.ALREADY_RECORDED, session)
        session.records.append(
            AttendanceRecord(
                student=student,
                at=now,
                enrolled=student.user_id in self.enrolled_ids,
            )
        )
        return SubmitResult(SubmitOutcome.ACCEPTED, session)

    def stop_session(
        self, instructor: UserRef, now: datetime, activity_id: str | None = None
    ) -> RosterSummary:
        if instructor.role is not Role.INSTRUCTOR:
            raise NotInstructorError(instructor.user_id)
        if not self.open_sessions:
            raise NoOpenSessionError("no attendance session is open")
        if activity_id is None:
            if len(self.open_sessions) > 1:
                raise AmbiguousSessionError(
                    "multiple sessions open; pass activity_id: "
                    + ", ".join(sorted(self.open_sessions))
                )
            activity_id = next(iter(self.open_sessions))
        session = self.open_sessions.pop(activity_id, None)
        if session is None:
            raise NoOpenSessionError(f"no open session for {activity_id}")
        session.state = SessionState.CLOSED
        session.closed_at = now
        self.closed_sessions.append(session)
        if self.store is not None:
            category = RecordCategory(
                session.activity.kind, session.activity.id, RecordType.ATTENDANCE
            )
            for record in session.records:
                self.store.append_record(
                    category,
                    AttendanceRow(
                        session_id=session.session_id,
                        course_id=self.course_id,
                        activity_id=session.activity.id,
                        timestamp=format_timestamp(record.at),
                        student_id=record.student.user_id if record.enrolled else "",
                        display_name=record.student.display_name,
                    ),
                )
        return RosterSummary(session=session, lines=roster_lines(session))


def roster_lines(session: AttendanceSession) -> tuple[str, ...]:
    """One line per student, ordered by submission time."""
    lines = []
    for i, record in enumerate(session.records, start=1):
        suffix = "" if record.enrolled else " (not on course roster)"
        lines.append(f"{i}. {record.student.display_name}{suffix}")
    return tuple(lines)

import random
import time

import pytest

from coursebot.attendance import (
    AttendanceTracker,
    SessionState,
    SubmitOutcome,
    normalize_keyword,
)
from coursebot.datastore import DataStore, RecordCategory, RecordType
from coursebot.errors import (
    AmbiguousSessionError,
    EmptyKeywordError,
    InvalidParamsError,
    NoOpenSessionError,
    NotInstructorError,
    SessionAlreadyOpenError,
)
from coursebot.model import ActivityKind, utc
from tests.conftest import INSTRUCTOR, exam, student, tutorial

T0 = utc(2025, 10, 8, 14)


def tracker(tmp_path=None, enrolled=20):
    store = DataStore(tmp_path) if tmp_path else None
    return AttendanceTracker(
        "c1", store, enrolled_ids={f"s{i:03d}" for i in range(1, enrolled + 1)}
    )


def test_start_session_opens_with_keyword():
    tr = tracker()
    session = tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    assert session.state is SessionState.OPEN
    assert session.keyword == "g5"


def test_start_requires_instructor():
    with pytest.raises(NotInstructorError):
        tracker().start_session(student(1), tutorial(), "g5", T0)


def test_start_rejects_non_tutorial():
    with pytest.raises(InvalidParamsError):
        tracker().start_session(INSTRUCTOR, exam(), "g5", T0)


def test_double_start_same_activity():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    with pytest.raises(SessionAlreadyOpenError):
        tr.start_session(INSTRUCTOR, tutorial(), "g6", T0)


def test_empty_keyword():
    with pytest.raises(EmptyKeywordError):
        tracker().start_session(INSTRUCTOR, tutorial(), "   ", T0)


def test_submit_matches_and_normalizes():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    assert tr.submit_keyword(student(1), "g5", T0).accepted
    assert tr.submit_keyword(student(2), " G5 ", T0).accepted  # trim + casefold
    assert normalize_keyword(" G5 ") == "g5"


def test_submit_duplicate_rejected():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    assert tr.submit_keyword(student(1), "g5", T0).accepted
    again = tr.submit_keyword(student(1), "g5", T0)
    assert again.outcome is SubmitOutcome.ALREADY_RECORDED
    assert len(again.session.records) == 1


def test_wrong_keyword_never_mutates():
    tr = tracker()
    session = tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    result = tr.submit_keyword(student(1), "banana", T0)
    assert result.outcome is SubmitOutcome.KEYWORD_MISMATCH
    assert session.records == []


def test_submit_without_session():
    result = tracker().submit_keyword(student(1), "g5", T0)
    assert result.outcome is SubmitOutcome.NO_OPEN_SESSION


def test_two_sessions_open_concurrently():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial("tut-01-wed", day=8), "wed", T0)
    tr.start_session(INSTRUCTOR, tutorial("tut-01-thu", day=9), "thu", T0)
    assert tr.submit_keyword(student(1), "wed", T0).session.activity.id == "tut-01-wed"
    assert tr.submit_keyword(student(1), "thu", T0).session.activity.id == "tut-01-thu"
    with pytest.raises(AmbiguousSessionError):
        tr.stop_session(INSTRUCTOR, T0)
    summary = tr.stop_session(INSTRUCTOR, T0, "tut-01-wed")
    assert summary.session.activity.id == "tut-01-wed"


def test_stop_writes_roster_and_csv(tmp_path):
    tr = tracker(tmp_path)
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    for i in (3, 1, 2):
        tr.submit_keyword(student(i), "g5", T0)
    summary = tr.stop_session(INSTRUCTOR, T0)
    assert summary.session.state is SessionState.CLOSED
    assert len(summary.lines) == 3
    assert summary.lines[0].endswith("Student 003")  # submission order
    rows = tr.store.load_records(
        RecordCategory(ActivityKind.TUTORIAL_SESSION, "tut-01-wed", RecordType.ATTENDANCE)
    )
    assert [r.student_id for r in rows] == ["s003", "s001", "s002"]


def test_stop_empty_session(tmp_path):
    tr = tracker(tmp_path)
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    summary = tr.stop_session(INSTRUCTOR, T0)
    assert summary.lines == ()
    assert summary.session.state is SessionState.CLOSED
    assert tr.store.load_records(
        RecordCategory(ActivityKind.TUTORIAL_SESSION, "tut-01-wed", RecordType.ATTENDANCE)
    ) == []


def test_stop_twice():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    tr.stop_session(INSTRUCTOR, T0)
    with pytest.raises(NoOpenSessionError):
        tr.stop_session(INSTRUCTOR, T0)


def test_submission_after_close_rejected():
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    tr.stop_session(INSTRUCTOR, T0)
    assert tr.submit_keyword(student(1), "g5", T0).outcome is SubmitOutcome.NO_OPEN_SESSION


def test_unenrolled_student_flagged(tmp_path):
    tr = tracker(tmp_path, enrolled=1)
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    tr.submit_keyword(student(1), "g5", T0)
    tr.submit_keyword(student(99), "g5", T0)  # not on the course roster
    summary = tr.stop_session(INSTRUCTOR, T0)
    assert "not on course roster" in summary.lines[1]
    rows = tr.store.load_records(
        RecordCategory(ActivityKind.TUTORIAL_SESSION, "tut-01-wed", RecordType.ATTENDANCE)
    )
    assert rows[0].student_id == "s001"
    assert rows[1].student_id == ""  # flagged by the empty id
    assert rows[1].display_name == "Student 099"


def test_csv_round_trip_reproduces_records(tmp_path):
    tr = tracker(tmp_path)
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    for i in range(1, 6):
        tr.submit_keyword(student(i), "g5", utc(2025, 10, 8, 14, i))
    session = tr.stop_session(INSTRUCTOR, T0).session
    rows = tr.store.load_records(
        RecordCategory(ActivityKind.TUTORIAL_SESSION, "tut-01-wed", RecordType.ATTENDANCE)
    )
    assert len(rows) == len(session.records)
    for row, record in zip(rows, session.records):
        assert row.student_id == record.student.user_id
        assert row.display_name == record.student.display_name
        assert row.timestamp == record.at.isoformat()
        assert row.session_id == session.session_id


def test_full_round_at_137_is_fast(tmp_path):
    started = time.perf_counter()
    tr = tracker(tmp_path, enrolled=137)
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    for i in range(1, 138):
        assert tr.submit_keyword(student(i), "g5", T0).accepted
    summary = tr.stop_session(INSTRUCTOR, T0)
    assert len(summary.lines) == 137
    assert time.perf_counter() - started < 5.0  # far under the minute budget


def test_exactly_once_under_shuffled_duplicates():
    rng = random.Random(1234)
    tr = tracker()
    tr.start_session(INSTRUCTOR, tutorial(), "g5", T0)
    submissions = [student(i) for i in range(1, 21)] * 3
    rng.shuffle(submissions)
    accepted = sum(
        tr.submit_keyword(s, "g5", T0).accepted for s in submissions
    )
    assert accepted == 20
    session = tr.stop_session(INSTRUCTOR, T0).session
    ids = [r.student.user_id for r in session.records]
    assert len(ids) == len(set(ids)) == 20

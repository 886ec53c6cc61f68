import json
from datetime import timedelta

import pytest

from coursebot.app import BotApp
from coursebot.datastore import ingest_course_data
from coursebot.model import (
    ActivityKind,
    ActivityRef,
    Role,
    UserRef,
    utc,
)
from coursebot.simulate import build_course_document

INSTRUCTOR = UserRef("i001", "Instructor One", Role.INSTRUCTOR)


def student(n: int) -> UserRef:
    return UserRef(f"s{n:03d}", f"Student {n:03d}", Role.STUDENT)


def tutorial(activity_id="tut-01-wed", week=1, day=8) -> ActivityRef:
    return ActivityRef(
        kind=ActivityKind.TUTORIAL_SESSION,
        id=activity_id,
        title=f"Tutorial {activity_id}",
        week=week,
        window_start=utc(2025, 10, day, 14),
        window_end=utc(2025, 10, day, 16),
    )


def exam(activity_id="exam-1", week=1) -> ActivityRef:
    return ActivityRef(
        kind=ActivityKind.EXAM,
        id=activity_id,
        title="Intermediate exam",
        week=week,
        window_start=utc(2025, 10, 10, 10),
        window_end=utc(2025, 10, 10, 12),
    )


def course_json(weeks=1, students=3, seed=0) -> str:
    return json.dumps(build_course_document(weeks, students, seed))


@pytest.fixture
def course(tmp_path):
    return ingest_course_data(course_json())


@pytest.fixture
def bot(tmp_path, course):
    app = BotApp(course, tmp_path / "data")
    yield app
    app.store.close()


def advance(app: BotApp, **delta):
    app.advance_time(app.now() + timedelta(**delta))
    return app.now()

"""Validates instructor-uploaded course data and persists every interaction
record as CSV in per-activity folders.

CSV dialect is fixed: RFC-4180 quoting, UTF-8, LF line endings, mandatory
header row. Appends are whole-line writes flushed immediately, so a
concurrent reader always observes a prefix of complete rows.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import jsonschema

from .errors import (
    DuplicateIdError,
    ParseFailureError,
    SchemaInvalidError,
    SchemaMismatchError,
)
from .model import ActivityKind, ActivityRef, Role, UserRef


class RecordType(Enum):
    ATTENDANCE = "attendance"
    SURVEY_ANSWER = "survey_answer"


@dataclass(frozen=True)
class RecordCategory:
    kind: ActivityKind
    activity_id: str
    record_type: RecordType

    def relative_path(self) -> Path:
        return (
            Path(self.kind.value.lower())
            / self.activity_id
            / f"{self.record_type.value}.csv"
        )


ATTENDANCE_HEADER = (
    "session_id",
    "course_id",
    "activity_id",
    "timestamp",
    "student_id",
    "display_name",
)

SURVEY_HEADER = (
    "survey_id",
    "activity_kind",
    "activity_id",
    "question_id",
    "student_id",
    "answer_code",
    "timestamp",
)

_HEADERS = {
    RecordType.ATTENDANCE: ATTENDANCE_HEADER,
    RecordType.SURVEY_ANSWER: SURVEY_HEADER,
}


@dataclass(frozen=True)
class AttendanceRow:
    session_id: str
    course_id: str
    activity_id: str
    timestamp: str  # ISO-8601 UTC
    student_id: str  # empty for students not on the course roster
    display_name: str

    def fields(self) -> tuple[str, ...]:
        return (
            self.session_id,
            self.course_id,
            self.activity_id,
            self.timestamp,
            self.student_id,
            self.display_name,
        )


@dataclass(frozen=True)
class SurveyAnswerRow:
    survey_id: str
    activity_kind: str
    activity_id: str
    question_id: str
    student_id: str
    answer_code: str
    timestamp: str

    def fields(self) -> tuple[str, ...]:
        return (
            self.survey_id,
            self.activity_kind,
            self.activity_id,
            self.question_id,
            self.student_id,
            self.answer_code,
            self.timestamp,
        )


_ROW_TYPES = {
    RecordType.ATTENDANCE: AttendanceRow,
    RecordType.SURVEY_ANSWER: SurveyAnswerRow,
}

CsvRow = AttendanceRow | SurveyAnswerRow


def parse_timestamp(text: str) -> datetime:
    """Parse ISO-8601; a trailing Z is accepted as UTC."""
    return datetime.fromisoformat(text.replace("Z", "+00:00"))


def format_timestamp(at: datetime) -> str:
    return at.astimezone(timezone.utc).isoformat()


class DataStore:
    """Single-writer record store rooted at ``data_dir``."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self._handles: dict[RecordCategory, io.TextIOWrapper] = {}

    def path_for(self, category: RecordCategory) -> Path:
        return self.root / category.relative_path()

    def append_record(self, category: RecordCategory, row: CsvRow) -> None:
        expected = _ROW_TYPES[category.record_type]
        if not isinstance(row, expected):
            raise SchemaMismatchError(
                f"category {category.record_type.value} expects "
                f"{expected.__name__}, got {type(row).__name__}"
            )
        fields = row.fields()
        if len(fields) != len(_HEADERS[category.record_type]):
            raise SchemaMismatchError(
                f"row has {len(fields)} fields, schema has "
                f"{len(_HEADERS[category.record_type])}"
            )
        handle = self._handles.get(category)
        if handle is None or handle.closed:
            path = self.path_for(category)
            path.parent.mkdir(parents=True, exist_ok=True)
            fresh = not path.exists() or path.stat().st_size == 0
            handle = open(path, "a", encoding="utf-8", newline="")
            if fresh:
                self._write_line(handle, _HEADERS[category.record_type])
            self._handles[category] = handle
        self._write_line(handle, fields)

    @staticmethod
    def _write_line(handle, fields):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(fields)
        handle.write(buf.getvalue())
        handle.flush()

    def load_records(self, category: RecordCategory) -> list[CsvRow]:
        path = self.path_for(category)
        if not path.exists():
            return []
        header = _HEADERS[category.record_type]
        row_type = _ROW_TYPES[category.record_type]
        rows: list[CsvRow] = []
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            for lineno, fields in enumerate(reader, start=1):
                if lineno == 1:
                    if tuple(fields) != header:
                        raise ParseFailureError(
                            f"bad header {fields!r}", line_number=1
                        )
                    continue
                if len(fields) != len(header):
                    raise ParseFailureError(
                        f"expected {len(header)} fields, got {len(fields)}",
                        line_number=lineno,
                    )
                rows.append(row_type(*fields))
        return rows

    def export_pseudonymized(self, category: RecordCategory) -> list[CsvRow]:
        """Rows with identities replaced by stable per-export pseudonyms."""
        rows = self.load_records(category)
        mapping: dict[str, tuple[str, str]] = {}
        out: list[CsvRow] = []
        for row in rows:
            identity = row.student_id or f"name:{row.display_name}"
            if identity not in mapping:
                n = len(mapping) + 1
                mapping[identity] = (f"anon-{n:03d}", f"Participant {n:03d}")
            pseud_id, pseud_name = mapping[identity]
            if isinstance(row, AttendanceRow):
                out.append(
                    AttendanceRow(
                        row.session_id,
                        row.course_id,
                        row.activity_id,
                        row.timestamp,
                        pseud_id if row.student_id else "",
                        pseud_name,
                    )
                )
            else:
                out.append(
                    SurveyAnswerRow(
                        row.survey_id,
                        row.activity_kind,
                        row.activity_id,
                        row.question_id,
                        pseud_id,
                        row.answer_code,
                        row.timestamp,
                    )
                )
        return out

    def categories_present(self) -> list[RecordCategory]:
        """Discover every record file under the data root."""
        found = []
        for kind in ActivityKind:
            kind_dir = self.root / kind.value.lower()
            if not kind_dir.is_dir():
                continue
            for activity_dir in sorted(kind_dir.iterdir()):
                if not activity_dir.is_dir():
                    continue
                for rt in RecordType:
                    if (activity_dir / f"{rt.value}.csv").exists():
                        found.append(
                            RecordCategory(kind, activity_dir.name, rt)
                        )
        return found

    # -- auxiliary state (scheduler fired-flags etc.) ------------------------

    def save_state(self, name: str, payload: dict) -> None:
        path = self.root / "state" / f"{name}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")
        os.replace(tmp, path)

    def load_state(self, name: str) -> dict | None:
        path = self.root / "state" / f"{name}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def close(self) -> None:
        for handle in self._handles.values():
            if not handle.closed:
                handle.close()
        self._handles.clear()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# ---------------------------------------------------------------------------
# Course data (instructor-uploaded JSON)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CourseActivity:
    ref: ActivityRef
    preview_text: str | None = None
    deadline: datetime | None = None


@dataclass(frozen=True)
class ExtraTrigger:
    """Explicit trigger override from the course-data document."""

    activity_id: str
    action: str  # LECTURE_INVITE | LAUNCH_SURVEY | ATTENDANCE_PROMPT
    at: datetime


@dataclass(frozen=True)
class CourseData:
    course_id: str
    timezone: str
    students: tuple[UserRef, ...]
    instructors: tuple[UserRef, ...]
    activities: tuple[CourseActivity, ...]
    extra_triggers: tuple[ExtraTrigger, ...] = ()

    def activity(self, activity_id: str) -> CourseActivity | None:
        for act in self.activities:
            if act.ref.id == activity_id:
                return act
        return None


_USER_SCHEMA = {
    "type": "object",
    "required": ["user_id", "display_name"],
    "properties": {
        "user_id": {"type": "string", "minLength": 1},
        "display_name": {"type": "string", "minLength": 1},
    },
}

COURSE_DATA_SCHEMA = {
    "type": "object",
    "required": ["course_id", "timezone", "students", "activities"],
    "properties": {
        "course_id": {"type": "string", "minLength": 1},
        "timezone": {"type": "string", "minLength": 1},
        "students": {"type": "array", "items": _USER_SCHEMA},
        "instructors": {"type": "array", "items": _USER_SCHEMA},
        "activities": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "kind", "title", "week", "window_start", "window_end"],
                "properties": {
                    "id": {"type": "string", "minLength": 1},
                    "kind": {
                        "type": "string",
                        "enum": [k.value for k in ActivityKind],
                    },
                    "title": {"type": "string"},
                    "week": {"type": "integer", "minimum": 1},
                    "window_start": {"type": "string"},
                    "window_end": {"type": "string"},
                    "preview_text": {"type": "string"},
                    "deadline": {"type": "string"},
                },
            },
        },
        "triggers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["activity_id", "action", "at"],
                "properties": {
                    "activity_id": {"type": "string"},
                    "action": {
                        "type": "string",
                        "enum": ["LECTURE_INVITE", "LAUNCH_SURVEY", "ATTENDANCE_PROMPT"],
                    },
                    "at": {"type": "string"},
                },
            },
        },
    },
}


def ingest_course_data(document: str) -> CourseData:
    """Parse and validate a course-data JSON document.

    Collects *all* validation problems before failing, so an instructor
    fixing an upload sees the complete list at once.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise SchemaInvalidError([f"$: not valid JSON ({exc.msg})"])

    validator = jsonschema.Draft202012Validator(COURSE_DATA_SCHEMA)
    problems = [
        f"{err.json_path}: {err.message}"
        for err in sorted(validator.iter_errors(doc), key=lambda e: e.json_path)
    ]

    activities: list[CourseActivity] = []
    if not problems:
        seen_students: set[str] = set()
        for student in doc["students"]:
            if student["user_id"] in seen_students:
                raise DuplicateIdError(
                    f"duplicate student user_id {student['user_id']!r}"
                )
            seen_students.add(student["user_id"])
        seen_activities: set[str] = set()
        for i, raw in enumerate(doc["activities"]):
            if raw["id"] in seen_activities:
                raise DuplicateIdError(f"duplicate activity id {raw['id']!r}")
            seen_activities.add(raw["id"])
            try:
                start = parse_timestamp(raw["window_start"])
                end = parse_timestamp(raw["window_end"])
            except ValueError as exc:
                problems.append(f"$.activities[{i}]: bad timestamp ({exc})")
                continue
            deadline = None
            if raw.get("deadline"):
                try:
                    deadline = parse_timestamp(raw["deadline"])
                except ValueError as exc:
                    problems.append(f"$.activities[{i}].deadline: {exc}")
                    continue
            try:
                ref = ActivityRef(
                    kind=ActivityKind(raw["kind"]),
                    id=raw["id"],
                    title=raw["title"],
                    week=raw["week"],
                    window_start=start,
                    window_end=end,
                )
            except ValueError as exc:
                problems.append(f"$.activities[{i}]: {exc}")
                continue
            activities.append(
                CourseActivity(
                    ref=ref,
                    preview_text=raw.get("preview_text"),
                    deadline=deadline,
                )
            )

    extra_triggers: list[ExtraTrigger] = []
    if not problems:
        for i, raw in enumerate(doc.get("triggers", [])):
            try:
                extra_triggers.append(
                    ExtraTrigger(
                        activity_id=raw["activity_id"],
                        action=raw["action"],
                        at=parse_timestamp(raw["at"]),
                    )
                )
            except ValueError as exc:
                problems.append(f"$.triggers[{i}].at: {exc}")

    if problems:
        raise SchemaInvalidError(problems)

    students = tuple(
        UserRef(s["user_id"], s["display_name"], Role.STUDENT)
        for s in doc["students"]
    )
    instructors = tuple(
        UserRef(s["user_id"], s["display_name"], Role.INSTRUCTOR)
        for s in doc.get("instructors", [])
    )
    return CourseData(
        course_id=doc["course_id"],
        timezone=doc["timezone"],
        students=students,
        instructors=instructors,
        activities=tuple(activities),
        extra_triggers=tuple(extra_triggers),
    )


def load_grades(path: str | Path) -> list[tuple[str, str, float]]:
    """Instructor-supplied grade import: student_id,activity_id,grade."""
    path = Path(path)
    if not path.exists():
        return []
    grades = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        for lineno, fields in enumerate(reader, start=1):
            if lineno == 1:
                if tuple(fields) != ("student_id", "activity_id", "grade"):
                    raise ParseFailureError(
                        f"bad grades header {fields!r}", line_number=1
                    )
                continue
            if len(fields) != 3:
                raise ParseFailureError(
                    f"expected 3 fields, got {len(fields)}", line_number=lineno
                )
            try:
                grade = float(fields[2])
            except ValueError:
                raise ParseFailureError(
                    f"grade {fields[2]!r} is not a number", line_number=lineno
                )
            grades.append((fields[0], fields[1], grade))
    return grades

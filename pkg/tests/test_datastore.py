import json

import pytest

from coursebot.datastore import (
    AttendanceRow,
    DataStore,
    RecordCategory,
    RecordType,
    SurveyAnswerRow,
    ingest_course_data,
    load_grades,
)
from coursebot.errors import (
    DuplicateIdError,
    ParseFailureError,
    SchemaInvalidError,
    SchemaMismatchError,
)
from coursebot.model import ActivityKind
from tests.conftest import course_json

CAT = RecordCategory(ActivityKind.TUTORIAL_SESSION, "tut-01-wed", RecordType.ATTENDANCE)


def att_row(n: int) -> AttendanceRow:
    return AttendanceRow(
        session_id="att-tut-01-wed-0001",
        course_id="c1",
        activity_id="tut-01-wed",
        timestamp=f"2025-10-08T14:{n:02d}:00+00:00",
        student_id=f"s{n:03d}",
        display_name=f"Student {n:03d}",
    )


def test_first_append_creates_header(tmp_path):
    store = DataStore(tmp_path)
    store.append_record(CAT, att_row(1))
    store.close()
    text = (tmp_path / "tutorial_session/tut-01-wed/attendance.csv").read_text()
    lines = text.splitlines()
    assert lines[0] == "session_id,course_id,activity_id,timestamp,student_id,display_name"
    assert len(lines) == 2


def test_appends_preserve_order_and_round_trip(tmp_path):
    store = DataStore(tmp_path)
    rows = [att_row(i) for i in range(3)]
    for row in rows:
        store.append_record(CAT, row)
    assert store.load_records(CAT) == rows
    store.close()
    # byte-exact after canonical quoting: rewriting the same rows is identical
    original = (tmp_path / CAT.relative_path()).read_bytes()
    store2 = DataStore(tmp_path / "again")
    for row in rows:
        store2.append_record(CAT, row)
    store2.close()
    assert (tmp_path / "again" / CAT.relative_path()).read_bytes() == original


def test_quoting_round_trip(tmp_path):
    store = DataStore(tmp_path)
    tricky = AttendanceRow(
        "s1", "c1", "tut-01-wed", "2025-10-08T14:00:00+00:00",
        "sx", 'Name, with "quotes"\nand newline',
    )
    store.append_record(CAT, tricky)
    assert store.load_records(CAT) == [tricky]


def test_schema_mismatch(tmp_path):
    store = DataStore(tmp_path)
    survey_row = SurveyAnswerRow("sv", "EXAM", "e1", "q1", "s1", "MEDIUM", "t")
    with pytest.raises(SchemaMismatchError):
        store.append_record(CAT, survey_row)


def test_load_missing_file_is_empty(tmp_path):
    assert DataStore(tmp_path).load_records(CAT) == []


def test_parse_failure_reports_line_number(tmp_path):
    store = DataStore(tmp_path)
    for i in range(2):
        store.append_record(CAT, att_row(i))
    store.close()
    path = tmp_path / CAT.relative_path()
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("only,three,fields\n")
    with pytest.raises(ParseFailureError) as exc:
        store.load_records(CAT)
    assert exc.value.line_number == 4  # header + 2 rows + corrupt line


def test_reader_sees_prefix_during_appends(tmp_path):
    store = DataStore(tmp_path)
    reader = DataStore(tmp_path)
    for i in range(5):
        store.append_record(CAT, att_row(i))
        seen = reader.load_records(CAT)
        assert seen == [att_row(j) for j in range(i + 1)]
    store.close()


def test_directory_layout_is_category_function(tmp_path):
    cat = RecordCategory(ActivityKind.EXAM, "exam-1", RecordType.SURVEY_ANSWER)
    assert str(cat.relative_path()) == "exam/exam-1/survey_answer.csv"
    store = DataStore(tmp_path)
    store.append_record(
        cat, SurveyAnswerRow("sv", "EXAM", "exam-1", "q", "s1", "MEDIUM", "t")
    )
    store.close()
    assert (tmp_path / "exam/exam-1/survey_answer.csv").exists()
    assert store.categories_present() == [cat]


def test_pseudonymized_export_stable_and_injective(tmp_path):
    store = DataStore(tmp_path)
    store.append_record(CAT, att_row(1))
    store.append_record(CAT, att_row(2))
    store.append_record(CAT, att_row(1))
    out = store.export_pseudonymized(CAT)
    assert len(out) == 3
    assert out[0].display_name == out[2].display_name  # same student, same pseudonym
    assert out[0].display_name != out[1].display_name  # distinct students differ
    assert out[0].student_id != out[1].student_id
    assert "Student 001" not in {r.display_name for r in out}
    store.close()


def test_pseudonymized_export_empty(tmp_path):
    assert DataStore(tmp_path).export_pseudonymized(CAT) == []


# -- course data ingestion ----------------------------------------------------


def test_ingest_minimal_document():
    doc = {
        "course_id": "c1",
        "timezone": "UTC",
        "students": [{"user_id": "s1", "display_name": "Student"}],
        "activities": [
            {
                "id": "lec-1",
                "kind": "LECTURE",
                "title": "Lecture 1",
                "week": 1,
                "window_start": "2025-10-07T10:00:00Z",
                "window_end": "2025-10-07T12:00:00Z",
            }
        ],
    }
    course = ingest_course_data(json.dumps(doc))
    assert len(course.students) == 1
    assert course.activities[0].ref.kind is ActivityKind.LECTURE


def test_ingest_duplicate_activity_id():
    doc = json.loads(course_json())
    doc["activities"].append(dict(doc["activities"][0]))
    with pytest.raises(DuplicateIdError):
        ingest_course_data(json.dumps(doc))


def test_ingest_reports_all_errors():
    doc = {
        "course_id": "",
        "timezone": "UTC",
        "students": [{"user_id": "s1"}],
        "activities": [
            {
                "id": "a",
                "kind": "SEMINAR",
                "title": "x",
                "week": 0,
                "window_start": "2025-10-07T10:00:00Z",
                "window_end": "2025-10-07T12:00:00Z",
            }
        ],
    }
    with pytest.raises(SchemaInvalidError) as exc:
        ingest_course_data(json.dumps(doc))
    text = "\n".join(exc.value.errors)
    assert "course_id" in text
    assert "display_name" in text
    assert "kind" in text
    assert "week" in text
    assert len(exc.value.errors) >= 4


def test_ingest_not_json():
    with pytest.raises(SchemaInvalidError):
        ingest_course_data("{nope")


def test_ingest_full_cohort():
    course = ingest_course_data(course_json(weeks=14, students=137))
    assert len(course.students) == 137
    assert max(a.ref.week for a in course.activities) == 14


def test_load_grades(tmp_path):
    path = tmp_path / "grades.csv"
    path.write_text("student_id,activity_id,grade\ns1,exam-1,72.5\n")
    assert load_grades(path) == [("s1", "exam-1", 72.5)]
    assert load_grades(tmp_path / "missing.csv") == []
    bad = tmp_path / "bad.csv"
    bad.write_text("student_id,activity_id,grade\ns1,exam-1,notanumber\n")
    with pytest.raises(ParseFailureError):
        load_grades(bad)

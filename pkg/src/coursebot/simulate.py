"""Desk-scale synthetic semester: generates a course calendar, drives the
scheduler through virtual time, and synthesizes student behavior from a
seeded model, writing every record through the regular bot pipeline.

The behavior model (all parameters printed in the run header):

* each student has a latent skill drawn once per run;
* attendance and survey-acceptance probabilities derive from skill;
* perceived difficulty mixes the activity's latent difficulty with the
  student's skill plus noise, so perception correlates with performance;
* quiz difficulty tracks the same week's lecture difficulty, so weekly
  lecture/quiz perceptions align;
* actual exam grades derive from skill, and students who perceive the
  exam as very hard usually skip the expected-grade question.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

from .app import BotApp, parse_scenario
from .datastore import CourseData, ingest_course_data
from .errors import InvalidParamsError
from .model import (
    ButtonClick,
    DirectMessage,
    GuildEvent,
    SlashCommand,
)

WEEK1_MONDAY = datetime(2025, 10, 6, tzinfo=timezone.utc)

ATTENDANCE_BASE = 0.55
ATTENDANCE_SKILL_WEIGHT = 0.40
ACCEPT_BASE = 0.40
ACCEPT_SKILL_WEIGHT = 0.45
ABANDON_PROB = 0.05
VERY_HARD_SKIP_PROB = 0.70


def _clip(x: float, lo: float = 0.0, hi: float = 1.0) -> float:
    return max(lo, min(hi, x))


@dataclass
class StudentModel:
    user_id: str
    skill: float

    @property
    def attendance_prob(self) -> float:
        return _clip(ATTENDANCE_BASE + ATTENDANCE_SKILL_WEIGHT * self.skill, 0.05, 0.97)

    @property
    def accept_prob(self) -> float:
        return _clip(ACCEPT_BASE + ACCEPT_SKILL_WEIGHT * self.skill, 0.10, 0.95)


def build_course_document(weeks: int, students: int, seed: int) -> dict:
    """Synthesize the course-data JSON for a simulated semester."""
    student_entries = [
        {"user_id": f"s{i:03d}", "display_name": f"Student {i:03d}"}
        for i in range(1, students + 1)
    ]
    activities = []
    for week in range(1, weeks + 1):
        monday = WEEK1_MONDAY + timedelta(weeks=week - 1)
        tuesday = monday + timedelta(days=1)
        wednesday = monday + timedelta(days=2)
        thursday = monday + timedelta(days=3)
        next_monday = monday + timedelta(days=7)
        activities.extend(
            [
                {
                    "id": f"quiz-{week:02d}",
                    "kind": "QUIZ",
                    "title": f"Quiz {week}",
                    "week": week,
                    "window_start": (tuesday + timedelta(hours=10)).isoformat(),
                    "window_end": (tuesday + timedelta(hours=10, minutes=15)).isoformat(),
                },
                {
                    "id": f"lec-{week:02d}",
                    "kind": "LECTURE",
                    "title": f"Lecture {week}",
                    "week": week,
                    "window_start": (tuesday + timedelta(hours=10)).isoformat(),
                    "window_end": (tuesday + timedelta(hours=12)).isoformat(),
                    "preview_text": f"This week we cover topic {week}.",
                },
                {
                    "id": f"tut-{week:02d}-wed",
                    "kind": "TUTORIAL_SESSION",
                    "title": f"Tutorial {week} (Wednesday)",
                    "week": week,
                    "window_start": (wednesday + timedelta(hours=14)).isoformat(),
                    "window_end": (wednesday + timedelta(hours=16)).isoformat(),
                },
                {
                    "id": f"tut-{week:02d}-thu",
                    "kind": "TUTORIAL_SESSION",
                    "title": f"Tutorial {week} (Thursday)",
                    "week": week,
                    "window_start": (thursday + timedelta(hours=14)).isoformat(),
                    "window_end": (thursday + timedelta(hours=16)).isoformat(),
                },
                {
                    "id": f"ex-{week:02d}",
                    "kind": "EXERCISE",
                    "title": f"Exercise {week}",
                    "week": week,
                    "window_start": (wednesday + timedelta(hours=8)).isoformat(),
                    "window_end": (next_monday + timedelta(hours=18)).isoformat(),
                    "deadline": (next_monday + timedelta(hours=18)).isoformat(),
                },
            ]
        )
    # intermediate exam in the last week, Friday morning
    exam_friday = WEEK1_MONDAY + timedelta(weeks=weeks - 1, days=4)
    activities.append(
        {
            "id": "exam-intermediate",
            "kind": "EXAM",
            "title": "Intermediate exam",
            "week": weeks,
            "window_start": (exam_friday + timedelta(hours=10)).isoformat(),
            "window_end": (exam_friday + timedelta(hours=12)).isoformat(),
        }
    )
    return {
        "course_id": f"sim-{seed:04d}",
        "timezone": "UTC",
        "students": student_entries,
        "instructors": [
            {"user_id": "i001", "display_name": "Instructor One"},
        ],
        "activities": activities,
    }


@dataclass
class SimulationResult:
    course: CourseData
    app: BotApp
    transcript_path: str


def run_simulation(weeks: int, students: int, seed: int, out_dir) -> SimulationResult:
    if weeks < 1 or students < 1:
        raise InvalidParamsError(
            f"weeks and students must be >= 1 (got weeks={weeks}, students={students})"
        )
    rng = random.Random(seed)
    document = build_course_document(weeks, students, seed)
    course = ingest_course_data(json.dumps(document))
    out_dir = str(out_dir)

    print(
        f"simulate: weeks={weeks} students={students} seed={seed}\n"
        f"  attendance_prob = clip({ATTENDANCE_BASE} + {ATTENDANCE_SKILL_WEIGHT}*skill)\n"
        f"  accept_prob     = clip({ACCEPT_BASE} + {ACCEPT_SKILL_WEIGHT}*skill)\n"
        f"  abandon_prob    = {ABANDON_PROB}, very_hard_skip = {VERY_HARD_SKIP_PROB}\n"
        f"  skill ~ N(0.62, 0.16) clipped to [0.05, 0.98]"
    )

    models = {
        s.user_id: StudentModel(s.user_id, _clip(rng.gauss(0.62, 0.16), 0.05, 0.98))
        for s in course.students
    }
    # latent difficulty per activity; quizzes mirror their week's lecture
    lecture_difficulty = {
        week: _clip(rng.uniform(0.25, 0.75), 0.05, 0.95)
        for week in range(1, weeks + 1)
    }
    difficulty: dict[str, float] = {}
    for act in course.activities:
        ref = act.ref
        base = lecture_difficulty[ref.week]
        if ref.kind.value == "LECTURE":
            difficulty[ref.id] = base
        elif ref.kind.value == "QUIZ":
            difficulty[ref.id] = _clip(base + rng.gauss(0.0, 0.06), 0.05, 0.95)
        elif ref.kind.value == "EXAM":
            difficulty[ref.id] = _clip(0.5 + rng.gauss(0.0, 0.05), 0.05, 0.95)
        else:
            difficulty[ref.id] = _clip(base + rng.gauss(0.0, 0.10), 0.05, 0.95)

    app = BotApp(course, out_dir, start_time=WEEK1_MONDAY)
    instructor = course.instructors[0]
    students_by_id = {s.user_id: s for s in course.students}

    # real exam grades, imported the way an instructor would supply them
    exam_grades = {
        uid: round(
            _clip(0.15 + 0.85 * model.skill + rng.gauss(0.0, 0.07)) * 100, 1
        )
        for uid, model in models.items()
    }
    _write_grades(app, exam_grades, "exam-intermediate")

    # pre-scheduled instructor-driven attendance rounds (keyword on-site)
    pending: list[tuple[datetime, int, GuildEvent]] = []
    seq = 0

    def schedule(at: datetime, event: GuildEvent):
        nonlocal seq
        seq += 1
        heapq.heappush(pending, (at, seq, event))

    for week_plan in app.calendar.weeks:
        for ref in week_plan.activities:
            if ref.kind.value != "TUTORIAL_SESSION":
                continue
            keyword = f"w{ref.week}{ref.id[-3:]}"
            start_at = ref.window_start + timedelta(minutes=5)
            schedule(
                start_at,
                SlashCommand(
                    instructor,
                    "attendance-start",
                    (("keyword", keyword), ("activity_id", ref.id)),
                    start_at,
                ),
            )
            for student in course.students:
                model = models[student.user_id]
                if rng.random() < model.attendance_prob:
                    at = start_at + timedelta(
                        seconds=rng.randint(30, 15 * 60)
                    )
                    schedule(at, DirectMessage(student, keyword, at))
            stop_at = start_at + timedelta(minutes=25)
            schedule(
                stop_at,
                SlashCommand(
                    instructor,
                    "attendance-stop",
                    (("activity_id", ref.id),),
                    stop_at,
                ),
            )

    # reactive survey behavior: watch the transcript for new buttoned DMs
    transcript = app.gateway.transcript
    scanned = 0
    # what each student answered on a survey's difficulty question
    difficulty_answers: dict[tuple[str, str], str] = {}

    def decide_answer(student_id: str, activity_id: str, question_id: str,
                      n_options: int) -> str:
        model = models[student_id]
        if question_id == "difficulty":
            perceived = _clip(
                difficulty[activity_id]
                - 0.55 * (model.skill - 0.5)
                + rng.gauss(0.0, 0.13)
            )
            return f"opt{min(4, int(perceived * 5))}"
        if question_id == "expected_grade":
            estimate = _clip(
                0.2 + 0.75 * model.skill
                - 0.15 * difficulty[activity_id]
                + rng.gauss(0.0, 0.08)
            )
            return f"opt{min(4, int(estimate * 5))}"
        return f"opt{rng.randrange(n_options)}"

    def react_to_new_messages():
        nonlocal scanned
        entries = transcript.entries
        while scanned < len(entries):
            entry = entries[scanned]
            scanned += 1
            payload = entry.payload
            if entry.direction != "OUT" or payload.get("action") != "send_dm":
                continue
            student = students_by_id.get(payload["to"])
            components = payload.get("components") or []
            if student is None or not components:
                continue
            model = models[student.user_id]
            message_id = payload["message_id"]
            first_parts = components[0].split(":")

            if first_parts[-1] == "accept":
                if rng.random() < model.accept_prob:
                    at = entry.at + timedelta(seconds=rng.randint(60, 24 * 3600))
                    schedule(at, ButtonClick(student, message_id, components[0], at))
                continue  # else: invitation ignored; the session will expire

            survey_id, question_id = first_parts[1], first_parts[2]
            activity_id = survey_id.removesuffix("-survey")
            if rng.random() < ABANDON_PROB:
                continue  # abandons mid-survey
            if question_id == "expected_grade":
                rated = difficulty_answers.get((survey_id, student.user_id))
                if rated == "opt4" and rng.random() < VERY_HARD_SKIP_PROB:
                    continue  # avoids predicting a poor grade
            token = decide_answer(
                student.user_id, activity_id, question_id, len(components)
            )
            if question_id == "difficulty":
                difficulty_answers[(survey_id, student.user_id)] = token
            component_id = next(
                c for c in components if c.split(":")[-1] == token
            )
            at = entry.at + timedelta(seconds=rng.randint(20, 6 * 3600))
            schedule(at, ButtonClick(student, message_id, component_id, at))

    end_of_course = WEEK1_MONDAY + timedelta(weeks=weeks, days=2)

    while True:
        react_to_new_messages()
        next_event = pending[0][0] if pending else None
        next_trigger = app.scheduler.next_due()
        candidates = [t for t in (next_event, next_trigger) if t is not None]
        if not candidates:
            if app.gateway.pending_count() > 0:
                app.drain()
                continue
            if scanned < len(transcript.entries):
                continue
            break
        target = min(candidates)
        app.advance_time(max(target, app.now()))
        while pending and pending[0][0] <= app.now():
            _, _, event = heapq.heappop(pending)
            app.submit_event(event)

    # let the last surveys expire so respondent counts settle
    app.advance_time(end_of_course + timedelta(days=8))
    app.drain()
    app.shutdown()

    transcript_path = str(app.store.root / "transcript.json")
    with open(transcript_path, "w", encoding="utf-8") as fh:
        fh.write(transcript.to_json())

    course_path = app.store.root / "course.json"
    course_path.write_text(
        json.dumps(document, indent=2, sort_keys=True), encoding="utf-8"
    )

    print(
        f"simulate: done. {len(transcript.entries)} transcript entries, "
        f"data in {app.store.root}"
    )
    return SimulationResult(course=course, app=app, transcript_path=transcript_path)


def _write_grades(app: BotApp, grades: dict[str, float], activity_id: str) -> None:
    import csv

    path = app.store.root / "grades.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("student_id", "activity_id", "grade"))
        for uid in sorted(grades):
            writer.writerow((uid, activity_id, grades[uid]))


def run_scenario_file(course: CourseData, scenario_text: str, out_dir) -> BotApp:
    """Replay an explicit JSON scenario against a fresh bot."""
    app = BotApp(course, out_dir)
    users = {u.user_id: u for u in (*course.students, *course.instructors)}
    scenario = parse_scenario(scenario_text, users)
    app.gateway.run_script(scenario)
    app.shutdown()
    transcript_path = app.store.root / "transcript.json"
    transcript_path.write_text(
        app.gateway.transcript.to_json(), encoding="utf-8"
    )
    return app

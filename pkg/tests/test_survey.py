import itertools
import random
from collections import Counter

import pytest

from coursebot.datastore import DataStore, RecordCategory, RecordType
from coursebot.errors import (
    AlreadyAnsweredError,
    AlreadyLaunchedError,
    EmptyRosterError,
    ForeignMessageError,
    StaleSessionError,
    UnknownSurveyError,
)
from coursebot.model import ActivityKind, ActivityRef, SendDM, DisableComponents, utc
from coursebot.survey import (
    OptionsKind,
    Question,
    SessionPhase,
    SurveyDefinition,
    SurveyEngine,
    render_results_embed,
    standard_survey,
)
from tests.conftest import exam, student, tutorial

T0 = utc(2025, 10, 10, 12)


class Harness:
    """Assigns message ids to sends the way the gateway does."""

    def __init__(self, engine: SurveyEngine):
        self.engine = engine
        self.counter = itertools.count(1)
        self.inbox: dict[str, list] = {}

    def deliver(self, actions):
        for action in actions:
            if isinstance(action, SendDM):
                message_id = f"m{next(self.counter):04d}"
                if action.tag:
                    self.engine.register_message(message_id, action.tag)
                self.inbox.setdefault(action.to, []).append((message_id, action))

    def last_message(self, user_id):
        return self.inbox[user_id][-1]


@pytest.fixture
def engine(tmp_path):
    return SurveyEngine(DataStore(tmp_path))


def launch(engine, defn, roster, at=T0):
    harness = Harness(engine)
    harness.deliver(engine.launch(defn, roster, at))
    return harness


def accept_and_answer(engine, harness, user, answers, at=T0):
    """Clicks Accept, then the given option index for each question."""
    message_id, action = harness.last_message(user.user_id)
    harness.deliver(
        engine.on_button(user, message_id, action.components[0].component_id, at)
    )
    for index in answers:
        message_id, action = harness.last_message(user.user_id)
        harness.deliver(
            engine.on_button(
                user, message_id, action.components[index].component_id, at
            )
        )


def test_launch_one_invitation_per_student(engine):
    roster = [student(i) for i in range(1, 6)]
    actions = engine.launch(standard_survey(tutorial()), roster, T0)
    invites = [a for a in actions if isinstance(a, SendDM)]
    assert len(invites) == 5
    assert all(a.components[0].label == "Accept" for a in invites)


def test_launch_empty_roster(engine):
    with pytest.raises(EmptyRosterError):
        engine.launch(standard_survey(tutorial()), [], T0)


def test_relaunch_rejected(engine):
    defn = standard_survey(tutorial())
    engine.launch(defn, [student(1)], T0)
    with pytest.raises(AlreadyLaunchedError):
        engine.launch(defn, [student(1)], T0)


def test_accept_starts_first_question(engine):
    harness = launch(engine, standard_survey(exam()), [student(1)])
    message_id, action = harness.last_message("s001")
    actions = engine.on_button(student(1), message_id, action.components[0].component_id, T0)
    assert isinstance(actions[0], DisableComponents)
    question = actions[1]
    assert isinstance(question, SendDM)
    labels = [b.label for b in question.components]
    assert labels == ["Very easy", "Easy", "Medium", "Hard", "Very hard"]
    session = engine.sessions[("exam-1-survey", "s001")]
    assert session.phase is SessionPhase.ANSWERING


def test_two_question_walkthrough(engine):
    harness = launch(engine, standard_survey(exam()), [student(1)])
    accept_and_answer(engine, harness, student(1), [2, 3])  # MEDIUM then B60
    session = engine.sessions[("exam-1-survey", "s001")]
    assert session.phase is SessionPhase.COMPLETED
    assert session.answers == {"difficulty": "MEDIUM", "expected_grade": "B60"}
    final_body = harness.last_message("s001")[1].body
    assert "Thank you" in final_body


def test_answer_click_disables_and_is_immutable(engine):
    harness = launch(engine, standard_survey(tutorial()), [student(1)])
    message_id, action = harness.last_message("s001")
    harness.deliver(
        engine.on_button(student(1), message_id, action.components[0].component_id, T0)
    )
    qid, qaction = harness.last_message("s001")
    harness.deliver(
        engine.on_button(student(1), qid, qaction.components[2].component_id, T0)
    )
    with pytest.raises(AlreadyAnsweredError):
        engine.on_button(student(1), qid, qaction.components[4].component_id, T0)
    session = engine.sessions[("tut-01-wed-survey", "s001")]
    assert session.answers == {"difficulty": "MEDIUM"}


def test_foreign_message_rejected(engine):
    harness = launch(engine, standard_survey(tutorial()), [student(1), student(2)])
    message_id, action = harness.last_message("s001")
    with pytest.raises(ForeignMessageError):
        # student 2 clicking student 1's invite
        engine.on_button(student(2), message_id, action.components[0].component_id, T0)
    with pytest.raises(ForeignMessageError):
        engine.on_button(student(3), message_id, action.components[0].component_id, T0)


def test_expired_session_rejects_clicks(engine):
    harness = launch(engine, standard_survey(tutorial()), [student(1)])
    late = utc(2025, 10, 20, 12)  # past the 7-day default expiry
    assert engine.expire_stale(late) == 1
    message_id, action = harness.last_message("s001")
    with pytest.raises(StaleSessionError):
        engine.on_button(student(1), message_id, action.components[0].component_id, late)
    assert engine.sessions[("tut-01-wed-survey", "s001")].phase is SessionPhase.EXPIRED


def test_completed_before_expiry_not_expired(engine):
    harness = launch(engine, standard_survey(tutorial()), [student(1)])
    accept_and_answer(engine, harness, student(1), [1])
    engine.expire_stale(utc(2025, 10, 20, 12))
    assert engine.sessions[("tut-01-wed-survey", "s001")].phase is SessionPhase.COMPLETED


def test_aggregate_counts(engine):
    harness = launch(
        engine, standard_survey(tutorial()), [student(i) for i in range(1, 4)]
    )
    accept_and_answer(engine, harness, student(1), [2])
    accept_and_answer(engine, harness, student(2), [2])
    accept_and_answer(engine, harness, student(3), [3])
    results = engine.aggregate("tut-01-wed-survey")
    counts = dict(results.questions[0].counts)
    assert counts == {"VERY_EASY": 0, "EASY": 0, "MEDIUM": 2, "HARD": 1, "VERY_HARD": 0}
    assert results.respondents == 3


def test_aggregate_unknown_survey(engine):
    with pytest.raises(UnknownSurveyError):
        engine.aggregate("nope")


def test_aggregate_zero_sessions(engine):
    engine.launch(standard_survey(tutorial()), [student(1)], T0)
    results = engine.aggregate("tut-01-wed-survey")
    assert results.respondents == 0
    assert all(count == 0 for _, count in results.questions[0].counts)


def test_aggregate_equals_brute_force_over_csv(engine, tmp_path):
    rng = random.Random(7)
    roster = [student(i) for i in range(1, 21)]
    harness = launch(engine, standard_survey(exam()), roster)
    for user in roster:
        if rng.random() < 0.2:
            continue  # never accepts
        n_answers = rng.choice([1, 1, 2, 2, 2])
        accept_and_answer(
            engine, harness, user,
            [rng.randrange(5) for _ in range(n_answers)][:n_answers],
        )
    results = engine.aggregate("exam-1-survey")
    rows = engine.store.load_records(
        RecordCategory(ActivityKind.EXAM, "exam-1", RecordType.SURVEY_ANSWER)
    )
    for question in results.questions:
        oracle = Counter(
            r.answer_code for r in rows if r.question_id == question.question_id
        )
        for code, count in question.counts:
            assert count == oracle.get(code, 0)
        assert question.answered == sum(oracle.values())


def test_aggregate_permutation_invariant(tmp_path):
    """Arrival order of answers never changes the aggregate."""
    orders = [[0, 1, 2], [2, 1, 0], [1, 2, 0]]
    snapshots = []
    for i, order in enumerate(orders):
        engine = SurveyEngine(DataStore(tmp_path / str(i)))
        roster = [student(n) for n in range(1, 4)]
        harness = launch(engine, standard_survey(tutorial()), roster)
        answers = {0: [1], 1: [2], 2: [4]}
        for idx in order:
            accept_and_answer(engine, harness, roster[idx], answers[idx])
        snapshots.append(engine.aggregate("tut-01-wed-survey").questions)
    assert snapshots[0] == snapshots[1] == snapshots[2]


def test_render_results_embed_percentages(engine):
    harness = launch(
        engine, standard_survey(tutorial()), [student(i) for i in range(1, 4)]
    )
    accept_and_answer(engine, harness, student(1), [2])
    accept_and_answer(engine, harness, student(2), [2])
    accept_and_answer(engine, harness, student(3), [3])
    embed = render_results_embed(engine.aggregate("tut-01-wed-survey"))
    field = embed.fields[0]
    assert "MEDIUM 2 (66.7 %)" in field.value
    assert "HARD 1 (33.3 %)" in field.value
    lines = field.value.splitlines()
    assert len(lines) == 5  # canonical scale order, zeros included
    assert lines[0].startswith("VERY_EASY")
    assert lines[4].startswith("VERY_HARD")


def test_render_empty_results(engine):
    engine.launch(standard_survey(tutorial()), [student(1)], T0)
    embed = render_results_embed(engine.aggregate("tut-01-wed-survey"))
    assert embed.fields[0].value == "no responses"


def test_custom_question_bounds():
    with pytest.raises(ValueError):
        Question("q", "too many", OptionsKind.CUSTOM, tuple(str(i) for i in range(11)))
    with pytest.raises(ValueError):
        Question("q", "too few", OptionsKind.CUSTOM, ("only",))
    q = Question("q", "ok", OptionsKind.CUSTOM, ("yes", "no"))
    assert q.choices() == (("yes", "yes"), ("no", "no"))


def test_survey_definition_invariants():
    with pytest.raises(ValueError):
        SurveyDefinition("s", tutorial(), ())
    q = Question("q1", "p", OptionsKind.DIFFICULTY_SCALE)
    with pytest.raises(ValueError):
        SurveyDefinition("s", tutorial(), (q, q))


def test_standard_templates():
    assert [q.question_id for q in standard_survey(exam()).questions] == [
        "difficulty", "expected_grade",
    ]
    assert [q.question_id for q in standard_survey(tutorial()).questions] == [
        "difficulty",
    ]
    lecture = ActivityRef(
        ActivityKind.LECTURE, "lec-1", "Lecture 1", 1,
        utc(2025, 10, 7, 10), utc(2025, 10, 7, 12),
    )
    assert "content" in standard_survey(lecture).questions[0].prompt

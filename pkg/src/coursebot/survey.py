"""Activity surveys: definitions, the per-student DM interaction state
machine (invite -> accept -> one buttoned question at a time -> thank-you),
aggregation, and the instructor results embed.

Every answer click disables the buttons on the answered message, so the
student sees the answer is locked in; answers are immutable once clicked.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timedelta
from enum import Enum
from typing import Callable

from .datastore import DataStore, RecordCategory, RecordType, SurveyAnswerRow, format_timestamp
from .errors import (
    AlreadyAnsweredError,
    AlreadyLaunchedError,
    EmptyRosterError,
    ForeignMessageError,
    StaleSessionError,
    UnknownSurveyError,
)
from .model import (
    ActivityKind,
    ActivityRef,
    Button,
    DIFFICULTY_LABELS,
    Difficulty,
    DisableComponents,
    Embed,
    EmbedField,
    GradeBand,
    OutboundAction,
    SendDM,
    UserRef,
)


class OptionsKind(Enum):
    DIFFICULTY_SCALE = "DIFFICULTY_SCALE"
    GRADE_BANDS = "GRADE_BANDS"
    CUSTOM = "CUSTOM"


# two button rows of five is the layout ceiling
MAX_CUSTOM_OPTIONS = 10


@dataclass(frozen=True)
class Question:
    question_id: str
    prompt: str
    options: OptionsKind
    custom_labels: tuple[str, ...] = ()

    def __post_init__(self):
        if ":" in self.question_id:
            raise ValueError("question_id must not contain ':'")
        if self.options is OptionsKind.CUSTOM:
            if not 2 <= len(self.custom_labels) <= MAX_CUSTOM_OPTIONS:
                raise ValueError(
                    f"CUSTOM question needs 2..{MAX_CUSTOM_OPTIONS} options"
                )

    def choices(self) -> tuple[tuple[str, str], ...]:
        """Ordered (answer_code, display label) pairs."""
        if self.options is OptionsKind.DIFFICULTY_SCALE:
            return tuple((d.name, DIFFICULTY_LABELS[d]) for d in Difficulty)
        if self.options is OptionsKind.GRADE_BANDS:
            return tuple((b.name, b.label) for b in GradeBand)
        return tuple((label, label) for label in self.custom_labels)


@dataclass(frozen=True)
class SurveyDefinition:
    survey_id: str
    activity: ActivityRef
    questions: tuple[Question, ...]

    def __post_init__(self):
        if not self.questions:
            raise ValueError("survey needs at least one question")
        ids = [q.question_id for q in self.questions]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate question ids: {ids}")
        if ":" in self.survey_id:
            raise ValueError("survey_id must not contain ':'")


class SessionPhase(Enum):
    INVITED = "INVITED"
    ANSWERING = "ANSWERING"
    COMPLETED = "COMPLETED"
    EXPIRED = "EXPIRED"


@dataclass
class SurveySession:
    survey_id: str
    student: UserRef
    invited_at: datetime
    phase: SessionPhase = SessionPhase.INVITED
    question_index: int = 0  # meaningful while ANSWERING
    answers: dict[str, str] = field(default_factory=dict)  # question_id -> code
    message_ids: dict[str, str] = field(default_factory=dict)  # question_id -> message_id

    INVITE_KEY = "__invite__"


@dataclass(frozen=True)
class QuestionCount:
    question_id: str
    prompt: str
    counts: tuple[tuple[str, int], ...]  # (code, count) in canonical order
    answered: int


@dataclass(frozen=True)
class SurveyResults:
    survey_id: str
    activity: ActivityRef
    questions: tuple[QuestionCount, ...]
    respondents: int  # completed sessions


def standard_survey(activity: ActivityRef, survey_id: str | None = None) -> SurveyDefinition:
    """The per-activity-kind survey templates.

    Exams additionally ask for the expected grade in a percentage range;
    everything else asks one difficulty question.
    """
    questions = [
        Question(
            question_id="difficulty",
            prompt=_difficulty_prompt(activity),
            options=OptionsKind.DIFFICULTY_SCALE,
        )
    ]
    if activity.kind is ActivityKind.EXAM:
        questions.append(
            Question(
                question_id="expected_grade",
                prompt=f"What grade do you expect in {activity.title}?",
                options=OptionsKind.GRADE_BANDS,
            )
        )
    return SurveyDefinition(
        survey_id=survey_id or f"{activity.id}-survey",
        activity=activity,
        questions=tuple(questions),
    )


def _difficulty_prompt(activity: ActivityRef) -> str:
    if activity.kind is ActivityKind.LECTURE:
        return f"How difficult was the content of {activity.title}?"
    return f"How difficult was {activity.title}?"


class SurveyEngine:
    """Owns survey definitions and every per-student session.

    ``observer(kind, data)`` is called on every recorded answer and
    completion, feeding the live change stream.
    """

    def __init__(self, store: DataStore | None = None,
                 expiry: timedelta = timedelta(days=7),
                 observer: Callable[[str, dict], None] | None = None):
        self.store = store
        self.expiry = expiry
        self.observer = observer
        self.definitions: dict[str, SurveyDefinition] = {}
        self.sessions: dict[tuple[str, str], SurveySession] = {}
        # earliest instant any live session can expire; sweeps are skipped
        # before it (expire_stale runs on every clock advance)
        self._next_expiry: datetime | None = None

    def _notify(self, kind: str, **data) -> None:
        if self.observer is not None:
            self.observer(kind, data)

    # -- launch --------------------------------------------------------------

    def launch(
        self, defn: SurveyDefinition, roster: list[UserRef], now: datetime
    ) -> list[OutboundAction]:
        """One invitation DM (with an Accept button) per roster student."""
        if defn.survey_id in self.definitions:
            raise AlreadyLaunchedError(defn.survey_id)
        if not roster:
            raise EmptyRosterError(defn.survey_id)
        self.definitions[defn.survey_id] = defn
        batch_expiry = now + self.expiry
        if self._next_expiry is None or batch_expiry < self._next_expiry:
            self._next_expiry = batch_expiry
        actions: list[OutboundAction] = []
        for student in roster:
            self.sessions[(defn.survey_id, student.user_id)] = SurveySession(
                survey_id=defn.survey_id,
                student=student,
                invited_at=now,
            )
            actions.append(
                SendDM(
                    to=student.user_id,
                    body=(
                        f"Hi {student.display_name}! Please take a short survey "
                        f"about {defn.activity.title}."
                    ),
                    components=(
                        Button(f"survey:{defn.survey_id}:accept", "Accept"),
                    ),
                    tag=("survey", defn.survey_id, student.user_id,
                         SurveySession.INVITE_KEY),
                )
            )
        return actions

    # -- message-id registration (called by the gateway wiring after sends) --

    def register_message(self, message_id: str, tag: tuple) -> None:
        _, survey_id, user_id, question_key = tag
        session = self.sessions.get((survey_id, user_id))
        if session is not None:
            session.message_ids[question_key] = message_id

    # -- clicks ---------------------------------------------------------------

    def owns_component(self, component_id: str) -> bool:
        return component_id.startswith("survey:")

    def on_button(
        self, student: UserRef, message_id: str, component_id: str, now: datetime
    ) -> list[OutboundAction]:
        parts = component_id.split(":")
        if len(parts) < 3 or parts[0] != "survey":
            raise ForeignMessageError(component_id)
        survey_id = parts[1]
        defn = self.definitions.get(survey_id)
        session = self.sessions.get((survey_id, student.user_id))
        if defn is None or session is None:
            raise ForeignMessageError(
                f"{component_id} is not part of a survey for {student.user_id}"
            )
        if session.phase is SessionPhase.EXPIRED:
            raise StaleSessionError(survey_id)

        if parts[2] == "accept":
            return self._on_accept(defn, session, message_id, now)
        return self._on_answer(defn, session, message_id, parts, now)

    def _on_accept(
        self, defn: SurveyDefinition, session: SurveySession,
        message_id: str, now: datetime
    ) -> list[OutboundAction]:
        registered = session.message_ids.get(SurveySession.INVITE_KEY)
        if registered is not None and registered != message_id:
            raise ForeignMessageError(message_id)
        if session.phase is not SessionPhase.INVITED:
            raise AlreadyAnsweredError("survey already accepted")
        session.phase = SessionPhase.ANSWERING
        session.question_index = 0
        return [
            DisableComponents(message_id),
            self._question_dm(defn, session, 0),
        ]

    def _on_answer(
        self, defn: SurveyDefinition, session: SurveySession,
        message_id: str, parts: list[str], now: datetime
    ) -> list[OutboundAction]:
        if len(parts) != 4:
            raise ForeignMessageError(":".join(parts))
        question_id, option_token = parts[2], parts[3]
        question = next(
            (q for q in defn.questions if q.question_id == question_id), None
        )
        if question is None:
            raise ForeignMessageError(f"unknown question {question_id}")
        registered = session.message_ids.get(question_id)
        if registered is not None and registered != message_id:
            raise ForeignMessageError(message_id)
        if question_id in session.answers:
            raise AlreadyAnsweredError(question_id)
        if session.phase is not SessionPhase.ANSWERING:
            raise AlreadyAnsweredError(f"session is {session.phase.value}")

        choices = question.choices()
        if not option_token.startswith("opt") or not option_token[3:].isdigit():
            raise ForeignMessageError(option_token)
        index = int(option_token[3:])
        if not 0 <= index < len(choices):
            raise ForeignMessageError(option_token)
        code = choices[index][0]

        session.answers[question_id] = code
        self._persist_answer(defn, session, question_id, code, now)
        self._notify(
            "survey_answer",
            survey_id=defn.survey_id,
            student_id=session.student.user_id,
            question_id=question_id,
            answer_code=code,
        )

        actions: list[OutboundAction] = [DisableComponents(message_id)]
        next_index = session.question_index + 1
        if next_index < len(defn.questions):
            session.question_index = next_index
            actions.append(self._question_dm(defn, session, next_index))
        else:
            session.phase = SessionPhase.COMPLETED
            self._notify(
                "survey_completed",
                survey_id=defn.survey_id,
                student_id=session.student.user_id,
            )
            actions.append(
                SendDM(
                    to=session.student.user_id,
                    body="Thank you! Your feedback has been recorded.",
                )
            )
        return actions

    def _question_dm(
        self, defn: SurveyDefinition, session: SurveySession, index: int
    ) -> SendDM:
        question = defn.questions[index]
        buttons = tuple(
            Button(
                f"survey:{defn.survey_id}:{question.question_id}:opt{i}", label
            )
            for i, (_, label) in enumerate(question.choices())
        )
        return SendDM(
            to=session.student.user_id,
            body=question.prompt,
            components=buttons,
            tag=("survey", defn.survey_id, session.student.user_id,
                 question.question_id),
        )

    def _persist_answer(
        self, defn: SurveyDefinition, session: SurveySession,
        question_id: str, code: str, now: datetime
    ) -> None:
        if self.store is None:
            return
        activity = defn.activity
        self.store.append_record(
            RecordCategory(activity.kind, activity.id, RecordType.SURVEY_ANSWER),
            SurveyAnswerRow(
                survey_id=defn.survey_id,
                activity_kind=activity.kind.value,
                activity_id=activity.id,
                question_id=question_id,
                student_id=session.student.user_id,
                answer_code=code,
                timestamp=format_timestamp(now),
            ),
        )

    # -- expiry ----------------------------------------------------------------

    def expire_stale(self, now: datetime) -> int:
        """Mark sessions not completed within the expiry window EXPIRED."""
        if self._next_expiry is None or now < self._next_expiry:
            return 0
        expired = 0
        next_expiry: datetime | None = None
        for session in self.sessions.values():
            if session.phase in (SessionPhase.INVITED, SessionPhase.ANSWERING):
                due = session.invited_at + self.expiry
                if due <= now:
                    session.phase = SessionPhase.EXPIRED
                    expired += 1
                elif next_expiry is None or due < next_expiry:
                    next_expiry = due
        self._next_expiry = next_expiry
        return expired

    # -- aggregation -------------------------------------------------------------

    def aggregate(self, survey_id: str) -> SurveyResults:
        defn = self.definitions.get(survey_id)
        if defn is None:
            raise UnknownSurveyError(survey_id)
        sessions = [
            s for (sid, _), s in self.sessions.items() if sid == survey_id
        ]
        questions = []
        for question in defn.questions:
            counts = {code: 0 for code, _ in question.choices()}
            answered = 0
            for session in sessions:
                code = session.answers.get(question.question_id)
                if code is not None:
                    counts[code] += 1
                    answered += 1
            questions.append(
                QuestionCount(
                    question_id=question.question_id,
                    prompt=question.prompt,
                    counts=tuple(counts.items()),
                    answered=answered,
                )
            )
        respondents = sum(
            1 for s in sessions if s.phase is SessionPhase.COMPLETED
        )
        return SurveyResults(
            survey_id=survey_id,
            activity=defn.activity,
            questions=tuple(questions),
            respondents=respondents,
        )


def render_results_embed(results: SurveyResults) -> Embed:
    """Instructor-facing summary: one field per question, counts and percentages."""
    from .analytics import pct_1dp

    fields = []
    for question in results.questions:
        if question.answered == 0:
            value = "no responses"
        else:
            lines = [
                f"{code} {count} ({pct_1dp(count, question.answered)} %)"
                for code, count in question.counts
            ]
            value = "\n".join(lines)
        fields.append(EmbedField(name=question.prompt, value=value))
    return Embed(
        title=f"Survey results: {results.activity.title} "
        f"({results.respondents} respondents)",
        fields=tuple(fields),
    )

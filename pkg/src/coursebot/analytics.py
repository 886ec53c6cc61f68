"""Learning-analytics computations over the stored interaction records:
difficulty distributions, expected-vs-actual grade comparison, rank
correlations, cohort reconstruction from rounded percentages, and the
machine-readable report document the dashboard renders.

All functions are pure over loaded snapshots and safe to call from API
handlers concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

from .datastore import DataStore, RecordType, SurveyAnswerRow
from .errors import (
    DegenerateSeriesError,
    EmptyResponsesError,
    LengthMismatchError,
    NoConsistentCohortError,
    OutOfRangeError,
    TooFewSamplesError,
)
from .model import (
    ActivityKind,
    Difficulty,
    GradeBand,
    grade_band_of,
)


def pct_1dp(count: float, total: float) -> Decimal:
    """Percentage rounded half-up to one decimal place."""
    return (Decimal(count) * 100 / Decimal(total)).quantize(
        Decimal("0.1"), rounding=ROUND_HALF_UP
    )


@dataclass(frozen=True)
class OptionCount:
    option: str
    count: int
    percentage: float  # half-up, 1 decimal


@dataclass(frozen=True)
class Distribution:
    options: tuple[OptionCount, ...]
    total: int

    def count_of(self, option: str) -> int:
        for oc in self.options:
            if oc.option == option:
                return oc.count
        return 0

    def as_dict(self) -> dict:
        return {
            "options": [
                {"option": oc.option, "count": oc.count, "percentage": oc.percentage}
                for oc in self.options
            ],
            "total": self.total,
        }


@dataclass(frozen=True)
class PairedComparison:
    bands: tuple[str, ...]
    expected: tuple[int, ...]
    actual: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "bands": list(self.bands),
            "expected": list(self.expected),
            "actual": list(self.actual),
            "expected_total": sum(self.expected),
            "actual_total": sum(self.actual),
        }


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    n: int
    question_pair: str

    def as_dict(self) -> dict:
        return {"rho": self.rho, "n": self.n, "question_pair": self.question_pair}


def counted_distribution(codes: list[str], canonical: list[str]) -> Distribution:
    """Count occurrences of each canonical option; used by every figure."""
    if not codes:
        raise EmptyResponsesError("no responses to count")
    counts = {c: 0 for c in canonical}
    for code in codes:
        if code not in counts:  # unknown codes get appended after canonical
            counts[code] = 0
        counts[code] += 1
    total = len(codes)
    return Distribution(
        options=tuple(
            OptionCount(option, count, float(pct_1dp(count, total)))
            for option, count in counts.items()
        ),
        total=total,
    )


def difficulty_distribution(responses: list[Difficulty]) -> Distribution:
    """Counts and percentages per difficulty level, canonical order."""
    return counted_distribution(
        [r.name for r in responses], [d.name for d in Difficulty]
    )


def expected_vs_actual(
    expected: list[GradeBand], actual: list[float]
) -> PairedComparison:
    """Expected-grade answers vs imported real grades, both bucketed per band."""
    for value in actual:
        if not 0 <= value <= 100:
            raise OutOfRangeError(f"grade {value!r} outside [0, 100]")
    bands = tuple(b.name for b in GradeBand)
    expected_counts = {b: 0 for b in bands}
    for band in expected:
        expected_counts[band.name] += 1
    actual_counts = {b: 0 for b in bands}
    for value in actual:
        actual_counts[grade_band_of(value).name] += 1
    return PairedComparison(
        bands=bands,
        expected=tuple(expected_counts[b] for b in bands),
        actual=tuple(actual_counts[b] for b in bands),
    )


# ---------------------------------------------------------------------------
# Rank correlation
# ---------------------------------------------------------------------------


def _average_ranks(values) -> list[Fraction]:
    """1-based ranks, ties receive the average of their positions."""
    n = len(values)
    order = sorted(range(n), key=lambda i: values[i])
    ranks: list[Fraction] = [Fraction(0)] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        rank = Fraction((i + 1) + (j + 1), 2)
        for k in range(i, j + 1):
            ranks[order[k]] = rank
        i = j + 1
    return ranks


def rank_correlation(x, y, question_pair: str = "") -> CorrelationReport:
    """Spearman rho with average-rank tie handling.

    Exact rational arithmetic on the ranks, so perfectly (anti)monotone
    series return exactly +-1.0. Constant series are an error, never 0.
    """
    if len(x) != len(y):
        raise LengthMismatchError(f"|x|={len(x)} |y|={len(y)}")
    if len(x) < 2:
        raise TooFewSamplesError(f"n={len(x)}")
    rx = _average_ranks(list(x))
    ry = _average_ranks(list(y))
    n = len(rx)
    mean = Fraction(n + 1, 2)  # rank mean is fixed under average ranking
    sxy = sum(((a - mean) * (b - mean) for a, b in zip(rx, ry)), Fraction(0))
    sxx = sum(((a - mean) ** 2 for a in rx), Fraction(0))
    syy = sum(((b - mean) ** 2 for b in ry), Fraction(0))
    if sxx == 0 or syy == 0:
        raise DegenerateSeriesError("constant series has undefined rank correlation")
    if sxy * sxy == sxx * syy:
        rho = 1.0 if sxy > 0 else -1.0
    else:
        rho = float(sxy) / math.sqrt(float(sxx) * float(syy))
    return CorrelationReport(rho=rho, n=n, question_pair=question_pair)


def mean_ordinal(dist: Distribution) -> float:
    """Mean difficulty ordinal of a difficulty distribution."""
    total = 0
    weighted = 0
    for oc in dist.options:
        ordinal = Difficulty[oc.option].value
        weighted += ordinal * oc.count
        total += oc.count
    if total == 0:
        raise EmptyResponsesError("distribution has no responses")
    return weighted / total


def lecture_quiz_alignment(
    lecture_dists: dict[int, Distribution],
    quiz_dists: dict[int, Distribution],
) -> CorrelationReport:
    """Weekly mean lecture difficulty vs weekly mean quiz difficulty."""
    weeks = sorted(set(lecture_dists) & set(quiz_dists))
    if len(weeks) < 2:
        raise TooFewSamplesError(f"only {len(weeks)} weeks with both series")
    x = [mean_ordinal(lecture_dists[w]) for w in weeks]
    y = [mean_ordinal(quiz_dists[w]) for w in weeks]
    return rank_correlation(
        x, y, question_pair="weekly mean lecture difficulty vs quiz difficulty"
    )


# ---------------------------------------------------------------------------
# Cohort reconstruction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CohortReconstruction:
    n: int
    witnesses: dict[str, int]  # reported percentage (1dp string) -> count


def reconstruct_min_cohort(
    reported: list[float], max_n: int
) -> CohortReconstruction:
    """Smallest N <= max_n such that every reported percentage equals
    round1(100*k/N) for some integer k <= N."""
    if max_n < 1:
        raise OutOfRangeError(f"max_n must be >= 1, got {max_n}")
    targets = []
    for p in reported:
        if not 0 <= p <= 100:
            raise OutOfRangeError(f"percentage {p!r} outside [0, 100]")
        targets.append(Decimal(str(p)).quantize(Decimal("0.1")))
    for n in range(1, max_n + 1):
        witnesses: dict[str, int] = {}
        for target in targets:
            k = next(
                (k for k in range(n + 1) if pct_1dp(k, n) == target), None
            )
            if k is None:
                break
            witnesses[str(target)] = k
        else:
            for target_str, k in witnesses.items():  # self-check postcondition
                assert pct_1dp(k, n) == Decimal(target_str)
            return CohortReconstruction(n=n, witnesses=witnesses)
    raise NoConsistentCohortError(
        f"no N in 1..{max_n} reproduces {reported}"
    )


# ---------------------------------------------------------------------------
# Report export
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChartData:
    figure_id: str
    rows: tuple[tuple[str, int, float], ...]  # (option/bucket, count, percentage)


@dataclass(frozen=True)
class Report:
    document: dict
    charts: tuple[ChartData, ...]


def _difficulty_codes() -> list[str]:
    return [d.name for d in Difficulty]


def _band_codes() -> list[str]:
    return [b.name for b in GradeBand]


def export_report(course, store: DataStore, grades=None) -> Report:
    """Assemble the full analytics document from the raw CSV records.

    ``course`` may be None (records-only report). ``grades`` is the
    imported (student_id, activity_id, grade) list, possibly empty.
    Deterministic: equal inputs yield byte-identical serialized output.
    """
    grades = grades or []
    answers_by_activity: dict[str, list[SurveyAnswerRow]] = {}
    attendance_counts: dict[str, int] = {}
    kind_by_activity: dict[str, str] = {}

    for category in store.categories_present():
        rows = store.load_records(category)
        if category.record_type is RecordType.SURVEY_ANSWER:
            answers_by_activity.setdefault(category.activity_id, []).extend(rows)
            kind_by_activity[category.activity_id] = category.kind.value
        else:
            attendance_counts[category.activity_id] = len(rows)
            kind_by_activity.setdefault(category.activity_id, category.kind.value)

    week_of: dict[str, int] = {}
    title_of: dict[str, str] = {}
    if course is not None:
        for act in course.activities:
            week_of[act.ref.id] = act.ref.week
            title_of[act.ref.id] = act.ref.title

    activities_doc: dict[str, dict] = {}
    distributions: dict[tuple[str, str], Distribution] = {}
    for activity_id in sorted(set(answers_by_activity) | set(attendance_counts)):
        entry: dict = {"kind": kind_by_activity.get(activity_id, "")}
        if activity_id in week_of:
            entry["week"] = week_of[activity_id]
        if activity_id in title_of:
            entry["title"] = title_of[activity_id]
        if activity_id in attendance_counts:
            entry["attendance_count"] = attendance_counts[activity_id]
        questions_doc = {}
        for question_id in sorted(
            {r.question_id for r in answers_by_activity.get(activity_id, [])}
        ):
            codes = [
                r.answer_code
                for r in answers_by_activity[activity_id]
                if r.question_id == question_id
            ]
            canonical = (
                _band_codes() if question_id == "expected_grade"
                else _difficulty_codes()
            )
            dist = counted_distribution(codes, canonical)
            distributions[(activity_id, question_id)] = dist
            questions_doc[question_id] = dist.as_dict()
        if questions_doc:
            entry["questions"] = questions_doc
        activities_doc[activity_id] = entry

    # pooled per-kind difficulty figures (exam / lecture / quiz and friends)
    charts: list[ChartData] = []
    figures_doc: list[dict] = []
    for kind in ActivityKind:
        codes = [
            r.answer_code
            for activity_id, rows in sorted(answers_by_activity.items())
            for r in rows
            if r.activity_kind == kind.value and r.question_id == "difficulty"
        ]
        if not codes:
            continue
        dist = counted_distribution(codes, _difficulty_codes())
        figure_id = f"{kind.value.lower()}_difficulty"
        charts.append(
            ChartData(
                figure_id=figure_id,
                rows=tuple(
                    (oc.option, oc.count, oc.percentage) for oc in dist.options
                ),
            )
        )
        figures_doc.append({"figure_id": figure_id, **dist.as_dict()})

    # expected vs actual per exam activity with an expected_grade question
    grades_by_activity: dict[str, list[tuple[str, float]]] = {}
    for student_id, activity_id, grade in grades:
        grades_by_activity.setdefault(activity_id, []).append((student_id, grade))

    paired_doc: dict[str, dict] = {}
    for (activity_id, question_id), dist in sorted(distributions.items()):
        if question_id != "expected_grade":
            continue
        expected = [
            GradeBand[r.answer_code]
            for r in answers_by_activity[activity_id]
            if r.question_id == "expected_grade"
        ]
        actual = [g for _, g in grades_by_activity.get(activity_id, [])]
        comparison = expected_vs_actual(expected, actual)
        paired_doc[activity_id] = comparison.as_dict()
        charts.append(
            ChartData(
                figure_id=f"{activity_id}_expected_vs_actual",
                rows=tuple(
                    (band, exp_count, float(act_count))
                    for band, exp_count, act_count in zip(
                        comparison.bands, comparison.expected, comparison.actual
                    )
                ),
            )
        )

    correlations_doc: dict[str, dict] = {}

    # RQ1: per-student exam difficulty answer vs the same student's grade
    for activity_id in sorted(answers_by_activity):
        if kind_by_activity.get(activity_id) != ActivityKind.EXAM.value:
            continue
        grade_map = dict(grades_by_activity.get(activity_id, []))
        pairs = [
            (Difficulty[r.answer_code].value, grade_map[r.student_id])
            for r in answers_by_activity[activity_id]
            if r.question_id == "difficulty" and r.student_id in grade_map
        ]
        key = f"rq1_difficulty_vs_grade:{activity_id}"
        correlations_doc[key] = _correlation_or_error(
            [p[0] for p in pairs],
            [p[1] for p in pairs],
            f"perceived difficulty of {activity_id} vs actual grade",
        )

    # RQ2: weekly lecture difficulty vs weekly quiz difficulty
    lecture_weekly: dict[int, list[str]] = {}
    quiz_weekly: dict[int, list[str]] = {}
    for activity_id, rows in answers_by_activity.items():
        week = week_of.get(activity_id)
        if week is None:
            continue
        kind = kind_by_activity.get(activity_id)
        target = (
            lecture_weekly if kind == ActivityKind.LECTURE.value
            else quiz_weekly if kind == ActivityKind.QUIZ.value
            else None
        )
        if target is None:
            continue
        target.setdefault(week, []).extend(
            r.answer_code for r in rows if r.question_id == "difficulty"
        )
    lecture_dists = {
        w: counted_distribution(codes, _difficulty_codes())
        for w, codes in lecture_weekly.items()
        if codes
    }
    quiz_dists = {
        w: counted_distribution(codes, _difficulty_codes())
        for w, codes in quiz_weekly.items()
        if codes
    }
    try:
        report = lecture_quiz_alignment(lecture_dists, quiz_dists)
        correlations_doc["rq2_lecture_vs_quiz"] = report.as_dict()
    except (TooFewSamplesError, DegenerateSeriesError, EmptyResponsesError) as exc:
        correlations_doc["rq2_lecture_vs_quiz"] = {"error": exc.code}

    weekly_doc = {
        "lecture": {str(w): d.as_dict() for w, d in sorted(lecture_dists.items())},
        "quiz": {str(w): d.as_dict() for w, d in sorted(quiz_dists.items())},
    }

    document = {
        "course_id": course.course_id if course is not None else None,
        "activities": activities_doc,
        "figures": figures_doc,
        "expected_vs_actual": paired_doc,
        "correlations": correlations_doc,
        "weekly_difficulty": weekly_doc,
        "caveats": [
            "students rating an activity very hard may skip the expected-grade "
            "question; response bias is not modeled"
        ],
    }
    return Report(document=document, charts=tuple(charts))


def _correlation_or_error(x, y, label: str) -> dict:
    try:
        return rank_correlation(x, y, question_pair=label).as_dict()
    except (TooFewSamplesError, DegenerateSeriesError, LengthMismatchError) as exc:
        return {"error": exc.code, "n": len(x), "question_pair": label}

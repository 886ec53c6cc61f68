"""Error types shared across the bot.

Every error carries a stable machine-readable ``code`` so handlers and the
HTTP API can map failures without string matching.
"""

from __future__ import annotations


class CoursebotError(Exception):
    """Base class; ``code`` identifies the failure kind."""

    code = "INTERNAL"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details


class OutOfRangeError(CoursebotError):
    code = "OUT_OF_RANGE"


class UnknownUserError(CoursebotError):
    code = "UNKNOWN_USER"


class NonMonotoneScenarioError(CoursebotError):
    code = "NON_MONOTONE_SCENARIO"


class TargetMissingError(CoursebotError):
    code = "TARGET_MISSING"


class UnknownRouteError(CoursebotError):
    code = "UNKNOWN_ROUTE"


class DuplicateCommandError(CoursebotError):
    code = "DUPLICATE_COMMAND"


class SchemaOrderError(CoursebotError):
    code = "SCHEMA_ORDER"


class SessionAlreadyOpenError(CoursebotError):
    code = "SESSION_ALREADY_OPEN"


class NotInstructorError(CoursebotError):
    code = "NOT_INSTRUCTOR"


class EmptyKeywordError(CoursebotError):
    code = "EMPTY_KEYWORD"


class NoOpenSessionError(CoursebotError):
    code = "NO_OPEN_SESSION"


class AmbiguousSessionError(CoursebotError):
    code = "AMBIGUOUS_SESSION"


class AlreadyLaunchedError(CoursebotError):
    code = "ALREADY_LAUNCHED"


class EmptyRosterError(CoursebotError):
    code = "EMPTY_ROSTER"


class UnknownSurveyError(CoursebotError):
    code = "UNKNOWN_SURVEY"


class AlreadyAnsweredError(CoursebotError):
    code = "ALREADY_ANSWERED"


class StaleSessionError(CoursebotError):
    code = "STALE_SESSION"


class ForeignMessageError(CoursebotError):
    code = "FOREIGN_MESSAGE"


class SchemaInvalidError(CoursebotError):
    """Course-data validation failure; ``paths`` lists every offending field."""

    code = "SCHEMA_INVALID"

    def __init__(self, errors: list[str]):
        super().__init__("; ".join(errors))
        self.errors = errors


class DuplicateIdError(CoursebotError):
    code = "DUPLICATE_ID"


class DanglingActivityError(CoursebotError):
    code = "DANGLING_ACTIVITY"


class SchemaMismatchError(CoursebotError):
    code = "SCHEMA_MISMATCH"


class ParseFailureError(CoursebotError):
    code = "PARSE_FAILURE"

    def __init__(self, message: str, line_number: int):
        super().__init__(message, line_number=line_number)
        self.line_number = line_number


class EmptyResponsesError(CoursebotError):
    code = "EMPTY_RESPONSES"


class LengthMismatchError(CoursebotError):
    code = "LENGTH_MISMATCH"


class TooFewSamplesError(CoursebotError):
    code = "TOO_FEW_SAMPLES"


class DegenerateSeriesError(CoursebotError):
    code = "DEGENERATE"


class NoConsistentCohortError(CoursebotError):
    code = "NO_CONSISTENT_N"


class InvalidParamsError(CoursebotError):
    code = "INVALID_PARAMS"


class ConfigInvalidError(CoursebotError):
    code = "CONFIG_INVALID"

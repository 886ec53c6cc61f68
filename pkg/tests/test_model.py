import pytest

from coursebot.errors import OutOfRangeError
from coursebot.model import (
    ActivityKind,
    ActivityRef,
    Difficulty,
    GradeBand,
    difficulty_ordinal,
    grade_band_of,
    utc,
)


def test_grade_band_boundaries():
    assert grade_band_of(0) is GradeBand.B0
    assert grade_band_of(100) is GradeBand.B80  # closed top band
    assert grade_band_of(39.9) is GradeBand.B20


def test_grade_band_out_of_range():
    with pytest.raises(OutOfRangeError):
        grade_band_of(-0.1)
    with pytest.raises(OutOfRangeError):
        grade_band_of(100.1)


def test_grade_band_total_and_monotone():
    bands = list(GradeBand)
    previous = None
    for i in range(0, 1001):
        p = i / 10
        band = grade_band_of(p)
        if previous is not None:
            assert bands.index(band) >= bands.index(previous)
        previous = band


def test_grade_band_midpoints():
    assert [b.midpoint for b in GradeBand] == [10, 30, 50, 70, 90]
    for band in GradeBand:
        assert grade_band_of(band.midpoint) is band


def test_bands_partition():
    # every edge lands in exactly one band
    assert grade_band_of(19.999) is GradeBand.B0
    assert grade_band_of(20) is GradeBand.B20
    assert grade_band_of(80) is GradeBand.B80


def test_difficulty_ordinal_bijection():
    assert difficulty_ordinal(Difficulty.VERY_EASY) == 1
    assert difficulty_ordinal(Difficulty.MEDIUM) == 3
    assert difficulty_ordinal(Difficulty.VERY_HARD) == 5
    ordinals = [difficulty_ordinal(d) for d in Difficulty]
    assert ordinals == [1, 2, 3, 4, 5]


def test_activity_window_invariant():
    with pytest.raises(ValueError):
        ActivityRef(
            ActivityKind.LECTURE, "bad", "Bad", 1,
            utc(2025, 10, 7, 12), utc(2025, 10, 7, 10),
        )
    with pytest.raises(ValueError):
        ActivityRef(
            ActivityKind.LECTURE, "bad", "Bad", 0,
            utc(2025, 10, 7, 10), utc(2025, 10, 7, 12),
        )

"""Road grade labels and the grade colour palette."""

from __future__ import annotations

from enum import IntEnum


class Grade(IntEnum):
    """Road hierarchy grade.

    Integer values double as raster labels, and numeric order equals the
    tie-break precedence (High beats Medium beats Low).
    """

    LOW = 1
    MEDIUM = 2
    HIGH = 3

    @property
    def word(self) -> str:
        return self.name.lower()

    @classmethod
    def from_word(cls, word: str) -> "Grade":
        try:
            return cls[word.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown grade {word!r}") from None


BACKGROUND = 0

# Order used for score vectors, confusion matrices and reports.
GRADE_ORDER = (Grade.HIGH, Grade.MEDIUM, Grade.LOW)

LABEL_NAMES = {BACKGROUND: "background", Grade.LOW: "low", Grade.MEDIUM: "medium", Grade.HIGH: "high"}

DEFAULT_PALETTE = {
    Grade.HIGH: (255, 0, 0),
    Grade.MEDIUM: (0, 0, 255),
    Grade.LOW: (255, 255, 0),
    BACKGROUND: (0, 0, 0),
}


def best_grade(grades) -> Grade:
    """Highest-precedence grade of a non-empty iterable."""
    return Grade(max(int(g) for g in grades))

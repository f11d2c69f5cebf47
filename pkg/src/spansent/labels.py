"""Three-way sentiment labels with a fixed project-wide index mapping."""
from __future__ import annotations

from enum import IntEnum


class SentimentLabel(IntEnum):
    POSITIVE = 0
    NEUTRAL = 1
    NEGATIVE = 2

    @classmethod
    def parse(cls, value: "str | int | SentimentLabel") -> "SentimentLabel":
        if isinstance(value, SentimentLabel):
            return value
        if isinstance(value, int):
            return cls(value)
        key = value.strip().lower()
        try:
            return _BY_NAME[key]
        except KeyError:
            raise ValueError(f"unknown sentiment label {value!r}") from None

    def as_string(self) -> str:
        return self.name.lower()


_BY_NAME = {
    "positive": SentimentLabel.POSITIVE,
    "pos": SentimentLabel.POSITIVE,
    "neutral": SentimentLabel.NEUTRAL,
    "neu": SentimentLabel.NEUTRAL,
    "negative": SentimentLabel.NEGATIVE,
    "neg": SentimentLabel.NEGATIVE,
}

NUM_CLASSES = 3

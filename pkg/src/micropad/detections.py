"""Value types shared by the detection backends, reporter, and evaluator."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from decimal import Decimal

MAX_SNIPPET_CHARS = 2000


class Certainty(enum.IntEnum):
    """Backend-asserted confidence, totally ordered High > Medium > Low."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return {Certainty.LOW: "Low", Certainty.MEDIUM: "Medium", Certainty.HIGH: "High"}[self]

    @classmethod
    def parse(cls, value: str) -> "Certainty":
        try:
            return {"low": cls.LOW, "medium": cls.MEDIUM, "high": cls.HIGH}[value.strip().lower()]
        except KeyError:
            raise ValueError(f"invalid certainty: {value!r}") from None


@dataclass(frozen=True)
class Evidence:
    """A supporting snippet from one artifact."""

    relative_path: str
    snippet: str
    start_line: int | None = None
    end_line: int | None = None

    def __post_init__(self) -> None:
        if not self.snippet:
            raise ValueError("evidence snippet must be non-empty")
        if len(self.snippet) > MAX_SNIPPET_CHARS:
            object.__setattr__(self, "snippet", self.snippet[:MAX_SNIPPET_CHARS])
        if (
            self.start_line is not None
            and self.end_line is not None
            and self.start_line > self.end_line
        ):
            raise ValueError("evidence start_line must not exceed end_line")


@dataclass(frozen=True)
class Detection:
    """One claimed pattern instance."""

    pattern_id: str
    certainty: Certainty
    justification: str
    evidence: tuple[Evidence, ...] = ()
    source: str = "rules"  # remote | replay | rules
    chunk_index: int = 0
    run_id: int = 0

    def __post_init__(self) -> None:
        if not self.justification:
            raise ValueError("detection justification must be non-empty")
        if not self.evidence and self.certainty is not Certainty.LOW:
            raise ValueError("evidence may be empty only for Low certainty")


@dataclass(frozen=True)
class UsageRecord:
    """Token counts and exact cost for one or more backend calls."""

    input_tokens: int = 0
    output_tokens: int = 0
    estimated_cost: Decimal = Decimal("0")

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0 or self.estimated_cost < 0:
            raise ValueError("usage figures must not be negative")

    def __add__(self, other: "UsageRecord") -> "UsageRecord":
        return UsageRecord(
            input_tokens=self.input_tokens + other.input_tokens,
            output_tokens=self.output_tokens + other.output_tokens,
            estimated_cost=self.estimated_cost + other.estimated_cost,
        )


def usage_cost(
    input_tokens: int,
    output_tokens: int,
    price_per_1k_input: Decimal,
    price_per_1k_output: Decimal,
) -> Decimal:
    """Exact cost: tokens/1000 times the per-thousand price, per direction."""
    return (
        Decimal(input_tokens) * price_per_1k_input / Decimal(1000)
        + Decimal(output_tokens) * price_per_1k_output / Decimal(1000)
    )

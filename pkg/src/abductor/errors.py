"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class AbductorError(Exception):
    """Base class for all engine errors."""


class GraphError(AbductorError):
    pass


class UnknownNode(GraphError):
    pass


class InvalidEdge(GraphError):
    pass


class UngroundedEvidence(GraphError):
    pass


class ConfidenceOutOfRange(GraphError):
    pass


class EmptyLevel(GraphError):
    pass


class NotAHypothesis(GraphError):
    pass


class InvariantViolation(GraphError):
    pass


class ParseError(AbductorError):
    pass


class RefinementEmpty(AbductorError):
    pass


class UnmatchedHypothesis(AbductorError):
    pass


class EmptyInput(AbductorError):
    pass


class CognitionFailure(AbductorError):
    pass


class CorruptTrace(AbductorError):
    pass


class ValidationError(AbductorError):
    """Raised with every problem found, not just the first."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems) if self.problems else "invalid")

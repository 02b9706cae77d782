"""What the symbolic engine may ask of the cognitive layer, and what it gets back."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Protocol, Sequence

from ..control import HypothesisSpec, MachineState
from ..graph import BeliefGraph, GraphUpdate, NodeId


@dataclass(frozen=True)
class Instruction:
    expert: str
    directive: str
    focus: NodeId
    belief_digest: str


@dataclass(frozen=True)
class Observation:
    action_key: str
    payload: str
    event_index: int
    expert: str = ""
    found: bool = True


@dataclass(frozen=True)
class AnalysisFinding:
    hypothesis: NodeId
    polarity: str  # "support" | "refute"
    strength: float
    event_index: int


@dataclass(frozen=True)
class Analysis:
    expert: str
    findings: tuple[AnalysisFinding, ...] = ()


@dataclass(frozen=True)
class Report:
    prediction: str
    narrative: str


class ToolEnvironment(Protocol):
    """Engine-owned tool executor.

    Every call is logged before the observation is handed back, so an
    observation's ``event_index`` always resolves inside the episode trace.
    """

    episode_id: str

    def call(self, expert: str, action_key: str) -> Observation: ...

    def recall(self, action_key: str) -> Observation | None: ...


class CognitionPort(ABC):
    """Central agent plus experts. One instance serves exactly one episode."""

    @abstractmethod
    def initialize_hypotheses(self, symptoms: Sequence[str]) -> tuple[list[str], list[HypothesisSpec]]:
        """Return symptom labels and level-1 hypothesis specs with priors."""

    @abstractmethod
    def plan(self, focus: NodeId, g: BeliefGraph, s: MachineState) -> list[Instruction]: ...

    @abstractmethod
    def investigate(
        self, instruction: Instruction, budget: int, tools: ToolEnvironment
    ) -> tuple[list[Observation], Analysis]: ...

    @abstractmethod
    def propose_update(self, analyses: Sequence[Analysis], g: BeliefGraph) -> GraphUpdate: ...

    @abstractmethod
    def refine_hypotheses(self, top: NodeId, g: BeliefGraph) -> list[HypothesisSpec]: ...

    @abstractmethod
    def check_granularity(self, top: NodeId, g: BeliefGraph) -> bool: ...

    @abstractmethod
    def report(self, g: BeliefGraph, s: MachineState) -> Report: ...

"""State machine over hypothesis levels: backtracking and drill-down.

Everything here is a pure function of its inputs. Cognition results
(granularity verdict, refined children) are passed in by the caller, which
keeps :func:`step` deterministic and testable without any agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Sequence

from . import graph as G
from .errors import InvariantViolation, RefinementEmpty
from .graph import BeliefGraph, Edge, EdgeKind, GraphUpdate, NodeId, NodeKind


@dataclass(frozen=True)
class TransitionParams:
    gap_delta: float = 0.2
    min_support: int = 2
    max_iterations: int = 3
    expert_budget: int = 3

    def __post_init__(self) -> None:
        problems = []
        if self.gap_delta < 0:
            problems.append("gap_delta must be >= 0")
        if self.min_support < 0:
            # 0 is reachable only through the no-graph ablation.
            problems.append("min_support must be >= 0")
        if self.max_iterations < 1:
            problems.append("max_iterations must be >= 1")
        if self.expert_budget < 0:
            problems.append("expert_budget must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict[str, Any]:
        return {
            "gap_delta": self.gap_delta,
            "min_support": self.min_support,
            "max_iterations": self.max_iterations,
            "expert_budget": self.expert_budget,
        }


@dataclass(frozen=True)
class MachineState:
    level: int = 1
    iteration: int = 0
    params: TransitionParams = field(default_factory=TransitionParams)

    def __post_init__(self) -> None:
        if self.level < 1:
            raise ValueError("level must be >= 1")
        if not 0 <= self.iteration <= self.params.max_iterations:
            raise ValueError("iteration outside [0, max_iterations]")


class TransitionKind(str, Enum):
    STAY = "stay"
    DRILL_DOWN = "drill_down"
    BACKTRACK = "backtrack"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class Transition:
    kind: TransitionKind
    new_level: int | None = None
    l_star: int | None = None
    removed: frozenset[NodeId] = frozenset()
    refinement: GraphUpdate | None = None

    @classmethod
    def stay(cls) -> "Transition":
        return cls(TransitionKind.STAY)


class Gate(str, Enum):
    PROCEED = "proceed"
    HOLD = "hold"


@dataclass(frozen=True)
class HypothesisSpec:
    """A proposed hypothesis before it has an id: label plus prior confidence."""

    label: str
    prior: float


def check_backtrack(g: BeliefGraph, s: MachineState, focus: NodeId) -> int | None:
    """Shallowest level whose focus-lineage ancestor has lost its sibling argmax.

    Ties keep the ancestor in place: demotion needs a strictly better sibling.
    """
    for ancestor in G.lineage(g, focus):
        node = g.nodes[ancestor]
        if node.level >= s.level:  # type: ignore[operator]
            break
        conf = node.confidence
        if any(g.nodes[sib].confidence > conf for sib in G.siblings(g, ancestor)):  # type: ignore[operator]
            return node.level
    return None


def check_drilldown(g: BeliefGraph, s: MachineState) -> Gate:
    top, gap = G.confidence_gap(g, s.level)
    if gap > s.params.gap_delta and G.support_count(g, top) >= s.params.min_support:
        return Gate.PROCEED
    return Gate.HOLD


def refinement_update(g: BeliefGraph, parent: NodeId, refined: Sequence[HypothesisSpec]) -> GraphUpdate:
    level = g.nodes[parent].level + 1  # type: ignore[operator]
    ids = g.mint_ids(NodeKind.HYPOTHESIS, len(refined))
    nodes = tuple(G.hypothesis(nid, spec.label, level, spec.prior) for nid, spec in zip(ids, refined))
    edges = tuple(Edge(parent, nid, EdgeKind.REFINE) for nid in ids)
    return GraphUpdate(new_nodes=nodes, new_edges=edges)


def step(
    g: BeliefGraph,
    s: MachineState,
    granularity_ok: bool,
    refined: Sequence[HypothesisSpec] | None,
    *,
    focus: NodeId | None = None,
    use_backtrack: bool = True,
    use_gate: bool = True,
) -> tuple[Transition, BeliefGraph, MachineState]:
    """One state conversion.

    Backtracking is evaluated first and, when it fires, ends the step. Then the
    dual-threshold gate decides between termination, drill-down and staying.
    ``use_backtrack``/``use_gate`` exist for ablation runs only.
    """
    if s.iteration >= s.params.max_iterations:
        raise InvariantViolation("iteration budget already exhausted")
    nxt = replace(s, iteration=s.iteration + 1)
    if focus is None:
        focus = G.reasoning_focus(g, s.level)

    if use_backtrack:
        l_star = check_backtrack(g, s, focus)
        if l_star is not None:
            pruned, removed = G.prune_below(g, l_star)
            t = Transition(TransitionKind.BACKTRACK, l_star=l_star, removed=removed)
            return t, pruned, replace(nxt, level=l_star)

    gate = check_drilldown(g, s) if use_gate else Gate.PROCEED
    if gate is Gate.HOLD:
        return Transition.stay(), g.copy(), nxt
    if granularity_ok:
        return Transition(TransitionKind.TERMINATE), g.copy(), nxt
    if not refined:
        raise RefinementEmpty("drill-down approved but no refined hypotheses supplied")
    top = G.reasoning_focus(g, s.level)
    update = refinement_update(g, top, refined)
    out = G.apply_update(g, update)
    t = Transition(TransitionKind.DRILL_DOWN, new_level=s.level + 1, refinement=update)
    return t, out, replace(nxt, level=s.level + 1)

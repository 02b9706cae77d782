"""The orchestration loop: focus, plan, investigate, ground, convert state.

One call to :func:`run_episode` is one diagnostic episode. Everything that
changes the belief graph is written to the episode trace first, which is what
makes :func:`replay` possible.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Iterable

from . import graph as G
from .cognition.oracle import OracleCognition
from .cognition.port import CognitionPort, Observation, Report
from .control import (
    Gate,
    MachineState,
    TransitionKind,
    TransitionParams,
    check_backtrack,
    check_drilldown,
    step,
)
from .errors import AbductorError, CorruptTrace, InvariantViolation
from .graph import BeliefGraph, Edge, EdgeKind, GraphUpdate, NodeId, NodeKind
from .scenario import NOT_FOUND_PAYLOAD, Scenario
from .trace import TRACE_SCHEMA, EpisodeTrace

logger = logging.getLogger(__name__)


class Ablation(str, Enum):
    NO_FOCUS = "no_focus"
    NO_GRAPH = "no_graph"
    NO_STATE_MACHINE = "no_state_machine"


@dataclass(frozen=True)
class RunConfig:
    params: TransitionParams = field(default_factory=TransitionParams)
    ablations: frozenset[Ablation] = frozenset()
    seed: int = 0
    cognition: str = "oracle"
    w_support: float = 0.2
    w_refute: float = 0.3
    # Scenario "budgets" override params unless this is switched off.
    honor_scenario_budgets: bool = True
    remote_timeout: float = 60.0
    remote_retries: int = 2

    def __post_init__(self) -> None:
        object.__setattr__(self, "ablations", frozenset(Ablation(a) for a in self.ablations))
        if self.cognition not in ("oracle", "remote"):
            raise ValueError(f"cognition must be 'oracle' or 'remote', got {self.cognition!r}")

    def effective_params(self, scenario: Scenario) -> TransitionParams:
        if not self.honor_scenario_budgets or not scenario.budgets:
            return self.params
        return replace(self.params, **scenario.budgets)

    def label(self) -> str:
        parts = [f"delta={self.params.gap_delta:g}", f"eta={self.params.min_support}"]
        parts += [f"-{a.value}" for a in sorted(self.ablations, key=lambda a: a.value)]
        return " ".join(parts)

    def to_dict(self) -> dict[str, Any]:
        return {
            "params": self.params.to_dict(),
            "ablations": sorted(a.value for a in self.ablations),
            "seed": self.seed,
            "cognition": self.cognition,
            "w_support": self.w_support,
            "w_refute": self.w_refute,
            "honor_scenario_budgets": self.honor_scenario_budgets,
            "remote_timeout": self.remote_timeout,
            "remote_retries": self.remote_retries,
        }


@dataclass
class EpisodeResult:
    report: Report
    trace: EpisodeTrace
    graph: BeliefGraph
    state: MachineState
    terminated: bool

    def __iter__(self):
        # Allows ``report, trace = run_episode(...)``.
        return iter((self.report, self.trace))


class EpisodeAborted(AbductorError):
    """An internal error stopped the episode; ``trace`` holds what was recorded."""

    def __init__(self, cause: Exception, trace: EpisodeTrace):
        super().__init__(f"episode {trace.episode_id} aborted: {cause}")
        self.cause = cause
        self.trace = trace


class ScenarioTools:
    """Tool environment backed by a scenario's evidence repository."""

    def __init__(self, scenario: Scenario, trace: EpisodeTrace):
        self.scenario = scenario
        self.trace = trace
        self.episode_id = trace.episode_id
        self.iteration = 0
        self._seen: dict[str, Observation] = {}
        self.calls = 0

    def call(self, expert: str, action_key: str) -> Observation:
        self.trace.record("ToolCall", iteration=self.iteration, expert=expert, action_key=action_key)
        self.calls += 1
        spec = self.scenario.lookup(action_key)
        payload = spec.payload if spec else NOT_FOUND_PAYLOAD
        idx = self.trace.record(
            "ObservationRecorded",
            iteration=self.iteration,
            expert=expert,
            action_key=action_key,
            payload=payload,
            found=spec is not None,
        )
        obs = Observation(action_key, payload, idx, expert, spec is not None)
        self._seen.setdefault(action_key, obs)
        return obs

    def recall(self, action_key: str) -> Observation | None:
        return self._seen.get(action_key)


CognitionFactory = Callable[[Scenario, RunConfig, EpisodeTrace], CognitionPort]


def default_cognition(scenario: Scenario, cfg: RunConfig, trace: EpisodeTrace) -> CognitionPort:
    if cfg.cognition == "remote":
        from .cognition.remote import RemoteCognition

        return RemoteCognition.from_env(
            trace=trace,
            roles=scenario.roles,
            timeout=cfg.remote_timeout,
            retries=cfg.remote_retries,
            w_support=cfg.w_support,
            w_refute=cfg.w_refute,
        )
    return OracleCognition(scenario, cfg.w_support, cfg.w_refute)


def episode_id_for(scenario: Scenario, cfg: RunConfig) -> str:
    return f"{scenario.id}#seed{cfg.seed}"


def initial_update(symptoms: Iterable[str], specs: Iterable[Any]) -> GraphUpdate:
    symptoms, specs = list(symptoms), list(specs)
    seeded = BeliefGraph()
    sym_ids = seeded.mint_ids(NodeKind.SYMPTOM, len(symptoms))
    hyp_ids = seeded.mint_ids(NodeKind.HYPOTHESIS, len(specs), start=1 + len(symptoms))
    nodes = [G.symptom(i, text) for i, text in zip(sym_ids, symptoms)]
    nodes += [G.hypothesis(i, sp.label, 1, sp.prior) for i, sp in zip(hyp_ids, specs)]
    edges = [Edge(s, h, EdgeKind.DERIVE) for s in sym_ids for h in hyp_ids]
    return GraphUpdate(new_nodes=tuple(nodes), new_edges=tuple(edges))


def select_focus(g: BeliefGraph, s: MachineState, ablations: frozenset[Ablation], rng: random.Random) -> NodeId:
    if Ablation.NO_GRAPH in ablations:
        # A flat list only knows insertion order; ids are minted monotonically.
        return max(n.id for n in g.hypotheses(s.level))
    if Ablation.NO_FOCUS in ablations:
        return rng.choice([n.id for n in g.hypotheses(s.level)])
    return G.reasoning_focus(g, s.level)


def _focus_payload(g: BeliefGraph, focus: NodeId) -> dict[str, Any]:
    node = g.nodes[focus]
    return {
        "focus": focus,
        "label": node.label,
        "confidence": node.confidence,
        "lineage": G.lineage(g, focus),
    }


def run_episode(
    scenario: Scenario,
    cfg: RunConfig | None = None,
    cognition_factory: CognitionFactory | None = None,
) -> EpisodeResult:
    cfg = cfg or RunConfig()
    params = cfg.effective_params(scenario)
    trace = EpisodeTrace(episode_id_for(scenario, cfg))
    try:
        return _run(scenario, cfg, params, trace, cognition_factory or default_cognition)
    except InvariantViolation as exc:
        raise EpisodeAborted(exc, trace) from exc


def _run(
    scenario: Scenario,
    cfg: RunConfig,
    params: TransitionParams,
    trace: EpisodeTrace,
    factory: CognitionFactory,
) -> EpisodeResult:
    ablations = cfg.ablations
    cog = factory(scenario, cfg, trace)
    tools = ScenarioTools(scenario, trace)
    rng = random.Random(f"{cfg.seed}:{scenario.id}")

    symptoms, specs = cog.initialize_hypotheses(list(scenario.surface_symptoms))
    init = initial_update(symptoms, specs)
    g = G.apply_update(BeliefGraph(), init)
    trace.record(
        "Init",
        schema=TRACE_SCHEMA,
        episode_id=trace.episode_id,
        scenario_id=scenario.id,
        config=cfg.to_dict(),
        params=params.to_dict(),
        update=init.to_dict(),
    )
    s = MachineState(level=1, iteration=0, params=params)

    use_backtrack = not ablations & {Ablation.NO_GRAPH, Ablation.NO_STATE_MACHINE}
    use_gate = Ablation.NO_STATE_MACHINE not in ablations
    gate_params = replace(params, min_support=0) if Ablation.NO_GRAPH in ablations else params

    terminated = False
    while s.iteration < params.max_iterations:
        it = s.iteration + 1
        tools.iteration = it
        focus = select_focus(g, s, ablations, rng)
        trace.record("FocusSelected", iteration=it, level=s.level, **_focus_payload(g, focus))

        analyses = []
        for ins in cog.plan(focus, g, s):
            trace.record(
                "InstructionIssued",
                iteration=it,
                expert=ins.expert,
                directive=ins.directive,
                focus=ins.focus,
            )
            _, analysis = cog.investigate(ins, params.expert_budget, tools)
            analyses.append(analysis)

        update = cog.propose_update(analyses, g)
        g = G.apply_update(g, update, trace.observation_tokens())
        trace.record("GraphUpdated", iteration=it, update=update.to_dict())

        gate_state = replace(s, params=gate_params)
        granular, refined = False, None
        backtracking = use_backtrack and check_backtrack(g, s, focus) is not None
        if not backtracking and (not use_gate or check_drilldown(g, gate_state) is Gate.PROCEED):
            top = G.reasoning_focus(g, s.level)
            granular = cog.check_granularity(top, g)
            if not granular:
                refined = cog.refine_hypotheses(top, g)

        from_level = s.level
        t, g, nxt = step(
            g, gate_state, granular, refined, focus=focus, use_backtrack=use_backtrack, use_gate=use_gate
        )
        s = replace(nxt, params=params)

        if t.kind is TransitionKind.BACKTRACK:
            trace.record(
                "Backtracked",
                iteration=it,
                from_level=from_level,
                l_star=t.l_star,
                removed=sorted(t.removed),
            )
        elif t.kind is TransitionKind.DRILL_DOWN:
            assert t.refinement is not None
            parent = t.refinement.new_edges[0].src
            trace.record(
                "DrilledDown",
                iteration=it,
                from_level=from_level,
                new_level=t.new_level,
                parent=parent,
                update=t.refinement.to_dict(),
            )
        elif t.kind is TransitionKind.TERMINATE:
            trace.record("Terminated", iteration=it, level=s.level, focus=G.reasoning_focus(g, s.level))
            terminated = True
            break
        else:
            trace.record("Stayed", iteration=it, level=s.level)

    report = cog.report(g, s)
    final_focus = G.reasoning_focus(g, s.level)
    trace.record(
        "Reported",
        prediction=report.prediction,
        narrative=report.narrative,
        focus=final_focus,
        level=s.level,
        iterations=s.iteration,
        forced=not terminated,
        tool_calls=tools.calls,
    )
    logger.debug("episode %s finished: %s", trace.episode_id, report.prediction)
    return EpisodeResult(report, trace, g, s, terminated)


def replay(trace: EpisodeTrace) -> BeliefGraph:
    """Rebuild the final graph from a recorded trace."""
    events = trace.events
    if not events or events[0].type != "Init":
        raise CorruptTrace("trace does not start with Init")
    if events[-1].type != "Reported":
        raise CorruptTrace("trace does not end with Reported (truncated?)")
    for i, e in enumerate(events):
        if e.index != i:
            raise CorruptTrace(f"event {i} carries index {e.index}")
    try:
        g = G.apply_update(BeliefGraph(), GraphUpdate.from_dict(events[0].data["update"]))
        for e in events[1:]:
            if e.type == "GraphUpdated":
                upd = GraphUpdate.from_dict(e.data["update"])
                g = G.apply_update(g, upd, trace.observation_tokens(before=e.index))
            elif e.type == "DrilledDown":
                g = G.apply_update(g, GraphUpdate.from_dict(e.data["update"]))
            elif e.type == "Backtracked":
                g, removed = G.prune_below(g, int(e.data["l_star"]))
                if sorted(removed) != list(e.data["removed"]):
                    raise CorruptTrace(f"event {e.index}: pruned set differs from the recorded one")
    except CorruptTrace:
        raise
    except (AbductorError, KeyError, TypeError, ValueError) as exc:
        raise CorruptTrace(f"trace cannot be replayed: {exc}") from exc
    return g

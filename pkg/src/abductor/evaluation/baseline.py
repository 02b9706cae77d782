"""Greedy depth-first baseline: follow the argmax, never backtrack.

It shares the oracle, tool environment and trace format with the engine so
its traces can be judged and audited the same way.
"""

from __future__ import annotations

from .. import graph as G
from ..cognition.oracle import OracleCognition, describe
from ..control import MachineState, TransitionParams, refinement_update
from ..engine import EpisodeResult, RunConfig, ScenarioTools, initial_update
from ..graph import BeliefGraph
from ..scenario import Scenario
from ..trace import TRACE_SCHEMA, EpisodeTrace

GREEDY_RETRIEVAL_CAP = 5


def greedy_baseline(scenario: Scenario, cfg: RunConfig | None = None) -> EpisodeResult:
    cfg = cfg or RunConfig()
    trace = EpisodeTrace(f"{scenario.id}#seed{cfg.seed}#greedy")
    cog = OracleCognition(scenario, cfg.w_support, cfg.w_refute)
    tools = ScenarioTools(scenario, trace)

    symptoms, specs = cog.initialize_hypotheses(list(scenario.surface_symptoms))
    init = initial_update(symptoms, specs)
    g = G.apply_update(BeliefGraph(), init)
    trace.record(
        "Init",
        schema=TRACE_SCHEMA,
        episode_id=trace.episode_id,
        scenario_id=scenario.id,
        config=dict(cfg.to_dict(), baseline="greedy", retrieval_cap=GREEDY_RETRIEVAL_CAP),
        params={},
        update=init.to_dict(),
    )

    # A pass either terminates or goes one level deeper, so taxonomy depth bounds the loop.
    max_passes = max(t.level for t in scenario.taxonomy.values())
    level, passes, terminated = 1, 0, False
    while passes < max_passes:
        passes += 1
        tools.iteration = passes
        state = MachineState(level=level)
        focus = G.reasoning_focus(g, level)
        node = g.nodes[focus]
        trace.record(
            "FocusSelected",
            iteration=passes,
            level=level,
            focus=focus,
            label=node.label,
            confidence=node.confidence,
            lineage=G.lineage(g, focus),
        )
        analyses = []
        for ins in cog.plan(focus, g, state):
            remaining = GREEDY_RETRIEVAL_CAP - tools.calls
            if remaining <= 0:
                break
            trace.record("InstructionIssued", iteration=passes, expert=ins.expert,
                         directive=ins.directive, focus=ins.focus)
            _, analysis = cog.investigate(ins, min(remaining, cfg.params.expert_budget), tools)
            analyses.append(analysis)
        update = cog.propose_update(analyses, g)
        g = G.apply_update(g, update, trace.observation_tokens())
        trace.record("GraphUpdated", iteration=passes, update=update.to_dict())

        top = G.reasoning_focus(g, level)
        if cog.check_granularity(top, g):
            trace.record("Terminated", iteration=passes, level=level, focus=top)
            terminated = True
            break
        refinement = refinement_update(g, top, cog.refine_hypotheses(top, g))
        g = G.apply_update(g, refinement)
        trace.record("DrilledDown", iteration=passes, from_level=level, new_level=level + 1,
                     parent=top, update=refinement.to_dict())
        level += 1

    state = MachineState(level=level, iteration=passes,
                         params=TransitionParams(max_iterations=max(passes, 1)))
    report = describe(g, state)
    trace.record(
        "Reported",
        prediction=report.prediction,
        narrative=report.narrative,
        focus=G.reasoning_focus(g, level),
        level=level,
        iterations=passes,
        forced=not terminated,
        tool_calls=tools.calls,
    )
    return EpisodeResult(report, trace, g, state, terminated)

"""Scripted cognitive layer that answers from a scenario's ground truth.

The oracle never sees anything the engine's tool environment did not return:
its findings are read off the evidence records of actions it actually ran.
"""

from __future__ import annotations

from typing import Sequence

from .. import graph as G
from ..control import HypothesisSpec, MachineState
from ..errors import EmptyInput, RefinementEmpty, UnmatchedHypothesis
from ..graph import BeliefGraph, Edge, EdgeKind, GraphUpdate, NodeId, NodeKind, Provenance
from ..scenario import HypothesisTemplate, Scenario, normalize_label
from .port import (
    Analysis,
    AnalysisFinding,
    CognitionPort,
    Instruction,
    Observation,
    Report,
    ToolEnvironment,
)

DEFAULT_SUPPORT_WEIGHT = 0.2
DEFAULT_REFUTE_WEIGHT = 0.3
CONFIDENCE_DECIMALS = 6


def recalibrate(conf: float, support: float, refute: float, w_support: float, w_refute: float) -> float:
    """clamp(conf + w_s * support - w_r * refute, 0, 1), rounded to 6 places."""
    value = conf + w_support * support - w_refute * refute
    return round(min(1.0, max(0.0, value)), CONFIDENCE_DECIMALS)


def findings_to_update(
    analyses: Sequence[Analysis],
    g: BeliefGraph,
    observations: dict[int, Observation],
    episode_id: str,
    w_support: float = DEFAULT_SUPPORT_WEIGHT,
    w_refute: float = DEFAULT_REFUTE_WEIGHT,
) -> GraphUpdate:
    """Turn expert findings into one graph update.

    One evidence node per distinct cited observation, reusing a node already in
    the graph for the same observation. Only edges that are new contribute to
    recalibration, so re-reading an old observation cannot inflate confidence.
    """
    findings = [f for a in analyses for f in a.findings if f.hypothesis in g.nodes]
    if not findings:
        return GraphUpdate()

    evidence_ids: dict[int, NodeId] = {}
    new_nodes: list[G.Node] = []
    seq = g.next_seq
    for idx in sorted({f.event_index for f in findings}):
        prov = Provenance(episode_id, idx)
        existing = g.evidence_with_provenance(prov)
        if existing is not None:
            evidence_ids[idx] = existing.id
            continue
        obs = observations.get(idx)
        label = f"{obs.action_key}: {obs.payload}" if obs else f"observation #{idx}"
        nid = g.mint_ids(NodeKind.EVIDENCE, 1, start=seq)[0]
        seq += 1
        evidence_ids[idx] = nid
        new_nodes.append(G.evidence(nid, label, prov))

    new_edges: list[Edge] = []
    seen: set[Edge] = set()
    tallies: dict[NodeId, list[float]] = {}
    for f in findings:
        if not g.nodes[f.hypothesis].is_hypothesis:
            continue
        kind = EdgeKind.SUPPORT if f.polarity == "support" else EdgeKind.REFUTE
        edge = Edge(evidence_ids[f.event_index], f.hypothesis, kind)
        if edge in g.edges or edge in seen:
            continue
        seen.add(edge)
        new_edges.append(edge)
        tally = tallies.setdefault(f.hypothesis, [0.0, 0.0])
        tally[0 if kind is EdgeKind.SUPPORT else 1] += f.strength

    used = {e.src for e in new_edges}
    new_nodes = [n for n in new_nodes if n.id in used]
    recal = tuple(
        (h, recalibrate(g.nodes[h].confidence, s, r, w_support, w_refute))  # type: ignore[arg-type]
        for h, (s, r) in sorted(tallies.items())
    )
    return GraphUpdate(recalibrations=recal, new_nodes=tuple(new_nodes), new_edges=tuple(new_edges))


def describe(g: BeliefGraph, s: MachineState) -> Report:
    """Report the current focus with its lineage and supporting evidence."""
    focus = G.reasoning_focus(g, s.level)
    chain = [g.nodes[a].label for a in G.lineage(g, focus)] + [g.nodes[focus].label]
    support = sorted(
        g.nodes[e.src].label for e in g.edges if e.dst == focus and e.kind is EdgeKind.SUPPORT
    )
    lines = ["Lineage: " + " -> ".join(chain)]
    lines.append(f"Confidence: {g.nodes[focus].confidence:.2f} at level {s.level}")
    if support:
        lines.append("Supporting evidence:")
        lines.extend(f"  - {label}" for label in support)
    else:
        lines.append("Supporting evidence: none")
    return Report(prediction=g.nodes[focus].label, narrative="\n".join(lines))


class OracleCognition(CognitionPort):
    def __init__(
        self,
        scenario: Scenario,
        w_support: float = DEFAULT_SUPPORT_WEIGHT,
        w_refute: float = DEFAULT_REFUTE_WEIGHT,
    ):
        self.scenario = scenario
        self.w_support = w_support
        self.w_refute = w_refute
        self.episode_id = ""
        self._observations: dict[int, Observation] = {}

    def _template(self, g: BeliefGraph, node: NodeId) -> HypothesisTemplate:
        label = g.nodes[node].label if node in g.nodes else node
        tmpl = self.scenario.template_by_label(label)
        if tmpl is None:
            raise UnmatchedHypothesis(f"no scenario template is labelled {label!r}")
        return tmpl

    def initialize_hypotheses(self, symptoms: Sequence[str]) -> tuple[list[str], list[HypothesisSpec]]:
        if not symptoms:
            raise EmptyInput("no surface symptoms supplied")
        specs = [HypothesisSpec(t.label, t.prior) for t in self.scenario.level_one()]
        return list(symptoms), specs

    def plan(self, focus: NodeId, g: BeliefGraph, s: MachineState) -> list[Instruction]:
        tmpl = self.scenario.template_by_label(g.nodes[focus].label)
        if tmpl is None:
            return []
        by_expert: dict[str, list[str]] = {}
        for key in self.scenario.relevance.get(tmpl.id, ()):
            spec = self.scenario.lookup(key)
            expert = spec.expert if spec else self.scenario.roles[0]
            by_expert.setdefault(expert, []).append(key)
        digest = G.serialize(g)
        return [
            Instruction(
                expert=expert,
                directive=f"Test '{tmpl.label}' with: " + "; ".join(keys),
                focus=focus,
                belief_digest=digest,
            )
            for expert, keys in by_expert.items()
        ]

    def _actions_for(self, tmpl: HypothesisTemplate, expert: str) -> list[str]:
        out = []
        for key in self.scenario.relevance.get(tmpl.id, ()):
            spec = self.scenario.lookup(key)
            if (spec.expert if spec else self.scenario.roles[0]) == expert:
                out.append(key)
        return out

    def investigate(
        self, instruction: Instruction, budget: int, tools: ToolEnvironment
    ) -> tuple[list[Observation], Analysis]:
        self.episode_id = tools.episode_id
        if budget <= 0:
            return [], Analysis(instruction.expert)
        g = G.deserialize(instruction.belief_digest)
        tmpl = self.scenario.template_by_label(g.nodes[instruction.focus].label)
        if tmpl is None:
            return [], Analysis(instruction.expert)
        keys = self._actions_for(tmpl, instruction.expert)[:budget]
        observations: list[Observation] = []
        findings: list[AnalysisFinding] = []
        by_label = {normalize_label(n.label): n.id for n in g.hypotheses()}
        for key in keys:
            # Re-reading an earlier result is memory, not a new retrieval.
            obs = tools.recall(key) or tools.call(instruction.expert, key)
            observations.append(obs)
            self._observations[obs.event_index] = obs
            spec = self.scenario.lookup(key) if obs.found else None
            if spec is None:
                continue
            for f in spec.findings:
                target = by_label.get(normalize_label(self.scenario.taxonomy[f.template].label))
                if target is not None:
                    findings.append(AnalysisFinding(target, f.polarity, f.strength, obs.event_index))
        return observations, Analysis(instruction.expert, tuple(findings))

    def propose_update(self, analyses: Sequence[Analysis], g: BeliefGraph) -> GraphUpdate:
        return findings_to_update(
            analyses, g, self._observations, self.episode_id, self.w_support, self.w_refute
        )

    def refine_hypotheses(self, top: NodeId, g: BeliefGraph) -> list[HypothesisSpec]:
        tmpl = self._template(g, top)
        if tmpl.is_leaf:
            raise RefinementEmpty(f"{tmpl.label!r} is already a leaf")
        return [
            HypothesisSpec(self.scenario.taxonomy[c].label, self.scenario.taxonomy[c].prior)
            for c in tmpl.children
        ]

    def check_granularity(self, top: NodeId, g: BeliefGraph) -> bool:
        return self._template(g, top).is_leaf

    def report(self, g: BeliefGraph, s: MachineState) -> Report:
        return describe(g, s)

"""Trace auditor for five failure modes of tool-using abductive agents.

Each detector is a structural rule over trace events, so it works on traces
imported from other systems as long as they use the same event schema.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Any

from ..errors import CorruptTrace
from ..graph import EdgeKind, GraphUpdate, NodeKind
from ..scenario import Scenario
from ..trace import EpisodeTrace
from .judge import EXACT, judge


class ErrorType(str, Enum):
    WRONG_ACTION_SELECTION = "WrongActionSelection"
    EVIDENCE_FABRICATION = "EvidenceFabrication"
    CONTEXT_DRIFT = "ContextDrift"
    FAILED_BACKTRACKING = "FailedBacktracking"
    EARLY_STOPPING = "EarlyStopping"


@dataclass(frozen=True)
class AuditFinding:
    episode_id: str
    error_type: ErrorType
    evidence: tuple[int, ...]
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "episode_id": self.episode_id,
            "error_type": self.error_type.value,
            "evidence": list(self.evidence),
            "detail": self.detail,
        }


def _updates(trace: EpisodeTrace):
    for e in trace.events:
        if e.type in ("Init", "GraphUpdated", "DrilledDown") and "update" in e.data:
            yield e, GraphUpdate.from_dict(e.data["update"])


def _context_drift(trace: EpisodeTrace) -> list[AuditFinding]:
    first: dict[str, int] = {}
    out = []
    for e in trace.of_type("ToolCall"):
        key = e.data.get("action_key", "")
        if key in first:
            out.append(AuditFinding(trace.episode_id, ErrorType.CONTEXT_DRIFT, (first[key], e.index),
                                    f"repeated action {key!r}"))
        else:
            first[key] = e.index
    return out


def _wrong_action(trace: EpisodeTrace, scenario: Scenario) -> list[AuditFinding]:
    out = []
    focus_event = None
    allowed: tuple[str, ...] = ()
    label = ""
    for e in trace.events:
        if e.type == "FocusSelected":
            focus_event = e.index
            label = e.data.get("label", "")
            tmpl = scenario.template_by_label(label)
            allowed = scenario.relevance.get(tmpl.id, ()) if tmpl else ()
        elif e.type == "ToolCall" and e.data.get("action_key") not in allowed:
            cited = (focus_event, e.index) if focus_event is not None else (e.index,)
            out.append(AuditFinding(trace.episode_id, ErrorType.WRONG_ACTION_SELECTION, cited,
                                    f"{e.data.get('action_key')!r} is irrelevant to {label!r}"))
    return out


def _fabrication(trace: EpisodeTrace) -> list[AuditFinding]:
    out = []
    obs_index = {e.index for e in trace.of_type("ObservationRecorded")}
    for e, upd in _updates(trace):
        for n in upd.new_nodes:
            if n.kind is not NodeKind.EVIDENCE:
                continue
            p = n.provenance
            grounded = (
                p is not None
                and p.episode_id == trace.episode_id
                and p.event_index in obs_index
                and p.event_index < e.index
            )
            if not grounded:
                cited = (e.index,) if p is None or p.event_index >= len(trace) else (e.index, p.event_index)
                out.append(AuditFinding(trace.episode_id, ErrorType.EVIDENCE_FABRICATION, cited,
                                        f"evidence {n.id} has no matching observation"))
    return out


def _failed_backtracking(trace: EpisodeTrace) -> list[AuditFinding]:
    lineage: set[str] = set()
    pending: list[int] = []
    out = []
    end = None
    for e in trace.events:
        if e.type == "FocusSelected":
            lineage = set(e.data.get("lineage", []))
        elif e.type == "GraphUpdated":
            upd = GraphUpdate.from_dict(e.data.get("update", {}))
            if any(ed.kind is EdgeKind.REFUTE and ed.dst in lineage for ed in upd.new_edges):
                pending.append(e.index)
        elif e.type == "Backtracked":
            pending.clear()
        elif e.type in ("Terminated", "Reported") and end is None:
            end = e.index
    if pending:
        cited = tuple(pending) + ((end,) if end is not None else ())
        out.append(AuditFinding(trace.episode_id, ErrorType.FAILED_BACKTRACKING, cited,
                                "refuted lineage ancestor was never abandoned"))
    return out


def _early_stopping(trace: EpisodeTrace, scenario: Scenario) -> list[AuditFinding]:
    reported = trace.of_type("Reported")
    if not reported:
        return []
    r = reported[-1]
    level = int(r.data.get("level", 0))
    score = judge(str(r.data.get("prediction", "")), scenario).score
    if level < scenario.truth_leaf.level and score < EXACT:
        cited = tuple(e.index for e in trace.of_type("Terminated")) + (r.index,)
        return [AuditFinding(trace.episode_id, ErrorType.EARLY_STOPPING, cited,
                             f"stopped at level {level}, root cause sits at level {scenario.truth_leaf.level}")]
    return []


def audit(trace: EpisodeTrace, scenario: Scenario) -> list[AuditFinding]:
    if not trace.events or trace.events[0].type != "Init":
        raise CorruptTrace("trace does not start with Init")
    for i, e in enumerate(trace.events):
        if e.index != i:
            raise CorruptTrace(f"event {i} carries index {e.index}")
    try:
        findings = (
            _wrong_action(trace, scenario)
            + _fabrication(trace)
            + _context_drift(trace)
            + _failed_backtracking(trace)
            + _early_stopping(trace, scenario)
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptTrace(f"malformed event payload: {exc}") from exc
    return sorted(findings, key=lambda f: (f.evidence, f.error_type.value))


def findings_json(findings: list[AuditFinding]) -> str:
    return json.dumps([f.to_dict() for f in findings], indent=2, sort_keys=True) + "\n"

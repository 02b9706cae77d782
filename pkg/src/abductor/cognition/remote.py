"""Cognition backed by a JSON-over-HTTP chat-completion endpoint.

Wire contract: ``POST {base_url}/chat/completions`` with an OpenAI-style body
(``model``, ``messages``, ``temperature``, ``response_format``). The first
choice's message content must be a JSON object whose shape depends on the
``task`` named in the user message; see ``TASK_SHAPES``. Every exchange is
written to the episode trace as a ``CognitionExchange`` event with the
credential scrubbed.

Grounding does not depend on the model behaving: tools run through the
engine's environment, and findings citing observations from outside the
current call are dropped before they reach the graph.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Sequence

from .. import graph as G
from ..control import HypothesisSpec, MachineState
from ..errors import CognitionFailure, EmptyInput
from ..graph import BeliefGraph, GraphUpdate, NodeId
from ..trace import EpisodeTrace
from .oracle import DEFAULT_REFUTE_WEIGHT, DEFAULT_SUPPORT_WEIGHT, describe, findings_to_update
from .port import (
    Analysis,
    AnalysisFinding,
    CognitionPort,
    Instruction,
    Observation,
    Report,
    ToolEnvironment,
)

logger = logging.getLogger(__name__)

ENV_URL = "ABDUCTOR_REMOTE_URL"
ENV_KEY = "ABDUCTOR_REMOTE_KEY"
ENV_MODEL = "ABDUCTOR_REMOTE_MODEL"
REDACTED = "***"

SYSTEM_PROMPT = (
    "You are one agent in a root-cause investigation. Answer with a single JSON "
    "object matching the requested task shape and nothing else."
)

TASK_SHAPES = {
    "initialize": {"hypotheses": [{"label": "str", "prior": "float 0..1"}]},
    "plan": {"instructions": [{"expert": "role name", "directive": "str"}]},
    "select_actions": {"actions": ["exact action string"]},
    "analyze": {"findings": [{"hypothesis": "node id", "polarity": "support|refute",
                              "strength": "float 0..1", "event_index": "int"}]},
    "refine": {"children": [{"label": "str", "prior": "float 0..1"}]},
    "granularity": {"granular": "bool"},
    "report": {"narrative": "str"},
}


def _clamp01(x: Any) -> float:
    try:
        v = float(x)
    except (TypeError, ValueError):
        return 0.0
    return round(min(1.0, max(0.0, v)), 2)


class RemoteCognition(CognitionPort):
    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "default",
        *,
        roles: Sequence[str] = ("application", "linux", "network", "database"),
        trace: EpisodeTrace | None = None,
        timeout: float = 60.0,
        retries: int = 2,
        transport: Any = None,
        w_support: float = DEFAULT_SUPPORT_WEIGHT,
        w_refute: float = DEFAULT_REFUTE_WEIGHT,
    ):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.roles = tuple(roles)
        self.trace = trace
        self.retries = retries
        self.w_support = w_support
        self.w_refute = w_refute
        self.tokens_used = 0
        self.episode_id = trace.episode_id if trace else ""
        self._observations: dict[int, Observation] = {}
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    @classmethod
    def from_env(
        cls,
        trace: EpisodeTrace | None = None,
        roles: Sequence[str] | None = None,
        timeout: float = 60.0,
        retries: int = 2,
        **kw: Any,
    ) -> "RemoteCognition":
        url = os.environ.get(ENV_URL)
        if not url:
            raise CognitionFailure(f"remote cognition needs {ENV_URL} to be set")
        extra = {"roles": roles} if roles else {}
        return cls(
            url,
            os.environ.get(ENV_KEY, ""),
            os.environ.get(ENV_MODEL, "default"),
            trace=trace,
            timeout=timeout,
            retries=retries,
            **extra,
            **kw,
        )

    def _redact(self, value: Any) -> Any:
        if not self.api_key:
            return value
        text = json.dumps(value)
        return json.loads(text.replace(self.api_key, REDACTED))

    def _complete(self, task: str, payload: dict[str, Any]) -> dict[str, Any]:
        import httpx

        body = {
            "model": self.model,
            "temperature": 0,
            "response_format": {"type": "json_object"},
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": json.dumps(
                    {"task": task, "shape": TASK_SHAPES[task], **payload}, sort_keys=True)},
            ],
        }
        last_error = "no attempt made"
        for attempt in range(self.retries + 1):
            response_doc: Any = None
            try:
                resp = self._client.post(f"{self.base_url}/chat/completions", json=body)
                response_doc = resp.json() if resp.content else None
                resp.raise_for_status()
                content = response_doc["choices"][0]["message"]["content"]
                parsed = json.loads(content)
                if not isinstance(parsed, dict):
                    raise ValueError("content is not a JSON object")
            except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                self._log(task, attempt, body, response_doc, error=last_error)
                logger.warning("remote %s attempt %d failed: %s", task, attempt + 1, last_error)
                continue
            usage = (response_doc or {}).get("usage") or {}
            self.tokens_used += int(usage.get("total_tokens", 0) or 0)
            self._log(task, attempt, body, response_doc)
            return parsed
        raise CognitionFailure(f"remote {task} failed after {self.retries + 1} attempts: {last_error}")

    def _log(self, task: str, attempt: int, request: Any, response: Any, error: str | None = None) -> None:
        if self.trace is None:
            return
        self.trace.record(
            "CognitionExchange",
            task=task,
            attempt=attempt,
            request=self._redact(request),
            response=self._redact(response),
            error=error,
            tokens_used=self.tokens_used,
        )

    def initialize_hypotheses(self, symptoms: Sequence[str]) -> tuple[list[str], list[HypothesisSpec]]:
        if not symptoms:
            raise EmptyInput("no surface symptoms supplied")
        out = self._complete("initialize", {"symptoms": list(symptoms)})
        specs = [
            HypothesisSpec(str(h["label"]), _clamp01(h.get("prior", 0.5)))
            for h in out.get("hypotheses", [])
            if isinstance(h, dict) and h.get("label")
        ]
        if not specs:
            raise CognitionFailure("remote initialize returned no hypotheses")
        return list(symptoms), specs

    def plan(self, focus: NodeId, g: BeliefGraph, s: MachineState) -> list[Instruction]:
        digest = G.serialize(g)
        out = self._complete("plan", {
            "focus": {"id": focus, "label": g.nodes[focus].label, "level": s.level},
            "belief": json.loads(digest),
            "roles": list(self.roles),
        })
        seen: set[str] = set()
        instructions = []
        for item in out.get("instructions", []):
            expert = item.get("expert") if isinstance(item, dict) else None
            if expert not in self.roles or expert in seen:
                continue
            seen.add(expert)
            instructions.append(Instruction(expert, str(item.get("directive", "")), focus, digest))
        return instructions

    def investigate(
        self, instruction: Instruction, budget: int, tools: ToolEnvironment
    ) -> tuple[list[Observation], Analysis]:
        self.episode_id = tools.episode_id
        if budget <= 0:
            return [], Analysis(instruction.expert)
        g = G.deserialize(instruction.belief_digest)
        picked = self._complete("select_actions", {
            "expert": instruction.expert,
            "directive": instruction.directive,
            "budget": budget,
        })
        keys = [str(k) for k in picked.get("actions", []) if isinstance(k, str)][:budget]
        observations = [tools.recall(k) or tools.call(instruction.expert, k) for k in keys]
        for obs in observations:
            self._observations[obs.event_index] = obs
        if not observations:
            return [], Analysis(instruction.expert)
        analysed = self._complete("analyze", {
            "expert": instruction.expert,
            "hypotheses": [{"id": n.id, "label": n.label, "level": n.level} for n in g.hypotheses()],
            "observations": [
                {"event_index": o.event_index, "action_key": o.action_key, "payload": o.payload}
                for o in observations
            ],
        })
        cited = {o.event_index for o in observations}
        findings = []
        for f in analysed.get("findings", []):
            if not isinstance(f, dict):
                continue
            if f.get("polarity") not in ("support", "refute") or f.get("event_index") not in cited:
                continue
            if f.get("hypothesis") not in g.nodes or not g.nodes[f["hypothesis"]].is_hypothesis:
                continue
            findings.append(AnalysisFinding(f["hypothesis"], f["polarity"], _clamp01(f.get("strength")),
                                            int(f["event_index"])))
        return observations, Analysis(instruction.expert, tuple(findings))

    def propose_update(self, analyses: Sequence[Analysis], g: BeliefGraph) -> GraphUpdate:
        return findings_to_update(analyses, g, self._observations, self.episode_id,
                                  self.w_support, self.w_refute)

    def refine_hypotheses(self, top: NodeId, g: BeliefGraph) -> list[HypothesisSpec]:
        out = self._complete("refine", {"hypothesis": g.nodes[top].label, "belief": json.loads(G.serialize(g))})
        return [
            HypothesisSpec(str(c["label"]), _clamp01(c.get("prior", 0.5)))
            for c in out.get("children", [])
            if isinstance(c, dict) and c.get("label")
        ]

    def check_granularity(self, top: NodeId, g: BeliefGraph) -> bool:
        out = self._complete("granularity", {"hypothesis": g.nodes[top].label})
        return bool(out.get("granular", False))

    def report(self, g: BeliefGraph, s: MachineState) -> Report:
        base = describe(g, s)
        try:
            out = self._complete("report", {"prediction": base.prediction, "summary": base.narrative})
        except CognitionFailure:
            return base
        narrative = out.get("narrative")
        return Report(base.prediction, narrative if isinstance(narrative, str) and narrative else base.narrative)

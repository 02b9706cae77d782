"""Scenario model, JSON file format, and validation.

A scenario bundles the surface symptoms handed to the engine, a taxonomy of
hypothesis templates with one truth path, and an evidence repository keyed by
exact action strings. Anything not in the repository reveals nothing.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

from .errors import ParseError, ValidationError

SCENARIO_SCHEMA = "abductor.scenario/1"
NOT_FOUND_PAYLOAD = "NotFound: no record matches this action"
DEFAULT_ROLES = ("application", "linux", "network", "database")
BUDGET_KEYS = ("max_iterations", "expert_budget")
POLARITIES = ("support", "refute")


def normalize_label(text: str) -> str:
    return re.sub(r"\s+", " ", text).strip().casefold()


@dataclass(frozen=True)
class HypothesisTemplate:
    id: str
    label: str
    level: int
    prior: float
    children: tuple[str, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "label": self.label,
            "level": self.level,
            "prior": self.prior,
            "children": list(self.children),
        }


@dataclass(frozen=True)
class Finding:
    template: str
    polarity: str
    strength: float

    def to_dict(self) -> dict[str, Any]:
        return {"template": self.template, "polarity": self.polarity, "strength": self.strength}


@dataclass(frozen=True)
class EvidenceSpec:
    action_key: str
    expert: str
    payload: str
    findings: tuple[Finding, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "action_key": self.action_key,
            "expert": self.expert,
            "payload": self.payload,
            "findings": [f.to_dict() for f in self.findings],
        }


@dataclass(frozen=True)
class Scenario:
    id: str
    surface_symptoms: tuple[str, ...]
    taxonomy: dict[str, HypothesisTemplate]
    truth_path: tuple[str, ...]
    evidence_repo: dict[str, EvidenceSpec]
    relevance: dict[str, tuple[str, ...]]
    roles: tuple[str, ...] = DEFAULT_ROLES
    budgets: dict[str, int] = field(default_factory=dict)
    metadata: dict[str, Any] = field(default_factory=dict)

    @property
    def truth_leaf(self) -> HypothesisTemplate:
        return self.taxonomy[self.truth_path[-1]]

    def level_one(self) -> list[HypothesisTemplate]:
        return [t for t in self.taxonomy.values() if t.level == 1]

    def template_by_label(self, label: str) -> HypothesisTemplate | None:
        """Exact label match first, then case/whitespace-insensitive."""
        for t in self.taxonomy.values():
            if t.label == label:
                return t
        wanted = normalize_label(label)
        for t in self.taxonomy.values():
            if normalize_label(t.label) == wanted:
                return t
        return None

    def lookup(self, action_key: str) -> EvidenceSpec | None:
        """Exact-key retrieval; ``None`` means the action reveals nothing."""
        return self.evidence_repo.get(action_key)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {
            "schema": SCENARIO_SCHEMA,
            "id": self.id,
            "surface_symptoms": list(self.surface_symptoms),
            "roles": list(self.roles),
            "taxonomy": [t.to_dict() for t in self.taxonomy.values()],
            "truth_path": list(self.truth_path),
            "evidence": [e.to_dict() for e in self.evidence_repo.values()],
            "relevance": {k: list(v) for k, v in self.relevance.items()},
        }
        if self.budgets:
            d["budgets"] = dict(self.budgets)
        if self.metadata:
            d["metadata"] = dict(self.metadata)
        return d

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def _is_quantized(x: float) -> bool:
    return abs(round(x, 2) - x) < 1e-12


def _number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse(data: Any, problems: list[str]) -> Scenario | None:
    """Build a Scenario from raw JSON, appending every problem found."""
    if not isinstance(data, dict):
        problems.append("scenario document must be a JSON object")
        return None
    if data.get("schema") != SCENARIO_SCHEMA:
        problems.append(f"schema must be {SCENARIO_SCHEMA!r}, got {data.get('schema')!r}")
    sid = data.get("id")
    if not isinstance(sid, str) or not sid:
        problems.append("id must be a non-empty string")
        sid = ""

    symptoms = data.get("surface_symptoms")
    if not isinstance(symptoms, list) or not symptoms:
        problems.append("surface_symptoms must be a non-empty list")
        symptoms = []
    elif not all(isinstance(s, str) and s.strip() for s in symptoms):
        problems.append("surface_symptoms entries must be non-empty strings")

    roles = data.get("roles", list(DEFAULT_ROLES))
    if not isinstance(roles, list) or not roles or not all(isinstance(r, str) and r for r in roles):
        problems.append("roles must be a non-empty list of names")
        roles = list(DEFAULT_ROLES)
    elif len(set(roles)) != len(roles):
        problems.append("roles must be unique")

    taxonomy: dict[str, HypothesisTemplate] = {}
    raw_tax = data.get("taxonomy")
    if not isinstance(raw_tax, list) or not raw_tax:
        problems.append("taxonomy must be a non-empty list")
        raw_tax = []
    for i, t in enumerate(raw_tax):
        if not isinstance(t, dict):
            problems.append(f"taxonomy[{i}] is not an object")
            continue
        tid, label, level, prior = t.get("id"), t.get("label"), t.get("level"), t.get("prior")
        children = t.get("children", [])
        bad = False
        if not isinstance(tid, str) or not tid:
            problems.append(f"taxonomy[{i}].id must be a non-empty string")
            bad = True
        elif tid in taxonomy:
            problems.append(f"duplicate template id {tid!r}")
            bad = True
        if not isinstance(label, str) or not label.strip():
            problems.append(f"taxonomy[{i}].label must be a non-empty string")
            bad = True
        if not isinstance(level, int) or isinstance(level, bool) or level < 1:
            problems.append(f"taxonomy[{i}].level must be a positive integer")
            bad = True
        if not _number(prior) or not 0.0 <= prior <= 1.0:
            problems.append(f"taxonomy[{i}].prior must be a number in [0, 1]")
            bad = True
        elif not _is_quantized(prior):
            problems.append(f"taxonomy[{i}].prior {prior} has more than 2 decimals")
        if not isinstance(children, list) or not all(isinstance(c, str) for c in children):
            problems.append(f"taxonomy[{i}].children must be a list of ids")
            bad = True
        if not bad:
            taxonomy[tid] = HypothesisTemplate(tid, label, level, float(prior), tuple(children))

    truth = data.get("truth_path")
    if not isinstance(truth, list) or not truth or not all(isinstance(x, str) for x in truth):
        problems.append("truth_path must be a non-empty list of template ids")
        truth = []

    evidence: dict[str, EvidenceSpec] = {}
    raw_ev = data.get("evidence", [])
    if not isinstance(raw_ev, list):
        problems.append("evidence must be a list")
        raw_ev = []
    for i, e in enumerate(raw_ev):
        if not isinstance(e, dict):
            problems.append(f"evidence[{i}] is not an object")
            continue
        key, expert, payload = e.get("action_key"), e.get("expert", roles[0]), e.get("payload")
        if not isinstance(key, str) or not key:
            problems.append(f"evidence[{i}].action_key must be a non-empty string")
            continue
        if key in evidence:
            problems.append(f"duplicate action_key {key!r}")
            continue
        if not isinstance(payload, str):
            problems.append(f"evidence {key!r}: payload must be a string")
            payload = ""
        if expert not in roles:
            problems.append(f"evidence {key!r}: expert {expert!r} is not a declared role")
        findings = []
        raw_f = e.get("findings", [])
        if not isinstance(raw_f, list):
            problems.append(f"evidence {key!r}: findings must be a list")
            raw_f = []
        for j, f in enumerate(raw_f):
            if not isinstance(f, dict):
                problems.append(f"evidence {key!r}: findings[{j}] is not an object")
                continue
            tmpl, pol, strength = f.get("template"), f.get("polarity"), f.get("strength")
            if pol not in POLARITIES:
                problems.append(f"evidence {key!r}: findings[{j}].polarity must be support|refute")
                continue
            if not _number(strength) or not 0.0 <= strength <= 1.0:
                problems.append(f"evidence {key!r}: findings[{j}].strength must be in [0, 1]")
                continue
            if not _is_quantized(strength):
                problems.append(f"evidence {key!r}: findings[{j}].strength has more than 2 decimals")
            findings.append(Finding(str(tmpl), pol, float(strength)))
        evidence[key] = EvidenceSpec(key, str(expert), payload, tuple(findings))

    relevance: dict[str, tuple[str, ...]] = {}
    raw_rel = data.get("relevance", {})
    if not isinstance(raw_rel, dict):
        problems.append("relevance must be an object")
        raw_rel = {}
    for tid, keys in raw_rel.items():
        if not isinstance(keys, list) or not all(isinstance(k, str) for k in keys):
            problems.append(f"relevance[{tid!r}] must be a list of action keys")
            continue
        relevance[tid] = tuple(keys)

    budgets = data.get("budgets", {})
    if not isinstance(budgets, dict):
        problems.append("budgets must be an object")
        budgets = {}
    for k, v in budgets.items():
        if k not in BUDGET_KEYS:
            problems.append(f"unknown budget key {k!r}")
        elif not isinstance(v, int) or isinstance(v, bool) or v < 1:
            problems.append(f"budget {k!r} must be a positive integer")

    metadata = data.get("metadata", {})
    if not isinstance(metadata, dict):
        problems.append("metadata must be an object")
        metadata = {}

    return Scenario(
        id=sid,
        surface_symptoms=tuple(s for s in symptoms if isinstance(s, str)),
        taxonomy=taxonomy,
        truth_path=tuple(truth),
        evidence_repo=evidence,
        relevance=relevance,
        roles=tuple(roles),
        budgets={k: v for k, v in budgets.items() if k in BUDGET_KEYS},
        metadata=metadata,
    )


def semantic_problems(sc: Scenario) -> list[str]:
    """Cross-reference checks on an already-typed scenario."""
    problems: list[str] = []
    tax = sc.taxonomy
    parents: dict[str, list[str]] = {}
    labels: dict[str, str] = {}
    for t in tax.values():
        norm = normalize_label(t.label)
        if norm in labels:
            problems.append(f"templates {labels[norm]!r} and {t.id!r} share label {t.label!r}")
        labels[norm] = t.id
        for c in t.children:
            if c not in tax:
                problems.append(f"template {t.id!r} lists unknown child {c!r}")
                continue
            parents.setdefault(c, []).append(t.id)
            if tax[c].level != t.level + 1:
                problems.append(f"child {c!r} of {t.id!r} must sit at level {t.level + 1}")
    for t in tax.values():
        ps = parents.get(t.id, [])
        if t.level == 1 and ps:
            problems.append(f"level-1 template {t.id!r} has a parent")
        if t.level > 1 and len(ps) != 1:
            problems.append(f"template {t.id!r} needs exactly one parent, has {len(ps)}")
    if tax:
        levels = {t.level for t in tax.values()}
        if levels != set(range(1, max(levels) + 1)):
            problems.append(f"taxonomy levels {sorted(levels)} are not contiguous from 1")

    path = sc.truth_path
    if path:
        missing = [p for p in path if p not in tax]
        if missing:
            problems.append(f"truth_path references unknown templates {missing}")
        else:
            if tax[path[0]].level != 1:
                problems.append("truth_path must start at a level-1 template")
            for a, b in zip(path, path[1:]):
                if b not in tax[a].children:
                    problems.append(f"truth_path step {a!r}->{b!r} is not a parent/child pair")
            if not tax[path[-1]].is_leaf:
                problems.append(f"truth_path must end at a leaf, {path[-1]!r} has children")

    for key, spec in sc.evidence_repo.items():
        for f in spec.findings:
            if f.template not in tax:
                problems.append(f"evidence {key!r} cites unknown template {f.template!r}")
    for tid, keys in sc.relevance.items():
        if tid not in tax:
            problems.append(f"relevance lists unknown template {tid!r}")
        for k in keys:
            if k not in sc.evidence_repo:
                problems.append(f"relevance[{tid!r}] action {k!r} is not in the evidence repository")
    return problems


def from_dict(data: Any) -> Scenario:
    problems: list[str] = []
    sc = _parse(data, problems)
    if sc is not None:
        problems.extend(semantic_problems(sc))
    if problems:
        raise ValidationError(problems)
    assert sc is not None
    return sc


def loads(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    return from_dict(data)


def load(path: str | Path) -> Scenario:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        bundled = bundled_path(p.name)
        if p.parent != Path(".") or bundled is None:
            raise
        text = bundled.read_text(encoding="utf-8")
    return loads(text)


def bundled_names() -> list[str]:
    root = resources.files("abductor") / "data" / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str) -> Any | None:
    root = resources.files("abductor") / "data" / "scenarios"
    candidate = root / (name if name.endswith(".json") else f"{name}.json")
    return candidate if candidate.is_file() else None


def load_bundled(name: str) -> Scenario:
    p = bundled_path(name)
    if p is None:
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return loads(p.read_text(encoding="utf-8"))


def load_many(paths: Iterable[str | Path]) -> list[Scenario]:
    """Load files and directories (every ``*.json`` inside, sorted)."""
    out: list[Scenario] = []
    for raw in paths:
        p = Path(raw)
        if p.is_dir():
            out.extend(load(f) for f in sorted(p.glob("*.json")))
        else:
            out.append(load(p))
    return out

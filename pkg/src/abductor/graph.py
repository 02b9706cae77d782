"""Typed causal graph holding the structural half of the belief state.

Nodes are symptoms, evidence, or hypotheses; edges are derive, refine,
support, or refute. Every public operation treats a :class:`BeliefGraph` as a
value: it returns a new graph and never mutates its input.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Collection, Iterable

from .errors import (
    ConfidenceOutOfRange,
    EmptyLevel,
    InvalidEdge,
    InvariantViolation,
    NotAHypothesis,
    ParseError,
    UngroundedEvidence,
    UnknownNode,
)

GRAPH_SCHEMA = "abductor.belief-graph/1"

# Gaps are rounded so that binary float noise cannot flip a strict comparison
# against a threshold (0.8 - 0.6 > 0.2 is True in IEEE doubles).
GAP_DECIMALS = 9

NodeId = str

_ID_PATTERN = re.compile(r"^[SEH](\d+)$")


class NodeKind(str, Enum):
    SYMPTOM = "symptom"
    EVIDENCE = "evidence"
    HYPOTHESIS = "hypothesis"


class EdgeKind(str, Enum):
    DERIVE = "derive"
    REFINE = "refine"
    SUPPORT = "support"
    REFUTE = "refute"


_PREFIX = {NodeKind.SYMPTOM: "S", NodeKind.EVIDENCE: "E", NodeKind.HYPOTHESIS: "H"}


@dataclass(frozen=True, order=True)
class Provenance:
    """Points at the ObservationRecorded event that produced an evidence node."""

    episode_id: str
    event_index: int

    def to_dict(self) -> dict[str, Any]:
        return {"episode_id": self.episode_id, "event_index": self.event_index}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Provenance":
        return cls(episode_id=str(d["episode_id"]), event_index=int(d["event_index"]))


@dataclass(frozen=True)
class Node:
    id: NodeId
    kind: NodeKind
    label: str
    level: int | None = None
    confidence: float | None = None
    provenance: Provenance | None = None

    @property
    def is_hypothesis(self) -> bool:
        return self.kind is NodeKind.HYPOTHESIS

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"id": self.id, "kind": self.kind.value, "label": self.label}
        if self.level is not None:
            d["level"] = self.level
        if self.confidence is not None:
            d["confidence"] = self.confidence
        if self.provenance is not None:
            d["provenance"] = self.provenance.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Node":
        prov = d.get("provenance")
        conf = d.get("confidence")
        level = d.get("level")
        return cls(
            id=str(d["id"]),
            kind=NodeKind(d["kind"]),
            label=str(d["label"]),
            level=None if level is None else int(level),
            confidence=None if conf is None else float(conf),
            provenance=None if prov is None else Provenance.from_dict(prov),
        )


def hypothesis(id: NodeId, label: str, level: int, confidence: float) -> Node:
    return Node(id=id, kind=NodeKind.HYPOTHESIS, label=label, level=level, confidence=confidence)


def symptom(id: NodeId, label: str) -> Node:
    return Node(id=id, kind=NodeKind.SYMPTOM, label=label)


def evidence(id: NodeId, label: str, provenance: Provenance | None) -> Node:
    return Node(id=id, kind=NodeKind.EVIDENCE, label=label, provenance=provenance)


@dataclass(frozen=True, order=True)
class Edge:
    src: NodeId
    dst: NodeId
    kind: EdgeKind

    def to_dict(self) -> dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "kind": self.kind.value}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Edge":
        return cls(src=str(d["src"]), dst=str(d["dst"]), kind=EdgeKind(d["kind"]))


@dataclass(frozen=True)
class GraphUpdate:
    """One atomic batch: recalibrations, node instantiations, edge formations."""

    recalibrations: tuple[tuple[NodeId, float], ...] = ()
    new_nodes: tuple[Node, ...] = ()
    new_edges: tuple[Edge, ...] = ()

    def is_empty(self) -> bool:
        return not (self.recalibrations or self.new_nodes or self.new_edges)

    def to_dict(self) -> dict[str, Any]:
        return {
            "recalibrations": [[nid, conf] for nid, conf in self.recalibrations],
            "new_nodes": [n.to_dict() for n in self.new_nodes],
            "new_edges": [e.to_dict() for e in self.new_edges],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GraphUpdate":
        return cls(
            recalibrations=tuple((str(nid), float(c)) for nid, c in d.get("recalibrations", [])),
            new_nodes=tuple(Node.from_dict(n) for n in d.get("new_nodes", [])),
            new_edges=tuple(Edge.from_dict(e) for e in d.get("new_edges", [])),
        )


@dataclass
class BeliefGraph:
    nodes: dict[NodeId, Node] = field(default_factory=dict)
    edges: set[Edge] = field(default_factory=set)
    next_seq: int = 1

    def copy(self) -> "BeliefGraph":
        return BeliefGraph(dict(self.nodes), set(self.edges), self.next_seq)

    def mint_ids(self, kind: NodeKind, count: int, start: int | None = None) -> list[NodeId]:
        """Reserve ``count`` fresh ids; ``start`` lets a batch mint several kinds in sequence."""
        base = self.next_seq if start is None else start
        return [f"{_PREFIX[kind]}{base + i:06d}" for i in range(count)]

    def hypotheses(self, level: int | None = None) -> list[Node]:
        hs = [n for n in self.nodes.values() if n.is_hypothesis]
        if level is not None:
            hs = [n for n in hs if n.level == level]
        return sorted(hs, key=lambda n: n.id)

    def of_kind(self, kind: NodeKind) -> list[Node]:
        return sorted((n for n in self.nodes.values() if n.kind is kind), key=lambda n: n.id)

    def max_level(self) -> int:
        return max((n.level for n in self.nodes.values() if n.is_hypothesis), default=0)

    def parent(self, h: NodeId) -> NodeId | None:
        for e in self.edges:
            if e.kind is EdgeKind.REFINE and e.dst == h:
                return e.src
        return None

    def children(self, h: NodeId) -> list[NodeId]:
        return sorted(e.dst for e in self.edges if e.kind is EdgeKind.REFINE and e.src == h)

    def evidence_with_provenance(self, prov: Provenance) -> Node | None:
        for n in self.nodes.values():
            if n.kind is NodeKind.EVIDENCE and n.provenance == prov:
                return n
        return None

    def confidence(self, h: NodeId) -> float:
        return _require_hypothesis(self, h).confidence  # type: ignore[return-value]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BeliefGraph):
            return NotImplemented
        return serialize(self) == serialize(other)


def _require_hypothesis(g: BeliefGraph, h: NodeId) -> Node:
    node = g.nodes.get(h)
    if node is None or not node.is_hypothesis:
        raise NotAHypothesis(f"{h!r} is not a hypothesis in this graph")
    return node


def _check_confidence(value: Any, where: str) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or math.isnan(value):
        raise ConfidenceOutOfRange(f"{where}: confidence {value!r} is not a number")
    if not 0.0 <= value <= 1.0:
        raise ConfidenceOutOfRange(f"{where}: confidence {value!r} outside [0, 1]")


def _check_node(node: Node, observations: Collection[Provenance] | None) -> None:
    if node.kind is NodeKind.HYPOTHESIS:
        if node.level is None or node.level < 1:
            raise InvariantViolation(f"hypothesis {node.id} needs a positive level")
        _check_confidence(node.confidence, node.id)
    else:
        if node.level is not None or node.confidence is not None:
            raise InvariantViolation(f"{node.kind.value} {node.id} carries hypothesis-only fields")
    if node.kind is NodeKind.EVIDENCE:
        prov = node.provenance
        if prov is None or not prov.episode_id or prov.event_index < 0:
            raise UngroundedEvidence(f"evidence {node.id} has no provenance token")
        if observations is not None and prov not in observations:
            raise UngroundedEvidence(
                f"evidence {node.id} cites observation {prov.event_index} "
                f"of {prov.episode_id!r}, which does not exist"
            )
    elif node.provenance is not None:
        raise InvariantViolation(f"{node.kind.value} {node.id} carries a provenance token")


def _check_edge(g: BeliefGraph, edge: Edge) -> None:
    src, dst = g.nodes.get(edge.src), g.nodes.get(edge.dst)
    if src is None or dst is None:
        missing = edge.src if src is None else edge.dst
        raise UnknownNode(f"edge {edge.kind.value} references unknown node {missing!r}")
    k = edge.kind
    if k is EdgeKind.DERIVE:
        ok = src.kind is NodeKind.SYMPTOM and dst.is_hypothesis and dst.level == 1
    elif k is EdgeKind.REFINE:
        ok = src.is_hypothesis and dst.is_hypothesis and dst.level == src.level + 1  # type: ignore[operator]
    else:
        ok = src.kind is NodeKind.EVIDENCE and dst.is_hypothesis
    if not ok:
        raise InvalidEdge(f"{k.value} edge {edge.src}->{edge.dst} violates kind/level constraints")


def invariant_problems(g: BeliefGraph) -> list[str]:
    """Every structural invariant violated by ``g``; empty when the graph is sound."""
    problems: list[str] = []
    for nid, node in g.nodes.items():
        if nid != node.id:
            problems.append(f"node key {nid!r} does not match id {node.id!r}")
        try:
            _check_node(node, None)
        except Exception as exc:  # noqa: BLE001
            problems.append(str(exc))
    refine_parents: dict[NodeId, list[NodeId]] = {}
    for edge in g.edges:
        try:
            _check_edge(g, edge)
        except Exception as exc:  # noqa: BLE001
            problems.append(str(exc))
            continue
        if edge.kind is EdgeKind.REFINE:
            refine_parents.setdefault(edge.dst, []).append(edge.src)
        if g.nodes[edge.dst].kind is NodeKind.EVIDENCE:
            problems.append(f"evidence {edge.dst} has an in-edge")
    for h in g.hypotheses():
        parents = refine_parents.get(h.id, [])
        if len(parents) > 1:
            problems.append(f"hypothesis {h.id} has {len(parents)} refine parents")
        if h.level is not None and h.level > 1 and len(parents) != 1:
            problems.append(f"level-{h.level} hypothesis {h.id} lacks a refine parent")
    # Refine edges strictly increase level, so a cycle can only appear through
    # malformed input; walk parents anyway to report it.
    for start in refine_parents:
        seen = {start}
        cur = refine_parents.get(start, [None])[0]
        while cur is not None:
            if cur in seen:
                problems.append(f"refine cycle through {start}")
                break
            seen.add(cur)
            cur = refine_parents.get(cur, [None])[0]
    return problems


def validate(g: BeliefGraph) -> None:
    problems = invariant_problems(g)
    if problems:
        raise InvariantViolation("; ".join(problems))


def _bump_seq(g: BeliefGraph, ids: Iterable[NodeId]) -> None:
    for nid in ids:
        m = _ID_PATTERN.match(nid)
        if m:
            g.next_seq = max(g.next_seq, int(m.group(1)) + 1)


def apply_update(
    g: BeliefGraph,
    u: GraphUpdate,
    observations: Collection[Provenance] | None = None,
) -> BeliefGraph:
    """Apply ``u`` atomically, returning a new graph.

    ``observations`` is the set of provenance tokens that resolve in the
    current episode; when given, evidence citing anything else is rejected as
    ungrounded. On any error ``g`` is left untouched.
    """
    if u.is_empty():
        return g.copy()
    work = g.copy()
    for node in u.new_nodes:
        if node.id in work.nodes:
            raise InvariantViolation(f"node id {node.id!r} already exists")
        _check_node(node, observations)
        work.nodes[node.id] = node
    for edge in u.new_edges:
        if edge in work.edges:
            raise InvalidEdge(f"duplicate edge {edge.kind.value} {edge.src}->{edge.dst}")
        _check_edge(work, edge)
        work.edges.add(edge)
    for nid, conf in u.recalibrations:
        node = work.nodes.get(nid)
        if node is None:
            raise UnknownNode(f"recalibration targets unknown node {nid!r}")
        if not node.is_hypothesis:
            raise NotAHypothesis(f"recalibration targets {node.kind.value} {nid!r}")
        _check_confidence(conf, nid)
        work.nodes[nid] = Node(nid, node.kind, node.label, node.level, float(conf))
    _bump_seq(work, (n.id for n in u.new_nodes))
    validate(work)
    return work


def _ranked(g: BeliefGraph, level: int) -> list[Node]:
    hs = g.hypotheses(level)
    if not hs:
        raise EmptyLevel(f"no hypothesis at level {level}")
    return sorted(hs, key=lambda n: (-n.confidence, n.id))  # type: ignore[operator]


def reasoning_focus(g: BeliefGraph, level: int) -> NodeId:
    """Highest-confidence hypothesis at ``level``; ties go to the smallest id."""
    return _ranked(g, level)[0].id


def confidence_gap(g: BeliefGraph, level: int) -> tuple[NodeId, float]:
    """Top hypothesis at ``level`` and its lead over the runner-up.

    A lone hypothesis is measured against zero.
    """
    ranked = _ranked(g, level)
    top = ranked[0]
    second = ranked[1].confidence if len(ranked) > 1 else 0.0
    return top.id, round(top.confidence - second, GAP_DECIMALS)  # type: ignore[operator]


def _evidence_tally(g: BeliefGraph, h: NodeId, kind: EdgeKind) -> int:
    _require_hypothesis(g, h)
    provs = set()
    for e in g.edges:
        if e.kind is kind and e.dst == h:
            provs.add(g.nodes[e.src].provenance)
    return len(provs)


def support_count(g: BeliefGraph, h: NodeId) -> int:
    """Distinct observations backing ``h`` through support edges."""
    return _evidence_tally(g, h, EdgeKind.SUPPORT)


def refute_count(g: BeliefGraph, h: NodeId) -> int:
    return _evidence_tally(g, h, EdgeKind.REFUTE)


def lineage(g: BeliefGraph, h: NodeId) -> list[NodeId]:
    """Refine ancestors of ``h``, shallowest first, excluding ``h`` itself."""
    _require_hypothesis(g, h)
    chain: list[NodeId] = []
    cur = g.parent(h)
    while cur is not None:
        chain.append(cur)
        cur = g.parent(cur)
    chain.reverse()
    return chain


def siblings(g: BeliefGraph, h: NodeId) -> list[NodeId]:
    """Hypotheses sharing ``h``'s refine parent (all of level 1 for level-1 nodes)."""
    node = _require_hypothesis(g, h)
    if node.level == 1:
        return [n.id for n in g.hypotheses(1)]
    parent = g.parent(h)
    if parent is None:
        return [h]
    return g.children(parent)


def prune_below(g: BeliefGraph, l_star: int) -> tuple[BeliefGraph, frozenset[NodeId]]:
    """Drop every hypothesis deeper than ``l_star`` along with its edges.

    Symptoms and evidence are facts and always survive.
    """
    removed = frozenset(n.id for n in g.nodes.values() if n.is_hypothesis and n.level > l_star)  # type: ignore[operator]
    if not removed:
        return g.copy(), removed
    out = BeliefGraph(
        nodes={k: v for k, v in g.nodes.items() if k not in removed},
        edges={e for e in g.edges if e.src not in removed and e.dst not in removed},
        next_seq=g.next_seq,
    )
    return out, removed


def to_dict(g: BeliefGraph) -> dict[str, Any]:
    return {
        "schema": GRAPH_SCHEMA,
        "next_seq": g.next_seq,
        "nodes": [g.nodes[k].to_dict() for k in sorted(g.nodes)],
        "edges": [e.to_dict() for e in sorted(g.edges)],
    }


def serialize(g: BeliefGraph) -> str:
    """Canonical JSON text; equal graphs produce identical bytes."""
    return json.dumps(to_dict(g), sort_keys=True, indent=2, ensure_ascii=True) + "\n"


def from_dict(data: Any) -> BeliefGraph:
    if not isinstance(data, dict):
        raise ParseError("graph document must be a JSON object")
    if data.get("schema") != GRAPH_SCHEMA:
        raise ParseError(f"unsupported graph schema {data.get('schema')!r}")
    try:
        nodes = [Node.from_dict(n) for n in data["nodes"]]
        edges = [Edge.from_dict(e) for e in data["edges"]]
        next_seq = data["next_seq"]
        if not isinstance(next_seq, int) or isinstance(next_seq, bool) or next_seq < 1:
            raise ValueError(f"bad next_seq {next_seq!r}")
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed graph document: {exc}") from exc
    g = BeliefGraph({n.id: n for n in nodes}, set(edges), next_seq)
    if len(g.nodes) != len(nodes) or len(g.edges) != len(edges):
        raise InvariantViolation("duplicate node ids or edges in document")
    validate(g)
    return g


def deserialize(text: str) -> BeliefGraph:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"graph text is not JSON: {exc}") from exc
    return from_dict(data)


__all__ = [
    "BeliefGraph",
    "Edge",
    "EdgeKind",
    "GraphUpdate",
    "Node",
    "NodeId",
    "NodeKind",
    "Provenance",
    "apply_update",
    "confidence_gap",
    "deserialize",
    "evidence",
    "hypothesis",
    "lineage",
    "prune_below",
    "reasoning_focus",
    "refute_count",
    "serialize",
    "siblings",
    "support_count",
    "symptom",
    "validate",
]

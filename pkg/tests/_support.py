"""Shared helpers for the test suite: random graph builders, brute-force
reference implementations, and audit fixture construction.

The reference implementations deliberately avoid the package's own graph
queries (lineage, siblings, confidence_gap, support_count) and work straight
off the raw node and edge sets with exact decimal arithmetic.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

from abductor import graph as G
from abductor.control import MachineState, TransitionParams
from abductor.graph import BeliefGraph, Edge, EdgeKind, Node, NodeKind, Provenance
from abductor.trace import EpisodeTrace

FIXTURES = Path(__file__).parent / "fixtures"

# Confidence grids: a coarse one to force ties, a fine one for near-misses.
_GRIDS = ([i / 20 for i in range(21)], [i / 100 for i in range(101)])


def exact(x: float) -> Fraction:
    return Fraction(str(x))


def random_belief(rng: random.Random, max_depth: int = 4, max_width: int = 4) -> tuple[BeliefGraph, MachineState]:
    """Random well-formed graph plus a state whose level holds hypotheses."""
    grid = rng.choice(_GRIDS)
    g = BeliefGraph()
    seq = iter(range(1, 10_000))

    def nid(prefix: str) -> str:
        return f"{prefix}{next(seq):06d}"

    sym = nid("S")
    g.nodes[sym] = G.symptom(sym, "alert")
    frontier: list[str] = []
    for _ in range(rng.randint(1, max_width)):
        h = nid("H")
        g.nodes[h] = G.hypothesis(h, f"h{h}", 1, rng.choice(grid))
        g.edges.add(Edge(sym, h, EdgeKind.DERIVE))
        frontier.append(h)
    depth = rng.randint(1, max_depth)
    for level in range(2, depth + 1):
        # Drill under one node per level, like the engine does, sometimes two.
        parents = rng.sample(frontier, k=min(len(frontier), rng.choice([1, 1, 2])))
        frontier = []
        for p in parents:
            for _ in range(rng.randint(1, max_width)):
                h = nid("H")
                g.nodes[h] = G.hypothesis(h, f"h{h}", level, rng.choice(grid))
                g.edges.add(Edge(p, h, EdgeKind.REFINE))
                frontier.append(h)
    hyps = [n.id for n in g.hypotheses()]
    n_obs = rng.randint(0, 6)
    for i in range(n_obs):
        # Occasionally two evidence nodes share one observation.
        prov = Provenance("ep", rng.randint(0, max(0, n_obs - 1)) if rng.random() < 0.3 else i + 100)
        e = nid("E")
        g.nodes[e] = G.evidence(e, f"obs{i}", prov)
        for h in rng.sample(hyps, k=rng.randint(0, min(3, len(hyps)))):
            g.edges.add(Edge(e, h, rng.choice([EdgeKind.SUPPORT, EdgeKind.SUPPORT, EdgeKind.REFUTE])))
    g.next_seq = next(seq)
    G.validate(g)
    levels = sorted({n.level for n in g.hypotheses()})
    params = TransitionParams(
        gap_delta=rng.choice([0.0, 0.05, 0.1, 0.2, 0.25, 0.3, 0.5]),
        min_support=rng.randint(0, 4),
        max_iterations=rng.randint(1, 5),
        expert_budget=3,
    )
    s = MachineState(level=rng.choice(levels), iteration=0, params=params)
    return g, s


def brute_support(g: BeliefGraph, h: str) -> int:
    seen = []
    for e in g.edges:
        if e.kind is EdgeKind.SUPPORT and e.dst == h:
            p = g.nodes[e.src].provenance
            if p not in seen:
                seen.append(p)
    return len(seen)


def brute_transition(g: BeliefGraph, s: MachineState, granular: bool) -> dict:
    """Reference transition predicate computed from first principles."""
    hyps = {nid: n for nid, n in g.nodes.items() if n.kind is NodeKind.HYPOTHESIS}
    parent = {e.dst: e.src for e in g.edges if e.kind is EdgeKind.REFINE}
    conf = {h: exact(n.confidence) for h, n in hyps.items()}
    at_level = [h for h, n in hyps.items() if n.level == s.level]
    best = max(conf[h] for h in at_level)
    focus = min(h for h in at_level if conf[h] == best)

    chain = []
    cur = parent.get(focus)
    while cur is not None:
        chain.insert(0, cur)
        cur = parent.get(cur)
    for a in chain:
        lvl = hyps[a].level
        if lvl == 1:
            group = [h for h, n in hyps.items() if n.level == 1]
        else:
            group = [h for h in hyps if parent.get(h) == parent[a]]
        if any(conf[b] > conf[a] for b in group):
            return {
                "kind": "BACKTRACK",
                "l_star": lvl,
                "removed": {h for h, n in hyps.items() if n.level > lvl},
                "level": lvl,
            }

    ordered = sorted((conf[h] for h in at_level), reverse=True)
    gap = ordered[0] - (ordered[1] if len(ordered) > 1 else 0)
    if not (gap > exact(s.params.gap_delta) and brute_support(g, focus) >= s.params.min_support):
        return {"kind": "STAY", "level": s.level}
    if granular:
        return {"kind": "TERMINATE", "level": s.level}
    return {"kind": "DRILL_DOWN", "level": s.level + 1, "parent": focus}


# --- audit fixtures -------------------------------------------------------

def _reindexed(episode_id: str, events: list[tuple[str, dict]]) -> EpisodeTrace:
    t = EpisodeTrace(episode_id)
    for kind, data in events:
        t.record(kind, **data)
    return t


def audit_fixtures(clean: EpisodeTrace) -> dict[str, EpisodeTrace]:
    """Positive fixtures derived from the clean XFS trace by small edits.

    The clean trace layout is Init, Focus(1), Instruction, ToolCall findmnt,
    Observation, ToolCall journalctl, Observation, GraphUpdated, DrilledDown,
    Focus(2), Instruction, GraphUpdated, Terminated, Reported.
    """
    base = [(e.type, json.loads(json.dumps(e.data))) for e in clean.events]
    kinds = [k for k, _ in base]
    calls = [i for i, k in enumerate(kinds) if k == "ToolCall"]
    updates = [i for i, k in enumerate(kinds) if k == "GraphUpdated"]
    eid = clean.episode_id

    def edit(fn) -> EpisodeTrace:
        events = json.loads(json.dumps(base))
        fn(events)
        return _reindexed(eid, [tuple(e) for e in events])

    def wrong_action(ev):
        for i in (calls[0], calls[0] + 1):
            ev[i][1]["action_key"] = "linux: smartctl -a /dev/sda"

    def context_drift(ev):
        key = ev[calls[0]][1]["action_key"]
        for i in (calls[1], calls[1] + 1):
            ev[i][1]["action_key"] = key

    def fabrication(ev):
        nodes = ev[updates[0]][1]["update"]["new_nodes"]
        ev_nodes = [n for n in nodes if n["kind"] == "evidence"]
        ev_nodes[-1]["provenance"]["event_index"] = 999

    def failed_backtracking(ev):
        upd = ev[updates[1]][1]["update"]
        root = ev[updates[1] - 2][1]["lineage"][0]
        src = upd["new_edges"][0]["src"]
        upd["new_edges"].append({"src": src, "dst": root, "kind": "refute"})

    def early_stopping(ev):
        cut = kinds.index("DrilledDown")
        focus = ev[1][1]
        del ev[cut:]
        ev.append(["Terminated", {"iteration": 1, "level": 1, "focus": focus["focus"]}])
        ev.append(["Reported", {"iteration": 1, "level": 1, "focus": focus["focus"],
                                "prediction": focus["label"], "narrative": "", "forced": False,
                                "iterations": 1, "tool_calls": len(calls)}])

    return {
        "WrongActionSelection": edit(wrong_action),
        "ContextDrift": edit(context_drift),
        "EvidenceFabrication": edit(fabrication),
        "FailedBacktracking": edit(failed_backtracking),
        "EarlyStopping": edit(early_stopping),
    }


def budget_violations(trace: EpisodeTrace, expert_budget: int, max_iterations: int) -> list[str]:
    out = []
    per = defaultdict(int)
    for e in trace.of_type("ToolCall"):
        per[(e.data["iteration"], e.data["expert"])] += 1
    for key, n in per.items():
        if n > expert_budget:
            out.append(f"{trace.episode_id}: {n} calls for {key}")
    passes = len(trace.of_type("FocusSelected"))
    if passes > max_iterations:
        out.append(f"{trace.episode_id}: {passes} passes > {max_iterations}")
    return out

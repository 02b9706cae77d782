"""Seeded generator of synthetic incident-diagnosis scenarios.

Every generated scenario is checked by running the oracle engine over it; the
number of loop passes it needed is written into the metadata, and into
``budgets.max_iterations`` whenever the default of 3 is not enough.
"""

from __future__ import annotations

import random
import re
from dataclasses import replace
from typing import Iterable

from .control import TransitionParams
from .scenario import (
    DEFAULT_ROLES,
    EvidenceSpec,
    Finding,
    HypothesisTemplate,
    Scenario,
    from_dict,
)

DEFAULT_MAX_ITERATIONS = TransitionParams().max_iterations

_COMPONENTS = [
    "root filesystem", "data volume", "NVMe disk", "RAID controller", "NIC bond",
    "top-of-rack switch", "DNS resolver", "service mesh sidecar", "ingress gateway",
    "TLS certificate", "JVM heap", "connection pool", "Postgres primary", "replica lag monitor",
    "Redis cache", "Kafka broker", "etcd quorum", "kubelet", "container runtime",
    "cgroup memory limit", "CPU scheduler", "NTP clock", "load balancer pool", "object store client",
    "thread pool", "GC collector", "inode table", "page cache", "write-ahead log", "config map",
]
_FAULTS = [
    "saturation", "corruption", "misconfiguration", "leak", "timeout", "exhaustion",
    "partition", "throttling", "deadlock", "expiry", "crash loop", "degradation",
    "split brain", "drift", "starvation", "flapping",
]
_PROBES = {
    "application": ["kubectl logs --tail=500", "curl -sf /healthz", "grep -c ERROR app.log", "jstack"],
    "linux": ["dmesg -T", "iostat -x 1 3", "vmstat 1 5", "df -h", "free -m", "journalctl -k"],
    "network": ["ping -c 5", "traceroute", "tcpdump -c 200", "dig +trace", "ss -s"],
    "database": ["SELECT * FROM pg_stat_activity", "SHOW ENGINE INNODB STATUS", "pg_stat_replication"],
}
_ALERTS = [
    "HTTP 5xx ratio above 5% on {svc}",
    "p99 latency above 2s on {svc}",
    "health check failing on {svc}",
    "error budget burn rate x14 on {svc}",
    "pod restarts above threshold for {svc}",
    "queue depth growing on {svc}",
]
_SERVICES = ["checkout", "payments", "search", "auth", "inventory", "gateway", "orders"]


def _q(x: float) -> float:
    return round(x, 2)


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")


def _label_pool(rng: random.Random) -> list[str]:
    pool = [f"{c} {f}" for c in _COMPONENTS for f in _FAULTS]
    rng.shuffle(pool)
    return [p[0].upper() + p[1:] for p in pool]


def _priors(rng: random.Random, n: int, winner: int, hi: tuple[float, float]) -> list[float]:
    top = _q(rng.uniform(*hi))
    out = []
    for i in range(n):
        out.append(top if i == winner else _q(rng.uniform(0.1, top - 0.1)))
    return out


class _Builder:
    def __init__(self, rng: random.Random, roles: tuple[str, ...]):
        self.rng = rng
        self.roles = roles
        self.labels = iter(_label_pool(rng))
        self.taxonomy: dict[str, dict] = {}
        self.evidence: dict[str, EvidenceSpec] = {}
        self.relevance: dict[str, list[str]] = {}

    def template(self, level: int, prior: float) -> str:
        tid = f"t{len(self.taxonomy) + 1}"
        self.taxonomy[tid] = {"id": tid, "label": next(self.labels), "level": level, "prior": prior, "children": []}
        return tid

    def children(self, parent: str, n: int, winner: int, hi=(0.45, 0.6)) -> list[str]:
        level = self.taxonomy[parent]["level"] + 1 if parent else 1
        ids = [self.template(level, p) for p in _priors(self.rng, n, winner, hi)]
        if parent:
            self.taxonomy[parent]["children"] = ids
        return ids

    def action(self, tid: str, findings: list[Finding], supportive: bool) -> str:
        expert = self.rng.choice(self.roles)
        probe = self.rng.choice(_PROBES.get(expert, ["inspect"]))
        label = self.taxonomy[tid]["label"]
        base = f"{expert}: {probe} --target {_slug(label)}"
        key, n = base, 2
        while key in self.evidence:
            key, n = f"{base} #{n}", n + 1
        if supportive:
            payload = f"{probe}: anomaly consistent with {label.lower()}"
        else:
            payload = f"{probe}: readings nominal for {label.lower()}"
        self.evidence[key] = EvidenceSpec(key, expert, payload, tuple(findings))
        self.relevance.setdefault(tid, []).append(key)
        return key


def generate(seed: int, depth: int = 3, branching: int = 2, misleading: bool = False) -> Scenario:
    """Build a validated scenario; identical arguments give identical output."""
    if not 2 <= depth <= 5:
        raise ValueError("depth must be in 2..5")
    if not 2 <= branching <= 4:
        raise ValueError("branching must be in 2..4")
    rng = random.Random(f"abductor:{seed}:{depth}:{branching}:{int(misleading)}")
    b = _Builder(rng, DEFAULT_ROLES)

    truth_pos = rng.randrange(branching)
    decoy_pos = None
    if misleading:
        decoy_pos = rng.choice([i for i in range(branching) if i != truth_pos])
        level_one = b.children("", branching, decoy_pos, hi=(0.55, 0.6))
        # The true branch must trail the decoy but lead the remaining alternatives.
        b.taxonomy[level_one[truth_pos]]["prior"] = _q(rng.uniform(0.4, 0.45))
        for i, tid in enumerate(level_one):
            if i not in (truth_pos, decoy_pos):
                b.taxonomy[tid]["prior"] = _q(rng.uniform(0.1, 0.3))
    else:
        level_one = b.children("", branching, truth_pos)

    path = [level_one[truth_pos]]
    for _ in range(depth - 1):
        pos = rng.randrange(branching)
        kids = b.children(path[-1], branching, pos)
        path.append(kids[pos])

    decoy = decoy_child = None
    if decoy_pos is not None:
        decoy = level_one[decoy_pos]
        pos = rng.randrange(branching)
        decoy_child = b.children(decoy, branching, pos)[pos]

    for tid in list(b.taxonomy):
        if tid in path:
            for _ in range(rng.choice([2, 3])):
                b.action(tid, [Finding(tid, "support", _q(rng.uniform(0.6, 1.0)))], True)
        elif tid == decoy:
            for _ in range(2):
                b.action(tid, [Finding(tid, "support", _q(rng.uniform(0.6, 0.8)))], True)
        elif tid == decoy_child:
            # Deep evidence that contradicts the decoy branch and points back at the truth.
            for _ in range(2):
                b.action(
                    tid,
                    [
                        Finding(decoy, "refute", 1.0),
                        Finding(tid, "refute", 1.0),
                        Finding(path[0], "support", 0.8),
                    ],
                    False,
                )
        else:
            b.action(tid, [Finding(tid, "refute", _q(rng.uniform(0.5, 1.0)))], False)

    services = rng.sample(_SERVICES, 2)
    alerts = rng.sample(_ALERTS, rng.choice([2, 3]))
    symptoms = [a.format(svc=services[i % 2]) for i, a in enumerate(alerts)]

    sid = f"gen-s{seed}-d{depth}-b{branching}" + ("-m" if misleading else "")
    doc = {
        "schema": "abductor.scenario/1",
        "id": sid,
        "surface_symptoms": symptoms,
        "roles": list(DEFAULT_ROLES),
        "taxonomy": list(b.taxonomy.values()),
        "truth_path": path,
        "evidence": [e.to_dict() for e in b.evidence.values()],
        "relevance": b.relevance,
        "metadata": {
            "generator": {"seed": seed, "depth": depth, "branching": branching, "misleading": misleading},
            "decoy": decoy,
        },
    }
    sc = from_dict(doc)
    required = required_iterations(sc, expect_backtracks=1 if misleading else 0)
    metadata = dict(sc.metadata, required_iterations=required,
                    recommended_max_iterations=max(DEFAULT_MAX_ITERATIONS, required))
    budgets = {"max_iterations": required} if required > DEFAULT_MAX_ITERATIONS else {}
    return replace(sc, metadata=metadata, budgets=budgets)


def required_iterations(sc: Scenario, expect_backtracks: int | None = None, limit: int = 32) -> int:
    """Loop passes the oracle needs under default thresholds to reach the truth leaf."""
    from .engine import RunConfig, run_episode

    cfg = RunConfig(params=TransitionParams(max_iterations=limit), honor_scenario_budgets=False)
    result = run_episode(sc, cfg)
    backtracks = len(result.trace.of_type("Backtracked"))
    if not result.terminated or result.report.prediction != sc.truth_leaf.label:
        raise RuntimeError(f"generated scenario {sc.id} is not solvable by the oracle")
    if expect_backtracks is not None and backtracks != expect_backtracks:
        raise RuntimeError(f"generated scenario {sc.id} backtracked {backtracks} times")
    return result.state.iteration


def corpus_shape(seed: int, max_depth: int = 3, max_branching: int = 3) -> tuple[int, int]:
    r = random.Random(f"shape:{seed}")
    return r.randint(2, max_depth), r.randint(2, max_branching)


def corpus(
    seeds: Iterable[int],
    misleading: bool = False,
    max_depth: int = 3,
    max_branching: int = 3,
) -> list[Scenario]:
    """One scenario per seed, with depth and branching drawn from the seed."""
    out = []
    for seed in seeds:
        depth, branching = corpus_shape(seed, max_depth, max_branching)
        out.append(generate(seed, depth, branching, misleading))
    return out

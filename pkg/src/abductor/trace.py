"""Append-only episode trace, persisted as schema-versioned JSONL.

Events are ordered by a logical index (their position in the log), never by
wall-clock time, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator

from .errors import CorruptTrace
from .graph import Provenance

TRACE_SCHEMA = "abductor.episode-trace/1"

EVENT_TYPES = (
    "Init",
    "FocusSelected",
    "InstructionIssued",
    "ToolCall",
    "ObservationRecorded",
    "GraphUpdated",
    "Backtracked",
    "DrilledDown",
    "Stayed",
    "Terminated",
    "Reported",
    # Request/response pairs from remote cognition; never emitted by the oracle.
    "CognitionExchange",
)


@dataclass(frozen=True)
class Event:
    index: int
    type: str
    data: dict[str, Any]


@dataclass
class EpisodeTrace:
    episode_id: str
    events: list[Event] = field(default_factory=list)

    def record(self, type: str, **data: Any) -> int:
        if type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {type!r}")
        index = len(self.events)
        # Round-trip through JSON so stored payloads are exactly what a reload sees.
        self.events.append(Event(index, type, json.loads(json.dumps(data))))
        return index

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self) -> int:
        return len(self.events)

    def of_type(self, *types: str) -> list[Event]:
        return [e for e in self.events if e.type in types]

    def observation_tokens(self, before: int | None = None) -> set[Provenance]:
        return {
            Provenance(self.episode_id, e.index)
            for e in self.events
            if e.type == "ObservationRecorded" and (before is None or e.index < before)
        }

    def to_jsonl(self) -> str:
        lines = []
        for e in self.events:
            row = {
                "schema": TRACE_SCHEMA,
                "episode": self.episode_id,
                "index": e.index,
                "type": e.type,
                "data": e.data,
            }
            lines.append(json.dumps(row, sort_keys=True, ensure_ascii=True, separators=(",", ":")))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        episode_id: str | None = None
        events: list[Event] = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorruptTrace(f"line {lineno}: not JSON ({exc})") from exc
            if not isinstance(row, dict) or row.get("schema") != TRACE_SCHEMA:
                raise CorruptTrace(f"line {lineno}: missing or unsupported schema")
            ep, index, etype, data = row.get("episode"), row.get("index"), row.get("type"), row.get("data")
            if episode_id is None:
                episode_id = ep
            if ep != episode_id:
                raise CorruptTrace(f"line {lineno}: episode {ep!r} differs from {episode_id!r}")
            if index != len(events):
                raise CorruptTrace(f"line {lineno}: expected index {len(events)}, got {index!r}")
            if etype not in EVENT_TYPES or not isinstance(data, dict):
                raise CorruptTrace(f"line {lineno}: bad event type or payload")
            events.append(Event(index, etype, data))
        if episode_id is None:
            raise CorruptTrace("trace is empty")
        return cls(str(episode_id), events)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def read(cls, path: str | Path) -> "EpisodeTrace":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))

"""Append-only solver traces.

Events carry a monotone logical tick plus deterministic effort counters
(solver decisions, residual evaluations) instead of wall-clock stamps, so a
fixed seed reproduces a byte-identical file.
"""

from __future__ import annotations

import json


class SolverTrace:
    def __init__(self):
        self.events: list[dict] = []

    def emit(self, event: str, **payload):
        self.events.append({"tick": len(self.events), "event": event, **payload})

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in self.events)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    def count(self, event: str) -> int:
        return sum(1 for e in self.events if e["event"] == event)

"""Counters and line-delimited records shared by the integrators and harness."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Diagnostics:
    denominator_floors: int = 0
    negative_numerators: int = 0
    clamp_events: int = 0
    clamp_failures: int = 0  # clamps that removed more than the clamp tolerance
    cone_violations: int = 0
    max_clamped_mass: float = 0.0
    records: list = field(default_factory=list)
    keep_records: bool = True

    def log(self, kind: str, **data):
        if self.keep_records:
            self.records.append({"kind": kind, **data})

    def merge(self, other: "Diagnostics"):
        self.denominator_floors += other.denominator_floors
        self.negative_numerators += other.negative_numerators
        self.clamp_events += other.clamp_events
        self.clamp_failures += other.clamp_failures
        self.cone_violations += other.cone_violations
        self.max_clamped_mass = max(self.max_clamped_mass, other.max_clamped_mass)
        self.records.extend(other.records)

    def counters(self) -> dict:
        return {
            "denominator_floors": self.denominator_floors,
            "negative_numerators": self.negative_numerators,
            "clamp_events": self.clamp_events,
            "clamp_failures": self.clamp_failures,
            "cone_violations": self.cone_violations,
        }

    @property
    def clean(self) -> bool:
        """True when nothing an acceptance run must treat as a failure happened."""
        return (self.denominator_floors == 0 and self.clamp_failures == 0
                and self.cone_violations == 0)

    def dump(self, path):
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")

"""Report containers and deterministic JSON emission.

Reports are diff-able CI artifacts: stable key ordering, shortest
round-trip float repr, LF endings, and an optional timestamp that can be
suppressed for byte-identical reruns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone

@dataclass
class CheckReport:
    """Verdict of one sampled inequality check."""

    name: str
    passed: bool
    n_checked: int
    worst_slack: float
    eta: float
    violations: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "check": self.name,
            "passed": self.passed,
            "n_checked": self.n_checked,
            "worst_slack": self.worst_slack,
            "eta": self.eta,
            "n_violations": len(self.violations),
            "violations": self.violations,
            "params": self.params,
            "notes": self.notes,
        }


def merge_verdicts(reports) -> bool:
    return all(r.passed for r in reports)


def dumps_stable(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def write_json(path, payload: dict, timestamp: bool = True) -> None:
    payload = dict(payload)
    if timestamp:
        payload["timestamp"] = datetime.now(timezone.utc).isoformat()
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_stable(payload))


def clip_violations(entries, cap: int):
    """Keep at most ``cap`` violation records (cap is configurable)."""
    return list(entries[:cap]) if cap is not None else list(entries)

"""Audit records: named metrics, thresholds and a verdict."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

_OPS = {
    "<=": lambda a, b: a <= b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    ">": lambda a, b: a > b,
}


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return str(v)
        return f"{v:.12g}"
    return str(v)


@dataclass
class AuditEntry:
    """Outcome of one quantitative check.

    ``thresholds`` maps a metric name to ``(op, bound)``; the verdict is
    ``pass`` iff every thresholded metric satisfies ``metric op bound``.
    """

    name: str
    metrics: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    verdict: str = "pass"
    reason: str = ""
    theorem: str = ""

    @classmethod
    def evaluate(cls, name: str, metrics: dict, thresholds: dict, theorem: str = "") -> AuditEntry:
        ok = all(_OPS[op](metrics[k], bound) for k, (op, bound) in thresholds.items())
        failed = [k for k, (op, bound) in thresholds.items() if not _OPS[op](metrics[k], bound)]
        reason = "" if ok else "violated: " + ", ".join(failed)
        return cls(name, dict(metrics), dict(thresholds), "pass" if ok else "fail", reason, theorem)

    @classmethod
    def skipped(cls, name: str, reason: str, theorem: str = "", metrics: dict | None = None) -> AuditEntry:
        return cls(name, dict(metrics or {}), {}, "skipped", reason, theorem)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def line(self) -> str:
        parts = [f"AUDIT {self.name}"]
        parts += [f"{k}={_fmt(v)}" for k, v in self.metrics.items()]
        parts.append(f"verdict={self.verdict}")
        return " ".join(parts)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "theorem": self.theorem,
            "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
            "thresholds": {k: [op, _jsonable(b)] for k, (op, b) in self.thresholds.items()},
            "verdict": self.verdict,
            "reason": self.reason,
        }

    def block(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _jsonable(v):
    if isinstance(v, float) and (math.isnan(v) or math.isinf(v)):
        return str(v)
    if hasattr(v, "item"):
        return v.item()
    return v

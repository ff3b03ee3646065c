"""Uniform result object for validators and inequality checks.

Every validator returns a ``CheckReport`` rather than raising on a failed
inequality: failures are data, errors are reserved for malformed inputs.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional


@dataclass
class CheckReport:
    """Outcome of one named check.

    ``passed`` is None for purely informational checks (measured constants
    with no asserted threshold).  ``value`` is the headline scalar: the worst
    ratio, the measured constant, or the supremum, depending on the check.
    """

    check: str
    passed: Optional[bool]
    value: Optional[float] = None
    worst_witness: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "check": self.check,
            "pass": self.passed,
            "worst_witness": self.worst_witness,
            "value": self.value,
            "details": self.details,
        }

    def __bool__(self) -> bool:
        return bool(self.passed)

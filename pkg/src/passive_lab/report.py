"""Verification report shared by the sector falsifiers and the trajectory checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

__all__ = ["VerificationReport", "PASS", "FAIL", "SKIPPED"]

PASS = "PASS"
FAIL = "FAIL"
SKIPPED = "SKIPPED"


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of one inequality check.

    ``status`` is ``PASS``, ``FAIL`` or ``SKIPPED``; the last one means the
    hypothesis of the underlying result is not met, so the inequality was
    not evaluated as a pass/fail verdict.  ``worst_margin`` is the smallest
    (slack-free) margin seen; negative values are violations.  ``index`` is
    the step or sample where it occurred.
    """

    name: str
    status: str
    worst_margin: float
    index: int | None = None
    tolerance: float | None = None
    note: str = ""
    details: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    @property
    def failed(self) -> bool:
        return self.status == FAIL

    @property
    def skipped(self) -> bool:
        return self.status == SKIPPED

    def to_line(self) -> str:
        step = "-" if self.index is None else str(self.index)
        line = f"CHECK {self.name} {self.status} margin={self.worst_margin:.6e} step={step}"
        if self.tolerance is not None:
            line += f" tol={self.tolerance:.1e}"
        if self.note:
            line += f" note={self.note}"
        return line

    def __str__(self) -> str:
        return self.to_line()

"""Shared plumbing for the bundled in-process parser targets.

A target is a plain function ``run(data, e)`` where ``e`` is an edge callback
taking an integer edge id.  Targets signal ordinary malformed input with
:class:`ParseError` and planted bugs with :class:`PlantedFault`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable


class ParseError(Exception):
    """Structured rejection of malformed input (not a crash)."""


class PlantedFault(Exception):
    """A planted bug fired; stands in for a memory-safety crash."""

    def __init__(self, bug_id: str, detail: str = ""):
        super().__init__(f"{bug_id}: {detail}" if detail else bug_id)
        self.bug_id = bug_id


class TargetHang(Exception):
    """Raised by the tracer when an execution exceeds its step limit."""


class Tracer:
    """Per-execution edge hit counter handed to a target as its callback."""

    __slots__ = ("hits", "steps", "max_steps")

    def __init__(self, n_edges: int, max_steps: int = 200_000):
        self.hits = [0] * n_edges
        self.steps = 0
        self.max_steps = max_steps

    def __call__(self, edge: int) -> None:
        self.hits[edge] += 1
        self.steps += 1
        if self.steps > self.max_steps:
            raise TargetHang(f"exceeded {self.max_steps} edge steps")

    def edges(self) -> set[int]:
        return {i for i, n in enumerate(self.hits) if n}


@dataclass(frozen=True)
class ParseResult:
    ok: bool
    error: str | None
    info: Any
    hits: tuple[int, ...]

    @property
    def edges(self) -> set[int]:
        return {i for i, n in enumerate(self.hits) if n}


@dataclass(frozen=True)
class TargetSpec:
    name: str
    run: Callable[[bytes, Callable[[int], None]], Any]
    total_edges: int
    planted_bugs: tuple[tuple[str, str], ...] = ()
    description: str = ""
    baseline: Callable[[int, int], list[bytes]] | None = field(default=None, compare=False)

    def parse(self, data: bytes) -> ParseResult:
        """Run the target with a fresh tracer; planted faults propagate."""
        tracer = Tracer(self.total_edges)
        try:
            info = self.run(bytes(data), tracer)
        except ParseError as exc:
            return ParseResult(False, str(exc), None, tuple(tracer.hits))
        return ParseResult(True, None, info, tuple(tracer.hits))

    def validity_oracle(self, data: bytes) -> bool:
        """True when the input parses cleanly (no error, no planted fault)."""
        try:
            return self.parse(data).ok
        except (PlantedFault, TargetHang):
            return False

    def baseline_seeds(self, n: int, seed: int = 0) -> list[bytes]:
        """Ordinary valid files used as the un-optimised seed corpus."""
        if self.baseline is None:
            raise ValueError(f"target {self.name!r} ships no baseline seeds")
        return self.baseline(n, seed)

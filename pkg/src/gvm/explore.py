"""Exhaustive schedule exploration over structured gas.

Enumerates every rotation sequence of bounded length, deduplicating by
(channel table, thread pool, remaining budget) so equivalent prefixes are
walked once.  Dedup preserves the reachable-outcome set because execution
is a deterministic function of state and rotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .scheduler import (
    ChannelTable, Outcome, Stuck, Terminated, ThreadPool, rotate, start, step,
)
from .syntax import Expr

DEFAULT_NODE_LIMIT = 2_000_000


class ExploreRefused(Exception):
    """The requested bounds are combinatorially infeasible."""

    def __init__(self, estimate: int, limit: int):
        self.estimate = estimate
        self.limit = limit
        super().__init__(
            f"exploration would try about {estimate} schedules (limit {limit})"
        )


@dataclass
class ExploreReport:
    """Outcomes reachable within the budget, with one witness schedule each.

    Budget-exhausted prefixes are tracked separately from resolved
    outcomes; they mean only that longer schedules exist.
    """

    outcomes: dict[Outcome, tuple[int, ...]] = field(default_factory=dict)
    exhausted_prefixes: bool = False
    states_visited: int = 0

    @property
    def outcome_set(self) -> frozenset[Outcome]:
        return frozenset(self.outcomes)


def explore_schedules(
    e: Expr, maxlen: int, maxrot: int, node_limit: int = DEFAULT_NODE_LIMIT
) -> ExploreReport:
    """Classify every schedule of length <= maxlen with rotations < maxrot."""
    if maxrot < 1 or maxlen < 0:
        raise ValueError("need maxrot >= 1 and maxlen >= 0")
    estimate = maxrot**maxlen
    if estimate > node_limit:
        raise ExploreRefused(estimate, node_limit)

    table0, pool0 = start(e)
    report = ExploreReport()
    seen: set[tuple[ChannelTable, ThreadPool, int]] = set()
    stack: list[tuple[ChannelTable, ThreadPool, tuple[int, ...]]] = [(table0, pool0, ())]

    while stack:
        table, pool, prefix = stack.pop()
        remaining = maxlen - len(prefix)
        if remaining == 0:
            report.exhausted_prefixes = True
            continue
        key = (table, pool, remaining)
        if key in seen:
            continue
        seen.add(key)
        report.states_visited += 1

        # Rotations that coincide modulo the pool length land in the same
        # successor; try each residue once.
        width = max(len(pool), 1)
        tried: set[int] = set()
        for r in range(maxrot):
            if r % width in tried:
                continue
            tried.add(r % width)
            event, _, table2, pool2 = step(table, rotate(pool, r))
            schedule = prefix + (r,)
            if isinstance(event, Terminated):
                report.outcomes.setdefault(Outcome.TERMINATED, schedule)
            elif isinstance(event, Stuck):
                report.outcomes.setdefault(Outcome.STUCK, schedule)
            else:
                stack.append((table2, pool2, schedule))

    return report

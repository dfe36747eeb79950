"""Pruned speculation forest over the pending queue.

Each pending change gets one build node per subset of its unresolved
conflicting predecessors (capped at the nearest ``depth_cap`` of them).
Non-conflicting predecessors never enter a base set: speculation paths
that differ only in an independent change would produce identical merge
results, so they are merged away. Changes in different conflict
components therefore speculate independently, giving a forest of trees
rather than one tree over the whole queue.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import combinations
from typing import Iterator, Sequence

from specqueue.core import BuildOutcome, ChangeId, ConflictGraph, connected_components
from specqueue.prediction import DurationEstimate

BaseKey = tuple[ChangeId, ...]
NodeKey = tuple[ChangeId, BaseKey]


class BuildStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class BuildNode:
    """One speculative build: a change merged onto mainline plus a base set.

    ``base`` lists the conflicting predecessors assumed to have landed
    under this node, in queue order.
    """

    change: ChangeId
    base: BaseKey
    status: BuildStatus = BuildStatus.PENDING
    started_at: float | None = None
    finished_at: float | None = None
    outcome: BuildOutcome | None = None
    aborted_at: float | None = None
    estimate: DurationEstimate | None = None

    def __post_init__(self) -> None:
        if list(self.base) != sorted(self.base):
            raise ValueError("base must be sorted in queue order")
        if any(b >= self.change for b in self.base):
            raise ValueError("base members must precede the change in queue order")
        if self.status is BuildStatus.RUNNING and self.started_at is None:
            raise ValueError("running node needs started_at")
        if self.status is BuildStatus.COMPLETED and (
            self.outcome is None or self.finished_at is None
        ):
            raise ValueError("completed node needs outcome and finished_at")
        if self.status is BuildStatus.ABORTED and self.aborted_at is None:
            raise ValueError("aborted node needs aborted_at")

    @property
    def key(self) -> NodeKey:
        return (self.change, self.base)

    def with_estimate(self, estimate: DurationEstimate) -> "BuildNode":
        return replace(self, estimate=estimate)

    def started(self, now: float) -> "BuildNode":
        if self.status is BuildStatus.COMPLETED:
            raise ValueError(f"cannot restart completed build {self.key}")
        return replace(
            self,
            status=BuildStatus.RUNNING,
            started_at=now,
            aborted_at=None,
        )

    def completed(self, outcome: BuildOutcome, now: float) -> "BuildNode":
        if self.status is BuildStatus.COMPLETED and self.outcome is not outcome:
            raise ValueError(f"completed build {self.key} cannot change outcome")
        if self.status is not BuildStatus.RUNNING:
            raise ValueError(f"only running builds complete, {self.key} is {self.status}")
        return replace(
            self, status=BuildStatus.COMPLETED, outcome=outcome, finished_at=now
        )

    def aborted(self, now: float) -> "BuildNode":
        if self.status is not BuildStatus.RUNNING:
            raise ValueError(f"only running builds abort, {self.key} is {self.status}")
        return replace(
            self,
            status=BuildStatus.ABORTED,
            aborted_at=now,
            started_at=None,
        )


@dataclass(frozen=True)
class MainlineState:
    """Changes landed so far, in commit order."""

    landed: tuple[ChangeId, ...] = ()

    @property
    def head_label(self) -> str:
        return f"main@{len(self.landed)}"

    def with_landed(self, c: ChangeId) -> "MainlineState":
        return MainlineState(self.landed + (c,))


def _window(
    queue: Sequence[ChangeId], index: int, g: ConflictGraph, depth_cap: int
) -> BaseKey:
    """The nearest depth_cap conflicting predecessors of queue[index]."""
    c = queue[index]
    preds = [p for p in queue[:index] if g.are_conflicting(p, c)]
    return tuple(preds[-depth_cap:])


def _subsets(window: BaseKey) -> Iterator[BaseKey]:
    for size in range(len(window) + 1):
        yield from combinations(window, size)


@dataclass
class SpeculationForest:
    """All speculative builds for the current pending queue.

    Mutation is single-writer (the engine); reads hand out immutable
    node values.
    """

    queue: tuple[ChangeId, ...]
    graph: ConflictGraph
    depth_cap: int
    windows: dict[ChangeId, BaseKey] = field(default_factory=dict)
    nodes: dict[NodeKey, BuildNode] = field(default_factory=dict)
    components: list[list[ChangeId]] = field(default_factory=list)

    @property
    def queue_snapshot(self) -> tuple[ChangeId, ...]:
        return self.queue

    def window(self, c: ChangeId) -> BaseKey:
        """Unresolved conflicting predecessors of c, nearest depth_cap only."""
        if c not in self.windows:
            raise KeyError(f"unknown change {c}")
        return self.windows[c]

    def node(self, change: ChangeId, base: BaseKey) -> BuildNode:
        return self.nodes[(change, base)]

    def nodes_for_change(self, c: ChangeId) -> list[BuildNode]:
        """All nodes of c, largest base first, then base lexicographic."""
        if c not in self.windows:
            raise KeyError(f"unknown change {c}")
        keys = [k for k in self.nodes if k[0] == c]
        keys.sort(key=lambda k: (-len(k[1]), tuple(b.seq for b in k[1])))
        return [self.nodes[k] for k in keys]

    def all_nodes(self) -> list[BuildNode]:
        keys = sorted(
            self.nodes, key=lambda k: (k[0].seq, -len(k[1]), tuple(b.seq for b in k[1]))
        )
        return [self.nodes[k] for k in keys]

    def update_node(self, node: BuildNode) -> None:
        if node.key not in self.nodes:
            raise KeyError(f"no such node {node.key}")
        self.nodes[node.key] = node

    def component_of(self, c: ChangeId) -> list[ChangeId]:
        for members in self.components:
            if c in members:
                return members
        raise KeyError(f"unknown change {c}")


def enumerate_forest(
    queue: Sequence[ChangeId], g: ConflictGraph, depth_cap: int
) -> SpeculationForest:
    """Build a fresh all-pending forest; every node starts Pending."""
    queue_t = tuple(queue)
    windows: dict[ChangeId, BaseKey] = {}
    nodes: dict[NodeKey, BuildNode] = {}
    for i, c in enumerate(queue_t):
        window = _window(queue_t, i, g, depth_cap)
        windows[c] = window
        for base in _subsets(window):
            nodes[(c, base)] = BuildNode(change=c, base=base)
    components = connected_components(g, queue_t)
    return SpeculationForest(
        queue=queue_t,
        graph=g,
        depth_cap=depth_cap,
        windows=windows,
        nodes=nodes,
        components=components,
    )


def carry_map(
    forest: SpeculationForest, resolved: ChangeId, landed: bool
) -> dict[NodeKey, NodeKey]:
    """Where each surviving node goes once `resolved` leaves the queue.

    Nodes of the resolved change itself vanish. Only successors ever
    speculated on it; builds of earlier changes never included it and
    stay valid under the same key (when it landed early by bypass, the
    consistency of its own variants proved the two changes commute). A
    successor's node survives a landing iff it assumed the landing (the
    member moves from base to mainline), and survives a rejection iff it
    did not.
    """
    if resolved not in forest.windows:
        raise KeyError(f"unknown change {resolved}")
    position = {c: i for i, c in enumerate(forest.queue)}
    resolved_pos = position[resolved]
    mapping: dict[NodeKey, NodeKey] = {}
    for key in forest.nodes:
        c, base = key
        follows = position[c] > resolved_pos
        if follows and forest.graph.are_conflicting(c, resolved):
            if landed:
                if resolved not in base:
                    continue
                mapping[key] = (c, tuple(b for b in base if b != resolved))
            elif resolved not in base:
                mapping[key] = key
        elif c != resolved:
            mapping[key] = key
    return mapping


def resolve_change(
    forest: SpeculationForest, resolved: ChangeId, landed: bool
) -> SpeculationForest:
    """Remove a decided change and drop every node its outcome contradicts.

    A surviving node keeps its state under its rewritten base: when the
    resolved change landed it joins mainline, so a node that assumed it
    in the base describes the same merge with the base member removed.
    Nodes whose assumption was wrong (or that were built against a
    mainline now missing a landed conflicting change) come back Pending,
    including any fresh nodes from a widened speculation window.
    """
    mapping = carry_map(forest, resolved, landed)
    new_queue = tuple(c for c in forest.queue if c != resolved)
    rebuilt = enumerate_forest(new_queue, forest.graph, forest.depth_cap)
    for old_key, new_key in mapping.items():
        if new_key not in rebuilt.nodes:
            raise AssertionError(f"carried node {old_key} maps outside the forest")
        rebuilt.nodes[new_key] = replace(forest.nodes[old_key], base=new_key[1])
    return rebuilt

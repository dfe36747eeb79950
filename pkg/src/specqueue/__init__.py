"""Speculative merge-queue scheduling engine and simulator."""

from specqueue.core import (
    BuildOutcome,
    Change,
    ChangeId,
    ConflictGraph,
    EngineConfig,
    build_conflict_graph,
    conflicts,
    connected_components,
)

__all__ = [
    "BuildOutcome",
    "Change",
    "ChangeId",
    "ConflictGraph",
    "EngineConfig",
    "build_conflict_graph",
    "conflicts",
    "connected_components",
]

"""Sampled minibatches plus the table-dependent access statistics.

Sampling depends only on the graph, so one set of plans is shared by every
strategy and by every feature width of a sweep. The request mix of the
zero-copy kernel is estimated once per table from a trace of leading
gather rows, since tracing every element of every minibatch is far more
work than the simulation itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..errors import InputDataError
from ..gather import coalesce_trace, plan_offsets, apply_circular_shift, request_histogram
from ..graph import CsrGraph, FeatureTable
from ..link import touched_pages
from ..sampler import MinibatchPlan, minibatch_stream


@dataclass(frozen=True)
class TraceStats:
    """Request mix of one access pattern, normalized per useful byte."""

    histogram: Dict[int, int]
    useful: int
    payload: int

    @property
    def amplification(self) -> float:
        # wire payload bytes per useful byte
        return self.payload / self.useful if self.useful else 1.0

    @property
    def num_requests(self) -> int:
        return sum(self.histogram.values())

    def to_dict(self) -> dict:
        return {"histogram": {str(k): v for k, v in self.histogram.items()},
                "useful": self.useful, "payload": self.payload}


EMPTY_STATS = TraceStats({}, 0, 0)


def trace_stats(rows: np.ndarray, table: FeatureTable, shift: bool, warp_size: int) -> TraceStats:
    if len(rows) == 0:
        return EMPTY_STATS
    pairs = plan_offsets(rows, table.feat_dim, warp_size)
    if shift:
        pairs = apply_circular_shift(pairs)
    tr = coalesce_trace(pairs, table.elem_size, table.base_offset)
    return TraceStats(request_histogram(tr), tr.total_useful, tr.total_payload)


@dataclass(frozen=True, eq=False)
class Workload:
    plans: List[MinibatchPlan]
    table: FeatureTable
    num_sampled: np.ndarray
    num_unique: np.ndarray
    gather_bytes: np.ndarray
    pages: np.ndarray
    shifted: TraceStats
    unshifted: TraceStats

    @property
    def num_minibatches(self) -> int:
        return len(self.plans)

    def with_table(self, table: FeatureTable, trace_elements: int = 1 << 20,
                   warp_size: int = 32) -> "Workload":
        return _measure(self.plans, table, trace_elements, warp_size)


def _trace_rows(plans: Sequence[MinibatchPlan], feat_dim: int, trace_elements: int) -> np.ndarray:
    budget = max(1, trace_elements // feat_dim)
    rows, have = [], 0
    for p in plans:
        take = p.unique_nodes[:budget - have]
        rows.append(take)
        have += len(take)
        if have >= budget:
            break
    return np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)


def _measure(plans, table, trace_elements, warp_size) -> Workload:
    nu = np.array([len(p.unique_nodes) for p in plans], dtype=np.int64)
    ns = np.array([p.num_sampled for p in plans], dtype=np.int64)
    pages = np.array([touched_pages(p.unique_nodes, table.row_bytes, table.base_offset)
                      for p in plans], dtype=np.int64)
    rows = _trace_rows(plans, table.feat_dim, trace_elements)
    return Workload(
        plans=list(plans),
        table=table,
        num_sampled=ns,
        num_unique=nu,
        gather_bytes=nu * table.row_bytes,
        pages=pages,
        shifted=trace_stats(rows, table, True, warp_size),
        unshifted=trace_stats(rows, table, False, warp_size),
    )


def build_workload(graph: CsrGraph, table: FeatureTable, fanouts: Sequence[int],
                   batch_size: int, seed: int, replace: bool = False,
                   trace_elements: int = 1 << 20, warp_size: int = 32,
                   plans: Optional[List[MinibatchPlan]] = None) -> Workload:
    """Sample one epoch (unless ``plans`` is given) and measure it."""
    if table.num_nodes < graph.num_nodes:
        raise InputDataError("feature table has fewer rows than the graph has nodes")
    if plans is None:
        plans = list(minibatch_stream(graph, batch_size, fanouts, seed,
                                      row_bytes=table.row_bytes, replace=replace))
    return _measure(plans, table, trace_elements, warp_size)

"""Per-strategy stage times and the epoch simulation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..errors import CapacityError, ConfigError
from ..graph import CsrGraph, FeatureTable, Placement
from ..link import (
    cpu_gather_time,
    dma_transfer_time,
    uvm_migration_time,
    zero_copy_bandwidth,
)
from .config import PipelineConfig, Strategy
from .des import schedule_chain
from .workload import Workload, build_workload

INDEX_BYTES = 8


@dataclass(frozen=True, eq=False)
class StageTimes:
    """Per-minibatch stage durations plus the link bytes each one moves.

    ``first``/``second`` name the two producer sub-stages in execution
    order; the producer duration is their sum.
    """

    sampler: np.ndarray
    gather: np.ndarray
    transfer: np.ndarray
    train: np.ndarray
    first: str
    gather_link_bytes: np.ndarray
    transfer_link_bytes: np.ndarray
    gather_bandwidth: float = 0.0
    histogram: Optional[Dict[int, int]] = None
    starved: bool = False

    @property
    def producer(self) -> np.ndarray:
        return self.gather + self.transfer


def _zero(n):
    return np.zeros(n, dtype=np.float64)


def check_device_fit(table: FeatureTable, config: PipelineConfig) -> None:
    """Raise CapacityError when the table cannot live in device memory."""
    FeatureTable(table.num_nodes, table.feat_dim, table.elem_size, table.base_offset,
                 Placement.DEVICE, None, config.gpu.device_mem_capacity)


def stage_times(workload: Workload, config: PipelineConfig) -> StageTimes:
    n = workload.num_minibatches
    s = config.strategy
    link = config.link
    share = config.link_share()
    if share < link.wire_bandwidth:
        link = link.with_wire(share)
    nbytes = workload.gather_bytes.astype(np.float64)
    sampler = config.sampler_time_per_node * workload.num_sampled.astype(np.float64)
    train = np.full(n, config.train.base)
    gather, transfer = _zero(n), _zero(n)
    g_link, t_link = _zero(n), _zero(n)
    first = "gather"
    bw, hist, starved = 0.0, None, False

    if s is Strategy.DMA or s is Strategy.CPU_ONLY:
        gather = np.array([cpu_gather_time(b, config.host_bandwidth, config.cpu_gather_efficiency,
                                           config.num_gpus, config.worker_share_cap)
                           for b in nbytes])
        if s is Strategy.DMA:
            transfer = np.array([dma_transfer_time(b, link) for b in nbytes])
            t_link = nbytes
        else:
            train = train * config.train.cpu_factor
    elif s in (Strategy.ZERO_COPY_NAIVE, Strategy.ZERO_COPY_OPT):
        first = "transfer"
        idx_bytes = workload.num_unique.astype(np.float64) * INDEX_BYTES
        transfer = np.array([dma_transfer_time(b, link) for b in idx_bytes])
        t_link = idx_bytes
        if s is Strategy.ZERO_COPY_NAIVE:
            stats, warps = workload.unshifted, config.gpu.total_warps
        else:
            stats = workload.shifted
            warps = config.gpu.warps_for_fraction(config.resource_fraction)
            train = np.full(n, config.train.time(config.resource_fraction))
        est = zero_copy_bandwidth(stats.histogram, link, warps)
        bw, hist, starved = est.bandwidth, stats.histogram, est.starved
        g_link = nbytes * stats.amplification
        if np.any(g_link > 0):
            if bw <= 0:
                raise ConfigError("zero-copy gather has no bandwidth (no warps available)")
            gather = g_link / bw
    elif s is Strategy.ALL_IN_GPU:
        check_device_fit(workload.table, config)
        # read + write within device memory
        gather = 2.0 * nbytes / config.gpu.device_bandwidth
    elif s is Strategy.UVM:
        first = "transfer"
        transfer = np.array([uvm_migration_time(int(p), link) for p in workload.pages])
        t_link = workload.pages.astype(np.float64) * link.page_size
    return StageTimes(sampler, gather, transfer, train, first, g_link, t_link, bw, hist, starved)


def assign_minibatches(n: int, num_gpus: int, scaling: str) -> List[np.ndarray]:
    if scaling == "weak":
        return [np.arange(n) for _ in range(num_gpus)]
    return [np.arange(g, n, num_gpus) for g in range(num_gpus)]


@dataclass(frozen=True, eq=False)
class SimReport:
    strategy: str
    num_gpus: int
    epoch_time: float
    effective_bandwidth: float
    per_minibatch: List[dict]
    per_gpu: List[dict]
    link_usage: List[tuple] = field(repr=False, default_factory=list)
    request_histogram: Optional[Dict[int, int]] = None
    gather_bandwidth: float = 0.0
    config: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "strategy": self.strategy,
            "num_gpus": self.num_gpus,
            "epoch_time": self.epoch_time,
            "effective_bandwidth": self.effective_bandwidth,
            "gather_bandwidth": self.gather_bandwidth,
            "num_minibatches": len(self.per_minibatch),
        }

    def to_dict(self) -> dict:
        d = self.summary()
        d["request_histogram"] = (None if self.request_histogram is None else
                                  {str(k): v for k, v in self.request_histogram.items()})
        d["per_gpu"] = self.per_gpu
        d["per_minibatch"] = self.per_minibatch
        d["config"] = self.config
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def timeline_rows(self) -> List[tuple]:
        rows = []
        for r in self.per_minibatch:
            for stage in ("sample", "gather", "transfer", "train"):
                a, b = r[stage]
                rows.append((r["gpu"], r["minibatch"], stage, a * 1e6, b * 1e6))
        return rows

    def peak_link_rate(self) -> float:
        """Largest summed link consumption over all instants."""
        ev = []
        for a, b, rate, _ in self.link_usage:
            if b > a:
                ev.append((a, 1, rate))
                ev.append((b, 0, -rate))
        ev.sort()
        cur = peak = 0.0
        for _, _, d in ev:
            cur += d
            peak = max(peak, cur)
        return peak


def simulate_workload(workload: Workload, config: PipelineConfig) -> SimReport:
    times = stage_times(workload, config)
    groups = assign_minibatches(workload.num_minibatches, config.num_gpus, config.scaling)
    serialized = config.strategy.serialized
    records, per_gpu, usage = [], [], []
    epoch = 0.0
    for g, mb in enumerate(groups):
        sch = schedule_chain(times.sampler[mb], times.producer[mb], times.train[mb],
                             config.pingpong_depth, serialized)
        epoch = max(epoch, sch.makespan)
        per_gpu.append({"gpu": g, "minibatches": len(mb), "epoch_time": sch.makespan})
        for i, j in enumerate(mb):
            p0, p1 = float(sch.producer_start[i]), float(sch.producer_end[i])
            gt, tt = float(times.gather[j]), float(times.transfer[j])
            if times.first == "gather":
                gather_iv, transfer_iv = (p0, p0 + gt), (p0 + gt, p1)
            else:
                transfer_iv, gather_iv = (p0, p0 + tt), (p0 + tt, p1)
            for iv, nbytes, dt in ((gather_iv, times.gather_link_bytes[j], gt),
                                   (transfer_iv, times.transfer_link_bytes[j], tt)):
                if nbytes > 0 and dt > 0:
                    usage.append((iv[0], iv[1], float(nbytes) / dt, g))
            records.append({
                "gpu": g,
                "minibatch": int(j),
                "sampler_t": float(times.sampler[j]),
                "gather_t": gt,
                "transfer_t": tt,
                "train_t": float(times.train[j]),
                "sample": (float(sch.sampler_start[i]), float(sch.sampler_end[i])),
                "gather": gather_iv,
                "transfer": transfer_iv,
                "train": (float(sch.consumer_start[i]), float(sch.consumer_end[i])),
            })
    busy = sum(float(times.producer[mb].sum()) for mb in groups)
    moved = sum(float(workload.gather_bytes[mb].sum()) for mb in groups)
    return SimReport(
        strategy=config.strategy.value,
        num_gpus=config.num_gpus,
        epoch_time=epoch,
        effective_bandwidth=moved / busy if busy > 0 else 0.0,
        per_minibatch=records,
        per_gpu=per_gpu,
        link_usage=usage,
        request_histogram=times.histogram,
        gather_bandwidth=times.gather_bandwidth,
        config=config.to_dict(),
    )


def simulate_epoch(graph: CsrGraph, table: FeatureTable, config: PipelineConfig, seed: int,
                   workload: Optional[Workload] = None) -> SimReport:
    """Simulate one training epoch of ``config.strategy``.

    Raises CapacityError for all-in-gpu when the table does not fit in
    device memory.
    """
    if workload is None:
        if config.strategy is Strategy.ALL_IN_GPU:
            check_device_fit(table, config)
        workload = build_workload(graph, table, config.fanouts, config.batch_size, seed,
                                  config.replace, config.trace_elements, config.gpu.warp_size)
    return simulate_workload(workload, config)


__all__ = [
    "CapacityError",
    "SimReport",
    "StageTimes",
    "assign_minibatches",
    "check_device_fit",
    "simulate_epoch",
    "simulate_workload",
    "stage_times",
]

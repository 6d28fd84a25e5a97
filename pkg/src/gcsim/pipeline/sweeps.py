"""Strategy grids and parameter sweeps over a shared workload."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import CapacityError, ConfigError
from ..graph import CsrGraph, FeatureTable
from ..link import GpuSpec, LinkParams, zero_copy_bandwidth
from .config import PipelineConfig, Strategy
from .simulate import SimReport, simulate_workload
from .workload import Workload, build_workload, trace_stats


def _workload(graph, table, config, seed, workload):
    if workload is not None:
        return workload
    return build_workload(graph, table, config.fanouts, config.batch_size, seed,
                          config.replace, config.trace_elements, config.gpu.warp_size)


@dataclass
class ComparisonRow:
    strategy: str
    num_gpus: int
    status: str
    epoch_time: Optional[float]
    speedup: Optional[float]
    report: Optional[SimReport] = None

    def to_dict(self) -> dict:
        return {"strategy": self.strategy, "num_gpus": self.num_gpus, "status": self.status,
                "epoch_time": self.epoch_time, "speedup": self.speedup}


def compare_strategies(graph: CsrGraph, table: FeatureTable, base_config: PipelineConfig,
                       strategies: Sequence, num_gpus_list: Sequence[int], seed: int,
                       workload: Optional[Workload] = None) -> List[ComparisonRow]:
    """One report per (strategy, num_gpus), with speedup over 1-GPU dma.

    Rows follow the declared order: strategies outer, GPU counts inner.
    An out-of-memory all-in-gpu run becomes an ``OOM`` row.
    """
    if not strategies:
        raise ConfigError("strategies must be non-empty")
    wl = _workload(graph, table, base_config, seed, workload)
    baseline = simulate_workload(wl, base_config.with_(strategy=Strategy.DMA, num_gpus=1))
    rows = []
    for s in strategies:
        for g in num_gpus_list:
            cfg = base_config.with_(strategy=Strategy(s), num_gpus=int(g))
            try:
                rep = simulate_workload(wl, cfg)
            except CapacityError:
                rows.append(ComparisonRow(cfg.strategy.value, cfg.num_gpus, "OOM", None, None))
                continue
            speedup = baseline.epoch_time / rep.epoch_time if rep.epoch_time > 0 else None
            rows.append(ComparisonRow(cfg.strategy.value, cfg.num_gpus, "ok", rep.epoch_time,
                                      speedup, rep))
    return rows


def speedup_of(rows: Sequence[ComparisonRow], strategy: str, num_gpus: int,
               over: str = "dma", over_gpus: int = 1) -> float:
    """Ratio epoch(over, over_gpus) / epoch(strategy, num_gpus)."""
    by = {(r.strategy, r.num_gpus): r for r in rows}
    return by[(over, over_gpus)].epoch_time / by[(strategy, num_gpus)].epoch_time


def resource_sweep(graph: CsrGraph, table: FeatureTable, config: PipelineConfig,
                   x_values: Sequence[float], seed: int,
                   workload: Optional[Workload] = None) -> List[dict]:
    """zero-copy-opt epoch time and gather bandwidth per producer share X."""
    wl = _workload(graph, table, config, seed, workload)
    out = []
    for x in x_values:
        if not 0 < x < 1:
            raise ConfigError(f"resource fraction must be in (0, 1), got {x}")
        rep = simulate_workload(wl, config.with_(strategy=Strategy.ZERO_COPY_OPT,
                                                 resource_fraction=float(x)))
        out.append({"X": float(x), "gather_bandwidth": rep.gather_bandwidth,
                    "epoch_time": rep.epoch_time})
    return out


def feature_dim_sweep(graph: CsrGraph, table: FeatureTable, config: PipelineConfig,
                      dims: Sequence[int], seed: int,
                      workload: Optional[Workload] = None) -> List[dict]:
    """Speedup of zero-copy-opt over dma as the feature width varies.

    Plans are sampled once; only the table widths change.
    """
    if not dims:
        raise ConfigError("dims must be non-empty")
    wl = _workload(graph, table, config, seed, workload)
    out = []
    for dim in dims:
        t = FeatureTable(table.num_nodes, int(dim), table.elem_size, table.base_offset,
                         table.placement, None, table.device_capacity)
        w = wl.with_table(t, config.trace_elements, config.gpu.warp_size)
        dma = simulate_workload(w, config.with_(strategy=Strategy.DMA))
        zc = simulate_workload(w, config.with_(strategy=Strategy.ZERO_COPY_OPT))
        speedup = dma.epoch_time / zc.epoch_time if zc.epoch_time > 0 else 1.0
        out.append({"dim": int(dim), "dma_epoch_time": dma.epoch_time,
                    "zero_copy_epoch_time": zc.epoch_time, "speedup": speedup})
    return out


def alignment_sweep(feature_bytes: Sequence[int], elem_size: int = 4, num_rows: int = 4096,
                    table_rows: int = 1 << 20, seed: int = 0, link: LinkParams = None,
                    gpu: GpuSpec = None, warps: Optional[float] = None) -> List[dict]:
    """Zero-copy link efficiency with and without the circular shift.

    Gathers ``num_rows`` uniformly random rows per feature size. Efficiency
    is delivered payload throughput over the wire ceiling.
    """
    link = link or LinkParams()
    gpu = gpu or GpuSpec()
    warps = gpu.total_warps if warps is None else warps
    rng = np.random.default_rng(seed)
    out = []
    for fb in feature_bytes:
        if fb % elem_size:
            raise ConfigError(f"feature size {fb} is not a multiple of elem_size {elem_size}")
        t = FeatureTable(table_rows, fb // elem_size, elem_size)
        rows = rng.integers(0, table_rows, num_rows)
        row = {"feat_bytes": int(fb)}
        for name, shift in (("unshifted", False), ("shifted", True)):
            st = trace_stats(rows, t, shift, gpu.warp_size)
            est = zero_copy_bandwidth(st.histogram, link, warps)
            row[f"{name}_efficiency"] = est.efficiency
            row[f"{name}_bandwidth"] = est.bandwidth
            row[f"{name}_requests"] = st.num_requests
        out.append(row)
    return out

"""Analytic host-to-GPU transfer models.

Three mechanisms are covered: zero-copy reads issued by GPU warps, bulk
DMA copies, and on-demand page migration. Alongside them sit the CPU
gather cost that DMA needs and the outstanding-request arithmetic that
decides how much of the GPU a zero-copy kernel has to reserve.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Dict, Mapping, NamedTuple

import numpy as np

from .errors import ConfigError

KiB = 1 << 10
MiB = 1 << 20
GiB = 1 << 30
# bandwidth figures quoted in GB/s use binary gigabytes; the outstanding
# request arithmetic only reproduces with 2**30
GB = float(GiB)

OUTSTANDING_READS = {"3.0": 256, "4.0": 768}


@dataclass(frozen=True)
class LinkParams:
    generation: str = "4.0"
    # measured block-copy ceiling, not the theoretical x16 rate
    wire_bandwidth: float = 25.8 * GB
    max_outstanding_reads: int = 768
    rtt: float = 1.5e-6
    header_bytes: int = 16
    dma_setup_latency: float = 10e-6
    fault_latency: float = 20e-6
    page_size: int = 4096

    def __post_init__(self):
        if self.generation not in OUTSTANDING_READS:
            raise ConfigError(f"unknown link generation {self.generation!r}")
        if not 12 <= self.header_bytes <= 16:
            raise ConfigError(f"header_bytes must be in [12, 16], got {self.header_bytes}")
        if self.wire_bandwidth <= 0 or self.rtt <= 0 or self.max_outstanding_reads < 1:
            raise ConfigError("wire_bandwidth, rtt and max_outstanding_reads must be positive")
        if self.dma_setup_latency < 0 or self.fault_latency < 0 or self.page_size < 1:
            raise ConfigError("latencies must be non-negative and page_size positive")

    @classmethod
    def for_generation(cls, generation: str, **kw) -> "LinkParams":
        return cls(generation=generation, max_outstanding_reads=OUTSTANDING_READS[generation], **kw)

    def with_wire(self, wire_bandwidth: float) -> "LinkParams":
        return replace(self, wire_bandwidth=wire_bandwidth)


@dataclass(frozen=True)
class GpuSpec:
    num_sms: int = 82
    threads_per_sm: int = 1536
    warp_size: int = 32
    device_mem_capacity: int = 24 * GiB
    device_bandwidth: float = 936 * GB

    def __post_init__(self):
        if min(self.num_sms, self.threads_per_sm, self.warp_size) < 1:
            raise ConfigError("GPU counts must be positive")
        if self.threads_per_sm % self.warp_size:
            raise ConfigError("threads_per_sm must be a multiple of warp_size")

    @property
    def warps_per_sm(self) -> int:
        return self.threads_per_sm // self.warp_size

    @property
    def total_warps(self) -> int:
        return self.num_sms * self.warps_per_sm

    def warps_for_fraction(self, fraction: float) -> float:
        return fraction * self.total_warps


class ZeroCopyEstimate(NamedTuple):
    bandwidth: float
    efficiency: float
    avg_payload: float
    limited_by: str
    starved: bool = False


def average_payload(histogram: Mapping[int, float]) -> float:
    total = sum(histogram.values())
    if total <= 0:
        return 0.0
    return sum(p * c for p, c in histogram.items()) / total


def zero_copy_bandwidth(histogram: Mapping[int, float], params: LinkParams,
                        warps_available: float) -> ZeroCopyEstimate:
    """Payload throughput of a zero-copy read stream.

    Each warp keeps one read in flight, so the latency bound is
    ``min(warps, max_outstanding) * avg_payload / rtt``; the wire bound
    charges ``header_bytes`` per request. The result is the smaller of the
    two.
    """
    avg = average_payload(histogram)
    if avg == 0:
        return ZeroCopyEstimate(0.0, 0.0, 0.0, "empty")
    if warps_available <= 0:
        return ZeroCopyEstimate(0.0, 0.0, avg, "warps", starved=True)
    in_flight = min(warps_available, params.max_outstanding_reads)
    latency_bw = in_flight * avg / params.rtt
    wire_bw = params.wire_bandwidth * avg / (avg + params.header_bytes)
    if latency_bw < wire_bw:
        return ZeroCopyEstimate(latency_bw, latency_bw / params.wire_bandwidth, avg, "latency")
    return ZeroCopyEstimate(wire_bw, wire_bw / params.wire_bandwidth, avg, "wire")


def outstanding_requests_needed(bandwidth: float, rtt: float, payload: float = 128) -> float:
    """In-flight requests needed to sustain ``bandwidth`` (Little's law)."""
    return bandwidth / payload * rtt


class ProvisioningBounds(NamedTuple):
    upper_fraction: float
    lower_fraction: float
    sms_upper: int
    outstanding_needed: float
    target_attainable: bool = True


def provisioning_bounds(gpu: GpuSpec, params: LinkParams,
                        target_bandwidth: float = None) -> ProvisioningBounds:
    """Share of the GPU a zero-copy kernel needs.

    Upper: enough SMs to host one warp per allowed outstanding read.
    Lower: enough warps to keep ``target_bandwidth`` in flight with
    full 128-byte requests. When the target needs more in-flight reads
    than the link allows, it is unattainable and lower is capped at upper,
    since warps beyond the read cap add nothing.
    """
    if target_bandwidth is None:
        target_bandwidth = params.wire_bandwidth
    if target_bandwidth > params.wire_bandwidth * (1 + 1e-12):
        raise ConfigError("target_bandwidth exceeds the wire bandwidth")
    wps = gpu.warps_per_sm
    sms = math.ceil(params.max_outstanding_reads / wps)
    upper = min(1.0, sms / gpu.num_sms)
    needed = outstanding_requests_needed(target_bandwidth, params.rtt, 128)
    attainable = needed <= params.max_outstanding_reads
    lower = min(1.0, needed / wps / gpu.num_sms, upper)
    return ProvisioningBounds(upper, lower, sms, needed, attainable)


# (block bytes, efficiency) anchors; log-linear in between
DMA_EFFICIENCY_ANCHORS = (
    (4 * KiB, 0.05),
    (64 * KiB, 0.5),
    (256 * KiB, 0.9),
    (1 * MiB, 0.95),
)


def dma_efficiency(nbytes):
    """Fraction of the wire bandwidth a single DMA block achieves."""
    xs = np.log([a for a, _ in DMA_EFFICIENCY_ANCHORS])
    ys = [e for _, e in DMA_EFFICIENCY_ANCHORS]
    b = np.maximum(np.asarray(nbytes, dtype=np.float64), 1.0)
    eff = np.interp(np.log(b), xs, ys)
    return float(eff) if np.ndim(eff) == 0 else eff


def dma_transfer_time(nbytes: float, params: LinkParams) -> float:
    if nbytes < 0:
        raise ConfigError("nbytes must be non-negative")
    if nbytes == 0:
        return params.dma_setup_latency
    return params.dma_setup_latency + nbytes / (params.wire_bandwidth * dma_efficiency(nbytes))


def cpu_gather_time(nbytes: float, host_mem_bandwidth: float, gather_efficiency: float,
                    active_workers: int = 1, worker_share_cap: int = 64) -> float:
    """CPU gather of sparse rows into a dense staging buffer.

    Reads and writes ``nbytes`` each. Concurrent workers split the usable
    host bandwidth equally, up to ``worker_share_cap`` ways.
    """
    if nbytes < 0 or active_workers < 1:
        raise ConfigError("nbytes must be >= 0 and active_workers >= 1")
    if nbytes == 0:
        return 0.0
    share = host_mem_bandwidth * gather_efficiency / min(active_workers, worker_share_cap)
    return 2.0 * nbytes / share


def uvm_migration_time(touched_pages: int, params: LinkParams, page_size: int = None,
                       fault_latency: float = None) -> float:
    """Fault-driven page migration; a qualitative model only."""
    if touched_pages < 0:
        raise ConfigError("touched_pages must be non-negative")
    page_size = params.page_size if page_size is None else page_size
    fault_latency = params.fault_latency if fault_latency is None else fault_latency
    return touched_pages * (fault_latency + page_size / params.wire_bandwidth)


def touched_pages(row_ids, row_bytes: int, base_offset: int = 0, page_size: int = 4096) -> int:
    """Distinct pages spanned by the given rows."""
    rows = np.asarray(row_ids, dtype=np.int64)
    if len(rows) == 0 or row_bytes == 0:
        return 0
    first = (base_offset + rows * row_bytes) // page_size
    last = (base_offset + (rows + 1) * row_bytes - 1) // page_size
    span = last - first + 1
    if span.max() == 1:
        return int(len(np.unique(first)))
    pages = np.repeat(first, span) + (np.arange(span.sum()) - np.repeat(np.cumsum(span) - span, span))
    return int(len(np.unique(pages)))


def histogram_from_trace(payloads) -> Dict[int, int]:
    sizes, counts = np.unique(np.asarray(payloads), return_counts=True)
    return {int(s): int(c) for s, c in zip(sizes, counts)}

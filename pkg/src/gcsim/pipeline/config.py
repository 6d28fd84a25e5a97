"""Pipeline configuration and the two free stage-time models."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Tuple

from ..errors import ConfigError
from ..link import GB, GpuSpec, LinkParams


class Strategy(str, Enum):
    CPU_ONLY = "cpu-only"
    DMA = "dma"
    UVM = "uvm"
    ZERO_COPY_NAIVE = "zero-copy-naive"
    ZERO_COPY_OPT = "zero-copy-opt"
    ALL_IN_GPU = "all-in-gpu"

    @property
    def serialized(self) -> bool:
        # producer and consumer share one execution resource
        return self in (Strategy.CPU_ONLY, Strategy.UVM, Strategy.ZERO_COPY_NAIVE)


ALL_STRATEGIES = tuple(Strategy)


@dataclass(frozen=True)
class TrainTimeModel:
    """Consumer time per minibatch.

    ``base`` is the time with the whole GPU. Under a compute partition that
    leaves ``1 - X`` of the GPU to training, time is ``base * s`` where

    - ``linear``: ``s = 1 / (1 - X)``
    - ``saturating``: ``s = max(1, utilization / (1 - X))``, i.e. training
      only slows down once its share drops below the fraction of the GPU
      it can actually keep busy.
    """

    base: float = 5e-3
    scaling: str = "saturating"
    utilization: float = 0.9
    cpu_factor: float = 2.7

    def __post_init__(self):
        if self.base < 0:
            raise ConfigError("train base time must be non-negative")
        if self.scaling not in ("linear", "saturating"):
            raise ConfigError(f"unknown train scaling {self.scaling!r}")
        if not 0 < self.utilization <= 1:
            raise ConfigError("train utilization must be in (0, 1]")
        if self.cpu_factor <= 0:
            raise ConfigError("cpu_factor must be positive")

    def inflation(self, fraction: float) -> float:
        share = 1.0 - fraction
        if self.scaling == "linear":
            return 1.0 / share
        return max(1.0, self.utilization / share)

    def time(self, fraction: float = 0.0) -> float:
        return self.base * self.inflation(fraction)


@dataclass(frozen=True)
class PipelineConfig:
    strategy: Strategy = Strategy.ZERO_COPY_OPT
    num_gpus: int = 1
    resource_fraction: float = 0.10
    pingpong_depth: int = 2
    fanouts: Tuple[int, ...] = (10, 25)
    batch_size: int = 1000
    train: TrainTimeModel = field(default_factory=TrainTimeModel)
    # CPU seconds per sampled node (seeds included)
    sampler_time_per_node: float = 20e-9
    host_bandwidth: float = 102.4 * GB
    cpu_gather_efficiency: float = 0.5
    worker_share_cap: int = 8
    aggregate_link_cap: float = 51.7 * GB
    scaling: str = "strong"
    replace: bool = False
    # upper bound on elements traced to estimate the request mix
    trace_elements: int = 1 << 20
    gpu: GpuSpec = field(default_factory=GpuSpec)
    link: LinkParams = field(default_factory=LinkParams)

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        object.__setattr__(self, "fanouts", tuple(int(f) for f in self.fanouts))
        if not 0 < self.resource_fraction < 1:
            raise ConfigError(f"resource_fraction must be in (0, 1), got {self.resource_fraction}")
        if self.pingpong_depth < 1:
            raise ConfigError("pingpong_depth must be >= 1")
        if self.num_gpus < 1:
            raise ConfigError("num_gpus must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if any(f < 0 for f in self.fanouts):
            raise ConfigError("fanouts must be non-negative")
        if self.scaling not in ("strong", "weak"):
            raise ConfigError(f"scaling must be 'strong' or 'weak', got {self.scaling!r}")
        if self.sampler_time_per_node < 0:
            raise ConfigError("sampler_time_per_node must be non-negative")
        if self.host_bandwidth <= 0 or not 0 < self.cpu_gather_efficiency <= 1:
            raise ConfigError("host_bandwidth must be positive, cpu_gather_efficiency in (0, 1]")
        if self.aggregate_link_cap <= 0 or self.worker_share_cap < 1:
            raise ConfigError("aggregate_link_cap and worker_share_cap must be positive")
        if self.trace_elements < 1:
            raise ConfigError("trace_elements must be >= 1")

    def with_(self, **kw) -> "PipelineConfig":
        return replace(self, **kw)

    def link_share(self) -> float:
        """Static equal share of the aggregate link cap per GPU."""
        return min(self.link.wire_bandwidth, self.aggregate_link_cap / self.num_gpus)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        d["fanouts"] = list(self.fanouts)
        return d

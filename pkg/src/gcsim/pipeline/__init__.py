"""Discrete-event model of the sampler -> producer -> consumer pipeline."""

from .config import ALL_STRATEGIES, PipelineConfig, Strategy, TrainTimeModel
from .des import ChainSchedule, schedule_chain
from .simulate import SimReport, StageTimes, simulate_epoch, simulate_workload, stage_times
from .sweeps import (
    ComparisonRow,
    alignment_sweep,
    compare_strategies,
    feature_dim_sweep,
    resource_sweep,
    speedup_of,
)
from .workload import TraceStats, Workload, build_workload

__all__ = [
    "ALL_STRATEGIES", "ChainSchedule", "ComparisonRow", "PipelineConfig", "SimReport",
    "StageTimes", "Strategy", "TraceStats", "TrainTimeModel", "Workload", "alignment_sweep",
    "build_workload", "compare_strategies", "feature_dim_sweep", "resource_sweep",
    "schedule_chain", "simulate_epoch", "simulate_workload", "speedup_of", "stage_times",
]

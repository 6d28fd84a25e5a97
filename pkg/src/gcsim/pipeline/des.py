"""Deterministic schedule of one GPU's sampler -> producer -> consumer chain.

Stage durations are fixed before scheduling, so the event order is fully
determined by the precedence rules and each stage simply starts at the
latest completion among the events it waits for:

- sampler k waits for sampler k-1 and for producer k-depth to have taken
  its plan (at most ``depth`` sampled plans queue up);
- producer k waits for sampler k, producer k-1, and consumer k-depth
  (its ping-pong buffer must be drained);
- consumer k waits for producer k (the single per-minibatch sync) and
  consumer k-1.

In serialized mode producer and consumer share one execution resource and
run in the fixed order P0, C0, P1, C1, ...
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ChainSchedule:
    sampler_start: np.ndarray
    sampler_end: np.ndarray
    producer_start: np.ndarray
    producer_end: np.ndarray
    consumer_start: np.ndarray
    consumer_end: np.ndarray

    @property
    def makespan(self) -> float:
        return float(self.consumer_end[-1]) if len(self.consumer_end) else 0.0


def schedule_chain(sampler_t, producer_t, consumer_t, depth: int = 2,
                   serialized: bool = False) -> ChainSchedule:
    s_t = np.asarray(sampler_t, dtype=np.float64)
    p_t = np.asarray(producer_t, dtype=np.float64)
    c_t = np.asarray(consumer_t, dtype=np.float64)
    n = len(s_t)
    if not (len(p_t) == len(c_t) == n):
        raise ValueError("stage time arrays must have equal length")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    ss, se, ps, pe, cs, ce = (np.zeros(n) for _ in range(6))
    for k in range(n):
        t = se[k - 1] if k else 0.0
        if k >= depth:
            t = max(t, ps[k - depth])
        ss[k], se[k] = t, t + s_t[k]

        t = se[k]
        if k:
            t = max(t, pe[k - 1])
            if serialized:
                t = max(t, ce[k - 1])
        if k >= depth:
            t = max(t, ce[k - depth])
        ps[k], pe[k] = t, t + p_t[k]

        t = pe[k]
        if k:
            t = max(t, ce[k - 1])
        cs[k], ce[k] = t, t + c_t[k]
    return ChainSchedule(ss, se, ps, pe, cs, ce)

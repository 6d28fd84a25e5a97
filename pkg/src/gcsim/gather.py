"""Gather-kernel index semantics and interconnect request coalescing.

The indexing kernel copies ``feat_dim`` elements per gathered row from a
host-resident feature table into a dense buffer, one element per thread.
Threads are grouped into warps by linear index; each warp's source reads
are coalesced per 128-byte cacheline into one read request spanning the
touched 32-byte sectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional

import numpy as np

from .errors import BoundsError, ConfigError
from .graph import FeatureTable

WARP_SIZE = 32
CACHELINE = 128
SECTOR = 32
DEFAULT_HEADER = 16


class OffsetPair(NamedTuple):
    dst_offset: int
    src_offset: int
    warp_id: int
    lane: int


@dataclass(frozen=True, eq=False)
class OffsetPlan:
    """Per-thread (dst, src) element offsets, stored column-wise.

    Position ``i`` belongs to thread ``i``; ``warp_id`` and ``lane`` are
    attached to the thread, not to the offsets, so the circular shift
    changes ``dst``/``src`` but never the warp partition.
    """

    dst: np.ndarray
    src: np.ndarray
    warp_id: np.ndarray
    lane: np.ndarray
    feat_dim: int
    warp_size: int = WARP_SIZE
    shifted: bool = False

    def __len__(self):
        return len(self.dst)

    def __getitem__(self, i) -> OffsetPair:
        return OffsetPair(int(self.dst[i]), int(self.src[i]), int(self.warp_id[i]), int(self.lane[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def as_tuples(self) -> List[tuple]:
        return list(zip(self.dst.tolist(), self.src.tolist()))


def plan_offsets(idx_list, feat_dim: int, warp_size: int = WARP_SIZE,
                 table: Optional[FeatureTable] = None) -> OffsetPlan:
    """Flat enumeration of the indexing kernel's element copies.

    The grid-stride loop is flattened: thread ``i`` handles linear index
    ``i`` and belongs to warp ``i // warp_size``.
    """
    if feat_dim < 1:
        raise ConfigError("feat_dim must be >= 1")
    idx = np.asarray(idx_list, dtype=np.int64)
    if table is not None and len(idx) and (idx.min() < 0 or idx.max() >= table.num_nodes):
        raise BoundsError(f"gather index out of range for {table.num_nodes} rows")
    i = np.arange(len(idx) * feat_dim, dtype=np.int64)
    dst_idx = i // feat_dim
    offset = i % feat_dim
    src = offset + idx[dst_idx] * feat_dim
    return OffsetPlan(i, src, i // warp_size, i % warp_size, feat_dim, warp_size)


def shift_applies(feat_dim: int, warp_size: int = WARP_SIZE) -> bool:
    return feat_dim > warp_size and feat_dim % warp_size != 0


def apply_circular_shift(pairs: OffsetPlan, feat_dim: Optional[int] = None,
                         warp_size: Optional[int] = None) -> OffsetPlan:
    """Cacheline-aware circular shift of each row's element assignment.

    Every thread's offsets advance by ``diff = (dstStart - srcStart) mod
    warp_size`` and wrap back into the row, so source reads of a row start
    on a warp-aligned element. Skipped when ``feat_dim <= warp_size`` or
    ``feat_dim`` is already a multiple of ``warp_size``.
    """
    feat = pairs.feat_dim if feat_dim is None else feat_dim
    ws = pairs.warp_size if warp_size is None else warp_size
    if not shift_applies(feat, ws):
        return pairs

    dst_start = (pairs.dst // feat) * feat
    src_start = (pairs.src // feat) * feat
    # C remainder, then folded into [0, warp_size)
    diff = np.fmod(dst_start - src_start, ws)
    diff = np.where(diff < 0, diff + ws, diff)

    dst = pairs.dst + diff
    src = pairs.src + diff
    low = src < src_start
    dst = np.where(low, dst + feat, dst)
    src = np.where(low, src + feat, src)
    high = src >= src_start + feat
    dst = np.where(high, dst - feat, dst)
    src = np.where(high, src - feat, src)
    return OffsetPlan(dst, src, pairs.warp_id, pairs.lane, feat, ws, shifted=True)


def reference_gather(table: FeatureTable, pairs: OffsetPlan) -> np.ndarray:
    """``out[dst] = table[src]`` for every pair."""
    if table.data is None:
        raise ConfigError("reference_gather needs a table with materialized data")
    n_out = len(pairs)
    if n_out == 0:
        return np.zeros(0, dtype=table.data.dtype)
    if pairs.src.min() < 0 or pairs.src.max() >= len(table.data):
        raise BoundsError("source offset outside the feature table")
    if pairs.dst.min() < 0 or pairs.dst.max() >= n_out:
        raise BoundsError("destination offset outside the output buffer")
    out = np.empty(n_out, dtype=table.data.dtype)
    out[pairs.dst] = table.data[pairs.src]
    return out


@dataclass(frozen=True)
class InterconnectRequest:
    start_address: int
    payload: int
    header: int = DEFAULT_HEADER


@dataclass(frozen=True, eq=False)
class AccessTrace:
    """Read requests emitted by a gather, ordered by (warp, address)."""

    warp_id: np.ndarray
    addresses: np.ndarray
    payloads: np.ndarray
    total_useful: int
    header: int = DEFAULT_HEADER

    def __len__(self):
        return len(self.addresses)

    @property
    def total_payload(self) -> int:
        return int(self.payloads.sum())

    @property
    def requests(self) -> List[InterconnectRequest]:
        return [InterconnectRequest(int(a), int(p), self.header)
                for a, p in zip(self.addresses, self.payloads)]

    def to_json(self) -> dict:
        return {
            "requests": [{"addr": int(a), "payload": int(p)}
                         for a, p in zip(self.addresses, self.payloads)],
            "histogram": {str(k): v for k, v in request_histogram(self).items()},
            "useful": int(self.total_useful),
            "payload": self.total_payload,
        }


def coalesce_trace(pairs: OffsetPlan, elem_size: int, base_offset: int = 0,
                   cacheline: int = CACHELINE, sector: int = SECTOR,
                   split: str = "line", header: int = DEFAULT_HEADER) -> AccessTrace:
    """Lower each warp's source reads to cacheline-sized read requests.

    ``split="line"`` emits one request per touched cacheline spanning the
    lowest to highest touched sector. ``split="runs"`` emits one request
    per contiguous run of touched sectors instead.
    """
    if sector % elem_size:
        raise ConfigError(f"elem_size {elem_size} must divide the sector size {sector}")
    if split not in ("line", "runs"):
        raise ConfigError(f"unknown split mode {split!r}")
    useful = len(pairs) * elem_size
    empty = np.zeros(0, dtype=np.int64)
    if len(pairs) == 0:
        return AccessTrace(empty, empty, empty, 0, header)

    addr = base_offset + pairs.src * elem_size
    warp = pairs.warp_id
    if base_offset % elem_size:
        # elements may straddle a sector (or line) boundary: track both the
        # first and the last byte of every element, interleaved in order
        addr = np.stack([addr, addr + elem_size - 1], axis=1).ravel()
        warp = np.repeat(warp, 2)
    line = addr // cacheline
    sec = (addr % cacheline) // sector

    # compress runs of consecutive threads hitting the same (warp, line)
    brk = np.flatnonzero((warp[1:] != warp[:-1]) | (line[1:] != line[:-1])) + 1
    starts = np.concatenate([[0], brk])
    r_warp = warp[starts]
    r_line = line[starts]
    if split == "line":
        r_lo = np.minimum.reduceat(sec, starts)
        r_hi = np.maximum.reduceat(sec, starts)
    else:
        r_mask = np.bitwise_or.reduceat(np.left_shift(1, sec).astype(np.int64), starts)

    # the same (warp, line) can recur in non-adjacent runs
    order = np.lexsort((r_line, r_warp))
    r_warp, r_line = r_warp[order], r_line[order]
    grp = np.concatenate([[0], np.flatnonzero((r_warp[1:] != r_warp[:-1])
                                              | (r_line[1:] != r_line[:-1])) + 1])
    g_warp, g_line = r_warp[grp], r_line[grp]

    if split == "line":
        lo = np.minimum.reduceat(r_lo[order], grp)
        hi = np.maximum.reduceat(r_hi[order], grp)
        addresses = g_line * cacheline + lo * sector
        payloads = (hi - lo + 1) * sector
        return AccessTrace(g_warp, addresses, payloads, useful, header)

    masks = np.bitwise_or.reduceat(r_mask[order], grp)
    run_start, run_len, run_owner = _decode_runs(masks, cacheline // sector)
    addresses = g_line[run_owner] * cacheline + run_start * sector
    return AccessTrace(g_warp[run_owner], addresses, run_len * sector, useful, header)


def _sector_runs(mask: int, n_sec: int):
    runs, s = [], 0
    while s < n_sec:
        if mask >> s & 1:
            t = s
            while t < n_sec and mask >> t & 1:
                t += 1
            runs.append((s, t - s))
            s = t
        else:
            s += 1
    return runs


def _decode_runs(masks: np.ndarray, n_sec: int):
    # expand each sector mask into its contiguous runs via a lookup table
    table = [_sector_runs(m, n_sec) for m in range(1 << n_sec)]
    counts = np.array([len(r) for r in table], dtype=np.int64)[masks]
    flat_start = np.array([r[0] for runs in table for r in runs], dtype=np.int64)
    flat_len = np.array([r[1] for runs in table for r in runs], dtype=np.int64)
    table_off = np.concatenate([[0], np.cumsum([len(r) for r in table])])
    owner = np.repeat(np.arange(len(masks)), counts)
    k = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    pos = table_off[masks[owner]] + k
    return flat_start[pos], flat_len[pos], owner


def request_histogram(trace: AccessTrace) -> Dict[int, int]:
    """Count of requests per payload size, keys ascending."""
    sizes, counts = np.unique(trace.payloads, return_counts=True)
    return {int(s): int(c) for s, c in zip(sizes, counts)}


def gather_trace(idx_list, table: FeatureTable, shift: bool = True,
                 warp_size: int = WARP_SIZE, **kwargs) -> AccessTrace:
    """Plan, optionally shift, and coalesce the gather of ``idx_list``."""
    pairs = plan_offsets(idx_list, table.feat_dim, warp_size, table=table)
    if shift:
        pairs = apply_circular_shift(pairs)
    return coalesce_trace(pairs, table.elem_size, table.base_offset, **kwargs)

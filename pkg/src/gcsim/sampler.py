"""Layered uniform neighbourhood sampling.

Randomness comes from a counter-based hash keyed by
(epoch seed, minibatch index, layer, node ID, neighbour slot), so every
node's draw is independent of the order in which frontier nodes are
visited and a plan can be rebuilt in isolation from its coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, List, Sequence

import numpy as np

from .errors import BoundsError, ConfigError
from .graph import CsrGraph

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = x ^ (x >> np.uint64(31))
    return x


def stream_key(*coords) -> np.ndarray:
    """Fold integer coordinates (scalars or arrays) into 64-bit keys."""
    h = np.zeros((), dtype=np.uint64)
    with np.errstate(over="ignore"):
        for c in coords:
            c = np.asarray(c).astype(np.int64).astype(np.uint64)
            h = _mix64(h * _GOLDEN + c + _GOLDEN)
    return h


def uniform01(keys: np.ndarray) -> np.ndarray:
    """Map 64-bit keys to floats in [0, 1) using the top 53 bits."""
    return (np.asarray(keys, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


@dataclass(frozen=True, eq=False)
class MinibatchPlan:
    """Sampled node sets for one training step.

    ``layers[k]`` is the concatenation, in ``frontiers[k]`` order, of the
    neighbours drawn for each frontier node at hop ``k`` (hop 0 samples
    around the seeds). ``unique_nodes`` lists every seed and sampled node
    once, in first-appearance order, and is the gather list handed to the
    producer.
    """

    seeds: np.ndarray
    layers: List[np.ndarray]
    frontiers: List[np.ndarray]
    unique_nodes: np.ndarray
    gather_bytes: int = 0
    index: int = 0

    @property
    def num_sampled(self) -> int:
        return len(self.seeds) + sum(len(layer) for layer in self.layers)

    def to_json(self) -> dict:
        return {
            "seeds": self.seeds.tolist(),
            "layers": [layer.tolist() for layer in self.layers],
            "unique": self.unique_nodes.tolist(),
            "bytes": int(self.gather_bytes),
        }

    def __eq__(self, other):
        if not isinstance(other, MinibatchPlan):
            return NotImplemented
        return (
            np.array_equal(self.seeds, other.seeds)
            and len(self.layers) == len(other.layers)
            and all(np.array_equal(a, b) for a, b in zip(self.layers, other.layers))
            and np.array_equal(self.unique_nodes, other.unique_nodes)
            and self.gather_bytes == other.gather_bytes
        )


def _first_appearance_unique(ids: np.ndarray, num_nodes: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if len(ids) == 0:
        return ids
    first = np.full(num_nodes, len(ids), dtype=np.int64)
    np.minimum.at(first, ids, np.arange(len(ids)))
    present = np.flatnonzero(first < len(ids))
    return present[np.argsort(first[present])]


def _sample_hop(graph: CsrGraph, frontier: np.ndarray, fanout: int, key_prefix,
                replace: bool) -> np.ndarray:
    offsets = graph.row_offsets
    start = offsets[frontier]
    deg = offsets[frontier + 1] - start
    if fanout <= 0 or len(frontier) == 0:
        return np.zeros(0, dtype=np.int64)

    if replace:
        take = np.where(deg > 0, fanout, 0)
        owner = np.repeat(np.arange(len(frontier)), take)
        draw = np.arange(take.sum()) - np.repeat(np.cumsum(take) - take, take)
        keys = stream_key(*key_prefix, frontier[owner], draw)
        slot = (uniform01(keys) * deg[owner]).astype(np.int64)
        return graph.col_indices[start[owner] + slot]

    take = np.minimum(deg, fanout)
    small = np.flatnonzero(deg <= fanout)
    mid = np.flatnonzero((deg > fanout) & (deg <= _SPARSE_RATIO * fanout))
    big = np.flatnonzero(deg > _SPARSE_RATIO * fanout)

    parts_owner, parts_slot = [], []
    # degree <= fanout: every slot, in slot order
    o = np.repeat(small, deg[small])
    parts_owner.append(o)
    parts_slot.append(_ragged_arange(deg[small]))

    if len(mid):
        # random-key ranking over all slots: the fanout smallest keys form
        # a uniform subset
        o = np.repeat(mid, deg[mid])
        s = _ragged_arange(deg[mid])
        keys = stream_key(*key_prefix, frontier[o], s)
        if len(frontier) < (1 << 24):
            # frontier position in the high bits, key bits below
            order = np.argsort((o.astype(np.uint64) << np.uint64(40)) | (keys >> np.uint64(24)))
        else:
            order = np.lexsort((keys, o))
        o, s = o[order], s[order]
        keep = _rank_within(o) < fanout
        parts_owner.append(o[keep])
        parts_slot.append(s[keep])

    if len(big):
        o, s = _distinct_draws(big, deg[big], fanout, frontier, key_prefix)
        parts_owner.append(o)
        parts_slot.append(s)

    owner = np.concatenate(parts_owner)
    slot = np.concatenate(parts_slot)
    # group by frontier position, keeping within-row order
    order = np.argsort(owner, kind="stable")
    owner, slot = owner[order], slot[order]
    out = graph.col_indices[start[owner] + slot]
    assert len(out) == int(take.sum())
    return out


# rows with degree above this multiple of the fanout use rejection draws
_SPARSE_RATIO = 2


def _ragged_arange(lengths: np.ndarray) -> np.ndarray:
    return np.arange(lengths.sum()) - np.repeat(np.cumsum(lengths) - lengths, lengths)


def _rank_within(sorted_groups: np.ndarray) -> np.ndarray:
    return np.arange(len(sorted_groups)) - np.searchsorted(sorted_groups, sorted_groups, side="left")


def _distinct_draws(owners, deg, fanout, frontier, key_prefix):
    # iid uniform slot draws, first `fanout` distinct ones per row: a
    # uniformly random subset without replacement
    got_o = np.zeros(0, dtype=np.int64)
    got_s = np.zeros(0, dtype=np.int64)
    pending = np.arange(len(owners))
    batch = 2 * fanout
    rnd = 0
    while len(pending):
        o_idx = np.repeat(pending, batch)
        counter = rnd * batch + np.tile(np.arange(batch), len(pending))
        keys = stream_key(*key_prefix, frontier[owners[o_idx]], counter, -1)
        s = (uniform01(keys) * deg[o_idx]).astype(np.int64)
        got_o = np.concatenate([got_o, owners[o_idx]])
        got_s = np.concatenate([got_s, s])
        # dedupe per row keeping first occurrences, in draw order
        combined = got_o * (deg.max() + 1) + got_s
        _, first = np.unique(combined, return_index=True)
        first = np.sort(first)
        got_o, got_s = got_o[first], got_s[first]
        order = np.argsort(got_o, kind="stable")
        got_o, got_s = got_o[order], got_s[order]
        keep = _rank_within(got_o) < fanout
        got_o, got_s = got_o[keep], got_s[keep]
        counts = np.bincount(np.searchsorted(owners, got_o), minlength=len(owners))
        pending = np.flatnonzero(counts < fanout)
        rnd += 1
    return got_o, got_s


def sample_layers(graph: CsrGraph, seeds: Sequence[int], fanouts: Sequence[int], seed: int,
                  batch_index: int = 0, row_bytes: int = 0,
                  replace: bool = False) -> MinibatchPlan:
    """Sample ``len(fanouts)`` hops of neighbours around ``seeds``.

    A frontier node of degree ``d`` contributes all ``d`` neighbours when
    ``d <= fanout`` and otherwise ``fanout`` distinct neighbour slots chosen
    uniformly (``replace=True`` draws ``fanout`` slots with replacement
    instead). The frontier of hop ``k + 1`` is the deduplicated union of the
    seeds and every node sampled so far.
    """
    seeds = np.asarray(seeds, dtype=np.int64)
    n = graph.num_nodes
    if len(seeds) and (seeds.min() < 0 or seeds.max() >= n):
        raise BoundsError(f"seed node ID out of range for {n} nodes")
    if any(f < 0 for f in fanouts):
        raise ConfigError("fanouts must be non-negative")

    frontier = _first_appearance_unique(seeds, n)
    layers, frontiers = [], []
    gathered = [seeds]
    for k, f in enumerate(fanouts):
        frontiers.append(frontier)
        sampled = _sample_hop(graph, frontier, int(f), (seed, batch_index, k), replace)
        layers.append(sampled)
        gathered.append(sampled)
        frontier = _first_appearance_unique(np.concatenate([frontier, sampled]), n)

    unique = _first_appearance_unique(np.concatenate(gathered), n)
    for a in [seeds, unique, *layers, *frontiers]:
        a.setflags(write=False)
    return MinibatchPlan(seeds, layers, frontiers, unique, len(unique) * row_bytes, batch_index)


def epoch_permutation(num_nodes: int, epoch_seed: int) -> np.ndarray:
    return np.random.default_rng(epoch_seed).permutation(num_nodes)


def num_minibatches(num_nodes: int, batch_size: int) -> int:
    return -(-num_nodes // batch_size)


def minibatch_stream(graph: CsrGraph, batch_size: int, fanouts: Sequence[int], epoch_seed: int,
                     row_bytes: int = 0, replace: bool = False) -> Iterator[MinibatchPlan]:
    """Yield one plan per consecutive ``batch_size`` slice of a node permutation."""
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    perm = epoch_permutation(graph.num_nodes, epoch_seed)
    for j in range(num_minibatches(graph.num_nodes, batch_size)):
        seeds = perm[j * batch_size:(j + 1) * batch_size]
        yield sample_layers(graph, seeds, fanouts, epoch_seed, batch_index=j,
                            row_bytes=row_bytes, replace=replace)

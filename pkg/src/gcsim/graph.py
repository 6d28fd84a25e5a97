"""Graph adjacency and node-feature storage.

`CsrGraph` is the sampling-side view of a graph; `FeatureTable` describes
where node features live and how their rows map onto byte addresses. Both
are immutable once built and may be shared read-only between workers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import BoundsError, CapacityError, ConfigError, InputDataError, ParseError

GiB = 1 << 30
DEFAULT_DEVICE_CAPACITY = 24 * GiB
# Mapping a host buffer into the device address space costs about 1/512 of
# its size in device memory.
MAPPING_OVERHEAD_DIVISOR = 512

CSR_MAGIC = b"CSR1"

_ELEM_DTYPES = {1: np.uint8, 2: np.uint16, 4: np.uint32, 8: np.uint64}


def _frozen(a, dtype=np.int64):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrGraph:
    """Compressed sparse row adjacency.

    Row ``u`` holds the out-neighbours of ``u`` in
    ``col_indices[row_offsets[u]:row_offsets[u + 1]]``.
    """

    row_offsets: np.ndarray
    col_indices: np.ndarray

    def __post_init__(self):
        offsets = _frozen(self.row_offsets)
        cols = _frozen(self.col_indices)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "col_indices", cols)
        if offsets.ndim != 1 or len(offsets) < 1:
            raise InputDataError("row_offsets must be a 1-D array of length num_nodes + 1")
        if offsets[0] != 0:
            raise InputDataError("row_offsets[0] must be 0")
        if np.any(np.diff(offsets) < 0):
            raise InputDataError("row_offsets must be non-decreasing")
        if offsets[-1] != len(cols):
            raise InputDataError(
                f"row_offsets[-1] = {offsets[-1]} but there are {len(cols)} column indices"
            )
        n = len(offsets) - 1
        if len(cols) and (cols.min() < 0 or cols.max() >= n):
            raise BoundsError(f"column index out of range for {n} nodes")

    @property
    def num_nodes(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def num_edges(self) -> int:
        return len(self.col_indices)

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def edges(self) -> np.ndarray:
        """(num_edges, 2) array of (src, dst) pairs in row order."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        return np.stack([src, self.col_indices], axis=1)

    def to_bytes(self) -> bytes:
        head = CSR_MAGIC + struct.pack("<qq", self.num_nodes, self.num_edges)
        return (
            head
            + self.row_offsets.astype("<i8").tobytes()
            + self.col_indices.astype("<i8").tobytes()
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "CsrGraph":
        if buf[:4] != CSR_MAGIC:
            raise ParseError("missing CSR1 magic bytes")
        if len(buf) < 20:
            raise ParseError("truncated CSR header")
        n, m = struct.unpack_from("<qq", buf, 4)
        expected = 20 + 8 * (n + 1) + 8 * m
        if n < 0 or m < 0 or len(buf) != expected:
            raise ParseError(f"CSR payload is {len(buf)} bytes, expected {expected}")
        offsets = np.frombuffer(buf, dtype="<i8", count=n + 1, offset=20)
        cols = np.frombuffer(buf, dtype="<i8", count=m, offset=20 + 8 * (n + 1))
        return cls(offsets, cols)

    @classmethod
    def from_edges(cls, src, dst, num_nodes: int) -> "CsrGraph":
        """Build from parallel edge arrays; duplicates are kept."""
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if len(src) and (src.min() < 0 or src.max() >= num_nodes
                         or dst.min() < 0 or dst.max() >= num_nodes):
            raise BoundsError(f"edge endpoint out of range for {num_nodes} nodes")
        order = np.lexsort((dst, src))
        counts = np.bincount(src, minlength=num_nodes)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        return cls(offsets, dst[order])


def load_edge_list(path, num_nodes: Optional[int] = None) -> CsrGraph:
    """Read a ``src dst`` text edge list; ``#`` starts a comment line.

    Without ``num_nodes`` the count comes from a ``# nodes N`` header
    line, else from the largest node ID seen.
    """
    src, dst = [], []
    header_nodes = None
    limit = num_nodes if num_nodes is not None else float("inf")
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                words = text[1:].split()
                if len(words) == 2 and words[0] == "nodes" and words[1].isdigit():
                    header_nodes = int(words[1])
                    if num_nodes is None:
                        limit = header_nodes
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'src dst', got {text!r}", line=lineno, path=path)
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"non-integer node ID in {text!r}", line=lineno, path=path) from None
            if not (0 <= u < limit and 0 <= v < limit):
                raise BoundsError(f"{path}:{lineno}: edge ({u}, {v}) outside 0..{limit - 1}")
            src.append(u)
            dst.append(v)
    if num_nodes is None:
        num_nodes = header_nodes if header_nodes is not None else max(src + dst, default=-1) + 1
    return CsrGraph.from_edges(src, dst, num_nodes)


def write_edge_list(graph: CsrGraph, path) -> None:
    edges = graph.edges()
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# nodes {graph.num_nodes}\n")
        for u, v in edges:
            fh.write(f"{u} {v}\n")


def load_csr_binary(path) -> CsrGraph:
    return CsrGraph.from_bytes(Path(path).read_bytes())


def write_csr_binary(graph: CsrGraph, path) -> None:
    Path(path).write_bytes(graph.to_bytes())


class GraphModel(str, Enum):
    UNIFORM = "uniform-random"
    POWER_LAW = "power-law"


def generate_graph(num_nodes: int, avg_degree: int, model="uniform-random", seed: int = 0,
                   uniform_share: float = 0.5) -> CsrGraph:
    """Synthetic undirected graph stored with both edge directions.

    ``num_nodes * avg_degree / 2`` undirected edges are drawn, so the CSR
    holds about ``num_nodes * avg_degree`` entries. The power-law model is
    a copying process: each new edge targets a uniformly chosen older node
    with probability ``uniform_share`` and otherwise copies the target of a
    uniformly chosen earlier edge, which attaches proportionally to degree.
    """
    model = GraphModel(model)
    if num_nodes < 1:
        raise ConfigError("num_nodes must be >= 1")
    if avg_degree < 0 or avg_degree >= num_nodes:
        raise ConfigError(f"avg_degree must be in [0, num_nodes), got {avg_degree}")
    rng = np.random.default_rng(seed)
    m = (num_nodes * avg_degree) // 2
    if m == 0:
        return CsrGraph(np.zeros(num_nodes + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))

    if model is GraphModel.UNIFORM:
        src = rng.integers(0, num_nodes, size=m)
        # never a self loop
        dst = (src + 1 + rng.integers(0, num_nodes - 1, size=m)) % num_nodes
    else:
        src, dst = _copying_edges(num_nodes, m, uniform_share, rng)

    both_src = np.concatenate([src, dst])
    both_dst = np.concatenate([dst, src])
    return CsrGraph.from_edges(both_src, both_dst, num_nodes)


def _copying_edges(n, m, uniform_share, rng):
    # edge j is emitted by node src[j]; nodes arrive in ID order
    src = (np.arange(m, dtype=np.int64) * n) // m
    src = np.maximum(src, 1)
    is_base = rng.random(m) < uniform_share
    is_base[0] = True
    base_target = (rng.random(m) * src).astype(np.int64)
    # copy from a uniformly chosen earlier edge
    j = np.arange(m, dtype=np.int64)
    ptr = np.where(is_base, j, (rng.random(m) * j).astype(np.int64))
    while True:
        nxt = ptr[ptr]
        if np.array_equal(nxt, ptr):
            break
        ptr = nxt
    dst = base_target[ptr]
    # copied targets are older than their source edge's node, so dst < src
    return src, dst


class Placement(str, Enum):
    HOST_SHARED = "host-shared"
    DEVICE = "device"
    HOST_MAPPED = "host-mapped"


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Descriptor of a dense, unpadded node-feature array.

    Row ``r`` starts at byte ``base_offset + r * row_bytes``, where
    ``base_offset`` is the misalignment of row 0 relative to a 128-byte
    boundary. ``data`` is optional flat element storage of length
    ``num_nodes * feat_dim``.
    """

    num_nodes: int
    feat_dim: int
    elem_size: int = 4
    base_offset: int = 0
    placement: Placement = Placement.HOST_SHARED
    data: Optional[np.ndarray] = field(default=None, repr=False)
    device_capacity: int = DEFAULT_DEVICE_CAPACITY

    def __post_init__(self):
        object.__setattr__(self, "placement", Placement(self.placement))
        if self.num_nodes < 0 or self.feat_dim < 1:
            raise ConfigError("num_nodes must be >= 0 and feat_dim >= 1")
        if self.elem_size not in _ELEM_DTYPES:
            raise ConfigError(f"elem_size must be one of 1, 2, 4, 8; got {self.elem_size}")
        if not 0 <= self.base_offset < 128:
            raise ConfigError(f"base_offset must be in [0, 128), got {self.base_offset}")
        if self.data is not None:
            data = np.asarray(self.data)
            if data.ndim != 1 or len(data) != self.num_nodes * self.feat_dim:
                raise ConfigError("data length must equal num_nodes * feat_dim")
            data.setflags(write=False)
            object.__setattr__(self, "data", data)
        footprint = self.device_footprint
        if footprint > self.device_capacity:
            raise CapacityError(
                f"{self.placement.value} table needs {footprint} bytes of device memory, "
                f"capacity is {self.device_capacity}",
                required=footprint,
                capacity=self.device_capacity,
            )

    @property
    def row_bytes(self) -> int:
        return self.feat_dim * self.elem_size

    @property
    def nbytes(self) -> int:
        return self.num_nodes * self.row_bytes

    @property
    def device_footprint(self) -> int:
        if self.placement is Placement.DEVICE:
            return self.nbytes
        if self.placement is Placement.HOST_MAPPED:
            return -(-self.nbytes // MAPPING_OVERHEAD_DIVISOR)
        return 0

    def row_address(self, r):
        """Byte address of the first element of row(s) ``r``."""
        return self.base_offset + np.asarray(r, dtype=np.int64) * self.row_bytes

    def element_address(self, flat_index):
        return self.base_offset + np.asarray(flat_index, dtype=np.int64) * self.elem_size

    def row(self, r: int) -> np.ndarray:
        if self.data is None:
            raise ConfigError("feature table has no materialized data")
        return self.data[r * self.feat_dim:(r + 1) * self.feat_dim]

    def with_placement(self, placement) -> "FeatureTable":
        return FeatureTable(self.num_nodes, self.feat_dim, self.elem_size, self.base_offset,
                            placement, self.data, self.device_capacity)


def sequential_value(r, k, feat_dim: int, elem_size: int):
    """Element value written by the sequential fill for row r, column k."""
    dtype = _ELEM_DTYPES[elem_size]
    flat = np.asarray(r, dtype=np.uint64) * np.uint64(feat_dim) + np.asarray(k, dtype=np.uint64)
    return flat.astype(dtype)


def attach_features(num_nodes: int, feat_dim: int, elem_size: int = 4, base_offset: int = 0,
                    placement="host-shared", fill="none", seed: int = 0,
                    device_capacity: int = DEFAULT_DEVICE_CAPACITY) -> FeatureTable:
    """Describe (and optionally materialize) a feature table.

    ``fill`` is ``"sequential"``, ``"random"`` or ``"none"``. Capacity is
    checked before any storage is allocated.
    """
    # validates placement/capacity without touching memory
    FeatureTable(num_nodes, feat_dim, elem_size, base_offset, placement, None, device_capacity)
    dtype = _ELEM_DTYPES[elem_size]
    if fill == "none":
        data = None
    elif fill == "sequential":
        # elementwise (r * feat_dim + k), wrapped to the element width
        data = np.arange(num_nodes * feat_dim, dtype=np.uint64).astype(dtype)
    elif fill == "random":
        rng = np.random.default_rng(seed)
        data = rng.integers(0, np.iinfo(dtype).max, size=num_nodes * feat_dim,
                            dtype=dtype, endpoint=True)
    else:
        raise ConfigError(f"unknown fill {fill!r}")
    return FeatureTable(num_nodes, feat_dim, elem_size, base_offset, placement, data,
                        device_capacity)


def edge_multiset(edges: Iterable) -> dict:
    """Count (src, dst) pairs; handy for round-trip comparisons."""
    out: dict = {}
    for u, v in edges:
        key = (int(u), int(v))
        out[key] = out.get(key, 0) + 1
    return out

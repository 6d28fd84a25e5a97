import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gcsim.errors import BoundsError
from gcsim.graph import CsrGraph, generate_graph
from gcsim.sampler import minibatch_stream, sample_layers, stream_key

from oracles import is_neighbor


def star():
    return CsrGraph.from_edges([0, 0, 0, 1, 2, 3], [1, 2, 3, 0, 0, 0], 4)


def cycle(n):
    src = np.arange(n)
    return CsrGraph.from_edges(np.concatenate([src, src]),
                               np.concatenate([(src + 1) % n, (src - 1) % n]), n)


def test_no_fanouts():
    p = sample_layers(star(), [2, 1, 2], [], seed=0)
    assert p.layers == []
    assert p.unique_nodes.tolist() == [2, 1]


def test_star_takes_all():
    p = sample_layers(star(), [0], [10], seed=0)
    assert sorted(p.layers[0].tolist()) == [1, 2, 3]


def test_cycle_deterministic_and_adjacent():
    g = cycle(100)
    a = sample_layers(g, [0], [1, 1], seed=42)
    b = sample_layers(g, [0], [1, 1], seed=42)
    assert a == b
    for k, layer in enumerate(a.layers):
        frontier = set(a.frontiers[k].tolist())
        for v in layer:
            assert any(is_neighbor(g.row_offsets, g.col_indices, u, v) for u in frontier)


def test_seed_out_of_range():
    with pytest.raises(BoundsError):
        sample_layers(star(), [4], [1], seed=0)


def test_without_replacement_on_hub():
    # hub with 1000 distinct neighbours, fanout 25
    n = 1001
    g = CsrGraph.from_edges(np.zeros(1000, dtype=int), np.arange(1, n), n)
    p = sample_layers(g, [0], [25], seed=3)
    assert len(p.layers[0]) == 25 and len(set(p.layers[0].tolist())) == 25


def test_with_replacement_flag():
    g = CsrGraph.from_edges([0, 0], [1, 2], 3)
    p = sample_layers(g, [0], [10], seed=1, replace=True)
    assert len(p.layers[0]) == 10


def test_selection_is_uniform():
    # each of 40 slots should be picked with probability 10/40
    n = 41
    g = CsrGraph.from_edges(np.zeros(40, dtype=int), np.arange(1, n), n)
    counts = np.zeros(n)
    trials = 2000
    for s in range(trials):
        counts[sample_layers(g, [0], [10], seed=s).layers[0]] += 1
    freq = counts[1:] / trials
    assert np.all(np.abs(freq - 0.25) < 0.05)


def test_order_independence():
    # a node's draw depends on its coordinates, not on its frontier position
    g = generate_graph(500, 10, "uniform-random", 2)
    a = sample_layers(g, [3, 7], [5], seed=9)
    b = sample_layers(g, [7, 3], [5], seed=9)
    per_a = dict(zip([3, 7], np.split(a.layers[0], np.cumsum([5])[:1])))
    per_b = dict(zip([7, 3], np.split(b.layers[0], np.cumsum([5])[:1])))
    assert sorted(per_a[3].tolist()) == sorted(per_b[3].tolist())


def test_stream_key_broadcast():
    k = stream_key(1, 2, np.arange(4))
    assert k.shape == (4,) and len(set(k.tolist())) == 4


def test_stream_single_batch():
    g = generate_graph(10, 2, "uniform-random", 0)
    plans = list(minibatch_stream(g, 10, [2], epoch_seed=1))
    assert len(plans) == 1
    assert sorted(plans[0].seeds.tolist()) == list(range(10))


def test_stream_batch_sizes():
    g = generate_graph(10, 2, "uniform-random", 0)
    sizes = [len(p.seeds) for p in minibatch_stream(g, 3, [2], epoch_seed=1)]
    assert sizes == [3, 3, 3, 1]


def test_unique_growth_capped():
    g = generate_graph(1000, 10, "uniform-random", 4)
    plans = list(minibatch_stream(g, 100, [10, 25], epoch_seed=5))
    mean_unique = np.mean([len(p.unique_nodes) for p in plans])
    assert 100 < mean_unique <= 1000
    fanout_growth = np.mean([len(p.unique_nodes) for p in minibatch_stream(g, 100, [10], 5)])
    assert mean_unique > fanout_growth


def test_plan_json_shape():
    p = sample_layers(star(), [0], [2], seed=0, row_bytes=16)
    d = p.to_json()
    assert set(d) == {"seeds", "layers", "unique", "bytes"}
    assert d["bytes"] == 16 * len(d["unique"])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 60), st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_unique_contains_seeds_no_duplicates(n, deg, seed):
    deg = min(deg, n - 1)
    g = generate_graph(n, deg, "uniform-random", seed % 1000)
    seeds = np.random.default_rng(seed).integers(0, n, 5)
    p = sample_layers(g, seeds, [3, 2], seed=seed)
    u = p.unique_nodes.tolist()
    assert len(u) == len(set(u))
    assert set(seeds.tolist()) <= set(u)

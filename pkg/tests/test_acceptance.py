"""Acceptance criteria 1-10, each timed against its runtime budget.

Run under pytest (one test per criterion, summary printed at the end) or
directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent))

from gcsim import fixture_path  # noqa: E402
from gcsim.config import load_config  # noqa: E402
from gcsim.gather import (  # noqa: E402
    apply_circular_shift,
    coalesce_trace,
    gather_trace,
    plan_offsets,
    reference_gather,
)
from gcsim.graph import FeatureTable, attach_features, generate_graph  # noqa: E402
from gcsim.link import GpuSpec, LinkParams, outstanding_requests_needed, provisioning_bounds  # noqa: E402
from gcsim.pipeline import (  # noqa: E402
    PipelineConfig,
    Strategy,
    TrainTimeModel,
    alignment_sweep,
    build_workload,
    compare_strategies,
    feature_dim_sweep,
    resource_sweep,
    simulate_workload,
    speedup_of,
)
from gcsim.sampler import minibatch_stream, sample_layers  # noqa: E402
from oracles import brute_requests, kernel_offsets, scalar_gather, sector_oracle  # noqa: E402

RESULTS: dict = {}
TOL = 1e-9


def summary_lines():
    return [RESULTS[k] for k in sorted(RESULTS)]


def criterion(number: int, name: str, budget: float):
    """Time the check, record a PASS/FAIL line, re-raise failures."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*a, **kw):
            t0 = time.perf_counter()
            detail, err = "", None
            try:
                detail = fn(*a, **kw) or ""
            except AssertionError as e:
                err = e
                detail = str(e).splitlines()[0] if str(e) else "assertion failed"
            dt = time.perf_counter() - t0
            ok = err is None and dt < budget
            if err is None and not ok:
                detail = f"over budget ({dt:.1f}s >= {budget:g}s); " + detail
            RESULTS[number] = (f"[{'PASS' if ok else 'FAIL'}] {number:2d} {name}: {detail} "
                               f"({dt:.2f}s / {budget:g}s)")
            if err is not None:
                raise err
            assert ok, RESULTS[number]
        return run
    return wrap


@functools.lru_cache(maxsize=None)
def calibrated():
    cfg = load_config(fixture_path())
    graph = cfg.build_graph()
    table = cfg.build_table(graph)
    p = cfg.pipeline
    wl = build_workload(graph, table, p.fanouts, p.batch_size, cfg.seed, p.replace,
                        p.trace_elements, p.gpu.warp_size)
    return cfg, graph, table, wl


# -- 1 -------------------------------------------------------------------

@criterion(1, "circular shift on a 480 B row", 1.0)
def test_criterion_1_shift_request_reduction():
    table = attach_features(2, 120, 4, 0)
    plain = len(gather_trace([1], table, shift=False))
    shifted = len(gather_trace([1], table, shift=True))
    assert (plain, shifted) == (8, 5), f"unshifted {plain}, shifted {shifted}"
    return f"unshifted {plain}, shifted {shifted} requests"


# -- 2 -------------------------------------------------------------------

@criterion(2, "coalescer vs sector-enumeration oracle", 30.0)
def test_criterion_2_coalescing_oracle(cases=10_000):
    rng = np.random.default_rng(2)
    for case in range(cases):
        dim = int(rng.integers(1, 1201))
        off = int(rng.integers(0, 128))
        idx = rng.integers(0, 300, int(rng.integers(0, 65)))
        pairs = plan_offsets(idx, dim)
        if rng.random() < 0.5:
            pairs = apply_circular_shift(pairs)
        got = coalesce_trace(pairs, 4, off)
        w, a, p = sector_oracle(pairs.src, 4, off)
        assert (np.array_equal(got.warp_id, w) and np.array_equal(got.addresses, a)
                and np.array_equal(got.payloads, p)), \
            f"case {case}: dim={dim} base_offset={off} len={len(idx)}"
    # the vectorized oracle itself against per-byte marking on small cases
    for case in range(200):
        dim = int(rng.integers(1, 200))
        off = int(rng.integers(0, 128))
        idx = rng.integers(0, 20, int(rng.integers(0, 6))).tolist()
        src = [s for _, s in kernel_offsets(idx, dim, shift=bool(case % 2))]
        w, a, p = sector_oracle(np.array(src, dtype=np.int64), 4, off)
        assert list(zip(w.tolist(), a.tolist(), p.tolist())) == brute_requests(src, 4, off)
    return f"{cases} random cases identical"


# -- 3 -------------------------------------------------------------------

@criterion(3, "gather invariance under the shift", 30.0)
def test_criterion_3_gather_invariance(cases=10_000):
    rng = np.random.default_rng(3)
    identity = 0
    for case in range(cases):
        dim = int(rng.integers(1, 1201)) if case % 4 else int(32 * rng.integers(1, 20))
        rows = int(rng.integers(1, 200))
        idx = rng.integers(0, rows, int(rng.integers(0, 65)))
        table = attach_features(rows, dim, 4, fill="random", seed=case)
        plain = plan_offsets(idx, dim, table=table)
        shifted = apply_circular_shift(plain)
        assert np.array_equal(reference_gather(table, plain), reference_gather(table, shifted)), \
            f"case {case}: dim={dim}"
        if dim <= 32 or dim % 32 == 0:
            identity += 1
            assert np.array_equal(plain.dst, shifted.dst) and np.array_equal(plain.src, shifted.src)
        if case < 100:
            ref = scalar_gather(table.data, dim, kernel_offsets(idx.tolist(), dim))
            assert np.array_equal(reference_gather(table, shifted), np.array(ref, dtype=table.data.dtype))
    return f"{cases} cases element-identical, {identity} identity cases"


# -- 4 -------------------------------------------------------------------

@criterion(4, "provisioning arithmetic", 1.0)
def test_criterion_4_provisioning():
    link, gpu = LinkParams(), GpuSpec()
    b = provisioning_bounds(gpu, link)
    n = outstanding_requests_needed(link.wire_bandwidth, link.rtt, 128)
    assert b.sms_upper == 16 and abs(b.upper_fraction - 16 / 82) < 1e-12
    assert abs(b.upper_fraction - 0.195) <= 0.001, b.upper_fraction
    assert abs(b.lower_fraction - 0.082) <= 0.002, b.lower_fraction
    assert abs(n - 324.6) <= 0.5, n
    return f"upper {b.upper_fraction:.4f}, lower {b.lower_fraction:.4f}, outstanding {n:.2f}"


# -- 5 -------------------------------------------------------------------

@criterion(5, "alignment sweep 1024-1044 B", 10.0)
def test_criterion_5_alignment_sweep():
    rows = alignment_sweep(list(range(1024, 1045, 4)))
    for r in rows:
        u, s = r["unshifted_efficiency"], r["shifted_efficiency"]
        assert s >= u - TOL, f"{r['feat_bytes']} B: shifted {s:.3f} < unshifted {u:.3f}"
        if r["feat_bytes"] == 1024:
            assert abs(s - u) < TOL, "1024 B should not change"
        else:
            assert 0.70 <= u <= 0.87, f"{r['feat_bytes']} B unshifted {u:.3f}"
            assert 0.85 <= s <= 0.95, f"{r['feat_bytes']} B shifted {s:.3f}"
    mis = rows[1:]
    return (f"unshifted {min(r['unshifted_efficiency'] for r in mis):.3f}-"
            f"{max(r['unshifted_efficiency'] for r in mis):.3f}, shifted "
            f"{min(r['shifted_efficiency'] for r in mis):.3f}-"
            f"{max(r['shifted_efficiency'] for r in mis):.3f}, 1024 B "
            f"{rows[0]['shifted_efficiency']:.3f}")


# -- 6 -------------------------------------------------------------------

@criterion(6, "resource sweep on the calibrated fixture", 30.0)
def test_criterion_6_resource_sweep():
    cfg, graph, table, wl = calibrated()
    xs = [0.025, 0.05, 0.10, 0.15, 0.20, 0.25]
    rows = resource_sweep(graph, table, cfg.pipeline, xs, cfg.seed, wl)
    bw = {r["X"]: r["gather_bandwidth"] for r in rows}
    ratio_low = bw[0.025] / bw[0.25]
    diff_mid = abs(bw[0.15] - bw[0.25]) / bw[0.25]
    best = min(rows, key=lambda r: r["epoch_time"])["X"]
    assert ratio_low < 0.45, f"bw(0.025)/bw(0.25) = {ratio_low:.3f}"
    assert diff_mid < 0.05, f"bw(0.15) vs bw(0.25) differ {diff_mid:.3f}"
    assert best == 0.10, f"argmin X = {best}"
    return f"bw ratio {ratio_low:.3f}, mid diff {diff_mid:.3f}, argmin X={best}"


# -- 7 -------------------------------------------------------------------

@criterion(7, "strategy comparison ratios", 120.0)
def test_criterion_7_strategy_ratios():
    cfg, graph, table, wl = calibrated()
    rows = compare_strategies(graph, table, cfg.pipeline, ["dma", "zero-copy-naive",
                                                           "zero-copy-opt"], [1, 2], cfg.seed, wl)
    r1 = speedup_of(rows, "zero-copy-opt", 1)
    r2 = speedup_of(rows, "zero-copy-opt", 2, over_gpus=2)
    scale = speedup_of(rows, "dma", 2)
    naive = speedup_of(rows, "zero-copy-naive", 1)
    msg = f"1-GPU {r1:.3f}, 2-GPU {r2:.3f}, dma scaling {scale:.3f}, naive/dma {naive:.3f}"
    assert 1.10 <= r1 <= 1.55, msg
    assert 1.50 <= r2 <= 2.10, msg
    assert 1.10 <= scale <= 1.40, msg
    assert naive <= 1.0, msg
    return msg


# -- 8 -------------------------------------------------------------------

@criterion(8, "feature-dim sweep", 60.0)
def test_criterion_8_feature_dim_sweep():
    cfg, graph, table, wl = calibrated()
    dims = [128, 256, 512, 1024, 2048, 4096]
    rows = feature_dim_sweep(graph, table, cfg.pipeline.with_(num_gpus=2), dims, cfg.seed, wl)
    sp = [r["speedup"] for r in rows]
    text = ", ".join(f"{d}:{s:.2f}" for d, s in zip(dims, sp))
    assert all(b >= a - TOL for a, b in zip(sp, sp[1:])), f"not monotone: {text}"
    assert 2.2 <= sp[-1] <= 3.2, f"4096 speedup {sp[-1]:.3f}"
    return text


# -- 9 -------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _graph(gid: int):
    return generate_graph(600 + 300 * gid, 4 + gid, "power-law" if gid % 2 else "uniform-random",
                          seed=gid)


@functools.lru_cache(maxsize=None)
def _workload(gid: int, feat_dim: int, batch: int):
    g = _graph(gid)
    return build_workload(g, FeatureTable(g.num_nodes, feat_dim), (4, 8), batch, seed=gid,
                          trace_elements=1 << 16)


pipeline_configs = st.builds(
    lambda strategy, g, x, depth, base, per_node, scaling: PipelineConfig(
        strategy=strategy, num_gpus=g, resource_fraction=x, pingpong_depth=depth,
        train=TrainTimeModel(base=base), sampler_time_per_node=per_node, scaling=scaling),
    st.sampled_from(list(Strategy)), st.integers(1, 4), st.sampled_from([0.025, 0.1, 0.2, 0.4]),
    st.integers(1, 4), st.floats(1e-5, 2e-3), st.floats(0.0, 2e-7),
    st.sampled_from(["strong", "weak"]))
workload_keys = st.tuples(st.integers(0, 3), st.sampled_from([16, 100, 128, 315]),
                          st.sampled_from([64, 200]))
PROPS = settings(max_examples=100, deadline=None, derandomize=True,
                 suppress_health_check=list(HealthCheck))


def _producer_iv(r):
    return min(r["gather"][0], r["transfer"][0]), max(r["gather"][1], r["transfer"][1])


@PROPS
@given(pipeline_configs, st.integers(0, 3))
def _prop_determinism(cfg, gid):
    g = _graph(gid)
    t = FeatureTable(g.num_nodes, 64)
    a = build_workload(g, t, (3, 5), 128, seed=gid, trace_elements=1 << 14)
    b = build_workload(g, t, (3, 5), 128, seed=gid, trace_elements=1 << 14)
    assert simulate_workload(a, cfg).to_json() == simulate_workload(b, cfg).to_json()


@PROPS
@given(pipeline_configs, workload_keys)
def _prop_causality(cfg, key):
    rep = simulate_workload(_workload(*key), cfg)
    last_train = {}
    for r in rep.per_minibatch:
        p0, p1 = _producer_iv(r)
        assert r["sample"][0] <= r["sample"][1] <= p0 + TOL
        assert p1 <= r["train"][0] + TOL
        assert r["train"][1] - r["train"][0] >= r["train_t"] - TOL
        prev = last_train.get(r["gpu"])
        if prev is not None:
            assert prev <= r["train"][0] + TOL
        last_train[r["gpu"]] = r["train"][1]


@PROPS
@given(pipeline_configs, workload_keys)
def _prop_depth_bound(cfg, key):
    rep = simulate_workload(_workload(*key), cfg)
    by_gpu = {}
    for r in rep.per_minibatch:
        by_gpu.setdefault(r["gpu"], []).append(r)
    for rows in by_gpu.values():
        # buffers held from producer start until consumer end
        ev = sorted([(_producer_iv(r)[0], 1) for r in rows] + [(r["train"][1], 0) for r in rows])
        held = peak = 0
        for t, kind in ev:
            held += 1 if kind else -1
            peak = max(peak, held)
        assert peak <= cfg.pingpong_depth


@PROPS
@given(pipeline_configs, workload_keys, st.sampled_from([Strategy.ZERO_COPY_NAIVE, Strategy.UVM]))
def _prop_serialization(cfg, key, strategy):
    rep = simulate_workload(_workload(*key), cfg.with_(strategy=strategy))
    by_gpu = {}
    for r in rep.per_minibatch:
        by_gpu.setdefault(r["gpu"], []).extend([_producer_iv(r), r["train"]])
    for iv in by_gpu.values():
        iv.sort()
        assert all(iv[i][1] <= iv[i + 1][0] + TOL for i in range(len(iv) - 1))


@PROPS
@given(pipeline_configs, workload_keys)
def _prop_contention(cfg, key):
    rep = simulate_workload(_workload(*key), cfg)
    assert rep.peak_link_rate() <= cfg.aggregate_link_cap * (1 + 1e-9)
    share = cfg.link_share()
    for g in range(cfg.num_gpus):
        assert all(rate <= share * (1 + 1e-9) for _, _, rate, gpu in rep.link_usage if gpu == g)


# dominance holds for the shipped operating point (X = 0.10 under the
# saturating train law) and rows of at least 384 B; below that the
# shifted stream at X = 0.10 is latency-bound and full-GPU naive wins
@PROPS
@given(st.integers(1, 4), st.integers(1, 4), st.floats(1e-5, 2e-3), st.floats(0.0, 2e-7),
       st.integers(0, 3), st.sampled_from([96, 128, 200, 315, 512]), st.sampled_from([64, 200]))
def _prop_dominance(num_gpus, depth, base, per_node, gid, feat_dim, batch):
    cfg = PipelineConfig(num_gpus=num_gpus, pingpong_depth=depth, resource_fraction=0.10,
                         train=TrainTimeModel(base=base, scaling="saturating"),
                         sampler_time_per_node=per_node)
    wl = _workload(gid, feat_dim, batch)
    e = {s: simulate_workload(wl, cfg.with_(strategy=s)).epoch_time
         for s in (Strategy.ALL_IN_GPU, Strategy.ZERO_COPY_OPT, Strategy.ZERO_COPY_NAIVE)}
    assert e[Strategy.ALL_IN_GPU] <= e[Strategy.ZERO_COPY_OPT] * (1 + 1e-9)
    assert e[Strategy.ZERO_COPY_OPT] <= e[Strategy.ZERO_COPY_NAIVE] * (1 + 1e-9)


PIPELINE_PROPERTIES = {
    "determinism": _prop_determinism,
    "causality": _prop_causality,
    "depth bound": _prop_depth_bound,
    "serialization": _prop_serialization,
    "contention": _prop_contention,
    "dominance": _prop_dominance,
}


@criterion(9, "pipeline invariant suite", 120.0)
def test_criterion_9_pipeline_invariants():
    for name, prop in PIPELINE_PROPERTIES.items():
        try:
            prop()
        except AssertionError as e:
            raise AssertionError(f"{name}: {e}") from e
    return f"{len(PIPELINE_PROPERTIES)} properties x 100 configs"


# -- 10 ------------------------------------------------------------------

graphs = st.builds(lambda n, d, model, seed: generate_graph(n, min(d, n - 1), model, seed),
                   st.integers(1, 400), st.integers(0, 12),
                   st.sampled_from(["uniform-random", "power-law"]), st.integers(0, 10_000))
fanout_lists = st.lists(st.integers(0, 12), min_size=1, max_size=3)


@settings(max_examples=150, deadline=None, suppress_health_check=list(HealthCheck))
@given(graphs, fanout_lists, st.integers(0, 2**31), st.data())
def _prop_membership_and_cardinality(graph, fanouts, seed, data):
    seeds = data.draw(st.lists(st.integers(0, graph.num_nodes - 1), min_size=1, max_size=40))
    plan = sample_layers(graph, seeds, fanouts, seed)
    ro, ci = graph.row_offsets, graph.col_indices
    for f, frontier, layer in zip(fanouts, plan.frontiers, plan.layers):
        pos = 0
        for u in frontier.tolist():
            nbrs = ci[ro[u]:ro[u + 1]]
            k = min(len(nbrs), f)
            got = layer[pos:pos + k]
            pos += k
            # distinct neighbour slots: a sub-multiset of the adjacency
            have, cnt = np.unique(nbrs, return_counts=True)
            g_have, g_cnt = np.unique(got, return_counts=True)
            assert np.all(np.isin(g_have, have))
            assert np.all(g_cnt <= cnt[np.searchsorted(have, g_have)])
        assert pos == len(layer)
    for a, b in zip(plan.layers, plan.frontiers[1:]):
        assert set(b.tolist()) >= set(a.tolist())
    assert set(plan.unique_nodes.tolist()) == set(seeds) | {v for la in plan.layers for v in la.tolist()}


@settings(max_examples=100, deadline=None, suppress_health_check=list(HealthCheck))
@given(graphs, st.integers(1, 64), fanout_lists, st.integers(0, 2**31))
def _prop_coverage_and_determinism(graph, batch, fanouts, seed):
    plans = list(minibatch_stream(graph, batch, fanouts, seed))
    seen = np.concatenate([p.seeds for p in plans]) if plans else np.zeros(0, dtype=np.int64)
    assert sorted(seen.tolist()) == list(range(graph.num_nodes))
    again = list(minibatch_stream(graph, batch, fanouts, seed))
    assert len(again) == len(plans) and all(a == b for a, b in zip(plans, again))


@criterion(10, "sampler suite", 30.0)
def test_criterion_10_sampler():
    _prop_membership_and_cardinality()
    _prop_coverage_and_determinism()
    return "membership, cardinality, coverage, determinism over random graphs"


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
    for line in summary_lines():
        print(line)
    sys.exit(0 if all(line.startswith("[PASS]") for line in summary_lines()) else 1)

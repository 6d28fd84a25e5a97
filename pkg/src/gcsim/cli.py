"""``gcsim`` command-line entry point."""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import config as cfgmod
from .errors import CapacityError, ConfigError, GcsimError, InputDataError, SimulationError
from .gather import gather_trace
from .graph import attach_features, generate_graph, write_csr_binary, write_edge_list
from .link import provisioning_bounds
from .pipeline import (
    Strategy,
    alignment_sweep,
    build_workload,
    compare_strategies,
    feature_dim_sweep,
    resource_sweep,
    simulate_workload,
)
from .pipeline.simulate import check_device_fit
from .sampler import minibatch_stream

EXIT_OK, EXIT_CONFIG, EXIT_INPUT, EXIT_SIM = 0, 1, 2, 3


def _emit(text: str, out: Optional[str]) -> None:
    if not text.endswith("\n"):
        text += "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, (tuple, np.ndarray)):
        return list(o)
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"not serializable: {type(o).__name__}")


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _table(header, rows) -> str:
    cells = [[str(h) for h in header]] + [[_fmt(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) if j else c.ljust(w) for j, (c, w) in enumerate(zip(r, widths)))
             for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _fmt(c) -> str:
    if c is None:
        return "-"
    if isinstance(c, float):
        return f"{c:.6g}"
    return str(c)


def _load(args) -> cfgmod.ExperimentConfig:
    cfg = cfgmod.load_config(getattr(args, "config", None))
    return cfgmod.resolve_seed(cfg, getattr(args, "seed", None))


def _apply_pipeline_flags(cfg, args):
    kw = {}
    if getattr(args, "strategy", None):
        kw["strategy"] = Strategy(args.strategy)
    if getattr(args, "num_gpus", None):
        kw["num_gpus"] = args.num_gpus
    if getattr(args, "resource_fraction", None) is not None:
        kw["resource_fraction"] = args.resource_fraction
    return cfgmod.with_pipeline(cfg, **kw) if kw else cfg


# -- subcommands ---------------------------------------------------------

def cmd_gen(args) -> int:
    cfg = _load(args)
    g = cfg.graph
    n = args.nodes if args.nodes is not None else (100_000 if g.num_nodes is None else g.num_nodes)
    d = args.degree if args.degree is not None else g.avg_degree
    model = args.model or g.model
    seed = args.seed if args.seed is not None else g.seed
    graph = generate_graph(n, d, model, seed)
    if args.out is None:
        buf = io.StringIO()
        buf.write(f"# nodes {graph.num_nodes}\n")
        for u, v in graph.edges():
            buf.write(f"{u} {v}\n")
        sys.stdout.write(buf.getvalue())
        return EXIT_OK
    out = Path(args.out)
    fd, tmp = tempfile.mkstemp(dir=out.parent if str(out.parent) else ".", suffix=".tmp")
    os.close(fd)
    try:
        if args.binary:
            write_csr_binary(graph, tmp)
        else:
            write_edge_list(graph, tmp)
        os.replace(tmp, out)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load(args)
    p = cfg.pipeline
    fanouts = tuple(args.fanouts) if args.fanouts is not None else p.fanouts
    batch = args.batch_size or p.batch_size
    graph = cfg.build_graph()
    row_bytes = cfg.features.feat_dim * cfg.features.elem_size
    lines = []
    for k, plan in enumerate(minibatch_stream(graph, batch, fanouts, cfg.seed, row_bytes,
                                              p.replace)):
        if args.limit is not None and k >= args.limit:
            break
        lines.append(json.dumps(plan.to_json(), separators=(",", ":")))
    _emit("\n".join(lines), args.out)
    return EXIT_OK


def _read_idx(args) -> List[int]:
    if args.idx_file:
        try:
            text = Path(args.idx_file).read_text()
        except OSError as e:
            raise InputDataError(f"cannot read {args.idx_file}: {e}") from None
    else:
        text = args.idx or ""
    out = []
    for tok in text.replace(",", " ").split():
        try:
            out.append(int(tok))
        except ValueError:
            raise InputDataError(f"bad index {tok!r}") from None
    return out


def cmd_trace(args) -> int:
    if args.feat_dim is None and args.feat_bytes is None:
        raise ConfigError("trace needs --feat-dim or --feat-bytes")
    es = args.elem_size
    if args.feat_bytes is not None:
        if args.feat_bytes % es:
            raise ConfigError(f"--feat-bytes {args.feat_bytes} is not a multiple of {es}")
        dim = args.feat_bytes // es
    else:
        dim = args.feat_dim
    idx = _read_idx(args)
    rows = args.num_rows if args.num_rows is not None else (max(idx) + 1 if idx else 1)
    table = attach_features(rows, dim, es, args.base_offset)
    trace = gather_trace(idx, table, shift=args.shift, split=args.split)
    doc = trace.to_json()
    if args.format == "json":
        doc["config"] = {"feat_dim": dim, "elem_size": es, "base_offset": args.base_offset,
                         "shift": args.shift, "split": args.split, "idx": idx}
        _emit(_dumps(doc), args.out)
    elif args.format == "csv":
        _emit(_csv(["addr", "payload"], [(r["addr"], r["payload"]) for r in doc["requests"]]),
              args.out)
    else:
        body = _table(["payload", "count"], sorted((int(k), v) for k, v in doc["histogram"].items()))
        body += f"requests {len(trace)}  useful {trace.total_useful}  payload {trace.total_payload}\n"
        _emit(body, args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    cfg = _load(args)
    link, gpu = cfg.pipeline.link, cfg.pipeline.gpu
    target = args.target_bandwidth
    target = cfgmod.parse_bandwidth(target) if target is not None else None
    b = provisioning_bounds(gpu, link, target)
    doc = {"upper_fraction": b.upper_fraction, "lower_fraction": b.lower_fraction,
           "sms_upper": b.sms_upper, "outstanding_needed": b.outstanding_needed,
           "target_attainable": b.target_attainable, "warps_per_sm": gpu.warps_per_sm, "config": cfg.to_dict()}
    if args.format == "json":
        _emit(_dumps(doc), args.out)
    elif args.format == "csv":
        _emit(_csv(["upper_fraction", "lower_fraction", "sms_upper", "outstanding_needed"],
                   [(b.upper_fraction, b.lower_fraction, b.sms_upper, b.outstanding_needed)]),
              args.out)
    else:
        rows = [
            ("upper (outstanding-read cap)", f"{b.upper_fraction * 100:.1f}%",
             f"{b.sms_upper}/{gpu.num_sms} SMs"),
            ("lower (bandwidth x rtt)", f"{b.lower_fraction * 100:.1f}%",
             f"{b.outstanding_needed:.1f} outstanding"),
        ]
        _emit(_table(["bound", "fraction", "basis"], rows), args.out)
    return EXIT_OK


def _prepare(cfg):
    graph = cfg.build_graph()
    table = cfg.build_table(graph)
    p = cfg.pipeline
    wl = build_workload(graph, table, p.fanouts, p.batch_size, cfg.seed, p.replace,
                        p.trace_elements, p.gpu.warp_size)
    return graph, table, wl


def cmd_simulate(args) -> int:
    cfg = _apply_pipeline_flags(_load(args), args)
    graph, table, wl = _prepare(cfg)
    try:
        if cfg.pipeline.strategy is Strategy.ALL_IN_GPU:
            check_device_fit(table, cfg.pipeline)
        rep = simulate_workload(wl, cfg.pipeline)
    except CapacityError as e:
        if args.strict:
            raise SimulationError(f"out of memory: {e}") from None
        doc = {"strategy": cfg.pipeline.strategy.value, "status": "OOM",
               "epoch_time": None, "config": cfg.to_dict()}
        _emit(_dumps(doc) if args.format == "json" else "status OOM\n", args.out)
        return EXIT_OK
    if args.format == "json":
        doc = rep.to_dict()
        doc["status"] = "ok"
        doc["config"] = cfg.to_dict()
        _emit(_dumps(doc), args.out)
    elif args.format == "csv":
        _emit(_csv(["gpu", "minibatch", "stage", "start_us", "end_us"],
                   [(g, m, s, f"{a:.3f}", f"{b:.3f}") for g, m, s, a, b in rep.timeline_rows()]),
              args.out)
    else:
        s = rep.summary()
        _emit(_table(["field", "value"], list(s.items())), args.out)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    graph, table, wl = _prepare(cfg)
    strategies = args.strategies.split(",") if args.strategies else cfg.compare_strategies
    gpus = [int(x) for x in args.gpus.split(",")] if args.gpus else cfg.compare_gpus
    try:
        strategies = [Strategy(s).value for s in strategies]
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rows = compare_strategies(graph, table, cfg.pipeline, strategies, gpus, cfg.seed, wl)
    if args.strict and any(r.status != "ok" for r in rows):
        raise SimulationError("a strategy ran out of device memory")
    header = ["strategy", "num_gpus", "status", "epoch_time", "speedup"]
    data = [(r.strategy, r.num_gpus, r.status, r.epoch_time, r.speedup) for r in rows]
    if args.format == "json":
        _emit(_dumps({"baseline": "dma x1", "rows": [r.to_dict() for r in rows],
                      "config": cfg.to_dict()}), args.out)
    elif args.format == "csv":
        _emit(_csv(header, data), args.out)
    else:
        _emit(_table(header, data), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _apply_pipeline_flags(_load(args), args)
    p = cfg.pipeline
    if args.kind == "alignment":
        rows = alignment_sweep(cfg.sweep_feature_bytes, cfg.features.elem_size,
                               seed=cfg.seed, link=p.link, gpu=p.gpu)
    else:
        graph, table, wl = _prepare(cfg)
        if args.kind == "resource":
            rows = resource_sweep(graph, table, p, cfg.sweep_x, cfg.seed, wl)
        else:
            rows = feature_dim_sweep(graph, table, p, cfg.sweep_dims, cfg.seed, wl)
    header = list(rows[0].keys()) if rows else []
    if args.format == "json":
        _emit(_dumps({"kind": args.kind, "rows": rows, "config": cfg.to_dict()}), args.out)
    elif args.format == "csv":
        _emit(_csv(header, [[r[h] for h in header] for r in rows]), args.out)
    else:
        _emit(_table(header, [[r[h] for h in header] for r in rows]), args.out)
    return EXIT_OK


# -- parser --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not input-data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="gcsim", description=(
        "Sampling, gather-coalescing and pipeline simulation for minibatch GCN data movement."))
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, fmt="table"):
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, help="overrides $GCS_SEED and the config file")
        p.add_argument("--out", help="output path (written atomically); default stdout")
        p.add_argument("--format", choices=("json", "csv", "table"), default=fmt)

    p = sub.add_parser("gen", help="generate a synthetic graph")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--nodes", type=int)
    p.add_argument("--degree", type=int)
    p.add_argument("--model", choices=("uniform-random", "power-law"))
    p.add_argument("--binary", action="store_true", help="write binary CSR instead of an edge list")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("sample", help="emit minibatch plans as JSON lines")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--fanouts", type=int, nargs="*")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--limit", type=int, help="stop after this many minibatches")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("trace", help="coalesce one gather into read requests")
    p.add_argument("--out")
    p.add_argument("--format", choices=("json", "csv", "table"), default="json")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--feat-bytes", type=int)
    g.add_argument("--feat-dim", type=int)
    p.add_argument("--elem-size", type=int, default=4)
    p.add_argument("--base-offset", type=int, default=0)
    p.add_argument("--num-rows", type=int, help="table rows (default: max index + 1)")
    ig = p.add_mutually_exclusive_group()
    ig.add_argument("--idx", help="comma- or space-separated row indices")
    ig.add_argument("--idx-file")
    p.add_argument("--shift", dest="shift", action="store_true", default=True)
    p.add_argument("--no-shift", dest="shift", action="store_false")
    p.add_argument("--split", choices=("line", "runs"), default="line")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("bounds", help="GPU share needed by the zero-copy kernel")
    common(p)
    p.add_argument("--target-bandwidth", help="e.g. '20 GB/s' (default: wire bandwidth)")
    p.set_defaults(func=cmd_bounds)

    def pipe_flags(p):
        p.add_argument("--strategy", choices=[s.value for s in Strategy])
        p.add_argument("--num-gpus", type=int)
        p.add_argument("--resource-fraction", type=float)
        p.add_argument("--strict", action="store_true", help="treat OOM as a failure (exit 3)")

    p = sub.add_parser("simulate", help="simulate one epoch of one strategy")
    common(p, fmt="json")
    pipe_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="strategy x GPU-count comparison")
    common(p)
    p.add_argument("--strategies", help="comma-separated strategy names")
    p.add_argument("--gpus", help="comma-separated GPU counts")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="resource, feature-dim or alignment sweep")
    common(p)
    p.add_argument("kind", choices=("resource", "feature-dim", "alignment"))
    pipe_flags(p)
    p.set_defaults(func=cmd_sweep)
    return ap


def run(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except SimulationError as e:
        print(f"gcsim: simulation error: {e}", file=sys.stderr)
        return EXIT_SIM
    except CapacityError as e:
        print(f"gcsim: out of memory: {e}", file=sys.stderr)
        return EXIT_SIM
    except InputDataError as e:
        print(f"gcsim: input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, GcsimError) as e:
        print(f"gcsim: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

"""Experiment configuration files.

Sectioned key-value text (INI). Every key has a default, so an empty file
resolves to the calibrated desk-scale setup; unknown sections or keys are
rejected. Quantities accept unit suffixes:

- bytes: ``B``, ``KiB``, ``MiB``, ``GiB``
- bandwidth: ``B/s``, ``MB/s``, ``GB/s``, ``MiB/s``, ``GiB/s``. ``GB`` in a
  bandwidth means 2**30 bytes, the convention under which the quoted
  25.8 GB/s reproduces the outstanding-request arithmetic
- time: ``ns``, ``us``, ``µs``, ``ms``, ``s``
- ratios: plain numbers or percentages (``10%``)
"""

from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Optional, Tuple

from .errors import ConfigError, GcsimError
from .graph import CsrGraph, FeatureTable, attach_features, generate_graph, load_csr_binary, load_edge_list
from .link import OUTSTANDING_READS, GiB, GpuSpec, KiB, LinkParams, MiB
from .pipeline.config import PipelineConfig, Strategy, TrainTimeModel

SEED_ENV = "GCS_SEED"

_BYTE_UNITS = {"": 1, "b": 1, "kib": KiB, "mib": MiB, "gib": GiB}
_BW_UNITS = {"": 1.0, "b/s": 1.0, "mib/s": MiB, "gib/s": GiB, "mb/s": MiB, "gb/s": GiB}
# divisors, so "10 us" parses to exactly 1e-05
_TIME_UNITS = {"": 1.0, "s": 1.0, "ms": 1e3, "us": 1e6, "µs": 1e6, "ns": 1e9}
_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*(\S*)\s*$")


def _split(text: str, key: str) -> Tuple[float, str]:
    m = _NUM.match(text)
    if not m:
        raise ConfigError(f"{key}: cannot parse quantity {text!r}")
    return float(m.group(1)), m.group(2).lower()


def parse_bytes(text, key="bytes") -> int:
    if isinstance(text, (int, float)):
        return int(text)
    v, unit = _split(text, key)
    if unit not in _BYTE_UNITS:
        raise ConfigError(f"{key}: unknown byte unit {unit!r}")
    return int(round(v * _BYTE_UNITS[unit]))


def parse_bandwidth(text, key="bandwidth") -> float:
    if isinstance(text, (int, float)):
        return float(text)
    v, unit = _split(text, key)
    if unit not in _BW_UNITS:
        raise ConfigError(f"{key}: unknown bandwidth unit {unit!r}")
    return v * _BW_UNITS[unit]


def parse_time(text, key="time") -> float:
    if isinstance(text, (int, float)):
        return float(text)
    v, unit = _split(text, key)
    if unit not in _TIME_UNITS:
        raise ConfigError(f"{key}: unknown time unit {unit!r}")
    return v / _TIME_UNITS[unit]


def parse_ratio(text, key="ratio") -> float:
    if isinstance(text, (int, float)):
        return float(text)
    v, unit = _split(text, key)
    if unit == "%":
        return v / 100.0
    if unit:
        raise ConfigError(f"{key}: unknown ratio unit {unit!r}")
    return v


def _int(text, key):
    try:
        return int(str(text).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _float(text, key):
    try:
        return float(str(text).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _bool(text, key):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _list(text, conv, key):
    parts = [p for p in re.split(r"[,\s]+", str(text).strip()) if p]
    return tuple(conv(p, key) for p in parts)


@dataclass(frozen=True)
class GraphSpec:
    source: str = "generate"
    path: Optional[str] = None
    # None: 100000 when generating, inferred from the file otherwise
    num_nodes: Optional[int] = None
    avg_degree: int = 15
    model: str = "power-law"
    seed: int = 1

    def build(self) -> CsrGraph:
        if self.source == "generate":
            n = 100_000 if self.num_nodes is None else self.num_nodes
            return generate_graph(n, self.avg_degree, self.model, self.seed)
        if self.path is None:
            raise ConfigError(f"graph source {self.source!r} needs a path")
        if self.source == "edge-list":
            return load_edge_list(self.path, self.num_nodes)
        if self.source == "csr":
            return load_csr_binary(self.path)
        raise ConfigError(f"unknown graph source {self.source!r}")


@dataclass(frozen=True)
class FeatureSpec:
    feat_dim: int = 315
    elem_size: int = 4
    base_offset: int = 0
    placement: str = "host-shared"

    def build(self, num_nodes: int, device_capacity: int) -> FeatureTable:
        return attach_features(num_nodes, self.feat_dim, self.elem_size, self.base_offset,
                               self.placement, "none", device_capacity=device_capacity)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 7
    graph: GraphSpec = field(default_factory=GraphSpec)
    features: FeatureSpec = field(default_factory=FeatureSpec)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    compare_strategies: Tuple[str, ...] = tuple(s.value for s in Strategy)
    compare_gpus: Tuple[int, ...] = (1, 2)
    sweep_x: Tuple[float, ...] = (0.025, 0.05, 0.10, 0.15, 0.20, 0.25)
    sweep_dims: Tuple[int, ...] = (128, 256, 512, 1024, 2048, 4096)
    sweep_feature_bytes: Tuple[int, ...] = tuple(range(1024, 1045, 4))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "graph": _plain(self.graph),
            "features": _plain(self.features),
            "pipeline": self.pipeline.to_dict(),
            "compare": {"strategies": list(self.compare_strategies),
                        "num_gpus": list(self.compare_gpus)},
            "sweep": {"x_values": list(self.sweep_x), "dims": list(self.sweep_dims),
                      "feature_bytes": list(self.sweep_feature_bytes)},
        }

    def build_graph(self) -> CsrGraph:
        return self.graph.build()

    def build_table(self, graph: CsrGraph) -> FeatureTable:
        return self.features.build(graph.num_nodes, self.pipeline.gpu.device_mem_capacity)


def _plain(obj) -> dict:
    return {f.name: getattr(obj, f.name) for f in fields(obj)}


# section -> key -> (target, converter)
_SCHEMA = {
    "experiment": {"seed": ("seed", _int)},
    "graph": {
        "source": ("graph.source", lambda v, k: v.strip()),
        "path": ("graph.path", lambda v, k: v.strip()),
        "num_nodes": ("graph.num_nodes", _int),
        "avg_degree": ("graph.avg_degree", _int),
        "model": ("graph.model", lambda v, k: v.strip()),
        "seed": ("graph.seed", _int),
    },
    "features": {
        "feat_dim": ("features.feat_dim", _int),
        "feat_bytes": ("features.feat_bytes", parse_bytes),
        "elem_size": ("features.elem_size", parse_bytes),
        "base_offset": ("features.base_offset", parse_bytes),
        "placement": ("features.placement", lambda v, k: v.strip()),
    },
    "sampler": {
        "fanouts": ("pipeline.fanouts", lambda v, k: _list(v, _int, k)),
        "batch_size": ("pipeline.batch_size", _int),
        "replace": ("pipeline.replace", _bool),
    },
    "link": {
        "generation": ("link.generation", lambda v, k: v.strip()),
        "wire_bandwidth": ("link.wire_bandwidth", parse_bandwidth),
        "max_outstanding_reads": ("link.max_outstanding_reads", _int),
        "rtt": ("link.rtt", parse_time),
        "header_bytes": ("link.header_bytes", parse_bytes),
        "dma_setup_latency": ("link.dma_setup_latency", parse_time),
        "fault_latency": ("link.fault_latency", parse_time),
        "page_size": ("link.page_size", parse_bytes),
    },
    "gpu": {
        "num_sms": ("gpu.num_sms", _int),
        "threads_per_sm": ("gpu.threads_per_sm", _int),
        "warp_size": ("gpu.warp_size", _int),
        "device_mem_capacity": ("gpu.device_mem_capacity", parse_bytes),
        "device_bandwidth": ("gpu.device_bandwidth", parse_bandwidth),
    },
    "pipeline": {
        "strategy": ("pipeline.strategy", lambda v, k: v.strip()),
        "num_gpus": ("pipeline.num_gpus", _int),
        "resource_fraction": ("pipeline.resource_fraction", parse_ratio),
        "pingpong_depth": ("pipeline.pingpong_depth", _int),
        "train_base": ("train.base", parse_time),
        "train_scaling": ("train.scaling", lambda v, k: v.strip()),
        "train_utilization": ("train.utilization", parse_ratio),
        "cpu_train_factor": ("train.cpu_factor", _float),
        "sampler_time_per_node": ("pipeline.sampler_time_per_node", parse_time),
        "host_bandwidth": ("pipeline.host_bandwidth", parse_bandwidth),
        "cpu_gather_efficiency": ("pipeline.cpu_gather_efficiency", parse_ratio),
        "worker_share_cap": ("pipeline.worker_share_cap", _int),
        "aggregate_link_cap": ("pipeline.aggregate_link_cap", parse_bandwidth),
        "scaling": ("pipeline.scaling", lambda v, k: v.strip()),
        "trace_elements": ("pipeline.trace_elements", _int),
    },
    "compare": {
        "strategies": ("compare.strategies", lambda v, k: _list(v, lambda p, _k: p, k)),
        "num_gpus": ("compare.num_gpus", lambda v, k: _list(v, _int, k)),
    },
    "sweep": {
        "x_values": ("sweep.x_values", lambda v, k: _list(v, parse_ratio, k)),
        "dims": ("sweep.dims", lambda v, k: _list(v, _int, k)),
        "feature_bytes": ("sweep.feature_bytes", lambda v, k: _list(v, parse_bytes, k)),
    },
}


def _collect(parser: configparser.ConfigParser, base_dir: Path) -> Dict[str, object]:
    values: Dict[str, object] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section, raw=True):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            target, conv = _SCHEMA[section][key]
            values[target] = conv(raw, f"{section}.{key}")
    if "graph.path" in values:
        p = Path(values["graph.path"])
        values["graph.path"] = str(p if p.is_absolute() else base_dir / p)
    return values


def _assemble(values: Dict[str, object]) -> ExperimentConfig:
    def pick(prefix):
        return {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith(prefix + ".")}

    link_kw = pick("link")
    if "generation" in link_kw and "max_outstanding_reads" not in link_kw:
        link_kw["max_outstanding_reads"] = OUTSTANDING_READS.get(link_kw["generation"], 768)
    link = LinkParams(**link_kw)
    gpu = GpuSpec(**pick("gpu"))
    train = TrainTimeModel(**pick("train"))
    pcfg = PipelineConfig(link=link, gpu=gpu, train=train, **pick("pipeline"))

    feat_kw = pick("features")
    if "feat_bytes" in feat_kw:
        fb = feat_kw.pop("feat_bytes")
        es = feat_kw.get("elem_size", 4)
        if fb % es:
            raise ConfigError(f"feat_bytes {fb} is not a multiple of elem_size {es}")
        if "feat_dim" in feat_kw and feat_kw["feat_dim"] * es != fb:
            raise ConfigError("feat_bytes and feat_dim disagree")
        feat_kw["feat_dim"] = fb // es
    features = FeatureSpec(**feat_kw)
    graph = GraphSpec(**pick("graph"))

    cmp = pick("compare")
    sweep = pick("sweep")
    kw = {}
    if "seed" in values:
        kw["seed"] = values["seed"]
    if "strategies" in cmp:
        kw["compare_strategies"] = tuple(Strategy(s).value for s in _strategies(cmp["strategies"]))
    if "num_gpus" in cmp:
        kw["compare_gpus"] = cmp["num_gpus"]
    if "x_values" in sweep:
        kw["sweep_x"] = sweep["x_values"]
    if "dims" in sweep:
        kw["sweep_dims"] = sweep["dims"]
    if "feature_bytes" in sweep:
        kw["sweep_feature_bytes"] = sweep["feature_bytes"]
    return ExperimentConfig(graph=graph, features=features, pipeline=pcfg, **kw)


def _strategies(names):
    out = []
    for n in names:
        try:
            out.append(Strategy(n))
        except ValueError:
            raise ConfigError(f"unknown strategy {n!r}") from None
    return out


def parse_config_text(text: str, base_dir=".") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from None
    try:
        return _assemble(_collect(parser, Path(base_dir)))
    except GcsimError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None


def load_config(path=None) -> ExperimentConfig:
    """Read a config file; ``None`` gives the fully-defaulted config."""
    if path is None:
        return ExperimentConfig()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config_text(text, p.parent)


def resolve_seed(config: ExperimentConfig, flag: Optional[int] = None,
                 environ=os.environ) -> ExperimentConfig:
    """Command-line seed beats $GCS_SEED, which beats the file."""
    if flag is not None:
        return replace(config, seed=int(flag))
    env = environ.get(SEED_ENV)
    if env not in (None, ""):
        try:
            return replace(config, seed=int(env))
        except ValueError:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    return config


def with_pipeline(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, pipeline=config.pipeline.with_(**kw))

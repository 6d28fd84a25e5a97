"""Host-to-GPU data movement model for minibatch GCN training.

Covers layered neighbourhood sampling, the feature-gather kernel's access
pattern and its interconnect request coalescing, analytic link models,
and a discrete-event pipeline simulation comparing transfer strategies.
"""

from importlib import resources

from .errors import (
    BoundsError,
    CapacityError,
    ConfigError,
    GcsimError,
    InputDataError,
    ParseError,
    SimulationError,
)
from .gather import (
    AccessTrace,
    InterconnectRequest,
    OffsetPair,
    OffsetPlan,
    apply_circular_shift,
    coalesce_trace,
    gather_trace,
    plan_offsets,
    reference_gather,
    request_histogram,
)
from .graph import (
    CsrGraph,
    FeatureTable,
    Placement,
    attach_features,
    generate_graph,
    load_csr_binary,
    load_edge_list,
    write_csr_binary,
    write_edge_list,
)
from .link import (
    GpuSpec,
    LinkParams,
    cpu_gather_time,
    dma_efficiency,
    dma_transfer_time,
    outstanding_requests_needed,
    provisioning_bounds,
    uvm_migration_time,
    zero_copy_bandwidth,
)
from .sampler import MinibatchPlan, minibatch_stream, sample_layers

__version__ = "0.1.0"


def fixture_path(name: str = "calibrated.ini") -> str:
    """Filesystem path of a shipped config fixture."""
    return str(resources.files(__name__).joinpath("fixtures", name))

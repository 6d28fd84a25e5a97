import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gcsim import fixture_path  # noqa: E402
from gcsim.config import load_config  # noqa: E402


@pytest.fixture(scope="session")
def calibrated():
    """(config, graph, table, workload) of the shipped calibration fixture."""
    from gcsim.pipeline import build_workload

    cfg = load_config(fixture_path())
    graph = cfg.build_graph()
    table = cfg.build_table(graph)
    p = cfg.pipeline
    wl = build_workload(graph, table, p.fanouts, p.batch_size, cfg.seed, p.replace,
                        p.trace_elements, p.gpu.warp_size)
    return cfg, graph, table, wl


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    lines = test_acceptance.summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)

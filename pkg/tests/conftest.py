from pathlib import Path

import pytest

from functrack import graph as g
from functrack import trace_model as tm

FIXTURES = Path(__file__).parent / "fixtures"

MOUSE_SCRIPT = "https://cdn.tracker.example/mouse.js"
TAG_SCRIPT_URL = "https://assets.adobedtm.com/launch-ENabc123.min.js"


@pytest.fixture(scope="session")
def mouse_log() -> tm.TraceLog:
    return tm.parse_trace_log((FIXTURES / "mouse_tracking.jsonl").read_bytes())


@pytest.fixture(scope="session")
def mouse_graph(mouse_log) -> g.PageGraph:
    return g.build_graph(mouse_log)


@pytest.fixture(scope="session")
def mixed_log() -> tm.TraceLog:
    return tm.parse_trace_log((FIXTURES / "mixed_initiator.jsonl").read_bytes())


@pytest.fixture(scope="session")
def mixed_graph(mixed_log) -> g.PageGraph:
    return g.build_graph(mixed_log)


@pytest.fixture(scope="session")
def filters_text() -> str:
    return (FIXTURES / "filters.txt").read_text()


@pytest.fixture(scope="session")
def script_sources() -> dict:
    return tm.load_script_sources(FIXTURES / "scripts")


def fn_by_name(graph: g.PageGraph) -> dict:
    """name -> list of (node_id, FunctionNode), for fixtures with unique names."""
    out: dict = {}
    for nid, node in g.function_nodes(graph):
        out.setdefault(node.function_name, []).append((nid, node))
    return out

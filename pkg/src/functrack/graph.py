"""Function-granularity page graph built from a trace log.

Nodes are JS functions plus the DOM/network/storage/Web-API activity nodes
they touch. A function's node identity is context-sensitive: the same source
function invoked under different caller chains (or with a different scope
signature) materializes as distinct nodes.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Union

from .trace_model import StackFrame, TraceEvent, TraceLog

CALL = "call"
BEHAVIORAL = "behavioral"

# Behavioral edge kinds; direction encodes data flow (set: function -> activity,
# get: activity -> function).
BEHAVIOR_NONE = "none"
BEHAVIOR_REQUEST = "request"
BEHAVIOR_DOM = "dom"
BEHAVIOR_STORAGE_GET = "storage_get"
BEHAVIOR_STORAGE_SET = "storage_set"
BEHAVIOR_API_GET = "api_get"
BEHAVIOR_API_SET = "api_set"

GETTER_BEHAVIORS = frozenset({BEHAVIOR_STORAGE_GET, BEHAVIOR_API_GET})
SETTER_BEHAVIORS = frozenset(
    {BEHAVIOR_STORAGE_SET, BEHAVIOR_API_SET, BEHAVIOR_REQUEST, BEHAVIOR_DOM}
)


def _digest(parts) -> str:
    payload = json.dumps(parts, sort_keys=True, separators=(",", ":"))
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()[:16]


def context_hash(callers: Iterable[StackFrame]) -> str:
    """Digest of the (script_url, name, line, column) tuples of the caller chain."""
    return _digest(
        [[f.script_url, f.function_name, f.line, f.column] for f in callers]
    )


@dataclass(frozen=True)
class FunctionNode:
    script_url: str
    function_name: str
    line: int
    column: int
    scope: "ScopeTuple"
    context_hash: str
    is_eval: bool = False
    is_inline: bool = False

    @property
    def identity(self) -> tuple:
        return (
            self.script_url,
            self.function_name,
            self.line,
            self.column,
            self.scope,
            self.context_hash,
        )


ScopeTuple = tuple[int, int, int, int]


@dataclass(frozen=True)
class ActivityNode:
    kind: str  # dom_element | network | storage | web_api
    attrs: tuple[tuple[str, str], ...]

    def get(self, name: str, default: str = "") -> str:
        for key, value in self.attrs:
            if key == name:
                return value
        return default

    @property
    def identity(self) -> tuple:
        return (self.kind, self.attrs)


Node = Union[FunctionNode, ActivityNode]


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str
    behavior: str = BEHAVIOR_NONE


@dataclass
class PageGraph:
    page_url: str = ""
    nodes: dict[str, Node] = field(default_factory=dict)
    edge_mult: dict[Edge, int] = field(default_factory=dict)
    request_participation: Counter = field(default_factory=Counter)
    skipped_stackless: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edge_mult)

    def edges(self) -> Iterable[tuple[Edge, int]]:
        return self.edge_mult.items()

    def add_node(self, node: Node) -> str:
        nid = _digest(["fn" if isinstance(node, FunctionNode) else "act", *map(repr, node.identity)])
        self.nodes.setdefault(nid, node)
        return nid

    def add_edge(self, src: str, dst: str, kind: str, behavior: str = BEHAVIOR_NONE) -> None:
        if src not in self.nodes or dst not in self.nodes:
            raise KeyError("dangling edge endpoint")
        edge = Edge(src, dst, kind, behavior)
        self.edge_mult[edge] = self.edge_mult.get(edge, 0) + 1


def _function_node(frame: StackFrame, callers: Iterable[StackFrame]) -> FunctionNode:
    scope = (
        frame.scope.num_args,
        frame.scope.num_local,
        frame.scope.num_global,
        frame.scope.num_closure,
    )
    return FunctionNode(
        script_url=frame.script_url,
        function_name=frame.function_name,
        line=frame.line,
        column=frame.column,
        scope=scope,
        context_hash=context_hash(callers),
        is_eval=frame.is_eval,
        is_inline=frame.is_inline,
    )


def stack_function_nodes(event: TraceEvent) -> list[FunctionNode]:
    """Function nodes for each frame of an event's stack (index 0 = initiator)."""
    frames = event.call_stack
    return [_function_node(frames[i], frames[i + 1 :]) for i in range(len(frames))]


def _activity_node(event: TraceEvent) -> tuple[ActivityNode, str]:
    payload = event.payload
    if event.event_kind == "network_request":
        node = ActivityNode("network", (("url", str(payload["url"])),))
        return node, BEHAVIOR_REQUEST
    if event.event_kind == "dom_modification":
        node = ActivityNode("dom_element", (("selector", str(payload["target_selector"])),))
        return node, BEHAVIOR_DOM
    if event.event_kind == "storage_access":
        node = ActivityNode(
            "storage",
            (("mechanism", str(payload["mechanism"])), ("key", str(payload["key"]))),
        )
        behavior = BEHAVIOR_STORAGE_SET if payload["mode"] == "set" else BEHAVIOR_STORAGE_GET
        return node, behavior
    if event.event_kind == "web_api_call":
        node = ActivityNode("web_api", (("api_name", str(payload["api_name"])),))
        behavior = BEHAVIOR_API_SET if payload["mode"] == "set" else BEHAVIOR_API_GET
        return node, behavior
    raise ValueError(f"unexpected event kind {event.event_kind!r}")


def build_graph(log: TraceLog) -> PageGraph:
    """Build the page graph: call edges from stacks, behavioral edges from payloads.

    Stackless events are skipped (counted), never fatal. Repeated observations
    of an edge increment its multiplicity.
    """
    graph = PageGraph(page_url=log.page_url)
    for event in log.events:
        if not event.call_stack:
            graph.skipped_stackless += 1
            continue
        fn_nodes = stack_function_nodes(event)
        ids = [graph.add_node(n) for n in fn_nodes]
        # caller (i+1) -> callee (i)
        for i in range(len(ids) - 1):
            graph.add_edge(ids[i + 1], ids[i], CALL)
        activity, behavior = _activity_node(event)
        aid = graph.add_node(activity)
        initiator = ids[0]
        if behavior in GETTER_BEHAVIORS:
            graph.add_edge(aid, initiator, BEHAVIORAL, behavior)
        else:
            graph.add_edge(initiator, aid, BEHAVIORAL, behavior)
        if event.event_kind == "network_request":
            for nid in ids:
                graph.request_participation[nid] += 1
    return graph


def function_nodes(graph: PageGraph) -> list[tuple[str, FunctionNode]]:
    """All function nodes, deterministically ordered by identity tuple."""
    items = [
        (nid, node)
        for nid, node in graph.nodes.items()
        if isinstance(node, FunctionNode)
    ]
    items.sort(key=lambda item: item[1].identity)
    return items


def _node_line(nid: str, node: Node) -> str:
    if isinstance(node, FunctionNode):
        return (
            f"node {nid} function {node.script_url} {node.function_name or '<anonymous>'} "
            f"{node.line}:{node.column} scope={','.join(map(str, node.scope))} "
            f"ctx={node.context_hash}"
        )
    attrs = " ".join(f"{k}={v}" for k, v in node.attrs)
    return f"node {nid} {node.kind} {attrs}"


def dump_graph(graph: PageGraph) -> str:
    """Stable textual dump (nodes then edges) for diffing in tests."""
    lines = [f"page {graph.page_url}"]
    lines.extend(sorted(_node_line(nid, node) for nid, node in graph.nodes.items()))
    lines.extend(
        sorted(
            f"edge {e.src} {e.dst} {e.kind} {e.behavior} x{mult}"
            for e, mult in graph.edge_mult.items()
        )
    )
    return "\n".join(lines) + "\n"

"""Structural and contextual feature extraction for function nodes.

Structural features are computed on the directed page graph: reachability
(descendants/ascendants) traverses every edge kind, successor/predecessor
features restrict to call edges, caller/callee are direct call neighbors.
Contextual features aggregate the node's behavioral edges and its scope
signature.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass
from typing import IO, Iterable

from .graph import (
    BEHAVIOR_API_GET,
    BEHAVIOR_API_SET,
    BEHAVIOR_DOM,
    BEHAVIOR_REQUEST,
    BEHAVIOR_STORAGE_GET,
    BEHAVIOR_STORAGE_SET,
    CALL,
    ActivityNode,
    Edge,
    FunctionNode,
    PageGraph,
    function_nodes,
)

SCHEMA_VERSION = 1

STRUCTURAL_FEATURES = (
    "num_nodes",
    "num_edges",
    "nodes_per_edge",
    "edges_per_node",
    "in_edges",
    "out_edges",
    "in_plus_out",
    "avg_degree_connectivity",
    "closeness_in",
    "closeness_out",
    "eccentricity",
    "num_descendants",
    "num_ascendants",
    "successor_functions",
    "predecessor_functions",
    "descendants_with_storage",
    "ascendants_with_storage",
    "descendants_with_webapi",
    "ascendants_with_webapi",
    "caller_functions",
    "callee_functions",
)

CONTEXTUAL_FEATURES = (
    "requests_sent",
    "parent_is_eval",
    "is_gateway",
    "storage_getter",
    "storage_setter",
    "cookie_getter",
    "cookie_setter",
    "api_getter",
    "api_setter",
    "num_args",
    "num_local",
    "num_global",
    "num_closure",
    "add_event_listener",
    "remove_event_listener",
    "get_attribute",
    "set_attribute",
    "remove_attribute",
)

FEATURE_NAMES = STRUCTURAL_FEATURES + CONTEXTUAL_FEATURES

# Web-API names routed to dedicated counters instead of api_getter/api_setter.
_DOM_INTERACTION_APIS = {
    "addEventListener": "add_event_listener",
    "removeEventListener": "remove_event_listener",
    "getAttribute": "get_attribute",
    "setAttribute": "set_attribute",
    "removeAttribute": "remove_attribute",
}


class NodeNotFunction(Exception):
    pass


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...] = FEATURE_NAMES
    version: int = SCHEMA_VERSION


FeatureVector = dict[str, float]


class _GraphView:
    """Adjacency indexes over an immutable PageGraph, shared across extractions."""

    def __init__(self, graph: PageGraph):
        self.graph = graph
        self.succ: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
        self.pred: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
        self.call_succ: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
        self.call_pred: dict[str, set[str]] = {nid: set() for nid in graph.nodes}
        self.in_weight: dict[str, int] = {nid: 0 for nid in graph.nodes}
        self.out_weight: dict[str, int] = {nid: 0 for nid in graph.nodes}
        self.behavioral: dict[str, list[tuple[Edge, int]]] = {nid: [] for nid in graph.nodes}
        for edge, mult in graph.edge_mult.items():
            self.succ[edge.src].add(edge.dst)
            self.pred[edge.dst].add(edge.src)
            self.out_weight[edge.src] += mult
            self.in_weight[edge.dst] += mult
            if edge.kind == CALL:
                self.call_succ[edge.src].add(edge.dst)
                self.call_pred[edge.dst].add(edge.src)
            else:
                self.behavioral[edge.src].append((edge, mult))
                self.behavioral[edge.dst].append((edge, mult))

    def bfs(self, start: str, adjacency: dict[str, set[str]]) -> dict[str, int]:
        """Finite shortest-path lengths from start (start excluded)."""
        dist: dict[str, int] = {}
        queue = deque([(start, 0)])
        seen = {start}
        while queue:
            nid, d = queue.popleft()
            for nxt in adjacency[nid]:
                if nxt not in seen:
                    seen.add(nxt)
                    dist[nxt] = d + 1
                    queue.append((nxt, d + 1))
        return dist


_VIEW_CACHE: dict[int, tuple[PageGraph, _GraphView]] = {}


def _view(graph: PageGraph) -> _GraphView:
    cached = _VIEW_CACHE.get(id(graph))
    if cached is not None and cached[0] is graph:
        return cached[1]
    view = _GraphView(graph)
    _VIEW_CACHE[id(graph)] = (graph, view)
    return view


def _closeness(dist: dict[str, int], n: int) -> float:
    r = len(dist) + 1
    if r <= 1 or n <= 1:
        return 0.0
    total = sum(dist.values())
    if total == 0:
        return 0.0
    return ((r - 1) / total) * ((r - 1) / (n - 1))


def closeness_centrality(graph: PageGraph, node: str, direction: str) -> float:
    """Closeness over finite distances only; isolated nodes score 0.

    direction "in" uses paths reaching the node, "out" paths leaving it.
    """
    view = _view(graph)
    adjacency = view.pred if direction == "in" else view.succ
    dist = view.bfs(node, adjacency)
    return _closeness(dist, graph.num_nodes)


def eccentricity(graph: PageGraph, node: str) -> float:
    dist = _view(graph).bfs(node, _view(graph).succ)
    return float(max(dist.values())) if dist else 0.0


def _function_has_behavior(view: _GraphView, nid: str, activity_kind: str) -> bool:
    for edge, _mult in view.behavioral[nid]:
        other = edge.dst if edge.src == nid else edge.src
        node = view.graph.nodes[other]
        if isinstance(node, ActivityNode) and node.kind == activity_kind:
            return True
    return False


def is_gateway(graph: PageGraph, node: str) -> bool:
    """True iff the node only issues requests on behalf of >=1 caller."""
    view = _view(graph)
    if not isinstance(graph.nodes[node], FunctionNode):
        return False
    behaviors = [e.behavior for e, _ in view.behavioral[node]]
    has_request = BEHAVIOR_REQUEST in behaviors
    only_requests = all(b == BEHAVIOR_REQUEST for b in behaviors)
    has_caller = bool(view.call_pred[node])
    return has_request and only_requests and has_caller


def extract_features(graph: PageGraph, node: str) -> FeatureVector:
    if node not in graph.nodes or not isinstance(graph.nodes[node], FunctionNode):
        raise NodeNotFunction(node)
    view = _view(graph)
    fn: FunctionNode = graph.nodes[node]
    fv: FeatureVector = {}

    n = graph.num_nodes
    e = graph.num_edges
    fv["num_nodes"] = float(n)
    fv["num_edges"] = float(e)
    fv["nodes_per_edge"] = n / e if e else 0.0
    fv["edges_per_node"] = e / n if n else 0.0

    fv["in_edges"] = float(view.in_weight[node])
    fv["out_edges"] = float(view.out_weight[node])
    fv["in_plus_out"] = fv["in_edges"] + fv["out_edges"]

    neighbors = view.succ[node] | view.pred[node]
    if neighbors:
        fv["avg_degree_connectivity"] = sum(
            view.in_weight[m] + view.out_weight[m] for m in neighbors
        ) / len(neighbors)
    else:
        fv["avg_degree_connectivity"] = 0.0

    out_dist = view.bfs(node, view.succ)
    in_dist = view.bfs(node, view.pred)
    fv["closeness_in"] = _closeness(in_dist, n)
    fv["closeness_out"] = _closeness(out_dist, n)
    fv["eccentricity"] = float(max(out_dist.values())) if out_dist else 0.0

    descendants = set(out_dist)
    ascendants = set(in_dist)
    fv["num_descendants"] = float(len(descendants))
    fv["num_ascendants"] = float(len(ascendants))

    call_desc = set(view.bfs(node, view.call_succ))
    call_asc = set(view.bfs(node, view.call_pred))
    fv["successor_functions"] = float(len(call_desc))
    fv["predecessor_functions"] = float(len(call_asc))

    def _count_fn_with(kind: str, pool: set[str]) -> float:
        return float(
            sum(
                1
                for m in pool
                if isinstance(graph.nodes[m], FunctionNode)
                and _function_has_behavior(view, m, kind)
            )
        )

    fv["descendants_with_storage"] = _count_fn_with("storage", descendants)
    fv["ascendants_with_storage"] = _count_fn_with("storage", ascendants)
    fv["descendants_with_webapi"] = _count_fn_with("web_api", descendants)
    fv["ascendants_with_webapi"] = _count_fn_with("web_api", ascendants)

    fv["caller_functions"] = float(len(view.call_pred[node]))
    fv["callee_functions"] = float(len(view.call_succ[node]))

    fv["requests_sent"] = float(graph.request_participation.get(node, 0))
    fv["parent_is_eval"] = 1.0 if fn.is_eval else 0.0
    fv["is_gateway"] = 1.0 if is_gateway(graph, node) else 0.0

    counters = {
        "storage_getter": 0,
        "storage_setter": 0,
        "cookie_getter": 0,
        "cookie_setter": 0,
        "api_getter": 0,
        "api_setter": 0,
        "add_event_listener": 0,
        "remove_event_listener": 0,
        "get_attribute": 0,
        "set_attribute": 0,
        "remove_attribute": 0,
    }
    for edge, mult in view.behavioral[node]:
        other = edge.dst if edge.src == node else edge.src
        activity = graph.nodes[other]
        if not isinstance(activity, ActivityNode):
            continue
        if edge.behavior in (BEHAVIOR_STORAGE_GET, BEHAVIOR_STORAGE_SET):
            mode = "getter" if edge.behavior == BEHAVIOR_STORAGE_GET else "setter"
            mechanism = activity.get("mechanism")
            if mechanism == "cookie":
                counters[f"cookie_{mode}"] += mult
            else:
                counters[f"storage_{mode}"] += mult
        elif edge.behavior in (BEHAVIOR_API_GET, BEHAVIOR_API_SET):
            api = activity.get("api_name")
            if api in _DOM_INTERACTION_APIS:
                counters[_DOM_INTERACTION_APIS[api]] += mult
            elif edge.behavior == BEHAVIOR_API_GET:
                counters["api_getter"] += mult
            else:
                counters["api_setter"] += mult
    for name, value in counters.items():
        fv[name] = float(value)

    fv["num_args"], fv["num_local"], fv["num_global"], fv["num_closure"] = map(
        float, fn.scope
    )
    return {name: fv[name] for name in FEATURE_NAMES}


def extract_all(graph: PageGraph) -> list[tuple[str, FunctionNode, FeatureVector]]:
    """Feature vectors for every function node, in deterministic order."""
    return [
        (nid, node, extract_features(graph, nid))
        for nid, node in function_nodes(graph)
    ]


def write_feature_matrix(graph: PageGraph, out: IO[str]) -> int:
    """CSV export: node key columns followed by features in schema order."""
    writer = csv.writer(out)
    key_cols = ("script_url", "function_name", "line", "column", "context_hash")
    writer.writerow(list(key_cols) + list(FEATURE_NAMES))
    rows = 0
    for _nid, node, fv in extract_all(graph):
        writer.writerow(
            [node.script_url, node.function_name, node.line, node.column, node.context_hash]
            + [fv[name] for name in FEATURE_NAMES]
        )
        rows += 1
    return rows


def vector_values(fv: FeatureVector, schema: FeatureSchema | None = None) -> list[float]:
    names = schema.names if schema else FEATURE_NAMES
    return [fv[name] for name in names]

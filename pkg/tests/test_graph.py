import random

from functrack import graph as g
from functrack import trace_model as tm

from conftest import fn_by_name


def _frame(name, line=1, col=1, url="https://s.example/a.js", args=0):
    return tm.StackFrame(url, name, line, col, tm.ScopeSignature(num_args=args))


def _net_event(stack, url="https://t.example/r"):
    return tm.TraceEvent(
        "network_request",
        1.0,
        tuple(stack),
        {"url": url, "method": "GET", "resource_type": "script", "page_origin": "https://p.example/"},
    )


def test_empty_log_empty_graph():
    graph = g.build_graph(tm.TraceLog("https://p.example/", ()))
    assert graph.num_nodes == 0 and graph.num_edges == 0
    assert g.function_nodes(graph) == []


def test_mouse_fixture_shape(mouse_graph):
    fns = g.function_nodes(mouse_graph)
    assert len(fns) == 3
    names = fn_by_name(mouse_graph)
    assert set(names) == {"getMouseMove", "updateCookie", "sendReq"}
    call_edges = {
        (e.src, e.dst): m for e, m in mouse_graph.edges() if e.kind == g.CALL
    }
    gm = names["getMouseMove"][0][0]
    uc = names["updateCookie"][0][0]
    sr = names["sendReq"][0][0]
    assert set(call_edges) == {(gm, uc), (uc, sr)}
    # getMouseMove -> updateCookie observed in storage and network stacks
    assert call_edges[(gm, uc)] == 2
    behavioral = [(e, m) for e, m in mouse_graph.edges() if e.kind == g.BEHAVIORAL]
    assert len(behavioral) == 3
    by_behavior = {e.behavior: e for e, _ in behavioral}
    assert set(by_behavior) == {
        g.BEHAVIOR_API_GET,
        g.BEHAVIOR_STORAGE_SET,
        g.BEHAVIOR_REQUEST,
    }
    # getter flows activity -> function, setters function -> activity
    assert by_behavior[g.BEHAVIOR_API_GET].dst == gm
    assert by_behavior[g.BEHAVIOR_STORAGE_SET].src == uc
    assert by_behavior[g.BEHAVIOR_REQUEST].src == sr
    activity_kinds = {
        node.kind for node in mouse_graph.nodes.values() if isinstance(node, g.ActivityNode)
    }
    assert activity_kinds == {"web_api", "storage", "network"}


def test_mixed_fixture_splits_gateway(mixed_graph):
    names = fn_by_name(mixed_graph)
    assert len(names["sendRequest"]) == 2
    assert len(g.function_nodes(mixed_graph)) == 4
    contexts = {node.context_hash for _nid, node in names["sendRequest"]}
    assert len(contexts) == 2


def test_context_splitting_never_merges():
    shared = _frame("send", 9, 5)
    ev1 = _net_event([shared, _frame("callerA", 1, 1)])
    ev2 = _net_event([shared, _frame("callerB", 2, 1)])
    graph1 = g.build_graph(tm.TraceLog("p", (ev1,)))
    merged = g.build_graph(tm.TraceLog("p", (ev1, ev2)))
    sends = [n for _i, n in g.function_nodes(merged) if n.function_name == "send"]
    assert len(sends) == 2
    # merging traces preserved the original node identity
    ids1 = {nid for nid, _ in g.function_nodes(graph1)}
    assert ids1 <= {nid for nid, _ in g.function_nodes(merged)}


def test_scope_is_part_of_identity():
    f1 = _frame("f", 1, 1, args=0)
    f2 = _frame("f", 1, 1, args=2)
    graph = g.build_graph(tm.TraceLog("p", (_net_event([f1]), _net_event([f2]))))
    assert len(g.function_nodes(graph)) == 2


def test_determinism(mouse_log):
    d1 = g.dump_graph(g.build_graph(mouse_log))
    d2 = g.dump_graph(g.build_graph(mouse_log))
    assert d1 == d2


def test_stackless_events_skipped():
    ev = tm.TraceEvent(
        "dom_modification", 1.0, (), {"target_selector": "#x", "mutation_kind": "insert"}
    )
    graph = g.build_graph(tm.TraceLog("p", (ev,)))
    assert graph.num_nodes == 0
    assert graph.skipped_stackless == 1


def _random_log(rng: random.Random) -> tm.TraceLog:
    pool = [
        _frame(name, line, 1, args=rng.randint(0, 2))
        for name, line in (("a", 1), ("b", 5), ("c", 9), ("d", 13))
    ]
    events = []
    for _ in range(rng.randint(1, 6)):
        depth = rng.randint(1, 4)
        stack = rng.sample(pool, depth)
        kind = rng.choice(["network_request", "storage_access", "web_api_call"])
        if kind == "network_request":
            events.append(_net_event(stack, url=f"https://t{rng.randint(0,3)}.example/r"))
        elif kind == "storage_access":
            events.append(
                tm.TraceEvent(
                    kind,
                    1.0,
                    tuple(stack),
                    {"mechanism": rng.choice(["cookie", "local_storage"]),
                     "mode": rng.choice(["get", "set"]), "key": "k"},
                )
            )
        else:
            events.append(
                tm.TraceEvent(
                    kind,
                    1.0,
                    tuple(stack),
                    {"api_name": rng.choice(["sendBeacon", "movementX"]),
                     "mode": rng.choice(["get", "set"])},
                )
            )
    return tm.TraceLog("https://p.example/", tuple(events))


def test_stack_closure_property():
    rng = random.Random(7)
    for _ in range(50):
        log = _random_log(rng)
        graph = g.build_graph(log)
        call_succ = {}
        for e, _m in graph.edges():
            if e.kind == g.CALL:
                call_succ.setdefault(e.src, set()).add(e.dst)
        for event in log.events:
            nodes = g.stack_function_nodes(event)
            ids = [graph.add_node(n) for n in nodes]
            # directed call path of length k-1 ending at the initiator
            for i in range(len(ids) - 1):
                assert ids[i] in call_succ.get(ids[i + 1], set())


def test_direction_law():
    rng = random.Random(11)
    for _ in range(50):
        graph = g.build_graph(_random_log(rng))
        for e, _m in graph.edges():
            if e.kind != g.BEHAVIORAL:
                continue
            src_fn = isinstance(graph.nodes[e.src], g.FunctionNode)
            dst_fn = isinstance(graph.nodes[e.dst], g.FunctionNode)
            if e.behavior in g.GETTER_BEHAVIORS:
                assert not src_fn and dst_fn
            else:
                assert src_fn and not dst_fn


def test_multiplicity_counts_observations():
    ev = _net_event([_frame("f"), _frame("caller", 3, 1)])
    graph = g.build_graph(tm.TraceLog("p", (ev, ev, ev)))
    mults = sorted(m for _e, m in graph.edges())
    assert mults == [3, 3]
    assert all(m >= 1 for _e, m in graph.edges())


def test_no_dangling_edges(mouse_graph, mixed_graph):
    for graph in (mouse_graph, mixed_graph):
        for e, _m in graph.edges():
            assert e.src in graph.nodes and e.dst in graph.nodes


def test_function_nodes_deterministic_order(mixed_graph):
    first = g.function_nodes(mixed_graph)
    second = g.function_nodes(mixed_graph)
    assert first == second
    identities = [node.identity for _nid, node in first]
    assert identities == sorted(identities)


def test_dump_graph_stable(mouse_graph):
    dump = g.dump_graph(mouse_graph)
    assert dump.startswith("page https://shop.example/")
    assert dump == g.dump_graph(mouse_graph)
    assert len([l for l in dump.splitlines() if l.startswith("node ")]) == 6
    assert len([l for l in dump.splitlines() if l.startswith("edge ")]) == 5

"""Computation graphs for tasks and chains, with width/height statistics.

A task's answer expression becomes a single-sink DAG: parameter and literal
leaves are input nodes, operators are op nodes.  Chaining fuses the previous
task's sink into the next task's input slot (the shared boundary node is
counted once); non-identity adapters and parameter rewrites contribute their
own op nodes in between.

Conventions used by ``graph_stats``:

* level(v) = number of op nodes on the longest input-to-v path (inputs at 0);
* height   = level of the sink;
* width    = largest number of nodes sharing one level.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

from .chains import AtomicTask, ChainSpec, Expr, eval_expr


@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str  # "input" or an operator name (add/sub/mul/div/neg/mod)
    value: int
    label: str


@dataclass
class ComputationGraph:
    nodes: list[GraphNode] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    sink: int = -1

    def add_node(self, kind: str, value: int, label: str) -> int:
        node_id = len(self.nodes)
        self.nodes.append(GraphNode(node_id, kind, value, label))
        return node_id

    def add_edge(self, src: int, dst: int) -> None:
        self.edges.append((src, dst))

    def predecessors(self) -> dict[int, list[int]]:
        preds: dict[int, list[int]] = defaultdict(list)
        for src, dst in self.edges:
            preds[dst].append(src)
        return preds

    def out_degree(self) -> dict[int, int]:
        out = {n.id: 0 for n in self.nodes}
        for src, _ in self.edges:
            out[src] += 1
        return out


def _build_expr(
    graph: ComputationGraph,
    expr: Expr,
    env: dict[str, int],
    param_nodes: dict[str, int],
    slot_node: int | None,
    slot_name: str | None,
) -> int:
    """Add expr's nodes to the graph, sharing one node per named parameter."""
    if expr.op == "const":
        return graph.add_node("input", expr.value, str(expr.value))
    if expr.op == "ref":
        if expr.name == slot_name:
            if slot_node is None:
                raise ValueError(f"unbound input slot {expr.name!r}")
            return slot_node
        if expr.name not in param_nodes:
            param_nodes[expr.name] = graph.add_node("input", env[expr.name], expr.name)
        return param_nodes[expr.name]
    child_ids = [
        _build_expr(graph, a, env, param_nodes, slot_node, slot_name) for a in expr.args
    ]
    value = eval_expr(expr, env)
    node = graph.add_node(expr.op, value, expr.op)
    for cid in child_ids:
        graph.add_edge(cid, node)
    return node


def _affine_subgraph(graph: ComputationGraph, src: int, a: int, b: int, value: int) -> int:
    """Op nodes for a*src + b, skipping the vacuous a == 1 / b == 0 parts."""
    node = src
    partial = graph.nodes[src].value
    if a != 1:
        a_node = graph.add_node("input", a, str(a))
        partial = a * partial
        mul = graph.add_node("mul", partial, "mul")
        graph.add_edge(a_node, mul)
        graph.add_edge(node, mul)
        node = mul
    if b != 0:
        b_node = graph.add_node("input", b, str(b))
        add = graph.add_node("add", value, "add")
        graph.add_edge(b_node, add)
        graph.add_edge(node, add)
        node = add
    return node


def build_graph(target: "ChainSpec | AtomicTask", input_value: int | None = None) -> ComputationGraph:
    """Computation graph of a single task or of a whole chain."""
    graph = ComputationGraph()
    if isinstance(target, AtomicTask):
        env = dict(target.params)
        slot_node = None
        if target.input_slot is not None:
            if input_value is None:
                raise ValueError(f"task {target.id} needs an input value to build its graph")
            env[target.input_slot] = input_value
            slot_node = graph.add_node("input", input_value, target.input_slot)
        graph.sink = _build_expr(graph, target.answer_expr, env, {}, slot_node, target.input_slot)
        return graph

    chain = target
    prev_sink: int | None = None
    for j, task in enumerate(chain.tasks):
        env = dict(task.params)
        slot_node = None
        slot_name = task.input_slot
        param_nodes: dict[str, int] = {}
        if j > 0:
            prev_value = chain.intermediates[j - 1]
            if chain.mode == "substitution":
                adapter = chain.adapters[j - 1]
                x = adapter.apply(prev_value)
                if adapter.kind == "identity":
                    slot_node = prev_sink
                elif adapter.kind == "affine":
                    slot_node = _affine_subgraph(graph, prev_sink, adapter.a, adapter.b, x)
                else:
                    m_node = graph.add_node("input", adapter.m, str(adapter.m))
                    mod = graph.add_node("mod", x, "mod")
                    graph.add_edge(prev_sink, mod)
                    graph.add_edge(m_node, mod)
                    slot_node = mod
                env[slot_name] = x
            else:
                rw = chain.rewrites[j - 1]
                env[rw.name] = rw.apply(prev_value)
                param_nodes[rw.name] = _affine_subgraph(
                    graph, prev_sink, rw.a, rw.b, env[rw.name]
                )
        graph.sink = _build_expr(graph, task.answer_expr, env, param_nodes, slot_node, slot_name)
        prev_sink = graph.sink
    return graph


def graph_stats(graph: ComputationGraph) -> dict:
    """{nodes_plus_edges, width, height} plus sanity facts about the DAG.

    Raises on a cyclic graph or a graph without exactly one sink.
    """
    preds = graph.predecessors()
    out_deg = graph.out_degree()
    sinks = [n.id for n in graph.nodes if out_deg[n.id] == 0]
    if len(sinks) != 1 or sinks[0] != graph.sink:
        raise ValueError(f"graph must have exactly one sink; found {sinks}")

    indeg = {n.id: len(preds.get(n.id, [])) for n in graph.nodes}
    level: dict[int, int] = {}
    frontier = [n.id for n in graph.nodes if indeg[n.id] == 0]
    for nid in frontier:
        level[nid] = 0
    order = list(frontier)
    succ: dict[int, list[int]] = defaultdict(list)
    for src, dst in graph.edges:
        succ[src].append(dst)
    head = 0
    while head < len(order):
        nid = order[head]
        head += 1
        for nxt in succ[nid]:
            cand = level[nid] + (1 if graph.nodes[nxt].kind != "input" else 0)
            level[nxt] = max(level.get(nxt, 0), cand)
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                order.append(nxt)
    if len(order) != len(graph.nodes):
        raise ValueError("graph contains a cycle")

    counts: dict[int, int] = defaultdict(int)
    for nid, lv in level.items():
        counts[lv] += 1
    return {
        "nodes": len(graph.nodes),
        "edges": len(graph.edges),
        "nodes_plus_edges": len(graph.nodes) + len(graph.edges),
        "width": max(counts.values()) if counts else 0,
        "height": level.get(graph.sink, 0),
        "sink_value": graph.nodes[graph.sink].value if graph.nodes else None,
    }

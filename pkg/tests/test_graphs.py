"""Computation graphs: construction, fusion, width/height conventions."""

import pytest

from horizonlab.chains import (
    Adapter,
    AtomicTask,
    ChainSpec,
    builtin_bank,
    compose_substitution,
    parse_sexpr,
)
from horizonlab.graphs import ComputationGraph, build_graph, graph_stats


PIZZA = AtomicTask(
    id="pizza",
    template=(
        "Albert buys {large_count} large pizzas and {small_count} small pizzas. "
        "A large pizza has {large_slices} slices and a small one {small_slices}. "
        "If he eats it all, how many pieces does he eat that day?"
    ),
    params={"large_count": 2, "large_slices": 16, "small_count": 2, "small_slices": 8},
    input_slot=None,
    answer_expr=parse_sexpr("(+ (* large_count large_slices) (* small_count small_slices))"),
)


def make_task(id, expr, params=None, input_slot=None):
    return AtomicTask(id, "", params or {}, input_slot, parse_sexpr(expr))


class TestSingleTaskGraphs:
    def test_pizza_fixture(self):
        stats = graph_stats(build_graph(PIZZA))
        assert stats["sink_value"] == 48
        assert stats["nodes_plus_edges"] == 13
        assert stats["height"] == 2
        assert stats["width"] == 4
        assert stats["nodes"] == 7 and stats["edges"] == 6

    def test_constant_task(self):
        stats = graph_stats(build_graph(make_task("c", "41")))
        assert stats["nodes"] == 1 and stats["edges"] == 0
        assert stats["height"] == 0 and stats["width"] == 1
        assert stats["sink_value"] == 41

    def test_single_op(self):
        stats = graph_stats(build_graph(make_task("inc", "(+ x 1)", input_slot="x"),
                                        input_value=5))
        # one slot input, one const, one add
        assert stats["height"] == 1
        assert stats["sink_value"] == 6

    def test_shared_parameter_is_one_node(self):
        stats = graph_stats(build_graph(make_task("sq", "(* a a)", params={"a": 6})))
        assert stats["nodes"] == 2  # one input, one op
        assert stats["sink_value"] == 36


class TestChainFusion:
    def two_chain(self, adapter):
        head = make_task("h", "(+ a b)", params={"a": 3, "b": 4})
        tail = make_task("t", "(* x 2)", input_slot="x")
        x = adapter.apply(7)
        return ChainSpec(
            mode="substitution",
            tasks=(head, tail),
            adapters=(adapter,),
            rewrites=(),
            intermediates=(7, 2 * x),
            final_answer=2 * x,
        )

    def test_identity_fusion_counts_boundary_once(self):
        head_nodes = graph_stats(build_graph(make_task("h", "(+ a b)", params={"a": 3, "b": 4})))["nodes"]
        tail_nodes = graph_stats(
            build_graph(make_task("t", "(* x 2)", input_slot="x"), input_value=7)
        )["nodes"]
        chain_nodes = graph_stats(build_graph(self.two_chain(Adapter("identity"))))["nodes"]
        assert chain_nodes == head_nodes + tail_nodes - 1

    def test_identity_fusion_keeps_single_sink(self):
        graph = build_graph(self.two_chain(Adapter("identity")))
        out_deg = graph.out_degree()
        sinks = [nid for nid, d in out_deg.items() if d == 0]
        assert sinks == [graph.sink]

    def test_affine_adapter_adds_ops(self):
        identity = graph_stats(build_graph(self.two_chain(Adapter("identity"))))
        affine = graph_stats(build_graph(self.two_chain(Adapter("affine", a=2, b=1))))
        assert affine["height"] == identity["height"] + 2  # mul then add
        assert affine["sink_value"] == 30

    def test_modwrap_adapter(self):
        stats = graph_stats(build_graph(self.two_chain(Adapter("modwrap", m=5))))
        assert stats["sink_value"] == 2 * (7 % 5)

    def test_chained_copies_add_heights(self):
        # h structurally identical tasks fused with identity adapters:
        # total height is h times the per-task height.
        g = graph_stats(build_graph(make_task("t0", "(+ (* x 2) 1)", input_slot="x"),
                                    input_value=1))["height"]
        for h in (2, 3, 5):
            tasks = [make_task("head", "(+ a 1)", params={"a": 0})]
            value = 1
            values = [1]
            for i in range(1, h + 1):
                tasks.append(make_task(f"t{i}", "(+ (* x 2) 1)", input_slot="x"))
                value = 2 * value + 1
                values.append(value)
            chain = ChainSpec(
                mode="substitution",
                tasks=tuple(tasks),
                adapters=tuple(Adapter("identity") for _ in range(h)),
                rewrites=(),
                intermediates=tuple(values),
                final_answer=value,
            )
            stats = graph_stats(build_graph(chain))
            assert stats["height"] == 1 + h * g  # head contributes one add


class TestGraphSanity:
    def test_sampled_chains_are_single_sink_dags(self):
        bank = builtin_bank(40, seed=3)
        for seed in range(30):
            chain = compose_substitution(bank, (seed % 6) + 1, seed=seed)
            graph = build_graph(chain)
            stats = graph_stats(graph)  # raises on cycles / multi-sink
            assert stats["sink_value"] == chain.final_answer
            out_deg = graph.out_degree()
            assert [n for n, d in out_deg.items() if d == 0] == [graph.sink]

    def test_cycle_detection(self):
        graph = ComputationGraph()
        a = graph.add_node("add", 0, "a")
        b = graph.add_node("add", 0, "b")
        c = graph.add_node("add", 0, "sink")
        graph.add_edge(a, b)
        graph.add_edge(b, a)
        graph.add_edge(b, c)
        graph.sink = c
        with pytest.raises(ValueError, match="cycle|sink"):
            graph_stats(graph)

    def test_multi_sink_rejected(self):
        graph = ComputationGraph()
        a = graph.add_node("input", 1, "a")
        b = graph.add_node("add", 1, "b")
        c = graph.add_node("add", 1, "c")
        graph.add_edge(a, b)
        graph.add_edge(a, c)
        graph.sink = b
        with pytest.raises(ValueError, match="sink"):
            graph_stats(graph)

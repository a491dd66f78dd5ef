import json
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qneat.exceptions import CycleError, DimensionError, GenomeError
from qneat.genome import (
    DUMMY,
    HIDDEN,
    INPUT,
    OUTPUT,
    SIGMOID,
    ConnectionGene,
    Genome,
    NodeGene,
    compatibility_distance,
    evaluate,
    forward,
    genome_from_json,
    minimal_genome,
    predict_label,
    threshold_labels,
    topological_order,
    validate,
)
from qneat.quantizer import UNSIGNED, QuantizerBasis, QuantizerPair

from .helpers import fig2_genome, random_dag_genome
from .oracles import brute_quantize, naive_forward

seeds = st.integers(0, 2**32 - 1)


def pair(wv=(0.3, 0.1), av=(0.6, 0.3)):
    return QuantizerPair(QuantizerBasis(wv), QuantizerBasis(av, UNSIGNED))


class TestTopologicalOrder:
    def test_single_edge(self):
        assert topological_order(minimal_genome(1)) == [0, 1]

    def test_fig2_layers_in_order(self):
        order = topological_order(fig2_genome())
        layer = {0: 1, 1: 1, 2: 2, 3: 2, 4: 3}
        assert [layer[n] for n in order] == sorted(layer[n] for n in order)

    def test_cycle(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
        conns = (ConnectionGene(0, 1, 2, 1.0), ConnectionGene(1, 2, 1, 1.0))
        with pytest.raises(CycleError):
            topological_order(Genome(nodes, conns, 1, 1))

    def test_disabled_edge_does_not_make_cycle(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
        conns = (ConnectionGene(0, 1, 2, 1.0), ConnectionGene(1, 2, 1, 1.0, enabled=False))
        topological_order(Genome(nodes, conns, 1, 1))

    @settings(max_examples=100)
    @given(seeds, st.integers(0, 6), st.booleans())
    def test_agrees_with_networkx(self, seed, n_hidden, add_back_edge):
        rng = np.random.default_rng(seed)
        g = random_dag_genome(rng, n_hidden=n_hidden)
        hidden = g.ids_of(HIDDEN)
        if add_back_edge and len(hidden) >= 2:
            a, b = (int(x) for x in rng.choice(hidden, 2, replace=False))
            extra = ConnectionGene(10_000, a, b, 1.0)
            if (a, b) not in g.pairs:
                g = g.with_connections(g.connections + (extra,))
        G = nx.DiGraph()
        G.add_nodes_from(n.id for n in g.nodes)
        G.add_edges_from((c.source, c.target) for c in g.enabled_connections)
        if nx.is_directed_acyclic_graph(G):
            order = topological_order(g)
            pos = {n: i for i, n in enumerate(order)}
            assert all(pos[c.source] < pos[c.target] for c in g.enabled_connections)
        else:
            with pytest.raises(CycleError):
                topological_order(g)


class TestEvaluate:
    def test_zero_weight(self):
        assert evaluate(minimal_genome(1, 0.0), [3.7]).tolist() == [0.5]

    def test_single_edge_closed_form(self):
        w = 0.37
        assert evaluate(minimal_genome(1, w), [1.0])[0] == pytest.approx(1 / (1 + math.exp(-w)), abs=1e-15)

    def test_single_edge_quantized(self):
        w = 0.37
        q = pair()
        qw = brute_quantize(w, q.weights.v, "signed")
        assert evaluate(minimal_genome(1, w), [1.0], q)[0] == pytest.approx(1 / (1 + math.exp(-qw)), abs=1e-15)

    def test_wrong_length(self):
        with pytest.raises(DimensionError):
            evaluate(minimal_genome(2), [1.0])
        with pytest.raises(DimensionError):
            forward(minimal_genome(2), np.zeros((4, 3)))

    @settings(max_examples=50)
    @given(seeds)
    def test_matches_recursive_oracle(self, seed):
        rng = np.random.default_rng(seed)
        g = random_dag_genome(rng)
        nodes = {n.id: (n.kind, n.activation) for n in g.nodes}
        conns = [(c.source, c.target, c.weight) for c in g.enabled_connections]
        x = rng.normal(size=g.input_count)
        assert evaluate(g, x)[0] == pytest.approx(naive_forward(nodes, conns, x)[0], abs=1e-12)

    def test_hidden_activation_is_quantized_output_is_not(self):
        g = fig2_genome()
        q = pair()
        _, hidden = forward(g, np.array([[0.4, -1.2]]), q, return_hidden=True)
        levels = set(q.activations.levels.tolist())
        assert all(float(v[0]) in levels for v in hidden.values())
        out = evaluate(g, [0.4, -1.2], q)[0]
        assert out not in levels

    @settings(max_examples=50)
    @given(seeds)
    def test_deterministic(self, seed):
        rng = np.random.default_rng(seed)
        g = random_dag_genome(rng)
        X = rng.normal(size=(20, g.input_count))
        assert np.array_equal(forward(g, X, pair()), forward(g, X, pair()))

    @settings(max_examples=50)
    @given(seeds)
    def test_disabled_connection_is_inert(self, seed):
        rng = np.random.default_rng(seed)
        g = random_dag_genome(rng, n_hidden=3)
        out_id = g.output_ids[0]
        free = [n.id for n in g.nodes if n.kind != OUTPUT and (n.id, out_id) not in g.pairs]
        if not free:
            return
        extra = ConnectionGene(999, free[0], out_id, 2.5, enabled=False)
        X = rng.normal(size=(10, g.input_count))
        g2 = g.with_connections(g.connections + (extra,))
        assert np.array_equal(forward(g, X), forward(g2, X))
        assert np.array_equal(forward(g, X, pair()), forward(g2, X, pair()))


class TestPredictLabel:
    def test_threshold(self):
        assert threshold_labels([0.51, 0.5, 0.49]).tolist() == [1, 0, 0]

    def test_tie_is_normal(self):
        assert predict_label(minimal_genome(1, 0.0), [1.0]) == 0


class TestCompatibility:
    def test_identical(self):
        g = fig2_genome()
        assert compatibility_distance(g, g) == 0.0

    def test_one_excess(self):
        g1 = fig2_genome()
        g2 = g1.with_connections(g1.connections + (ConnectionGene(9, 1, 4, 0.2),))
        assert compatibility_distance(g1, g2, (1, 1, 0.4)) == pytest.approx(1.0)

    def test_weight_gap(self):
        g1 = minimal_genome(1, 0.5)
        g2 = minimal_genome(1, 0.7)
        assert compatibility_distance(g1, g2, (1, 1, 0.4)) == pytest.approx(0.08)

    def test_disjoint_counted(self):
        g1 = fig2_genome()
        g2 = g1.with_connections([c for c in g1.connections if c.innovation != 1])
        assert compatibility_distance(g1, g2) == pytest.approx(1.0)

    @settings(max_examples=50)
    @given(seeds, seeds)
    def test_symmetric(self, s1, s2):
        g1 = random_dag_genome(np.random.default_rng(s1), n_hidden=5)
        g2 = random_dag_genome(np.random.default_rng(s2), n_hidden=5)
        assert compatibility_distance(g1, g2) == compatibility_distance(g2, g1)
        assert compatibility_distance(g1, g2) >= 0


class TestValidation:
    def test_dummy_must_be_identity(self):
        with pytest.raises(GenomeError):
            NodeGene(5, DUMMY, SIGMOID)

    def test_duplicate_pair(self):
        g = minimal_genome(1)
        bad = g.with_connections(g.connections + (ConnectionGene(7, 0, 1, 0.1),))
        with pytest.raises(GenomeError):
            validate(bad)

    def test_edge_into_input(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, OUTPUT))
        with pytest.raises(GenomeError):
            validate(Genome(nodes, (ConnectionGene(0, 1, 0, 1.0),), 1, 1))

    def test_edge_out_of_output(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, OUTPUT))
        with pytest.raises(GenomeError):
            validate(Genome(nodes, (ConnectionGene(0, 2, 1, 1.0),), 1, 1))

    def test_dangling_hidden_flagged(self):
        g = minimal_genome(1)
        g = g.replace(nodes=g.nodes + (NodeGene(9, HIDDEN),))
        assert validate(g) == [9]


class TestSerialization:
    @settings(max_examples=30)
    @given(seeds)
    def test_roundtrip(self, seed):
        g = random_dag_genome(np.random.default_rng(seed))
        back = genome_from_json(g.to_json())
        assert back == g
        assert back.to_json() == g.to_json()

    def test_field_order_and_version(self):
        doc = json.loads(fig2_genome().to_json())
        assert list(doc) == ["version", "nodes", "connections", "input_count", "output_count"]
        assert list(doc["connections"][0]) == ["innovation", "from", "to", "weight", "enabled"]

    def test_full_precision(self):
        w = 0.1 + 0.2
        g = minimal_genome(1, w)
        assert genome_from_json(g.to_json()).connections[0].weight == w

    def test_bad_version(self):
        doc = json.loads(minimal_genome(1).to_json())
        doc["version"] = "99"
        with pytest.raises(GenomeError):
            genome_from_json(json.dumps(doc))

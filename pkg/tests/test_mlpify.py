import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qneat.exceptions import CycleError
from qneat.genome import DUMMY, HIDDEN, INPUT, OUTPUT, ConnectionGene, Genome, NodeGene, forward, minimal_genome
from qneat.mlpify import assign_layers, insert_dummy_nodes, mlpify, to_dense
from qneat.quantizer import UNSIGNED, QuantizerBasis, QuantizerPair

from .helpers import evolved_genome, fig2_genome, independent_dummy_count, random_dag_genome

seeds = st.integers(0, 2**32 - 1)
QUANT = QuantizerPair(QuantizerBasis((0.21, 0.07)), QuantizerBasis((0.55, 0.3), UNSIGNED))


def diamond():
    nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
    conns = (ConnectionGene(0, 0, 1, 0.2), ConnectionGene(1, 0, 2, -0.1), ConnectionGene(2, 1, 3, 0.3),
             ConnectionGene(3, 2, 3, 0.4))
    return Genome(nodes, conns, 1, 1)


class TestAssignLayers:
    def test_single_edge(self):
        assert assign_layers(minimal_genome(1)) == {0: 0, 1: 1}

    def test_fig2_skip_spans_two(self):
        layer = assign_layers(fig2_genome())
        assert layer[4] - layer[0] == 2

    def test_diamond(self):
        assert assign_layers(diamond()) == {0: 0, 1: 1, 2: 1, 3: 2}

    def test_cycle(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
        conns = (ConnectionGene(0, 1, 2, 1.0), ConnectionGene(1, 2, 1, 1.0))
        with pytest.raises(CycleError):
            assign_layers(Genome(nodes, conns, 1, 1))


class TestInsertDummies:
    def test_already_layered(self):
        lg = insert_dummy_nodes(diamond())
        assert lg.dummy_count == 0
        assert lg.genome == diamond()

    def test_fig2_one_dummy(self):
        lg = insert_dummy_nodes(fig2_genome())
        assert lg.dummy_count == 1
        lg.check()
        dummy = lg.genome.ids_of(DUMMY)[0]
        assert dummy > max(n.id for n in fig2_genome().nodes)
        final = lg.genome.conn_map[4]
        assert (final.source, final.target, final.weight) == (dummy, 4, -0.6)

    def test_cycle(self):
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
        conns = (ConnectionGene(0, 1, 2, 1.0), ConnectionGene(1, 2, 1, 1.0))
        with pytest.raises(CycleError):
            insert_dummy_nodes(Genome(nodes, conns, 1, 1))

    @settings(max_examples=60, deadline=None)
    @given(seeds, st.integers(0, 8))
    def test_invariants_and_count(self, seed, n_hidden):
        g = random_dag_genome(np.random.default_rng(seed), n_hidden=n_hidden, p_edge=0.6)
        lg = insert_dummy_nodes(g)
        lg.check()
        assert lg.dummy_count == independent_dummy_count(g)

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_idempotent(self, seed):
        g = random_dag_genome(np.random.default_rng(seed), n_hidden=6)
        once = insert_dummy_nodes(g)
        twice = insert_dummy_nodes(once.genome)
        assert twice.genome == once.genome
        assert twice.layer_of == once.layer_of

    @settings(max_examples=40, deadline=None)
    @given(seeds)
    def test_bit_identical(self, seed):
        rng = np.random.default_rng(seed)
        g = random_dag_genome(rng, n_hidden=6)
        X = rng.normal(0, 3, size=(200, g.input_count))
        lg, dense = mlpify(g, QUANT)
        for quant in (None, QUANT):
            ref = forward(g, X, quant)
            assert np.array_equal(forward(lg.genome, X, quant), ref)
        assert np.array_equal(dense.forward(X), forward(g, X, QUANT))
        assert np.array_equal(to_dense(lg).forward(X), forward(g, X))


class TestDense:
    def test_single_edge(self):
        net = to_dense(insert_dummy_nodes(minimal_genome(1, 0.4)))
        assert [l.weights.shape for l in net.layers] == [(1, 1)]

    def test_256x4x1(self):
        nodes = [NodeGene(i, INPUT) for i in range(256)] + [NodeGene(256 + j, HIDDEN) for j in range(4)]
        nodes.append(NodeGene(260, OUTPUT))
        conns = [ConnectionGene(i * 4 + j, i, 256 + j, 0.01) for i in range(256) for j in range(4)]
        conns += [ConnectionGene(2000 + j, 256 + j, 260, 0.1) for j in range(4)]
        net = to_dense(insert_dummy_nodes(Genome(tuple(nodes), tuple(conns), 256, 1)), QUANT)
        assert [l.weights.shape for l in net.layers] == [(256, 4), (4, 1)]
        assert net.shape == (256, 4, 1)

    def test_mask_counts_chain(self):
        # one edge skipping three layers needs a chain of two dummies
        nodes = (NodeGene(0, INPUT), NodeGene(1, HIDDEN), NodeGene(2, HIDDEN), NodeGene(3, OUTPUT))
        conns = (ConnectionGene(0, 0, 1, 0.2), ConnectionGene(1, 1, 2, 0.2), ConnectionGene(2, 2, 3, 0.2),
                 ConnectionGene(3, 0, 3, 0.5))
        lg = insert_dummy_nodes(Genome(nodes, conns, 1, 1))
        assert lg.dummy_count == 2
        net = to_dense(lg, QUANT)
        assert sum(int(l.passthrough.sum()) for l in net.layers) == 2
        assert all(np.all(l.weights[l.passthrough] == 1.0) for l in net.layers)

    def test_evolved_genomes(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            g = evolved_genome(rng)
            lg, dense = mlpify(g, QUANT)
            X = rng.uniform(0, 255, size=(100, g.input_count))
            assert np.array_equal(dense.forward(X), forward(g, X, QUANT))
            assert lg.dummy_count == independent_dummy_count(g)

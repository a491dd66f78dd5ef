import networkx as nx
import numpy as np

from qneat.evolution import EvolutionConfig, InnovationRegistry, initialize_population, mutate
from qneat.genome import BIAS, HIDDEN, INPUT, OUTPUT, ConnectionGene, Genome, NodeGene


def random_dag_genome(rng: np.random.Generator, n_inputs=3, n_hidden=4, p_edge=0.5, p_disabled=0.15, bias=True):
    """Random feed-forward genome; hidden ids follow a random topological order."""
    nodes = [NodeGene(i, INPUT) for i in range(n_inputs)]
    sources = list(range(n_inputs))
    if bias:
        nodes.append(NodeGene(n_inputs, BIAS))
        sources.append(n_inputs)
    first_hidden = len(nodes)
    out_id = first_hidden + n_hidden
    hidden = list(range(first_hidden, out_id))
    nodes += [NodeGene(h, HIDDEN) for h in hidden]
    nodes.append(NodeGene(out_id, OUTPUT))
    order = list(rng.permutation(hidden))
    conns = []
    inn = 0
    for pos, tgt in enumerate(order + [out_id]):
        preds = sources + order[:pos]
        for src in preds:
            if rng.random() < p_edge:
                conns.append(ConnectionGene(inn, int(src), int(tgt), float(rng.normal(0, 0.4)), bool(rng.random() >= p_disabled)))
                inn += 1
    return Genome(tuple(nodes), tuple(conns), n_inputs, 1)


def evolved_genome(rng: np.random.Generator, n_inputs=5, steps=30, hidden=1):
    """A genome produced by the real mutation operators, with boosted structural rates."""
    config = EvolutionConfig(
        population_size=2,
        initial_hidden_nodes=hidden,
        add_node_rate=0.5,
        add_connection_rate=0.7,
        toggle_enable_rate=0.1,
        delete_node_rate=0.05,
    )
    registry = InnovationRegistry()
    genome = initialize_population(config, n_inputs, rng, registry)[0]
    for _ in range(steps):
        genome = mutate(genome, config, rng, registry)
    return genome


def fig2_genome():
    # layer 1: inputs 0, 1; layer 2: hidden 2, 3; layer 3: output 4; skip 0 -> 4
    nodes = (NodeGene(0, INPUT), NodeGene(1, INPUT), NodeGene(2, HIDDEN), NodeGene(3, HIDDEN), NodeGene(4, OUTPUT))
    conns = (
        ConnectionGene(0, 0, 2, 0.5),
        ConnectionGene(1, 1, 3, -0.3),
        ConnectionGene(2, 2, 4, 0.8),
        ConnectionGene(3, 3, 4, 0.1),
        ConnectionGene(4, 0, 4, -0.6),
    )
    return Genome(nodes, conns, 2, 1)


def independent_dummy_count(genome: Genome) -> int:
    """Sum of (span - 1) over enabled edges, layers computed with networkx ordering."""
    G = nx.DiGraph()
    G.add_nodes_from(n.id for n in genome.nodes)
    G.add_edges_from((c.source, c.target) for c in genome.connections if c.enabled)
    kinds = {n.id: n.kind for n in genome.nodes}
    depth = {}
    for n in nx.topological_sort(G):
        if kinds[n] in ("input", "bias"):
            depth[n] = 0
        else:
            depth[n] = 1 + max((depth[p] for p in G.predecessors(n)), default=0)
    top = max(max(depth.values()), 1)
    for n, k in kinds.items():
        if k == "output":
            depth[n] = top
    return sum(depth[t] - depth[s] - 1 for s, t in G.edges)

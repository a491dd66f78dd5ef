"""Genotype of irregular feed-forward networks and its evaluation.

Node ids follow a fixed convention for fresh genomes: inputs ``0..n-1``,
bias ``n``, outputs ``n+1..n+m``, hidden nodes above that.  Evaluation only
relies on node kinds, so genomes loaded from disk may use any ids.

Every weighted sum is computed with ``math.fsum``; the correctly rounded sum
does not depend on the order of its terms, which is what makes sparse,
dummy-inserted and dense evaluations agree bit for bit.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.special import expit

from .exceptions import CycleError, DimensionError, GenomeError
from .quantizer import QuantizerPair

INPUT, BIAS, HIDDEN, OUTPUT, DUMMY = "input", "bias", "hidden", "output", "dummy"
KINDS = (INPUT, BIAS, HIDDEN, OUTPUT, DUMMY)
SIGMOID, IDENTITY = "sigmoid", "identity"
ACTIVATIONS = (SIGMOID, IDENTITY)

GENOME_FORMAT_VERSION = "1"

# Topological tie-break: inputs first, outputs last among peers.
_KIND_RANK = {INPUT: 0, BIAS: 1, HIDDEN: 2, DUMMY: 2, OUTPUT: 3}


@dataclass(frozen=True)
class NodeGene:
    id: int
    kind: str
    activation: str = SIGMOID

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GenomeError(f"unknown node kind {self.kind!r}")
        if self.activation not in ACTIVATIONS:
            raise GenomeError(f"unknown activation {self.activation!r}")
        if self.kind == DUMMY and self.activation != IDENTITY:
            raise GenomeError("dummy nodes must use the identity activation")


@dataclass(frozen=True)
class ConnectionGene:
    innovation: int
    source: int
    target: int
    weight: float
    enabled: bool = True


@dataclass(frozen=True)
class Genome:
    nodes: tuple[NodeGene, ...]
    connections: tuple[ConnectionGene, ...]
    input_count: int
    output_count: int
    key: int = field(default=0, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(sorted(self.nodes, key=lambda n: n.id)))
        object.__setattr__(self, "connections", tuple(sorted(self.connections, key=lambda c: c.innovation)))

    @cached_property
    def node_map(self) -> dict[int, NodeGene]:
        return {n.id: n for n in self.nodes}

    @cached_property
    def conn_map(self) -> dict[int, ConnectionGene]:
        return {c.innovation: c for c in self.connections}

    @cached_property
    def pairs(self) -> frozenset[tuple[int, int]]:
        return frozenset((c.source, c.target) for c in self.connections)

    def ids_of(self, *kinds: str) -> list[int]:
        return [n.id for n in self.nodes if n.kind in kinds]

    @property
    def input_ids(self) -> list[int]:
        return self.ids_of(INPUT)

    @property
    def output_ids(self) -> list[int]:
        return self.ids_of(OUTPUT)

    @property
    def enabled_connections(self) -> list[ConnectionGene]:
        return [c for c in self.connections if c.enabled]

    @property
    def gene_count(self) -> int:
        return len(self.nodes) + len(self.connections)

    @cached_property
    def order(self) -> list[int]:
        return topological_order(self)

    @cached_property
    def incoming(self) -> dict[int, list[ConnectionGene]]:
        table: dict[int, list[ConnectionGene]] = {}
        for c in self.connections:
            if c.enabled:
                table.setdefault(c.target, []).append(c)
        return table

    def replace(self, **changes) -> Genome:
        return replace(self, **changes)

    def with_connections(self, connections: Iterable[ConnectionGene]) -> Genome:
        return replace(self, connections=tuple(connections))

    def to_dict(self) -> dict:
        return genome_to_dict(self)

    def to_json(self) -> str:
        return json.dumps(genome_to_dict(self), indent=1)


def genome_to_dict(genome: Genome) -> dict:
    return {
        "version": GENOME_FORMAT_VERSION,
        "nodes": [{"id": n.id, "kind": n.kind, "activation": n.activation} for n in genome.nodes],
        "connections": [
            {"innovation": c.innovation, "from": c.source, "to": c.target, "weight": c.weight, "enabled": c.enabled}
            for c in genome.connections
        ],
        "input_count": genome.input_count,
        "output_count": genome.output_count,
    }


def genome_from_dict(d: dict) -> Genome:
    if str(d.get("version")) != GENOME_FORMAT_VERSION:
        raise GenomeError(f"unsupported genome version {d.get('version')!r}")
    nodes = tuple(NodeGene(int(n["id"]), n["kind"], n["activation"]) for n in d["nodes"])
    conns = tuple(
        ConnectionGene(int(c["innovation"]), int(c["from"]), int(c["to"]), float(c["weight"]), bool(c["enabled"]))
        for c in d["connections"]
    )
    genome = Genome(nodes, conns, int(d["input_count"]), int(d["output_count"]))
    validate(genome)
    return genome


def genome_from_json(text: str) -> Genome:
    return genome_from_dict(json.loads(text))


def validate(genome: Genome) -> list[int]:
    """Raise on structural violations; return ids of dangling hidden nodes.

    A hidden node is dangling when it is neither reachable from an input or
    the bias nor able to reach an output through enabled connections.
    """
    nodes = genome.node_map
    if len(nodes) != len(genome.nodes):
        raise GenomeError("duplicate node ids")
    if len(genome.conn_map) != len(genome.connections):
        raise GenomeError("duplicate innovation numbers")
    if len(genome.pairs) != len(genome.connections):
        raise GenomeError("duplicate (from, to) pairs")
    if len(genome.input_ids) != genome.input_count:
        raise GenomeError("input node count does not match input_count")
    if len(genome.output_ids) != genome.output_count:
        raise GenomeError("output node count does not match output_count")
    if len(genome.ids_of(BIAS)) > 1:
        raise GenomeError("at most one bias node is allowed")
    for c in genome.connections:
        if c.source not in nodes or c.target not in nodes:
            raise GenomeError(f"connection {c.innovation} references a missing node")
        if nodes[c.target].kind in (INPUT, BIAS):
            raise GenomeError(f"connection {c.innovation} feeds an input or bias node")
        if nodes[c.source].kind == OUTPUT:
            raise GenomeError(f"connection {c.innovation} leaves an output node")
    topological_order(genome)

    forward = _reach(genome, genome.ids_of(INPUT, BIAS), reverse=False)
    backward = _reach(genome, genome.output_ids, reverse=True)
    return [n for n in genome.ids_of(HIDDEN) if n not in forward and n not in backward]


def _reach(genome: Genome, seeds: Sequence[int], reverse: bool) -> set[int]:
    adj: dict[int, list[int]] = {}
    for c in genome.enabled_connections:
        a, b = (c.target, c.source) if reverse else (c.source, c.target)
        adj.setdefault(a, []).append(b)
    seen = set(seeds)
    stack = list(seeds)
    while stack:
        for nxt in adj.get(stack.pop(), ()):
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def topological_order(genome: Genome) -> list[int]:
    """Node ids ordered so every enabled connection points forward.

    Kahn's algorithm with a (kind, id) priority queue, so the order is
    deterministic and puts inputs first and outputs last among ready peers.
    """
    indeg = {n.id: 0 for n in genome.nodes}
    succ: dict[int, list[int]] = {n.id: [] for n in genome.nodes}
    for c in genome.connections:
        if c.enabled:
            indeg[c.target] += 1
            succ[c.source].append(c.target)
    kind = {n.id: _KIND_RANK[n.kind] for n in genome.nodes}
    heap = [(kind[n], n) for n, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        _, n = heapq.heappop(heap)
        order.append(n)
        for m in succ[n]:
            indeg[m] -= 1
            if indeg[m] == 0:
                heapq.heappush(heap, (kind[m], m))
    if len(order) != len(indeg):
        raise CycleError("enabled connections contain a cycle")
    return order


def exact_row_sums(products: np.ndarray) -> np.ndarray:
    """Correctly rounded sum of each row."""
    n, m = products.shape
    if m == 0:
        return np.zeros(n)
    return np.fromiter((math.fsum(r) for r in products.tolist()), dtype=float, count=n)


def sigmoid(z):
    return expit(z)


def activate(kind: str, activation: str, z: np.ndarray, quant: QuantizerPair | None) -> np.ndarray:
    if activation == IDENTITY:
        return z
    out = sigmoid(z)
    if kind == HIDDEN and quant is not None and not quant.activations.degenerate:
        out = quant.activations.quantize(out)
    return out


def forward(genome: Genome, X, quant: QuantizerPair | None = None, return_hidden: bool = False):
    """Batched feed-forward pass.

    Returns an ``(n, output_count)`` array; with ``return_hidden`` also a dict
    mapping hidden node id to its activation column.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != genome.input_count:
        raise DimensionError(f"expected {genome.input_count} input features, got shape {X.shape}")
    n = X.shape[0]
    nodes = genome.node_map
    values: dict[int, np.ndarray] = {}
    for col, nid in enumerate(genome.input_ids):
        values[nid] = X[:, col]
    for nid in genome.ids_of(BIAS):
        values[nid] = np.ones(n)

    for nid in genome.order:
        node = nodes[nid]
        if node.kind in (INPUT, BIAS):
            continue
        edges = genome.incoming.get(nid, [])
        if edges:
            w = np.array([c.weight for c in edges])
            # Edges into dummy nodes are unit pass-through wires and never quantized.
            if quant is not None and node.kind != DUMMY:
                w = quant.weights.quantize(w)
            src = np.column_stack([values[c.source] for c in edges])
            z = exact_row_sums(src * w)
        else:
            z = np.zeros(n)
        values[nid] = activate(node.kind, node.activation, z, quant)

    out = np.column_stack([values[o] for o in genome.output_ids]) if genome.output_count else np.zeros((n, 0))
    if return_hidden:
        return out, {h: values[h] for h in genome.ids_of(HIDDEN)}
    return out


def evaluate(genome: Genome, x, quant: QuantizerPair | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != genome.input_count:
        raise DimensionError(f"expected {genome.input_count} inputs, got {x.shape}")
    return forward(genome, x[None, :], quant)[0]


def threshold_labels(scores) -> np.ndarray:
    """Label 1 only when the score is strictly above 0.5."""
    return (np.asarray(scores) > 0.5).astype(int)


def predict_label(genome: Genome, x, quant: QuantizerPair | None = None) -> int:
    return int(threshold_labels(evaluate(genome, x, quant)[0]))


def predict_labels(genome: Genome, X, quant: QuantizerPair | None = None) -> np.ndarray:
    return threshold_labels(forward(genome, X, quant)[:, 0])


def compatibility_distance(g1: Genome, g2: Genome, coeffs=(1.0, 1.0, 0.4)) -> float:
    c1, c2, c3 = coeffs
    a, b = g1.conn_map, g2.conn_map
    if not a and not b:
        return 0.0
    max_a = max(a, default=-1)
    max_b = max(b, default=-1)
    cutoff = min(max_a, max_b)
    excess = disjoint = 0
    diffs = []
    for inn in set(a) | set(b):
        if inn in a and inn in b:
            diffs.append(abs(a[inn].weight - b[inn].weight))
        elif inn > cutoff:
            excess += 1
        else:
            disjoint += 1
    n = max(len(a), len(b))
    if len(a) < 20 and len(b) < 20:
        n = 1
    wbar = math.fsum(diffs) / len(diffs) if diffs else 0.0
    return c1 * excess / n + c2 * disjoint / n + c3 * wbar


def minimal_genome(input_count: int, weight: float = 0.0, bias: bool = False) -> Genome:
    """Direct input-to-output genome with one shared weight; handy for tests and demos."""
    nodes = [NodeGene(i, INPUT) for i in range(input_count)]
    out_id = input_count + (1 if bias else 0)
    if bias:
        nodes.append(NodeGene(input_count, BIAS))
    nodes.append(NodeGene(out_id, OUTPUT))
    conns = [ConnectionGene(i, i, out_id, weight) for i in range(input_count)]
    return Genome(tuple(nodes), tuple(conns), input_count, 1)

"""Regularize irregular genomes into strictly layered, MLP-shaped networks.

Connections that skip layers are replaced by chains of identity dummy nodes
so every enabled connection joins adjacent layers.  Dummy wires carry unit
weight at full precision; the original (quantized) weight moves to the last
edge of the chain, so evaluation is unchanged bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DimensionError, GenomeError
from .genome import (
    BIAS,
    DUMMY,
    IDENTITY,
    INPUT,
    OUTPUT,
    ConnectionGene,
    Genome,
    NodeGene,
    activate,
    exact_row_sums,
    topological_order,
)
from .quantizer import QuantizerPair


def assign_layers(genome: Genome) -> dict[int, int]:
    """Longest enabled-path depth of every node; outputs pushed to the deepest layer.

    Inputs and bias sit at layer 0.  A non-input node without enabled
    predecessors computes from an empty sum and sits at layer 1.
    """
    order = topological_order(genome)
    nodes = genome.node_map
    layer: dict[int, int] = {}
    for nid in order:
        if nodes[nid].kind in (INPUT, BIAS):
            layer[nid] = 0
            continue
        preds = genome.incoming.get(nid, [])
        layer[nid] = 1 + max((layer[c.source] for c in preds), default=0)
    top = max(layer.values(), default=0)
    top = max(top, 1)
    for nid in genome.output_ids:
        layer[nid] = top
    return layer


@dataclass(frozen=True)
class LayeredGenome:
    genome: Genome
    layer_of: dict[int, int]
    layer_count: int

    @property
    def dummy_count(self) -> int:
        return len(self.genome.ids_of(DUMMY))

    def layers(self) -> list[list[int]]:
        """Node ids per layer; layer 0 lists inputs by id, then the bias."""
        out: list[list[int]] = [[] for _ in range(self.layer_count)]
        nodes = self.genome.node_map
        for nid in sorted(self.layer_of, key=lambda n: (nodes[n].kind == BIAS, n)):
            out[self.layer_of[nid]].append(nid)
        return out

    def check(self) -> None:
        nodes = self.genome.node_map
        for c in self.genome.enabled_connections:
            if self.layer_of[c.target] != self.layer_of[c.source] + 1:
                raise GenomeError(f"connection {c.innovation} does not join adjacent layers")
        for nid, node in nodes.items():
            if node.kind in (INPUT, BIAS) and self.layer_of[nid] != 0:
                raise GenomeError(f"input node {nid} is not at layer 0")
            if node.kind == OUTPUT and self.layer_of[nid] != self.layer_count - 1:
                raise GenomeError(f"output node {nid} is not at the last layer")
        for d in self.genome.ids_of(DUMMY):
            ins = self.genome.incoming.get(d, [])
            outs = [c for c in self.genome.enabled_connections if c.source == d]
            if len(ins) != 1 or len(outs) != 1 or ins[0].weight != 1.0:
                raise GenomeError(f"dummy node {d} is not a single unit pass-through")


def insert_dummy_nodes(genome: Genome) -> LayeredGenome:
    """Replace each enabled edge spanning ``s > 1`` layers with ``s - 1`` dummies.

    New node ids and innovation numbers are allocated above the genome's
    current maxima, in innovation order of the replaced edges.  The final edge
    of a chain keeps the original innovation number and weight.
    """
    layer = assign_layers(genome)
    next_id = max(genome.node_map) + 1
    next_inn = max(genome.conn_map, default=-1) + 1
    nodes = list(genome.nodes)
    conns: list[ConnectionGene] = []
    for c in genome.connections:
        span = layer[c.target] - layer[c.source]
        if not c.enabled or span == 1:
            conns.append(c)
            continue
        prev = c.source
        for step in range(1, span):
            nodes.append(NodeGene(next_id, DUMMY, IDENTITY))
            layer[next_id] = layer[c.source] + step
            conns.append(ConnectionGene(next_inn, prev, next_id, 1.0))
            prev = next_id
            next_id += 1
            next_inn += 1
        conns.append(ConnectionGene(c.innovation, prev, c.target, c.weight))
    out = Genome(tuple(nodes), tuple(conns), genome.input_count, genome.output_count, key=genome.key)
    return LayeredGenome(out, layer, max(layer.values()) + 1)


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """Connections from one layer to the next in matrix form.

    ``present`` marks real connections, ``passthrough`` the subset that are
    dummy wires (weight 1.0, never quantized).  ``weights`` holds effective
    values: quantized levels for ordinary entries, zeros where absent.
    ``codes`` has shape ``(rows, cols, k)`` when the layer is quantized.
    """

    row_ids: tuple[int, ...]
    col_ids: tuple[int, ...]
    col_kinds: tuple[str, ...]
    col_activations: tuple[str, ...]
    present: np.ndarray
    passthrough: np.ndarray
    weights: np.ndarray
    codes: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return len(self.row_ids)

    @property
    def cols(self) -> int:
        return len(self.col_ids)

    @cached_property
    def _columns(self):
        return [np.flatnonzero(self.present[:, j]) for j in range(self.cols)]

    def forward(self, a: np.ndarray, quant: QuantizerPair | None) -> np.ndarray:
        z = np.empty((a.shape[0], self.cols))
        for j, rows in enumerate(self._columns):
            z[:, j] = exact_row_sums(a[:, rows] * self.weights[rows, j])
        out = np.empty_like(z)
        for j, (kind, activation) in enumerate(zip(self.col_kinds, self.col_activations)):
            out[:, j] = activate(kind, activation, z[:, j], quant)
        return out


@dataclass(frozen=True, eq=False)
class DenseNetwork:
    input_count: int
    input_ids: tuple[int, ...]
    has_bias: bool
    output_ids: tuple[int, ...]
    layers: tuple[DenseLayer, ...]
    quant: QuantizerPair | None

    @property
    def shape(self) -> tuple[int, ...]:
        """Node count per layer, bias excluded from layer 0."""
        if not self.layers:
            return (self.input_count,)
        return (self.input_count,) + tuple(layer.cols for layer in self.layers)

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_count:
            raise DimensionError(f"expected {self.input_count} input features, got shape {X.shape}")
        cols = [X[:, i] for i in range(self.input_count)]
        if self.has_bias:
            cols.append(np.ones(X.shape[0]))
        a = np.column_stack(cols) if cols else np.zeros((X.shape[0], 0))
        for layer in self.layers:
            a = layer.forward(a, self.quant)
        last = self.layers[-1].col_ids if self.layers else ()
        pos = [last.index(o) for o in self.output_ids]
        return a[:, pos]

    def evaluate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("evaluate takes a single input vector")
        return self.forward(x[None, :])[0]


def to_dense(layered: LayeredGenome, quant: QuantizerPair | None = None) -> DenseNetwork:
    genome = layered.genome
    nodes = genome.node_map
    per_layer = layered.layers()
    dense = []
    for l in range(layered.layer_count - 1):
        rows, cols = per_layer[l], per_layer[l + 1]
        ri = {n: i for i, n in enumerate(rows)}
        ci = {n: j for j, n in enumerate(cols)}
        present = np.zeros((len(rows), len(cols)), dtype=bool)
        passthrough = np.zeros_like(present)
        weights = np.zeros(present.shape)
        codes = None if quant is None else np.zeros(present.shape + (quant.weights.k,), dtype=np.int8)
        for c in genome.enabled_connections:
            if c.source not in ri or c.target not in ci:
                continue
            i, j = ri[c.source], ci[c.target]
            present[i, j] = True
            if nodes[c.target].kind == DUMMY:
                passthrough[i, j] = True
                weights[i, j] = c.weight
            elif quant is None:
                weights[i, j] = c.weight
            else:
                weights[i, j] = quant.weights.quantize(c.weight)
                codes[i, j] = quant.weights.encode(c.weight)
        dense.append(
            DenseLayer(
                tuple(rows),
                tuple(cols),
                tuple(nodes[n].kind for n in cols),
                tuple(nodes[n].activation for n in cols),
                present,
                passthrough,
                weights,
                codes,
            )
        )
    return DenseNetwork(
        input_count=genome.input_count,
        input_ids=tuple(genome.input_ids),
        has_bias=bool(genome.ids_of(BIAS)),
        output_ids=tuple(genome.output_ids),
        layers=tuple(dense),
        quant=quant,
    )


def mlpify(genome: Genome, quant: QuantizerPair | None = None) -> tuple[LayeredGenome, DenseNetwork]:
    layered = insert_dummy_nodes(genome)
    return layered, to_dense(layered, quant)

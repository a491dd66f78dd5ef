"""Neuroevolution loop with per-generation quantizer refitting.

Each generation samples a balanced training batch, refits every genome's
weight and activation quantizers (warm-started from its parent's), scores
genomes by quantized accuracy, records a learning-curve row, checks the
information-based plateau rule, then speciates and reproduces.
"""

from __future__ import annotations

import csv
import math
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .dataset import FlowDataset, sample_batch
from .exceptions import InsufficientData
from .genome import (
    BIAS,
    HIDDEN,
    INPUT,
    OUTPUT,
    ConnectionGene,
    Genome,
    NodeGene,
    compatibility_distance,
    forward,
    predict_labels,
)
from .quantizer import SIGNED, UNSIGNED, QuantizerPair, fit_basis, zero_basis


@dataclass(frozen=True)
class EvolutionConfig:
    population_size: int = 16
    batch_size: int = 500
    initial_hidden_nodes: int = 1
    max_generations: int = 30
    sigma: float = 0.155
    quant_bits: int = 2
    quant_iters: int = 10
    add_node_rate: float = 0.1
    add_connection_rate: float = 0.3
    perturb_weight_rate: float = 0.8
    toggle_enable_rate: float = 0.05
    delete_node_rate: float = 0.05
    crossover_rate: float = 0.75
    compat_threshold: float = 3.0
    compat_coeffs: tuple[float, float, float] = (1.0, 1.0, 0.4)
    stop_epsilon: float = 1e-3
    stop_patience: int = 5
    stagnation_limit: int = 15
    quantize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if self.initial_hidden_nodes < 0 or self.max_generations < 1:
            raise ValueError("initial_hidden_nodes must be >= 0 and max_generations >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.quant_bits < 1 or self.quant_iters < 1:
            raise ValueError("quant_bits and quant_iters must be >= 1")
        for name in ("add_node_rate", "add_connection_rate", "perturb_weight_rate",
                     "toggle_enable_rate", "delete_node_rate", "crossover_rate"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")
        object.__setattr__(self, "compat_coeffs", tuple(float(c) for c in self.compat_coeffs))

    @property
    def weight_bound(self) -> float:
        return 3.0 * self.sigma

    def to_dict(self) -> dict:
        d = asdict(self)
        d["compat_coeffs"] = list(self.compat_coeffs)
        return d


class InnovationRegistry:
    """Global ``(from, to) -> innovation`` and split-event ``innovation -> node id`` tables.

    This is the only state shared across genomes; assignment is serialized by
    a lock so concurrent mutation stays consistent.
    """

    def __init__(self, next_node_id: int = 0, next_innovation: int = 0):
        self._pairs: dict[tuple[int, int], int] = {}
        self._splits: dict[int, int] = {}
        self.next_node_id = next_node_id
        self.next_innovation = next_innovation
        self._lock = threading.Lock()

    def innovation(self, source: int, target: int) -> int:
        with self._lock:
            key = (source, target)
            if key not in self._pairs:
                self._pairs[key] = self.next_innovation
                self.next_innovation += 1
            return self._pairs[key]

    def split_node(self, innovation: int, taken: Sequence[int] = ()) -> int:
        with self._lock:
            nid = self._splits.get(innovation)
            if nid is None or nid in taken:
                nid = self.next_node_id
                self.next_node_id += 1
                self._splits.setdefault(innovation, nid)
            return nid


@dataclass
class Species:
    id: int
    representative: Genome
    members: list[int] = field(default_factory=list)
    best_fitness_history: list[float] = field(default_factory=list)
    stagnation: int = 0


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_acc: float
    mean_acc: float
    best_nmi: float
    species: int
    quant_error: float


CURVE_COLUMNS = ("generation", "best_acc", "mean_acc", "best_nmi", "species", "quant_error")


def write_learning_curve(records: Sequence[GenerationRecord], path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in records:
            w.writerow([r.generation, repr(r.best_acc), repr(r.mean_acc), repr(r.best_nmi), r.species,
                        repr(r.quant_error)])


def _clip(w: float, bound: float) -> float:
    return min(max(w, -bound), bound)


def _draw_weight(rng: np.random.Generator, config: EvolutionConfig) -> float:
    return _clip(float(rng.normal(0.0, config.sigma)), config.weight_bound)


def initialize_population(
    config: EvolutionConfig, input_count: int, rng: np.random.Generator, registry: InnovationRegistry | None = None
) -> list[Genome]:
    """Minimal genomes: inputs and bias feed every initial hidden node, which feed the output.

    With no hidden nodes, inputs and bias feed the output directly.
    """
    bias_id, out_id = input_count, input_count + 1
    hidden_ids = list(range(input_count + 2, input_count + 2 + config.initial_hidden_nodes))
    if registry is None:
        registry = InnovationRegistry()
    registry.next_node_id = max(registry.next_node_id, input_count + 2 + config.initial_hidden_nodes)

    nodes = [NodeGene(i, INPUT) for i in range(input_count)]
    nodes += [NodeGene(bias_id, BIAS), NodeGene(out_id, OUTPUT)]
    nodes += [NodeGene(h, HIDDEN) for h in hidden_ids]
    sources = list(range(input_count)) + [bias_id]
    if hidden_ids:
        pairs = [(s, h) for h in hidden_ids for s in sources] + [(h, out_id) for h in hidden_ids]
    else:
        pairs = [(s, out_id) for s in sources]
    innovations = [registry.innovation(a, b) for a, b in pairs]

    population = []
    for key in range(config.population_size):
        conns = tuple(
            ConnectionGene(inn, a, b, _draw_weight(rng, config)) for inn, (a, b) in zip(innovations, pairs)
        )
        population.append(Genome(tuple(nodes), conns, input_count, 1, key=key))
    return population


def fitness(genome: Genome, batch: FlowDataset, quant: QuantizerPair | None) -> float:
    """Fraction of batch rows labelled correctly by the (quantized) network."""
    return float(np.mean(predict_labels(genome, batch.X, quant) == batch.y))


def refit_quantizers(genome: Genome, X, k: int, T: int, previous: QuantizerPair | None = None) -> QuantizerPair:
    """Fit the weight basis on enabled weights and the activation basis on pooled hidden outputs.

    Activations come from a floating-point pass over ``X``.  Genomes without
    enabled connections or hidden nodes get degenerate zero bases.
    """
    weights = [c.weight for c in genome.enabled_connections]
    if weights:
        init = previous.weights if previous is not None and not previous.weights.degenerate else None
        wb = fit_basis(weights, k, T, init=init, domain=SIGNED)
    else:
        wb = zero_basis(k, SIGNED)

    _, hidden = forward(genome, X, None, return_hidden=True)
    if hidden:
        pooled = np.concatenate(list(hidden.values()))
        init = previous.activations if previous is not None and not previous.activations.degenerate else None
        ab = fit_basis(pooled, k, T, init=init, domain=UNSIGNED)
    else:
        ab = zero_basis(k, UNSIGNED)
    return QuantizerPair(wb, ab)


def speciate(
    genomes: Sequence[Genome],
    compat_threshold: float,
    previous: Sequence[Species] = (),
    coeffs=(1.0, 1.0, 0.4),
    next_id: int | None = None,
) -> list[Species]:
    """Greedy assignment to the first species whose representative is close enough.

    Representatives come from ``previous``; a genome matching none founds a
    new species.  On return each species' representative is the member
    closest to its old representative, ready for the next generation.
    """
    species = [Species(s.id, s.representative, [], list(s.best_fitness_history), s.stagnation) for s in previous]
    if next_id is None:
        next_id = max((s.id for s in species), default=-1) + 1
    for g in genomes:
        for s in species:
            if compatibility_distance(s.representative, g, coeffs) < compat_threshold:
                s.members.append(g.key)
                break
        else:
            species.append(Species(next_id, g, [g.key]))
            next_id += 1
    species = [s for s in species if s.members]
    by_key = {g.key: g for g in genomes}
    for s in species:
        s.representative = min(
            (by_key[m] for m in s.members),
            key=lambda g: (compatibility_distance(s.representative, g, coeffs), g.key),
        )
    return species


def update_stagnation(species: list[Species], fitnesses: dict[int, float], limit: int) -> list[Species]:
    """Track each species' best fitness; drop species stagnant for ``limit`` generations.

    The species holding the global best genome is always kept.
    """
    best_key = _best_key(fitnesses)
    kept = []
    for s in species:
        top = max(fitnesses[m] for m in s.members)
        if not s.best_fitness_history or top > max(s.best_fitness_history):
            s.stagnation = 0
        else:
            s.stagnation += 1
        s.best_fitness_history.append(top)
        if s.stagnation < limit or best_key in s.members:
            kept.append(s)
    return kept


def _best_key(fitnesses: dict[int, float]) -> int:
    return min(fitnesses, key=lambda k: (-fitnesses[k], k))


def allocate_offspring(shared: Sequence[float], total: int) -> list[int]:
    """Largest-remainder apportionment of ``total`` slots proportional to ``shared``."""
    n = len(shared)
    s = float(sum(shared))
    quotas = [total / n] * n if s <= 0 else [total * x / s for x in shared]
    alloc = [math.floor(q) for q in quotas]
    rest = total - sum(alloc)
    order = sorted(range(n), key=lambda i: (-(quotas[i] - alloc[i]), i))
    for i in order[:rest]:
        alloc[i] += 1
    return alloc


def crossover(parent_a: Genome, parent_b: Genome, fit_a: float, fit_b: float, rng: np.random.Generator) -> Genome:
    """Align genes by innovation; structure follows the fitter parent (``parent_a`` on ties).

    Matching genes draw their weight from either parent; a gene disabled in
    either parent stays disabled with probability 0.75.
    """
    fitter, other = (parent_a, parent_b) if fit_a >= fit_b else (parent_b, parent_a)
    theirs = other.conn_map
    conns = []
    for c in fitter.connections:
        o = theirs.get(c.innovation)
        weight = c.weight
        disabled_somewhere = not c.enabled
        if o is not None:
            if rng.random() < 0.5:
                weight = o.weight
            disabled_somewhere = disabled_somewhere or not o.enabled
        enabled = True if not disabled_somewhere else bool(rng.random() >= 0.75)
        conns.append(ConnectionGene(c.innovation, c.source, c.target, weight, enabled))
    return Genome(fitter.nodes, tuple(conns), fitter.input_count, fitter.output_count, key=fitter.key)


def _has_path(edges: dict[int, list[int]], start: int, goal: int) -> bool:
    stack, seen = [start], {start}
    while stack:
        n = stack.pop()
        if n == goal:
            return True
        for m in edges.get(n, ()):
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return False


def mutate(genome: Genome, config: EvolutionConfig, rng: np.random.Generator, registry: InnovationRegistry) -> Genome:
    """Apply each structural and weight mutation with its configured probability.

    Acyclicity is enforced over all connections, enabled or not, so toggling
    a gene back on can never close a cycle.
    """
    bound = config.weight_bound
    nodes = {n.id: n for n in genome.nodes}
    conns = {c.innovation: c for c in genome.connections}

    for inn, c in list(conns.items()):
        if rng.random() < config.perturb_weight_rate:
            w = _clip(c.weight + float(rng.normal(0.0, config.sigma)), bound)
            conns[inn] = ConnectionGene(inn, c.source, c.target, w, c.enabled)

    if rng.random() < config.add_connection_rate:
        sources = sorted(n.id for n in nodes.values() if n.kind in (INPUT, BIAS, HIDDEN))
        targets = sorted(n.id for n in nodes.values() if n.kind in (HIDDEN, OUTPUT))
        pairs = {(c.source, c.target) for c in conns.values()}
        succ: dict[int, list[int]] = {}
        for c in conns.values():
            succ.setdefault(c.source, []).append(c.target)
        for _ in range(10):
            a = sources[int(rng.integers(len(sources)))]
            b = targets[int(rng.integers(len(targets)))]
            if a == b or (a, b) in pairs or _has_path(succ, b, a):
                continue
            inn = registry.innovation(a, b)
            conns[inn] = ConnectionGene(inn, a, b, _draw_weight(rng, config))
            break

    if rng.random() < config.add_node_rate:
        enabled = sorted(i for i, c in conns.items() if c.enabled)
        if enabled:
            old = conns[enabled[int(rng.integers(len(enabled)))]]
            nid = registry.split_node(old.innovation, taken=tuple(nodes))
            nodes[nid] = NodeGene(nid, HIDDEN)
            conns[old.innovation] = ConnectionGene(old.innovation, old.source, old.target, old.weight, False)
            i1 = registry.innovation(old.source, nid)
            i2 = registry.innovation(nid, old.target)
            conns[i1] = ConnectionGene(i1, old.source, nid, _clip(1.0, bound))
            conns[i2] = ConnectionGene(i2, nid, old.target, old.weight)

    if conns and rng.random() < config.toggle_enable_rate:
        keys = sorted(conns)
        c = conns[keys[int(rng.integers(len(keys)))]]
        conns[c.innovation] = ConnectionGene(c.innovation, c.source, c.target, c.weight, not c.enabled)

    if rng.random() < config.delete_node_rate:
        hidden = sorted(n.id for n in nodes.values() if n.kind == HIDDEN)
        if hidden:
            victim = hidden[int(rng.integers(len(hidden)))]
            del nodes[victim]
            conns = {i: c for i, c in conns.items() if victim not in (c.source, c.target)}

    return Genome(tuple(nodes.values()), tuple(conns.values()), genome.input_count, genome.output_count,
                  key=genome.key)


def entropy(labels) -> float:
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(-np.sum(p * np.log(p)))


def info_score(predicted_labels, true_labels) -> float:
    """Normalized mutual information ``I(P;Y) / sqrt(H(P) H(Y))``; 0 when either entropy is 0."""
    p = np.asarray(predicted_labels)
    y = np.asarray(true_labels)
    if p.shape != y.shape:
        raise ValueError("label arrays must have equal length")
    hp, hy = entropy(p), entropy(y)
    if hp == 0.0 or hy == 0.0:
        return 0.0
    pv, pi = np.unique(p, return_inverse=True)
    yv, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((pv.size, yv.size))
    np.add.at(joint, (pi, yi), 1.0)
    joint /= joint.sum()
    outer = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = float(np.sum(joint[nz] * np.log(joint[nz] / outer[nz])))
    return min(max(mi / math.sqrt(hp * hy), 0.0), 1.0)


def should_stop(history: Sequence[float], epsilon: float, patience: int, max_generations: int | None = None) -> bool:
    """Plateau rule on the per-generation best info score.

    A generation counts as stalled when it beats the best earlier score by
    less than ``epsilon``; ``patience`` consecutive stalled generations stop
    the run, as does reaching ``max_generations``.
    """
    if max_generations is not None and len(history) >= max_generations:
        return True
    stalled = 0
    best = -math.inf
    for h in history:
        if h - best < epsilon:
            stalled += 1
        else:
            stalled = 0
        best = max(best, h)
    return stalled >= patience


@dataclass(frozen=True)
class Score:
    nmi: float
    accuracy: float

    @property
    def below_chance(self) -> bool:
        # NMI cannot tell a predictor from its inversion; an inverted one is useless at a 0.5 threshold.
        return self.accuracy < 0.5

    def rank_key(self, genome: Genome):
        return (self.below_chance, -self.nmi, -self.accuracy, genome.gene_count, genome.key)


def score(genome: Genome, batch: FlowDataset, quant: QuantizerPair | None) -> Score:
    pred = predict_labels(genome, batch.X, quant)
    return Score(info_score(pred, batch.y), float(np.mean(pred == batch.y)))


def select_best(
    genomes: Sequence[Genome], validation: FlowDataset, quantizers: dict[int, QuantizerPair | None]
) -> Genome:
    """Highest validation NMI; ties go to accuracy, then fewer genes, then lower key.

    Genomes scoring below chance accuracy rank after all others.
    """
    if not genomes:
        raise ValueError("select_best needs at least one genome")
    scored = [(score(g, validation, quantizers.get(g.key)).rank_key(g), i) for i, g in enumerate(genomes)]
    return genomes[min(scored)[1]]


class EvolutionResult(NamedTuple):
    genome: Genome
    quantizers: QuantizerPair | None
    history: list[GenerationRecord]


class _Reproducer:
    """Offspring production for one generation; owns key assignment."""

    def __init__(self, config: EvolutionConfig, rng: np.random.Generator, registry: InnovationRegistry, next_key: int):
        self.config = config
        self.rng = rng
        self.registry = registry
        self.next_key = next_key

    def _new_key(self) -> int:
        key = self.next_key
        self.next_key += 1
        return key

    def reproduce(self, species: list[Species], genomes: dict[int, Genome], fitnesses: dict[int, float]):
        config = self.config
        best_key = _best_key(fitnesses)
        shared = [sum(fitnesses[m] for m in s.members) / len(s.members) for s in species]
        alloc = allocate_offspring(shared, config.population_size)
        home = next(i for i, s in enumerate(species) if best_key in s.members)
        if alloc[home] == 0:
            donor = max(range(len(alloc)), key=lambda i: (alloc[i], i))
            alloc[donor] -= 1
            alloc[home] += 1

        children: list[Genome] = []
        parents: dict[int, int] = {}
        for s, n_off in zip(species, alloc):
            ranked = sorted(s.members, key=lambda m: (-fitnesses[m], m))
            eligible = ranked[: max(1, math.ceil(len(ranked) / 2))]
            if best_key in s.members and n_off > 0:
                children.append(genomes[best_key])
                n_off -= 1
            for _ in range(n_off):
                if len(eligible) >= 2 and self.rng.random() < config.crossover_rate:
                    i, j = self.rng.choice(len(eligible), 2, replace=False)
                    a, b = genomes[eligible[i]], genomes[eligible[j]]
                    child = crossover(a, b, fitnesses[a.key], fitnesses[b.key], self.rng)
                    parent = a.key if fitnesses[a.key] >= fitnesses[b.key] else b.key
                else:
                    parent = eligible[int(self.rng.integers(len(eligible)))]
                    child = genomes[parent]
                child = mutate(child, config, self.rng, self.registry).replace(key=self._new_key())
                parents[child.key] = parent
                children.append(child)
        return children, parents


def select_and_reproduce(
    species: list[Species],
    genomes: Sequence[Genome],
    fitnesses: dict[int, float],
    config: EvolutionConfig,
    rng: np.random.Generator,
    registry: InnovationRegistry,
    next_key: int | None = None,
) -> tuple[list[Genome], dict[int, int]]:
    """Fitness-shared offspring allocation with elitism of one.

    Returns the next population and a ``child key -> parent key`` map (the
    elite keeps its own key and is absent from the map).
    """
    by_key = {g.key: g for g in genomes}
    if next_key is None:
        next_key = max(by_key) + 1
    return _Reproducer(config, rng, registry, next_key).reproduce(species, by_key, fitnesses)


def _validation_batch(validation: FlowDataset, size: int, rng: np.random.Generator) -> FlowDataset:
    try:
        return sample_batch(validation, size, rng)
    except InsufficientData:
        return validation


def evolve(
    config: EvolutionConfig,
    train: FlowDataset,
    validation: FlowDataset,
    rng: np.random.Generator | None = None,
    on_generation: Callable[[GenerationRecord], None] | None = None,
) -> EvolutionResult:
    if len(train) == 0 or len(validation) == 0:
        raise InsufficientData("training and validation data must be nonempty")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    registry = InnovationRegistry()
    population = initialize_population(config, train.n_features, rng, registry)
    next_key = config.population_size
    val_batch = _validation_batch(validation, config.batch_size, rng)
    k, T = config.quant_bits, config.quant_iters

    quants: dict[int, QuantizerPair | None] = {}
    quants_prev: dict[int, QuantizerPair | None] = {}
    parents: dict[int, int] = {}
    species: list[Species] = []
    records: list[GenerationRecord] = []
    nmi_history: list[float] = []
    candidates: dict[int, tuple[Genome, QuantizerPair | None]] = {}

    for gen in range(config.max_generations):
        batch = sample_batch(train, config.batch_size, rng)
        current: dict[int, QuantizerPair | None] = {}
        for g in population:
            if g.key in quants:
                # the elite is carried over with its quantizers untouched
                current[g.key] = quants[g.key]
            elif config.quantize:
                warm = quants_prev.get(parents.get(g.key))
                current[g.key] = refit_quantizers(g, batch.X, k, T, previous=warm)
            else:
                current[g.key] = None
        fit = {g.key: fitness(g, batch, current[g.key]) for g in population}
        val = {g.key: score(g, val_batch, current[g.key]) for g in population}

        species = speciate(population, config.compat_threshold, species, config.compat_coeffs)
        best_key = _best_key(fit)
        bq = current[best_key]
        qerr = 0.0 if bq is None else float((bq.weights.error or 0.0) + (bq.activations.error or 0.0))
        winner = min(population, key=lambda g: val[g.key].rank_key(g))
        record = GenerationRecord(
            generation=gen,
            best_acc=max(fit.values()),
            mean_acc=float(np.mean(list(fit.values()))),
            best_nmi=val[winner.key].nmi,
            species=len(species),
            quant_error=qerr,
        )
        records.append(record)
        if on_generation is not None:
            on_generation(record)

        candidates.setdefault(winner.key, (winner, current[winner.key]))
        nmi_history.append(record.best_nmi)
        if should_stop(nmi_history, config.stop_epsilon, config.stop_patience, config.max_generations):
            break

        species = update_stagnation(species, fit, config.stagnation_limit)
        population, parents = select_and_reproduce(species, population, fit, config, rng, registry, next_key)
        next_key = max(next_key, max(g.key for g in population) + 1)
        quants_prev = current
        quants = {best_key: current[best_key]}

    pool = [g for g, _ in candidates.values()]
    cand_quants = {g.key: q for g, q in candidates.values()}
    best = select_best(pool, val_batch, cand_quants)
    return EvolutionResult(best, cand_quants[best.key], records)

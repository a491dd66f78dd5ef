"""Quantization-aware neuroevolution for compact intrusion-detection classifiers."""

from .estimator import LearnedQuantizer, QNEATClassifier
from .evolution import EvolutionConfig, evolve
from .genome import Genome, forward, genome_from_json
from .mlpify import insert_dummy_nodes, mlpify, to_dense
from .model import ModelArtifact, load, resource_estimate, save
from .quantizer import QuantizerBasis, QuantizerPair, bitwise_dot, fit_basis

__version__ = "0.1.0"

__all__ = [
    "EvolutionConfig",
    "Genome",
    "LearnedQuantizer",
    "ModelArtifact",
    "QNEATClassifier",
    "QuantizerBasis",
    "QuantizerPair",
    "bitwise_dot",
    "evolve",
    "fit_basis",
    "forward",
    "genome_from_json",
    "insert_dummy_nodes",
    "load",
    "mlpify",
    "resource_estimate",
    "save",
    "to_dense",
]

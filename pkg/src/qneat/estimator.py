"""scikit-learn compatible front ends.

``QNEATClassifier`` wraps evolution, quantizer training and MLP
regularization behind ``fit`` / ``predict`` / ``predict_proba`` so it drops
into pipelines, ``GridSearchCV`` and ``cross_val_score``.
``LearnedQuantizer`` exposes a single learned basis as a transformer.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.multiclass import check_classification_targets, type_of_target
from sklearn.utils.validation import check_is_fitted, validate_data

from .dataset import FlowDataset, kfold_split
from .evolution import EvolutionConfig, evolve, info_score
from .metrics import accuracy, f1
from .mlpify import mlpify
from .model import ModelArtifact
from .quantizer import SIGNED, fit_basis


class QNEATClassifier(ClassifierMixin, BaseEstimator):
    """Quantization-aware neuroevolution classifier for binary tasks.

    Parameters mirror :class:`~qneat.evolution.EvolutionConfig`;
    ``validation_folds`` sets the stratified split used to hold out a
    validation part in :meth:`fit` (one fold of that many).

    Attributes
    ----------
    genome_ : Genome
        Selected evolved genome (irregular form).
    quantizers_ : QuantizerPair or None
    layered_ : LayeredGenome
        Dummy-regularized form of ``genome_``.
    network_ : DenseNetwork
        Dense evaluation form used for prediction.
    history_ : list of GenerationRecord
    """

    def __init__(
        self,
        population_size=16,
        batch_size=500,
        initial_hidden_nodes=1,
        max_generations=30,
        sigma=0.155,
        quant_bits=2,
        quant_iters=10,
        add_node_rate=0.1,
        add_connection_rate=0.3,
        perturb_weight_rate=0.8,
        toggle_enable_rate=0.05,
        delete_node_rate=0.05,
        crossover_rate=0.75,
        compat_threshold=3.0,
        stop_epsilon=1e-3,
        stop_patience=5,
        quantize=True,
        validation_folds=4,
        random_state=0,
    ):
        self.population_size = population_size
        self.batch_size = batch_size
        self.initial_hidden_nodes = initial_hidden_nodes
        self.max_generations = max_generations
        self.sigma = sigma
        self.quant_bits = quant_bits
        self.quant_iters = quant_iters
        self.add_node_rate = add_node_rate
        self.add_connection_rate = add_connection_rate
        self.perturb_weight_rate = perturb_weight_rate
        self.toggle_enable_rate = toggle_enable_rate
        self.delete_node_rate = delete_node_rate
        self.crossover_rate = crossover_rate
        self.compat_threshold = compat_threshold
        self.stop_epsilon = stop_epsilon
        self.stop_patience = stop_patience
        self.quantize = quantize
        self.validation_folds = validation_folds
        self.random_state = random_state

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def make_config(self) -> EvolutionConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return EvolutionConfig(
            population_size=self.population_size,
            batch_size=self.batch_size,
            initial_hidden_nodes=self.initial_hidden_nodes,
            max_generations=self.max_generations,
            sigma=self.sigma,
            quant_bits=self.quant_bits,
            quant_iters=self.quant_iters,
            add_node_rate=self.add_node_rate,
            add_connection_rate=self.add_connection_rate,
            perturb_weight_rate=self.perturb_weight_rate,
            toggle_enable_rate=self.toggle_enable_rate,
            delete_node_rate=self.delete_node_rate,
            crossover_rate=self.crossover_rate,
            compat_threshold=self.compat_threshold,
            stop_epsilon=self.stop_epsilon,
            stop_patience=self.stop_patience,
            quantize=self.quantize,
            seed=seed,
        )

    def fit(self, X, y):
        X, y = validate_data(self, X, y)
        check_classification_targets(y)
        y_type = type_of_target(y, input_name="y", raise_unknown=True)
        if y_type != "binary":
            raise ValueError(f"Only binary classification is supported. The type of the target is {y_type}.")
        self.classes_ = np.unique(y)
        if self.classes_.size != 2:
            raise ValueError(f"QNEATClassifier needs exactly two classes, got {self.classes_.size} class(es)")
        data = FlowDataset(X, (y == self.classes_[1]).astype(np.int64))
        config = self.make_config()
        if min(data.class_counts()) < self.validation_folds:
            # too few rows to hold out a stratified fold; validate on the training rows
            return self._fit_split(data, data, config)
        plan = kfold_split(data, self.validation_folds, config.seed)
        train, validation = plan.split(data, 0)
        return self._fit_split(train, validation, config)

    def fit_dataset(self, train: FlowDataset, validation: FlowDataset | None = None):
        """Fit on prepared datasets with labels already 0 (normal) / 1 (attack)."""
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = train.n_features
        return self._fit_split(train, train if validation is None else validation, self.make_config())

    def _fit_split(self, train: FlowDataset, validation: FlowDataset, config: EvolutionConfig):
        # small training sets get the largest balanced batch they can supply
        cap = 2 * min(train.class_counts())
        if cap < config.batch_size:
            config = EvolutionConfig(**{**config.to_dict(), "batch_size": cap})
        self.config_ = config
        rng = np.random.default_rng(config.seed)
        self.genome_, self.quantizers_, self.history_ = evolve(config, train, validation, rng)
        self.layered_, self.network_ = mlpify(self.genome_, self.quantizers_)
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "network_")
        X = validate_data(self, X, reset=False)
        p = self.network_.forward(X)[:, 0]
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        """Attack score shifted by the threshold: positive exactly when ``predict`` says ``classes_[1]``."""
        return self.predict_proba(X)[:, 1] - 0.5

    def predict(self, X):
        p = self.predict_proba(X)[:, 1]
        return self.classes_[(p > 0.5).astype(int)]

    def scores(self, data: FlowDataset) -> dict:
        """Accuracy, F1 and NMI on a 0/1-labelled dataset."""
        check_is_fitted(self, "network_")
        pred = (self.network_.forward(data.X)[:, 0] > 0.5).astype(int)
        return {"accuracy": accuracy(data.y, pred), "f1": f1(data.y, pred), "nmi": info_score(pred, data.y)}

    def to_artifact(self, metadata: dict | None = None) -> ModelArtifact:
        check_is_fitted(self, "network_")
        return ModelArtifact(self.network_, dict(metadata or {}))


class LearnedQuantizer(TransformerMixin, BaseEstimator):
    """Learn one quantizer basis from all values of ``X`` and snap values to its levels."""

    def __init__(self, n_bits=2, n_iters=10, domain=SIGNED):
        self.n_bits = n_bits
        self.n_iters = n_iters
        self.domain = domain

    def fit(self, X, y=None):
        X = validate_data(self, X)
        self.basis_, self.error_history_ = fit_basis(
            X.ravel(), self.n_bits, self.n_iters, domain=self.domain, return_history=True
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        X = validate_data(self, X, reset=False)
        return np.asarray(self.basis_.quantize(X), dtype=float).reshape(X.shape)

    def encode(self, X):
        """Bit codes, shape ``X.shape + (n_bits,)``."""
        check_is_fitted(self, "basis_")
        return self.basis_.encode(validate_data(self, X, reset=False))


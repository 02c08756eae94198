"""Scikit-learn style wrappers around the model and the two tests.

These exist so the pieces compose with the wider ecosystem: ``get_params`` /
``set_params`` / ``clone`` work, hyperparameters live in ``__init__``
unchanged, and fitted state lands in trailing-underscore attributes.  The
functional API in ``stats`` and ``ngram`` stays the source of truth; these
classes only delegate.
"""

from __future__ import annotations

from pathlib import Path

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .datasets import ExampleDataset, load_dataset
from .ngram import DEFAULT_ALPHA, DEFAULT_ORDER, MAX_ORDER, NGramModel
from .oracles import LogProbOracle, NGramOracle
from .stats import DEFAULT_P_FLOOR, TestResult, permutation_test, sharded_test


class NGramLanguageModel(BaseEstimator):
    """Byte-level additive-smoothing n-gram LM as a fit/score estimator."""

    def __init__(self, order: int = DEFAULT_ORDER, alpha: float = DEFAULT_ALPHA,
                 max_order: int = MAX_ORDER):
        self.order = order
        self.alpha = alpha
        self.max_order = max_order

    def fit(self, X, y=None):
        """Train on an iterable of documents (strings)."""
        self.model_ = NGramModel.train(list(X), order=self.order, alpha=self.alpha,
                                       max_order=self.max_order)
        return self

    def _fitted(self) -> NGramModel:
        model = getattr(self, "model_", None)
        if model is None:
            raise NotFittedError("NGramLanguageModel is not fitted; call fit() first")
        return model

    def logprob(self, text: str) -> float:
        return self._fitted().logprob(text)

    def score(self, X, y=None) -> float:
        """Mean per-document log-likelihood; higher is better (for model selection)."""
        model = self._fitted()
        docs = list(X)
        if not docs:
            raise ValueError("score needs at least one document")
        return sum(model.logprob(d) for d in docs) / len(docs)

    def to_oracle(self, name: str | None = None) -> NGramOracle:
        return NGramOracle(self._fitted(), name=name)

    def save(self, path: str | Path) -> None:
        self._fitted().save(path)

    @classmethod
    def load(cls, path: str | Path) -> "NGramLanguageModel":
        model = NGramModel.load(path)
        estimator = cls(order=model.order, alpha=model.alpha,
                        max_order=max(model.order, MAX_ORDER))
        estimator.model_ = model
        return estimator


class _ContaminationTest(BaseEstimator):
    oracle: LogProbOracle | None

    def _dataset(self, X) -> ExampleDataset:
        if isinstance(X, ExampleDataset):
            return X
        if isinstance(X, (str, Path)):
            return load_dataset(X)
        raise TypeError(f"expected an ExampleDataset or a path, got {type(X).__name__}")

    def _oracle(self) -> LogProbOracle:
        if self.oracle is None:
            raise ValueError("no oracle configured; pass oracle= to the constructor")
        return self.oracle

    def fit(self, X, y=None):
        result = self._run(self._dataset(X))
        self.result_ = result
        self.p_value_ = result.p_value
        return self

    def flags_contamination(self, alpha: float = 0.05) -> bool:
        result = getattr(self, "result_", None)
        if result is None:
            raise NotFittedError("test has not run; call fit() first")
        return result.p_value < alpha

    def _run(self, dataset: ExampleDataset) -> TestResult:
        raise NotImplementedError


class ShardedContaminationTest(_ContaminationTest):
    """Sharded likelihood-comparison test; fit() stores result_ and p_value_."""

    def __init__(self, oracle: LogProbOracle | None = None, num_shards: int = 50,
                 num_permutations: int = 51, master_seed: int = 42,
                 p_floor: float = DEFAULT_P_FLOOR, n_jobs: int = 1):
        self.oracle = oracle
        self.num_shards = num_shards
        self.num_permutations = num_permutations
        self.master_seed = master_seed
        self.p_floor = p_floor
        self.n_jobs = n_jobs

    def _run(self, dataset: ExampleDataset) -> TestResult:
        return sharded_test(dataset, self._oracle(), self.num_shards,
                            self.num_permutations, self.master_seed,
                            self.p_floor, self.n_jobs)


class PermutationContaminationTest(_ContaminationTest):
    """Whole-dataset rank comparison test; fit() stores result_ and p_value_."""

    def __init__(self, oracle: LogProbOracle | None = None,
                 num_permutations: int = 250, master_seed: int = 42,
                 p_floor: float = DEFAULT_P_FLOOR, n_jobs: int = 1):
        self.oracle = oracle
        self.num_permutations = num_permutations
        self.master_seed = master_seed
        self.p_floor = p_floor
        self.n_jobs = n_jobs

    def _run(self, dataset: ExampleDataset) -> TestResult:
        return permutation_test(dataset, self._oracle(), self.num_permutations,
                                self.master_seed, self.p_floor, self.n_jobs)

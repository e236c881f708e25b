"""The transcript classifier roster and its majority-vote ensemble."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .mlp import MLP
from .smote import oversample
from .svm import RBFSVM
from .trees import GradientBoosting, RandomForest

BASE_KINDS = ("RF", "GBM", "SVM", "NN")
MODEL_KINDS = BASE_KINDS + ("Ens",)


@dataclass(frozen=True)
class ClassifierParams:
    rf_trees: int = 100
    gbm_estimators: int = 150
    gbm_learning_rate: float = 0.1
    gbm_depth: int = 3
    svm_C: float = 1.0
    svm_gamma: Optional[float] = None  # None means 1 / n_features
    nn_hidden: int = 10
    nn_epochs: int = 200
    nn_lr: float = 0.01
    smote_k: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    smote: bool = False
    seed: int = 0
    params: ClassifierParams = field(default_factory=ClassifierParams)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; expected one of {MODEL_KINDS}")


def make_model(kind: str, seed: int, params: ClassifierParams = ClassifierParams()):
    if kind == "RF":
        return RandomForest(params.rf_trees, seed)
    if kind == "GBM":
        return GradientBoosting(params.gbm_estimators, params.gbm_learning_rate, params.gbm_depth)
    if kind == "SVM":
        return RBFSVM(params.svm_C, params.svm_gamma)
    if kind == "NN":
        return MLP(params.nn_hidden, params.nn_epochs, params.nn_lr, seed=seed)
    raise ValueError(f"no single model for kind {kind!r}")


def ensemble_vote(votes: np.ndarray) -> np.ndarray:
    """Majority of the base predictions (rows = models); a tie goes to CI."""
    votes = np.asarray(votes)
    return (2 * votes.sum(axis=0) >= votes.shape[0]).astype(np.int64)


def prepare_training(X: np.ndarray, y: np.ndarray, smote: bool, seed: int,
                     params: ClassifierParams = ClassifierParams()) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("training data holds a single class")
    return oversample(X, y, params.smote_k, seed) if smote else (np.asarray(X, float), y)


def base_predictions(X_train: np.ndarray, y_train: np.ndarray, X_test: np.ndarray, smote: bool, seed: int,
                     params: ClassifierParams = ClassifierParams()) -> dict[str, np.ndarray]:
    """Predictions of all four base models plus the ensemble, from one set of fits."""
    X, y = prepare_training(X_train, y_train, smote, seed, params)
    out = {kind: make_model(kind, seed, params).fit(X, y).predict(X_test) for kind in BASE_KINDS}
    out["Ens"] = ensemble_vote(np.vstack([out[k] for k in BASE_KINDS]))
    return out


def fit_predict(spec: ClassifierSpec, X_train: np.ndarray, y_train: np.ndarray, X_test: np.ndarray) -> np.ndarray:
    if spec.kind == "Ens":
        return base_predictions(X_train, y_train, X_test, spec.smote, spec.seed, spec.params)["Ens"]
    X, y = prepare_training(X_train, y_train, spec.smote, spec.seed, spec.params)
    return make_model(spec.kind, spec.seed, spec.params).fit(X, y).predict(X_test)

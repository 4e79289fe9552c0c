"""Outcome classifiers: linear, bagged trees, boosted trees and an LSTM."""

import copy
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from sklearn.ensemble import RandomForestClassifier
from sklearn.linear_model import LogisticRegression
from sklearn.metrics import f1_score, roc_auc_score
from tqdm import trange
from xgboost import XGBClassifier

from .errors import (EvaluationError, PredictionError, TrainingError,
                     UnsupportedOperationError)

logger = logging.getLogger(__name__)


class ClassifierKind(str, Enum):
    LINEAR = "linear"
    BAGGED_TREES = "bagged-trees"
    BOOSTED_TREES = "boosted-trees"
    RECURRENT = "recurrent"

    @property
    def input_mode(self) -> str:
        return "sequence" if self is ClassifierKind.RECURRENT else "aggregated"


DEFAULT_GRIDS: Dict[ClassifierKind, List[Dict[str, Any]]] = {
    ClassifierKind.LINEAR: [{"C": 0.1}, {"C": 1.0}, {"C": 10.0}],
    ClassifierKind.BAGGED_TREES: [
        {"n_estimators": 100, "max_depth": None},
        {"n_estimators": 100, "max_depth": 6},
    ],
    ClassifierKind.BOOSTED_TREES: [
        {"n_estimators": 100, "max_depth": 3, "learning_rate": 0.1},
        {"n_estimators": 200, "max_depth": 4, "learning_rate": 0.05},
    ],
    ClassifierKind.RECURRENT: [
        {"hidden_size": 32, "epochs": 30, "learning_rate": 1e-2},
        {"hidden_size": 64, "epochs": 30, "learning_rate": 5e-3},
    ],
}

RECURRENT_DEFAULTS = {"hidden_size": 32, "epochs": 30, "learning_rate": 1e-2,
                      "batch_size": 64, "embedding_dim": 0}


@dataclass(frozen=True)
class DecisionThreshold:
    tau: float
    selection_metric: str = "f1"
    selected_on: str = "validation"

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {self.tau}")


class LSTMOutcomeNet(nn.Module):
    """LSTM over padded one-hot rows; the final hidden state feeds a logit."""

    def __init__(self, vocab_size: int, hidden_size: int, embedding_dim: int = 0):
        super().__init__()
        # a bias-free projection of one-hot rows is an embedding lookup that
        # still accepts the decoder's soft rows
        self.embed = nn.Linear(vocab_size, embedding_dim, bias=False) if embedding_dim else None
        input_size = embedding_dim or vocab_size
        self.lstm = nn.LSTM(input_size, hidden_size, batch_first=True)
        self.head = nn.Linear(hidden_size, 1)

    def forward(self, rows: torch.Tensor) -> torch.Tensor:
        if self.embed is not None:
            rows = self.embed(rows)
        _, (hidden, _) = self.lstm(rows)
        return self.head(hidden[-1]).squeeze(-1)


class Classifier:
    """Trained outcome model plus its decision threshold.

    Treat instances as immutable; ``with_threshold`` returns a copy.
    """

    def __init__(self, kind: ClassifierKind, model: Any, input_shape: Tuple[int, ...],
                 seed: int, hyperparams: Dict[str, Any],
                 threshold: Optional[DecisionThreshold] = None,
                 vocab_hash: Optional[str] = None,
                 loss_curve: Optional[List[float]] = None):
        self.kind = ClassifierKind(kind)
        self.model = model
        self.input_shape = tuple(input_shape)
        self.seed = seed
        self.hyperparams = dict(hyperparams)
        self.threshold = threshold or DecisionThreshold(0.5, "default", "none")
        self.vocab_hash = vocab_hash
        self.loss_curve = list(loss_curve or [])
        self._double_model: Optional[nn.Module] = None

    def __getstate__(self) -> Dict:
        state = self.__dict__.copy()
        state["_double_model"] = None
        return state

    @property
    def input_mode(self) -> str:
        return self.kind.input_mode

    @property
    def tau(self) -> float:
        return self.threshold.tau

    def with_threshold(self, threshold: DecisionThreshold) -> "Classifier":
        clone = copy.copy(self)
        clone.threshold = threshold
        return clone

    def header(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "vocab_hash": self.vocab_hash,
                "input_mode": self.input_mode, "tau": self.tau, "seed": self.seed}

    def _as_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float32)
        if X.shape == self.input_shape:
            X = X[np.newaxis]
        if X.shape[1:] != self.input_shape:
            raise PredictionError(
                f"{self.kind.value} classifier expects instances of shape {self.input_shape}, "
                f"got {X.shape[1:]}")
        return X

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        """Positive-class probabilities for one instance or a batch."""
        X = self._as_batch(X)
        if len(X) == 0:
            return np.zeros(0, dtype=np.float64)
        if self.kind is ClassifierKind.RECURRENT:
            with torch.no_grad():
                probs = torch.sigmoid(self.model(torch.from_numpy(X))).numpy()
        else:
            probs = self.model.predict_proba(X)[:, 1]
        return np.clip(probs.astype(np.float64), 0.0, 1.0)

    def double_model(self) -> nn.Module:
        """float64 copy of the recurrent net for latent gradients."""
        if self._double_model is None:
            self._double_model = copy.deepcopy(self.model).double().eval().requires_grad_(False)
        return self._double_model


def _check_training_data(kind: ClassifierKind, X: np.ndarray, y: np.ndarray) -> None:
    expected_ndim = 3 if kind is ClassifierKind.RECURRENT else 2
    if X.ndim != expected_ndim:
        raise TrainingError(f"{kind.value} classifier needs {kind.input_mode} input "
                            f"({expected_ndim}-d), got an array of shape {X.shape}")
    if len(X) != len(y):
        raise TrainingError(f"{len(X)} instances but {len(y)} labels")
    present = set(np.unique(y).tolist())
    if present != {0, 1}:
        raise TrainingError(f"training set must contain both labels, found {sorted(present)}")


def _train_recurrent(X: np.ndarray, y: np.ndarray, params: Dict[str, Any], seed: int,
                     progress: bool) -> Tuple[LSTMOutcomeNet, List[float]]:
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    net = LSTMOutcomeNet(X.shape[2], int(params["hidden_size"]), int(params["embedding_dim"]))
    optimizer = torch.optim.Adam(net.parameters(), lr=float(params["learning_rate"]))
    inputs = torch.from_numpy(X.astype(np.float32))
    targets = torch.from_numpy(y.astype(np.float32))
    batch_size = int(params["batch_size"])

    curve = []
    net.train()
    for epoch in trange(int(params["epochs"]), desc="LSTM classifier", disable=not progress,
                        leave=False):
        order = torch.randperm(len(inputs), generator=generator)
        total = 0.0
        for start in range(0, len(inputs), batch_size):
            batch = order[start:start + batch_size]
            loss = F.binary_cross_entropy_with_logits(net(inputs[batch]), targets[batch])
            if not torch.isfinite(loss):
                raise TrainingError(f"classifier loss diverged at epoch {epoch + 1}",
                                    epoch=epoch + 1)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += float(loss) * len(batch)
        curve.append(total / len(inputs))
    return net.eval(), curve


def train_classifier(kind: str, X: np.ndarray, y: np.ndarray,
                     hyperparams: Optional[Dict[str, Any]] = None, seed: int = 0,
                     vocab_hash: Optional[str] = None, progress: bool = False) -> Classifier:
    """Fit one classifier family on an encoded dataset.

    Args:
        kind: 'linear', 'bagged-trees', 'boosted-trees' or 'recurrent'
        X: Aggregated (n, |A|) counts, or one-hot rows (n, max_len + 1, |A| + 2) for 'recurrent'
        y: Labels in {0, 1}
        hyperparams: Model-specific keyword arguments
        seed: Random seed
        vocab_hash: Vocabulary hash stored in the artifact header

    Returns:
        Classifier with the default threshold 0.5
    """
    kind = ClassifierKind(kind)
    X = np.asarray(X)
    y = np.asarray(y).astype(np.int64)
    _check_training_data(kind, X, y)
    params = dict(hyperparams or {})
    curve: List[float] = []

    if kind is ClassifierKind.LINEAR:
        model = LogisticRegression(max_iter=2000, random_state=seed, **params)
        model.fit(X, y)
    elif kind is ClassifierKind.BAGGED_TREES:
        model = RandomForestClassifier(random_state=seed, n_jobs=1, **params)
        model.fit(X, y)
    elif kind is ClassifierKind.BOOSTED_TREES:
        model = XGBClassifier(random_state=seed, n_jobs=1, eval_metric="logloss", **params)
        model.fit(X, y)
    else:
        params = {**RECURRENT_DEFAULTS, **params}
        model, curve = _train_recurrent(X, y, params, seed, progress)

    logger.debug("trained %s classifier on %d instances with %s", kind.value, len(X), params)
    return Classifier(kind, model, X.shape[1:], seed, params, vocab_hash=vocab_hash,
                      loss_curve=curve)


def predict(classifier: Classifier, instance: np.ndarray) -> Tuple[float, int]:
    """Probability and label for a single encoded instance; label is 1 iff p >= tau."""
    probability = float(classifier.predict_proba(instance)[0])
    return probability, int(probability >= classifier.tau)


def predict_batch(classifier: Classifier, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    probs = classifier.predict_proba(X)
    return probs, (probs >= classifier.tau).astype(np.int64)


def best_f1_threshold(probs: Sequence[float], labels: Sequence[int]) -> float:
    """F1-maximizing cut over unique probabilities and the midpoints between them.

    Ties go to the candidate closest to 0.5. Constant probabilities give 0.5.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    unique = np.unique(probs)
    if len(unique) < 2:
        logger.warning("validation probabilities are constant; using threshold 0.5")
        return 0.5

    candidates = np.concatenate([unique, (unique[:-1] + unique[1:]) / 2])
    candidates = np.unique(candidates[(candidates > 0.0) & (candidates < 1.0)])
    if len(candidates) == 0:
        return 0.5

    scores = np.array([f1_score(labels, probs >= tau, zero_division=0) for tau in candidates])
    best = np.flatnonzero(np.isclose(scores, scores.max(), rtol=0.0, atol=1e-12))
    # closest to 0.5, then the smaller cut
    chosen = min(best, key=lambda i: (abs(candidates[i] - 0.5), candidates[i]))
    return float(candidates[chosen])


def select_threshold(classifier: Classifier, X_val: np.ndarray, y_val: np.ndarray,
                     selected_on: str = "validation") -> DecisionThreshold:
    y_val = np.asarray(y_val).astype(np.int64)
    if set(np.unique(y_val).tolist()) != {0, 1}:
        raise EvaluationError("threshold selection needs both labels in the validation set")
    tau = best_f1_threshold(classifier.predict_proba(X_val), y_val)
    return DecisionThreshold(tau, "f1", selected_on)


def auc_score(labels: Sequence[int], scores: Sequence[float]) -> float:
    labels = np.asarray(labels)
    if len(np.unique(labels)) < 2:
        raise EvaluationError("AUC is undefined on a single-class set")
    return float(roc_auc_score(labels, scores))


def evaluate_auc(classifier: Classifier, X_test: np.ndarray, y_test: np.ndarray) -> float:
    return auc_score(y_test, classifier.predict_proba(X_test))


def select_hyperparameters(kind: str, grid: Optional[List[Dict[str, Any]]],
                           X_train: np.ndarray, y_train: np.ndarray,
                           X_val: np.ndarray, y_val: np.ndarray, seed: int = 0,
                           vocab_hash: Optional[str] = None,
                           progress: bool = False) -> Tuple[Classifier, Dict[str, Any], List[float]]:
    """Fit every grid point and keep the one with the best validation AUC.

    Returns:
        (classifier, chosen hyperparameters, validation AUC per grid point)
    """
    kind = ClassifierKind(kind)
    grid = grid or DEFAULT_GRIDS[kind]
    single_class = len(np.unique(y_val)) < 2
    if single_class:
        logger.warning("validation slice has one label; keeping the first grid point")
        grid = grid[:1]

    best: Optional[Tuple[float, Classifier, Dict[str, Any]]] = None
    scores: List[float] = []
    for params in grid:
        candidate = train_classifier(kind, X_train, y_train, params, seed, vocab_hash, progress)
        score = float("nan") if single_class else evaluate_auc(candidate, X_val, y_val)
        scores.append(score)
        if best is None or score > best[0]:
            best = (score, candidate, params)
    return best[1], dict(best[2]), scores


def loss_and_gradient_wrt_latent(classifier: Classifier, manifold: Any, z: np.ndarray,
                                 target_label: int, z0: Optional[np.ndarray] = None,
                                 lambda_dist: float = 0.1) -> Tuple[float, np.ndarray]:
    """BCE toward ``target_label`` of the classifier on the soft decode of z, plus
    ``lambda_dist * ||z - z0||^2``. Computed in float64.

    Returns:
        (loss, gradient with respect to z)
    """
    if classifier.kind is not ClassifierKind.RECURRENT:
        raise UnsupportedOperationError(
            f"{classifier.kind.value} classifier has no latent gradient; only the recurrent "
            "classifier is differentiable")

    z_tensor = torch.tensor(np.asarray(z, dtype=np.float64), requires_grad=True)
    anchor = torch.tensor(np.asarray(z if z0 is None else z0, dtype=np.float64))
    rows = manifold.decode_soft(z_tensor.unsqueeze(0))
    if tuple(rows.shape[1:]) != classifier.input_shape:
        raise PredictionError(f"decoder emits rows of shape {tuple(rows.shape[1:])}, classifier "
                              f"expects {classifier.input_shape}")

    logit = classifier.double_model()(rows)
    target = torch.full_like(logit, float(target_label))
    loss = F.binary_cross_entropy_with_logits(logit, target).sum()
    loss = loss + lambda_dist * torch.sum((z_tensor - anchor) ** 2)
    loss.backward()
    return float(loss), z_tensor.grad.numpy().copy()

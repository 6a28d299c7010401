"""Local learner: data loading, softmax regression, Adam, evaluation.

Model parameters travel as one flat vector laid out as the row-major
``(num_classes, input_dim)`` weight matrix followed by the bias.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import log_softmax, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state, check_X_y

from .errors import (
    BadMagic,
    CountMismatch,
    DimensionMismatch,
    EmptyShard,
    InvalidParams,
    NotEnoughData,
    TruncatedFile,
)

__all__ = [
    "Dataset",
    "TrainingConfig",
    "Model",
    "OptimizerState",
    "IMAGES_MAGIC",
    "LABELS_MAGIC",
    "load_idx",
    "read_idx_images",
    "read_idx_labels",
    "synth_blobs",
    "partition",
    "param_dim",
    "flatten",
    "unflatten",
    "predict_logits",
    "cross_entropy_loss",
    "gradient",
    "adam_step",
    "local_train",
    "evaluate",
    "evaluate_loss",
    "SoftmaxRegression",
]

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        if self.features.ndim != 2:
            raise DimensionMismatch("features must be a 2-d array")
        if self.labels.shape != (self.features.shape[0],):
            raise DimensionMismatch("need exactly one label per sample")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise InvalidParams(f"labels must lie in 0..{self.num_classes - 1}")

    def __len__(self):
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    samples_per_node: int = 250

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidParams("epochs must be non-negative")
        for name in ("batch_size", "learning_rate", "adam_eps", "samples_per_node"):
            if not getattr(self, name) > 0:
                raise InvalidParams(f"{name} must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise InvalidParams("adam betas must lie in [0, 1)")
        if self.batch_size > self.samples_per_node:
            raise InvalidParams("batch_size cannot exceed samples_per_node")


class Model(NamedTuple):
    weights: np.ndarray  # (num_classes, input_dim)
    bias: np.ndarray  # (num_classes,)


class OptimizerState(NamedTuple):
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0

    @classmethod
    def fresh(cls, d: int) -> "OptimizerState":
        return cls(np.zeros(d), np.zeros(d), 0)


# -- IDX ---------------------------------------------------------------------


def _read_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if hasattr(source, "read"):
        return source.read()
    source = str(source)
    opener = gzip.open if source.endswith(".gz") else open
    with opener(source, "rb") as fh:
        return fh.read()


def _parse_idx(raw: bytes, magic: int, ndims: int, what: str) -> np.ndarray:
    header = 4 + 4 * ndims
    if len(raw) < 4:
        raise TruncatedFile(f"{what}: file shorter than the magic number")
    (found,) = struct.unpack(">I", raw[:4])
    if found != magic:
        raise BadMagic(f"{what}: magic 0x{found:08x}, expected 0x{magic:08x}")
    if len(raw) < header:
        raise TruncatedFile(f"{what}: truncated header")
    dims = struct.unpack(">" + "I" * ndims, raw[4:header])
    size = int(np.prod(dims))
    if len(raw) < header + size:
        raise TruncatedFile(f"{what}: expected {size} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, count=size, offset=header).reshape(dims)


def read_idx_images(source) -> np.ndarray:
    return _parse_idx(_read_bytes(source), IMAGES_MAGIC, 3, "images")


def read_idx_labels(source) -> np.ndarray:
    return _parse_idx(_read_bytes(source), LABELS_MAGIC, 1, "labels")


def load_idx(images_source, labels_source, num_classes: int = 10) -> Dataset:
    """Load an IDX image/label pair; pixels are scaled to ``[0, 1]``."""
    images = read_idx_images(images_source)
    labels = read_idx_labels(labels_source)
    if images.shape[0] != labels.shape[0]:
        raise CountMismatch(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), num_classes)


# -- synthetic data ------------------------------------------------------------


def blob_centers(num_classes: int, input_dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(num_classes, input_dim))
    return centers / np.linalg.norm(centers, axis=1, keepdims=True)


def synth_blobs(
    num_classes: int,
    input_dim: int,
    samples_per_class: int,
    spread: float,
    seed: int,
    centers_seed: int | None = None,
) -> Dataset:
    """Gaussian blobs around unit-norm class centers.

    ``centers_seed`` (default ``seed``) fixes the centers independently of the
    samples, so a train set and a disjoint test set can share one task.
    """
    if num_classes < 1 or input_dim < 1 or samples_per_class < 1 or spread < 0:
        raise InvalidParams("synth_blobs needs positive sizes and a non-negative spread")
    centers = blob_centers(num_classes, input_dim, seed if centers_seed is None else centers_seed)
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(num_classes), samples_per_class)
    features = centers[labels] + spread * rng.normal(size=(labels.size, input_dim))
    order = rng.permutation(labels.size)
    return Dataset(features[order], labels[order], num_classes)


def partition(ds: Dataset, n_nodes: int, samples_per_node: int, seed: int) -> list[np.ndarray]:
    """Disjoint IID shards of exactly ``samples_per_node`` indices each."""
    need = n_nodes * samples_per_node
    if need > len(ds):
        raise NotEnoughData(f"{n_nodes} shards of {samples_per_node} need {need} samples, have {len(ds)}")
    order = np.random.default_rng(seed).permutation(len(ds))
    return [order[i * samples_per_node:(i + 1) * samples_per_node] for i in range(n_nodes)]


# -- model -------------------------------------------------------------------


def param_dim(num_classes: int, input_dim: int) -> int:
    return num_classes * input_dim + num_classes


def flatten(model: Model) -> np.ndarray:
    return np.concatenate([model.weights.reshape(-1), model.bias.reshape(-1)])


def unflatten(params, num_classes: int, input_dim: int) -> Model:
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_dim(num_classes, input_dim),):
        raise DimensionMismatch(
            f"expected {param_dim(num_classes, input_dim)} parameters, got {params.shape}"
        )
    split = num_classes * input_dim
    return Model(params[:split].reshape(num_classes, input_dim).copy(), params[split:].copy())


def predict_logits(model: Model, features) -> np.ndarray:
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if X.shape[1] != model.weights.shape[1]:
        raise DimensionMismatch(f"model expects {model.weights.shape[1]} features, got {X.shape[1]}")
    return X @ model.weights.T + model.bias


def cross_entropy_loss(logits, labels) -> float:
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels).reshape(-1)
    if logits.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"{logits.shape[0]} logit rows for {labels.shape[0]} labels")
    # log_softmax subtracts the row max before exponentiating
    logp = log_softmax(logits, axis=1)
    return float(-logp[np.arange(labels.size), labels].mean())


def gradient(model: Model, features, labels) -> np.ndarray:
    """Flat gradient of the mean cross-entropy loss."""
    X = np.atleast_2d(np.asarray(features, dtype=np.float64))
    labels = np.asarray(labels).reshape(-1)
    if X.shape[0] != labels.shape[0]:
        raise DimensionMismatch(f"{X.shape[0]} samples for {labels.shape[0]} labels")
    residual = softmax(predict_logits(model, X), axis=1)
    residual[np.arange(labels.size), labels] -= 1.0
    residual /= labels.size
    return np.concatenate([(residual.T @ X).reshape(-1), residual.sum(axis=0)])


def adam_step(params, grad, state: OptimizerState, cfg: TrainingConfig):
    """One bias-corrected Adam update; returns ``(params, state)`` without mutating inputs."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise DimensionMismatch("params, gradient and optimizer state must share one shape")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    t = state.step_count + 1
    m = b1 * state.first_moment + (1 - b1) * grad
    v = b2 * state.second_moment + (1 - b2) * grad * grad
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return new, OptimizerState(m, v, t)


def local_train(
    params,
    ds: Dataset,
    shard: Sequence[int],
    cfg: TrainingConfig,
    stream: np.random.Generator,
) -> np.ndarray:
    """Train on one shard for ``cfg.epochs`` epochs from a fresh Adam state.

    The shard is reshuffled with ``stream`` every epoch and the final partial
    batch is kept.
    """
    shard = np.asarray(shard, dtype=np.int64)
    if shard.size == 0:
        raise EmptyShard("cannot train on an empty shard")
    params = np.asarray(params, dtype=np.float64).copy()
    C, D = ds.num_classes, ds.input_dim
    state = OptimizerState.fresh(params.size)
    for _ in range(cfg.epochs):
        order = stream.permutation(shard)
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grad = gradient(unflatten(params, C, D), ds.features[batch], ds.labels[batch])
            params, state = adam_step(params, grad, state, cfg)
    return params


def evaluate(params, testset: Dataset) -> float:
    """Fraction of samples whose argmax logit (lowest class on ties) is the label."""
    model = unflatten(params, testset.num_classes, testset.input_dim)
    pred = np.argmax(predict_logits(model, testset.features), axis=1)
    return float(np.mean(pred == testset.labels))


def evaluate_loss(params, testset: Dataset) -> float:
    model = unflatten(params, testset.num_classes, testset.input_dim)
    return cross_entropy_loss(predict_logits(model, testset.features), testset.labels)


class SoftmaxRegression(ClassifierMixin, BaseEstimator):
    """Multinomial logistic regression trained with mini-batch Adam.

    Parameters
    ----------
    epochs : int, default=2
    batch_size : int, default=32
    learning_rate : float, default=0.001
    init_scale : float, default=0.01
        Standard deviation of the Gaussian initial parameters.
    random_state : int, RandomState or None
        Seeds initialization and the per-epoch shuffles.

    Attributes
    ----------
    classes_ : ndarray of shape (n_classes,)
    coef_ : ndarray of shape (n_classes, n_features)
    intercept_ : ndarray of shape (n_classes,)
    """

    def __init__(self, epochs=2, batch_size=32, learning_rate=0.001, init_scale=0.01, random_state=None):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.init_scale = init_scale
        self.random_state = random_state

    def _config(self, n_samples):
        return TrainingConfig(
            epochs=self.epochs,
            batch_size=min(self.batch_size, n_samples),
            learning_rate=self.learning_rate,
            samples_per_node=n_samples,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        encoded = np.searchsorted(self.classes_, y)
        seed = check_random_state(self.random_state).randint(np.iinfo(np.int32).max)
        rng = np.random.default_rng(seed)
        C, D = self.classes_.size, X.shape[1]
        params = rng.normal(0.0, self.init_scale, size=param_dim(C, D))
        ds = Dataset(X, encoded, C)
        params = local_train(params, ds, np.arange(X.shape[0]), self._config(X.shape[0]), rng)
        self._set_params_vector(params, C, D)
        self.n_features_in_ = D
        return self

    def _set_params_vector(self, params, C, D):
        model = unflatten(params, C, D)
        self.coef_, self.intercept_ = model.weights, model.bias

    def get_params_vector(self) -> np.ndarray:
        check_is_fitted(self, "coef_")
        return flatten(Model(self.coef_, self.intercept_))

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return predict_logits(Model(self.coef_, self.intercept_), X)

    def predict_proba(self, X):
        return softmax(self.decision_function(X), axis=1)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

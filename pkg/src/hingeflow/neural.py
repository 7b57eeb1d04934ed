"""Two-layer ReLU network trained by mini-batch SGD with manual gradients.

The network is scores = W2 relu(W1 x + b1) + b2. Training supports the
pairwise-margin loss with a moving threshold (the multiclass counterpart
of the linear trainer) and two cross-entropy baselines. The threshold
fire condition is evaluated on each mini-batch's own hinge sum scaled by
the batch size, the only reading that never touches the full training
set inside a step.

Also houses the IDX image/label file readers (the standard big-endian
format MNIST ships in) and a subset loader.
"""

from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, softmax

from . import losses
from .exceptions import (
    InvalidHyperparameter,
    NonFinite,
    ShapeMismatch,
    UnknownName,
    ZeroGradient,
)
from .geometry import Dataset
from .optimizer import FINITE_LIMIT, Trace, TraceRow, _auto_recorded
from .validation import (
    check_count,
    check_nonnegative,
    check_positive,
)

MLP_LOSS_NAMES = ("multiclass_complete_hinge", "cross_entropy", "cross_entropy_normalized")


@dataclass
class MlpParams:
    """Weights of the 2-layer network; W1 is h x d, W2 is K x h."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        h, d = self.W1.shape
        if self.b1.shape != (h,):
            raise ShapeMismatch(f"b1 must have shape ({h},), got {self.b1.shape}")
        if self.W2.ndim != 2 or self.W2.shape[1] != h:
            raise ShapeMismatch(
                f"W2 must have {h} columns to match the hidden layer, got {self.W2.shape}"
            )
        if self.b2.shape != (self.W2.shape[0],):
            raise ShapeMismatch(
                f"b2 must have shape ({self.W2.shape[0]},), got {self.b2.shape}"
            )

    @property
    def h(self) -> int:
        return self.W1.shape[0]

    @property
    def d(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def copy(self) -> "MlpParams":
        return MlpParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())


@dataclass(frozen=True)
class MiniBatch:
    """One batch of input rows and integer class labels."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        inputs = np.ascontiguousarray(np.asarray(self.inputs, dtype=np.float64))
        labels = np.asarray(self.labels, dtype=np.int64)
        if inputs.ndim != 2 or inputs.shape[0] < 1:
            raise ShapeMismatch("inputs must be a non-empty 2-D matrix")
        if labels.shape != (inputs.shape[0],):
            raise ShapeMismatch(
                f"labels must have shape ({inputs.shape[0]},), got {labels.shape}"
            )
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.inputs.shape[0]


def init_params(d: int, hidden: int, n_classes: int, rng: np.random.Generator) -> MlpParams:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init for each layer."""
    bound1 = 1.0 / np.sqrt(d)
    bound2 = 1.0 / np.sqrt(hidden)
    return MlpParams(
        W1=rng.uniform(-bound1, bound1, size=(hidden, d)),
        b1=rng.uniform(-bound1, bound1, size=hidden),
        W2=rng.uniform(-bound2, bound2, size=(n_classes, hidden)),
        b2=rng.uniform(-bound2, bound2, size=n_classes),
    )


def forward(params: MlpParams, batch: MiniBatch) -> np.ndarray:
    """Score matrix, one row per batch row, one column per class."""
    if batch.inputs.shape[1] != params.d:
        raise ShapeMismatch(
            f"batch has {batch.inputs.shape[1]} features, network expects {params.d}"
        )
    hidden = np.maximum(batch.inputs @ params.W1.T + params.b1, 0.0)
    return hidden @ params.W2.T + params.b2


@dataclass(frozen=True)
class MlpGrads:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.W1, self.b1, self.W2, self.b2)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(float(np.sum(a * a)) for a in self.arrays())))

    def scaled(self, factor: float) -> "MlpGrads":
        return MlpGrads(*(a * factor for a in self.arrays()))


def backward(params: MlpParams, batch: MiniBatch, grad_scores: np.ndarray) -> MlpGrads:
    """Exact parameter gradients of sum(grad_scores * scores).

    The ReLU subgradient at exactly zero pre-activation is taken as zero.
    """
    if batch.inputs.shape[1] != params.d:
        raise ShapeMismatch(
            f"batch has {batch.inputs.shape[1]} features, network expects {params.d}"
        )
    grad_scores = np.asarray(grad_scores, dtype=np.float64)
    expected = (batch.size, params.n_classes)
    if grad_scores.shape != expected:
        raise ShapeMismatch(f"grad_scores must have shape {expected}, got {grad_scores.shape}")
    pre = batch.inputs @ params.W1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    dW2 = grad_scores.T @ hidden
    db2 = grad_scores.sum(axis=0)
    d_hidden = (grad_scores @ params.W2) * (pre > 0.0)
    dW1 = d_hidden.T @ batch.inputs
    db1 = d_hidden.sum(axis=0)
    return MlpGrads(W1=dW1, b1=db1, W2=dW2, b2=db2)


@dataclass(frozen=True)
class MlpConfig:
    """Hyperparameters of one network training run.

    eta may be zero (parameters stay frozen); the moving-threshold loss
    additionally requires eta > 0 because its value contains alpha/eta.
    record_every None means every max(1, max_iters // 200) steps; test
    error is evaluated only at recorded steps.
    """

    eta: float
    alpha: float = 1.0
    zeta: float = 0.0
    max_iters: int = 1000
    batch_size: int = 100
    hidden: int = 128
    seed: int = 0
    record_every: int | None = None
    test_data: Dataset | None = None

    def __post_init__(self):
        object.__setattr__(self, "eta", check_nonnegative(self.eta, "eta"))
        object.__setattr__(self, "alpha", check_positive(self.alpha, "alpha"))
        object.__setattr__(self, "zeta", check_nonnegative(self.zeta, "zeta"))
        object.__setattr__(self, "max_iters", check_count(self.max_iters, "max_iters"))
        object.__setattr__(self, "batch_size", check_count(self.batch_size, "batch_size"))
        object.__setattr__(self, "hidden", check_count(self.hidden, "hidden"))
        if self.record_every is not None:
            object.__setattr__(
                self, "record_every", check_count(self.record_every, "record_every")
            )


def class_indices(data: Dataset) -> np.ndarray:
    """Labels as 0-based class indices; binary +-1 labels map to {0, 1}."""
    if data.is_binary:
        return (data.labels > 0).astype(np.int64)
    return data.labels.astype(np.int64)


def _batch_error(scores: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(scores, axis=1) != labels))


def _min_pairwise_margin(scores: np.ndarray, labels: np.ndarray) -> float:
    own = scores[np.arange(scores.shape[0]), labels]
    masked = scores.copy()
    masked[np.arange(scores.shape[0]), labels] = -np.inf
    return float(np.min(own - masked.max(axis=1)))


def _cross_entropy_eval(scores: np.ndarray, labels: np.ndarray):
    b = scores.shape[0]
    rows = np.arange(b)
    risk = float(np.mean(logsumexp(scores, axis=1) - scores[rows, labels]))
    grad = softmax(scores, axis=1)
    grad[rows, labels] -= 1.0
    return risk, grad / b


def test_error(params: MlpParams, data: Dataset) -> float:
    """Fraction of points whose argmax score misses the label."""
    labels = class_indices(data)
    scores = forward(params, MiniBatch(data.points, labels))
    return _batch_error(scores, labels)


def _check_params_finite(params: MlpParams, t: int) -> None:
    for a in params.arrays():
        if not np.all(np.isfinite(a)) or (a.size and np.abs(a).max() > FINITE_LIMIT):
            raise NonFinite(
                f"network parameters exceeded |entry| = {FINITE_LIMIT:g} at t={t}; "
                "eta/alpha are misconfigured for this dataset"
            )


def train_mlp(data: Dataset, loss: str, config: MlpConfig) -> tuple[Trace, MlpParams]:
    """Mini-batch SGD with constant step size and a full reshuffle per epoch.

    Recorded rows reflect the state after the step, evaluated on that
    step's own mini-batch; norm_u is the global parameter norm. The
    threshold beta increments by alpha whenever the batch hinge sum,
    scaled by the batch size, is at most zeta.
    """
    if loss not in MLP_LOSS_NAMES:
        raise InvalidHyperparameter(f"loss must be one of {MLP_LOSS_NAMES}, got {loss!r}")
    is_hinge = loss == "multiclass_complete_hinge"
    if is_hinge and config.eta <= 0.0:
        raise InvalidHyperparameter(
            "the moving-threshold loss contains alpha/eta and requires eta > 0"
        )
    labels = class_indices(data)
    n_classes = int(labels.max()) + 1
    if config.test_data is not None:
        n_classes = max(n_classes, int(class_indices(config.test_data).max()) + 1)
    n_classes = max(n_classes, 2)
    rng = np.random.default_rng(config.seed)
    params = init_params(data.d, config.hidden, n_classes, rng)
    X = data.points
    n = data.n
    stride = config.record_every or max(1, config.max_iters // 200)
    trace = Trace()
    beta = 0.0
    n_updates = 0
    order = rng.permutation(n)
    cursor = 0
    for t in range(1, config.max_iters + 1):
        if cursor >= n:
            order = rng.permutation(n)
            cursor = 0
        take = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size
        batch = MiniBatch(X[take], labels[take])
        scores = forward(params, batch)
        fired = False
        if is_hinge:
            evaluation = losses.multiclass_complete_hinge(
                scores, batch.labels, beta, config.alpha, config.eta, config.zeta
            )
            risk = evaluation.risk
            grad_scores = evaluation.grad_scores
            fired = evaluation.beta_fires
        else:
            risk, grad_scores = _cross_entropy_eval(scores, batch.labels)
        if not np.isfinite(risk):
            raise NonFinite(f"training risk became non-finite at t={t}")
        grads = backward(params, batch, grad_scores)
        if loss == "cross_entropy_normalized":
            norm = grads.global_norm()
            if norm == 0.0:
                raise ZeroGradient("cannot normalize a zero gradient")
            grads = grads.scaled(1.0 / norm)
        if config.eta != 0.0:
            params.W1 -= config.eta * grads.W1
            params.b1 -= config.eta * grads.b1
            params.W2 -= config.eta * grads.W2
            params.b2 -= config.eta * grads.b2
        if fired:
            n_updates += 1
            beta = config.alpha * n_updates
            trace.beta_update_times.append(t)
        if t % stride == 0 or t == config.max_iters:
            _check_params_finite(params, t)
            post_scores = forward(params, batch)
            if is_hinge:
                post_eval = losses.multiclass_complete_hinge(
                    post_scores, batch.labels, beta, config.alpha, config.eta, config.zeta
                )
                row_risk = post_eval.risk
            else:
                row_risk, _ = _cross_entropy_eval(post_scores, batch.labels)
            err = test_error(params, config.test_data) if config.test_data is not None else None
            trace.rows.append(TraceRow(
                t=t,
                beta=float(beta),
                norm_u=params.global_norm(),
                margin_gap=None,
                cosine_gap=None,
                direction_distance=None,
                active_size=int(batch.size),
                risk=float(row_risk),
                test_error=err,
                min_margin=_min_pairwise_margin(post_scores, batch.labels),
            ))
    trace.final_beta = beta
    return trace, params


IDX_IMAGE_MAGIC = 2051
IDX_LABEL_MAGIC = 2049


def _open_maybe_gzip(path: Path):
    if str(path).endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx_images(path) -> np.ndarray:
    """n x (rows*cols) uint8 matrix from a big-endian IDX image file."""
    with _open_maybe_gzip(Path(path)) as fh:
        header = fh.read(16)
        if len(header) != 16:
            raise ShapeMismatch(f"{path}: truncated IDX image header")
        magic, count, rows, cols = struct.unpack(">iiii", header)
        if magic != IDX_IMAGE_MAGIC:
            raise ShapeMismatch(f"{path}: bad IDX image magic {magic}, expected {IDX_IMAGE_MAGIC}")
        raw = fh.read(count * rows * cols)
        if len(raw) != count * rows * cols:
            raise ShapeMismatch(f"{path}: truncated IDX image payload")
        return np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)


def read_idx_labels(path) -> np.ndarray:
    """n uint8 labels from a big-endian IDX label file."""
    with _open_maybe_gzip(Path(path)) as fh:
        header = fh.read(8)
        if len(header) != 8:
            raise ShapeMismatch(f"{path}: truncated IDX label header")
        magic, count = struct.unpack(">ii", header)
        if magic != IDX_LABEL_MAGIC:
            raise ShapeMismatch(f"{path}: bad IDX label magic {magic}, expected {IDX_LABEL_MAGIC}")
        raw = fh.read(count)
        if len(raw) != count:
            raise ShapeMismatch(f"{path}: truncated IDX label payload")
        return np.frombuffer(raw, dtype=np.uint8)


_MNIST_FILES = {
    "train_images": ("train-images-idx3-ubyte", "train-images.idx3-ubyte"),
    "train_labels": ("train-labels-idx1-ubyte", "train-labels.idx1-ubyte"),
    "test_images": ("t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte"),
    "test_labels": ("t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte"),
}


def _find_idx_file(directory: Path, names: tuple[str, ...]) -> Path:
    for name in names:
        for candidate in (directory / name, directory / (name + ".gz")):
            if candidate.is_file():
                return candidate
    raise UnknownName(
        f"none of {', '.join(names)} (optionally .gz) found under {directory}"
    )


def load_mnist_subset(directory, n_train: int = 8000, n_test: int = 2000) -> tuple[Dataset, Dataset]:
    """First n_train/n_test examples as datasets with pixels scaled to [0,1]."""
    directory = Path(directory)
    check_count(n_train, "n_train")
    check_count(n_test, "n_test")
    train_x = read_idx_images(_find_idx_file(directory, _MNIST_FILES["train_images"]))
    train_y = read_idx_labels(_find_idx_file(directory, _MNIST_FILES["train_labels"]))
    test_x = read_idx_images(_find_idx_file(directory, _MNIST_FILES["test_images"]))
    test_y = read_idx_labels(_find_idx_file(directory, _MNIST_FILES["test_labels"]))
    if train_x.shape[0] != train_y.shape[0] or test_x.shape[0] != test_y.shape[0]:
        raise ShapeMismatch("image and label counts disagree")
    if n_train > train_x.shape[0] or n_test > test_x.shape[0]:
        raise ShapeMismatch(
            f"requested {n_train}/{n_test} examples, files hold "
            f"{train_x.shape[0]}/{test_x.shape[0]}"
        )
    train = Dataset(train_x[:n_train] / 255.0, train_y[:n_train].astype(np.int64),
                    name="mnist-train", allow_duplicates=True)
    test = Dataset(test_x[:n_test] / 255.0, test_y[:n_test].astype(np.int64),
                   name="mnist-test", allow_duplicates=True)
    return train, test

"""Trainable classifier: optional tanh hidden layer + linear last-layer head.

The feature stage is either the identity or a single hidden layer with a tanh
nonlinearity; the head is the stack of per-class linear functions whose scores
drive both prediction (argmax) and margin scoring.  ``forward`` exposes the
penultimate features together with the logits because the margin scores live
in feature space.

Gradients are exact analytic gradients of the mean cross-entropy; plain SGD is
the only update rule.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Matrix, RandomStream, as_matrix, as_vector, log_softmax_rows

ACTIVATION = "tanh"  # the single supported feature-stage nonlinearity


@dataclass(frozen=True)
class LinearHead:
    """Last-layer classifier: weights (n_classes, feat_dim), biases (n_classes,)."""

    weights: np.ndarray
    biases: np.ndarray

    def __post_init__(self):
        w = as_matrix(self.weights)
        b = as_vector(self.biases, length=w.shape[0])
        if w.shape[0] < 2:
            raise ConfigError("a classifier head needs at least 2 classes")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class HiddenLayer:
    weights: np.ndarray  # (hidden_dim, input_dim)
    biases: np.ndarray  # (hidden_dim,)
    activation: str = ACTIVATION

    def __post_init__(self):
        w = as_matrix(self.weights)
        b = as_vector(self.biases, length=w.shape[0])
        if self.activation != ACTIVATION:
            raise ConfigError(f"unsupported activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)


@dataclass(frozen=True)
class NetworkParams:
    """Full parameter set; ``hidden is None`` means identity feature stage."""

    hidden: HiddenLayer | None
    head: LinearHead

    def __post_init__(self):
        if self.hidden is not None and self.hidden.weights.shape[0] != self.head.feat_dim:
            raise DimensionError(
                f"hidden output dim {self.hidden.weights.shape[0]} does not feed "
                f"head feat_dim {self.head.feat_dim}"
            )

    @property
    def input_dim(self) -> int:
        if self.hidden is None:
            return self.head.feat_dim
        return self.hidden.weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.head.n_classes


@dataclass(frozen=True)
class ForwardResult:
    """Penultimate features and logits for a batch of inputs, row-aligned."""

    features: Matrix  # (batch, feat_dim)
    logits: Matrix  # (batch, n_classes)


@dataclass(frozen=True)
class ArchSpec:
    """Architecture description: input_dim -> [hidden_dim ->] n_classes."""

    input_dim: int
    n_classes: int
    hidden_dim: int | None = None

    def __post_init__(self):
        if self.input_dim < 1 or self.n_classes < 2:
            raise ConfigError("input_dim must be >= 1 and n_classes >= 2")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1 when present")


def forward(params: NetworkParams, inputs: Matrix) -> ForwardResult:
    """Forward pass returning per-row penultimate features and logits."""
    x = as_matrix(inputs)
    if x.shape[1] != params.input_dim:
        raise DimensionError(
            f"inputs have {x.shape[1]} columns, network expects {params.input_dim}"
        )
    if params.hidden is None:
        feats = x
    else:
        feats = np.tanh(x @ params.hidden.weights.T + params.hidden.biases)
    logits = feats @ params.head.weights.T + params.head.biases
    return ForwardResult(features=feats, logits=logits)


def _check_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 1 or labels.shape[0] == 0:
        raise DimensionError("labels must be a non-empty 1-D sequence")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ConfigError(
            f"label out of range [0, {n_classes}): {labels.min()}..{labels.max()}"
        )
    return labels


def grad_from_forward(
    params: NetworkParams,
    inputs: Matrix,
    fr: ForwardResult,
    labels,
) -> tuple[float, NetworkParams]:
    """Mean cross-entropy loss and its gradient, reusing a cached forward pass.

    ``fr`` must be the forward result of ``inputs`` under ``params``; this is
    what lets the trainer pay only the pool-sized forward cost per step.
    """
    labels = _check_labels(labels, params.n_classes)
    inputs = np.asarray(inputs, dtype=np.float64)
    n = labels.shape[0]
    if inputs.shape[0] != n or fr.logits.shape[0] != n:
        raise DimensionError("inputs, forward rows and labels must agree in length")

    logp = log_softmax_rows(fr.logits)
    loss = float(-logp[np.arange(n), labels].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    d_head_w = dlogits.T @ fr.features
    d_head_b = dlogits.sum(axis=0)

    if params.hidden is None:
        grad_hidden = None
    else:
        dfeat = dlogits @ params.head.weights
        dpre = dfeat * (1.0 - fr.features**2)  # tanh'
        grad_hidden = HiddenLayer(
            weights=dpre.T @ inputs, biases=dpre.sum(axis=0)
        )
    grad = NetworkParams(
        hidden=grad_hidden, head=LinearHead(weights=d_head_w, biases=d_head_b)
    )
    return loss, grad


def loss_and_grad(params: NetworkParams, inputs: Matrix, labels) -> tuple[float, NetworkParams]:
    """Mean cross-entropy over the batch and its exact analytic gradient."""
    fr = forward(params, inputs)
    return grad_from_forward(params, inputs, fr, labels)


def sgd_step(params: NetworkParams, grad: NetworkParams, lr: float) -> NetworkParams:
    """params - lr * grad, elementwise; shapes must match exactly."""
    if lr < 0:
        raise ConfigError(f"learning rate must be >= 0, got {lr}")
    if (params.hidden is None) != (grad.hidden is None):
        raise DimensionError("gradient structure does not match parameters")
    if params.head.weights.shape != grad.head.weights.shape:
        raise DimensionError("head gradient shape mismatch")
    hidden = None
    if params.hidden is not None:
        if params.hidden.weights.shape != grad.hidden.weights.shape:
            raise DimensionError("hidden gradient shape mismatch")
        hidden = HiddenLayer(
            weights=params.hidden.weights - lr * grad.hidden.weights,
            biases=params.hidden.biases - lr * grad.hidden.biases,
        )
    head = LinearHead(
        weights=params.head.weights - lr * grad.head.weights,
        biases=params.head.biases - lr * grad.head.biases,
    )
    return NetworkParams(hidden=hidden, head=head)


def init_params(spec: ArchSpec, stream: RandomStream) -> NetworkParams:
    """Zero-mean gaussian weights scaled by 1/sqrt(fan_in); zero biases."""
    hidden = None
    feat_dim = spec.input_dim
    if spec.hidden_dim is not None:
        scale = 1.0 / np.sqrt(spec.input_dim)
        w1 = stream.gaussian(spec.hidden_dim * spec.input_dim).reshape(
            spec.hidden_dim, spec.input_dim
        )
        hidden = HiddenLayer(weights=w1 * scale, biases=np.zeros(spec.hidden_dim))
        feat_dim = spec.hidden_dim
    scale = 1.0 / np.sqrt(feat_dim)
    w = stream.gaussian(spec.n_classes * feat_dim).reshape(spec.n_classes, feat_dim)
    head = LinearHead(weights=w * scale, biases=np.zeros(spec.n_classes))
    return NetworkParams(hidden=hidden, head=head)


_CKPT_MAGIC = b"STCKPT01"


def save_params(params: NetworkParams, path) -> None:
    """Binary checkpoint: magic, little-endian u32 dims, row-major float64 data."""
    hidden_dim = 0 if params.hidden is None else params.hidden.weights.shape[0]
    with open(path, "wb") as f:
        f.write(_CKPT_MAGIC)
        f.write(struct.pack("<III", params.input_dim, hidden_dim, params.n_classes))
        if params.hidden is not None:
            f.write(params.hidden.weights.astype("<f8").tobytes())
            f.write(params.hidden.biases.astype("<f8").tobytes())
        f.write(params.head.weights.astype("<f8").tobytes())
        f.write(params.head.biases.astype("<f8").tobytes())


def load_params(path) -> NetworkParams:
    """Read a checkpoint written by :func:`save_params`; round-trip exact."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:8] != _CKPT_MAGIC:
        raise DimensionError(f"not a parameter checkpoint: {path}")
    input_dim, hidden_dim, n_classes = struct.unpack("<III", blob[8:20])
    off = 20

    def take(n):
        nonlocal off
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=off).astype(np.float64)
        off += 8 * n
        return arr

    hidden = None
    feat_dim = input_dim
    if hidden_dim > 0:
        w1 = take(hidden_dim * input_dim).reshape(hidden_dim, input_dim)
        b1 = take(hidden_dim)
        hidden = HiddenLayer(weights=w1, biases=b1)
        feat_dim = hidden_dim
    w = take(n_classes * feat_dim).reshape(n_classes, feat_dim)
    b = take(n_classes)
    if off != len(blob):
        raise DimensionError(f"checkpoint has {len(blob) - off} trailing bytes: {path}")
    return NetworkParams(hidden=hidden, head=LinearHead(weights=w, biases=b))

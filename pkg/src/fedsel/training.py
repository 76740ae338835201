"""Client-side model: regularized logistic regression trained by mini-batch GD.

The model is a flat weight vector of length d+1 with the bias last. The bias
is excluded from the L2 penalty. All stochasticity (shuffling, optional
per-step noise) comes from per-epoch derived generators so training can be
resumed from a checkpoint bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import InvalidArgumentError
from .rngstream import NOISE, TRAIN, rng_for


@dataclass(frozen=True)
class ModelParams:
    """Flat parameter vector; last entry is the bias."""

    weights: np.ndarray

    def __post_init__(self):
        if self.weights.ndim != 1:
            raise InvalidArgumentError("weights must be a flat vector")
        if not np.all(np.isfinite(self.weights)):
            raise InvalidArgumentError("weights contain non-finite values")
        self.weights.flags.writeable = False

    @classmethod
    def zeros(cls, dim: int) -> "ModelParams":
        return cls(np.zeros(dim + 1))

    def __len__(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class Gradient:
    """Gradient (or parameter delta) aligned with ModelParams."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise InvalidArgumentError("gradient must be a flat vector")
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgumentError("gradient contains non-finite values")
        self.values.flags.writeable = False

    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


@dataclass(frozen=True)
class TrainStats:
    epochs_run: int
    initial_loss: float
    final_loss: float
    samples: int


def _check_dims(params: ModelParams, data: Dataset) -> None:
    if len(params) != data.d + 1:
        raise InvalidArgumentError(
            "params length %d does not match d+1=%d" % (len(params), data.d + 1)
        )


def _logits(weights: np.ndarray, features: np.ndarray) -> np.ndarray:
    return features @ weights[:-1] + weights[-1]


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Stable for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(params: ModelParams, data: Dataset, l2: float = 0.0) -> float:
    """Mean log-loss plus (l2/2)*||w||^2 over the weight block."""
    z = _logits(params.weights, data.features)
    # log(1+e^z) - y*z, computed via logaddexp for stability.
    per_row = np.logaddexp(0.0, z) - data.labels * z
    reg = 0.5 * l2 * float(params.weights[:-1] @ params.weights[:-1])
    return float(np.mean(per_row)) + reg


def compute_gradient(params: ModelParams, data: Dataset, l2: float = 0.0) -> Gradient:
    """Exact mean gradient of the regularized logistic loss."""
    if data.m < 1:
        raise InvalidArgumentError("dataset is empty")
    _check_dims(params, data)
    if l2 < 0:
        raise InvalidArgumentError("l2 must be nonnegative")
    z = _logits(params.weights, data.features)
    residual = _sigmoid(z) - data.labels
    grad = np.empty(len(params))
    grad[:-1] = data.features.T @ residual / data.m + l2 * params.weights[:-1]
    grad[-1] = float(np.mean(residual))
    return Gradient(grad)


def local_train(
    params: ModelParams,
    data: Dataset,
    epochs: int,
    lr: float,
    batch_size: int,
    l2: float,
    rng_seed: int,
    start_epoch: int = 0,
    noise_sigma: float = 0.0,
) -> tuple[ModelParams, TrainStats]:
    """Mini-batch gradient descent with seeded per-epoch shuffling.

    start_epoch resumes training mid-run (checkpoint replay): epochs before
    it are skipped but their RNG streams are untouched, so the remaining
    epochs are bit-identical to an uninterrupted run. noise_sigma > 0 adds
    per-step Gaussian noise to each batch gradient (per-step DP variant).
    """
    if data.m < 1:
        raise InvalidArgumentError("dataset is empty")
    if epochs < 1:
        raise InvalidArgumentError("epochs must be >= 1")
    if batch_size < 1:
        raise InvalidArgumentError("batch_size must be >= 1")
    if not 0 <= start_epoch <= epochs:
        raise InvalidArgumentError("start_epoch out of range")
    _check_dims(params, data)

    initial_loss = logistic_loss(params, data)
    w = params.weights.copy()
    for epoch in range(start_epoch, epochs):
        order = rng_for(rng_seed, TRAIN, epoch).permutation(data.m)
        noise_rng = rng_for(rng_seed, NOISE, epoch) if noise_sigma > 0 else None
        for start in range(0, data.m, batch_size):
            batch = order[start : start + batch_size]
            bf = data.features[batch]
            residual = _sigmoid(bf @ w[:-1] + w[-1]) - data.labels[batch]
            g = np.empty(w.shape[0])
            g[:-1] = bf.T @ residual / batch.shape[0] + l2 * w[:-1]
            g[-1] = residual.mean()
            if noise_rng is not None:
                g = g + noise_rng.standard_normal(g.shape[0]) * noise_sigma
            w = w - lr * g
    out = ModelParams(w)
    return out, TrainStats(
        epochs_run=epochs - start_epoch,
        initial_loss=initial_loss,
        final_loss=logistic_loss(out, data),
        samples=data.m,
    )


def evaluate(params: ModelParams, data: Dataset) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (mean log-loss, class-1 probabilities, labels) on a dataset."""
    if data.m < 1:
        raise InvalidArgumentError("dataset is empty")
    _check_dims(params, data)
    scores = _sigmoid(_logits(params.weights, data.features))
    loss = logistic_loss(params, data)
    return loss, scores, data.labels

"""Fully-connected sigmoid autoencoder with hand-written backpropagation.

Every layer, including the decoder output, computes ``sigmoid(W a + b)``
with ``W`` stored as (out x in). The loss of a row is the mean squared
difference between input and reconstruction; batch loss is the mean of
row losses.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import NumericError
from .transforms import FeatureMatrix

logger = logging.getLogger(__name__)

Layer = tuple[np.ndarray, np.ndarray]


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class AutoencoderModel:
    encoder_layers: list[Layer]
    decoder_layers: list[Layer]
    activation: str = "sigmoid"

    def __post_init__(self):
        layers = self.layers
        if not self.encoder_layers or not self.decoder_layers:
            raise ValueError("encoder and decoder need at least one layer each")
        for (w, b) in layers:
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError("layer weights must be (out x in) with a matching bias")
        for (w1, _), (w2, _) in zip(layers, layers[1:]):
            if w2.shape[1] != w1.shape[0]:
                raise ValueError("layer shapes do not chain")
        if layers[-1][0].shape[0] != self.input_dim:
            raise ValueError("decoder output width must equal input width")
        if self.latent_dim >= self.input_dim:
            raise ValueError("latent width must be smaller than input width")

    @property
    def layers(self) -> list[Layer]:
        return list(self.encoder_layers) + list(self.decoder_layers)

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0][0].shape[1]

    @property
    def latent_dim(self) -> int:
        return self.encoder_layers[-1][0].shape[0]

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer]

    def copy(self) -> "AutoencoderModel":
        return AutoencoderModel(
            [(w.copy(), b.copy()) for w, b in self.encoder_layers],
            [(w.copy(), b.copy()) for w, b in self.decoder_layers],
            self.activation,
        )

    def to_dict(self) -> dict:
        def dump(layers):
            return [{"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()} for w, b in layers]

        return {
            "activation": self.activation,
            "input_dim": self.input_dim,
            "latent_dim": self.latent_dim,
            "encoder": dump(self.encoder_layers),
            "decoder": dump(self.decoder_layers),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderModel":
        def load(layers):
            return [
                (np.asarray(l["weights"], dtype=np.float64).reshape(l["shape"]), np.asarray(l["bias"], dtype=np.float64))
                for l in layers
            ]

        return cls(load(d["encoder"]), load(d["decoder"]), d.get("activation", "sigmoid"))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden_widths: tuple[int, ...] = (32,)
    latent_dim: int = 16
    validation_fraction: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "hidden_widths": list(self.hidden_widths),
            "latent_dim": self.latent_dim,
            "validation_fraction": self.validation_fraction,
        }


@dataclass
class TrainTrace:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    initial_train_loss: float = float("nan")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "train_loss", "val_loss"])
            for epoch, (tr, va) in enumerate(zip(self.train_loss, self.val_loss), start=1):
                writer.writerow([epoch, repr(tr), repr(va)])


def init_model(n: int, hidden_widths: Sequence[int], m: int, seed: int = 0) -> AutoencoderModel:
    """Encoder n -> hidden... -> m, decoder mirrored back to n.

    Weights are U(-a, a) with a = sqrt(3 / fan_in); biases start at zero.
    """
    if m >= n:
        raise ValueError(f"latent width m={m} must be smaller than input width n={n}")
    if m < 1:
        raise ValueError("latent width must be positive")
    rng = np.random.default_rng(seed)
    widths = [n, *hidden_widths, m, *reversed(hidden_widths), n]
    layers = []
    for fan_in, fan_out in zip(widths, widths[1:]):
        limit = np.sqrt(3.0 / fan_in)
        layers.append((rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    depth = len(hidden_widths) + 1
    return AutoencoderModel(layers[:depth], layers[depth:])


def _activations(model: AutoencoderModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for w, b in model.layers:
        acts.append(sigmoid(acts[-1] @ w.T + b))
    return acts


def forward(model: AutoencoderModel, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Latent code and reconstruction for one row (or a batch of rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise ValueError(f"expected input width {model.input_dim}, got {x.shape[-1]}")
    acts = _activations(model, x)
    return acts[len(model.encoder_layers)], acts[-1]


def reconstruction_loss(x: np.ndarray, x_hat: np.ndarray) -> float:
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def gradients(model: AutoencoderModel, batch: np.ndarray) -> list[Layer]:
    """Analytic gradient of the mean batch loss, one (dW, db) per layer."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    if batch.shape[0] == 0:
        raise ValueError("empty batch")
    acts = _activations(model, batch)
    rows, n = batch.shape
    delta = 2.0 * (acts[-1] - batch) / (rows * n) * acts[-1] * (1.0 - acts[-1])
    grads: list[Layer] = []
    layers = model.layers
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads.append((delta.T @ acts[i], delta.sum(axis=0)))
        if i:
            delta = (delta @ w) * acts[i] * (1.0 - acts[i])
    grads.reverse()
    return grads


def _mean_loss(model: AutoencoderModel, x: np.ndarray, chunk: int = 8192) -> float:
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for start in range(0, len(x), chunk):
        part = x[start:start + chunk]
        total += float(np.sum((forward(model, part)[1] - part) ** 2))
    return total / x.size


def train(model: AutoencoderModel, data: FeatureMatrix | np.ndarray, cfg: TrainConfig,
          labels: np.ndarray | None = None) -> tuple[AutoencoderModel, TrainTrace]:
    """Mini-batch training on normal rows; returns a new model and the trace.

    When ``labels`` is given only rows labelled 0 are used. A fraction
    ``cfg.validation_fraction`` of them is held out for the validation loss.
    """
    x = data.values if isinstance(data, FeatureMatrix) else np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(f"training data must have {model.input_dim} columns")
    if labels is not None:
        x = x[np.asarray(labels) == 0]
    if len(x) == 0:
        raise ValueError("no normal rows to train on")

    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(x))
    n_val = int(round(cfg.validation_fraction * len(x)))
    if n_val >= len(x):
        n_val = len(x) - 1
    val, fit = x[np.sort(order[:n_val])], x[np.sort(order[n_val:])]

    model = model.copy()
    params = model.params()
    m1 = [np.zeros_like(p) for p in params]
    m2 = [np.zeros_like(p) for p in params]
    step = 0
    trace = TrainTrace(initial_train_loss=_mean_loss(model, fit))

    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(len(fit))
        for start in range(0, len(fit), cfg.batch_size):
            batch = fit[perm[start:start + cfg.batch_size]]
            grads = [g for layer in gradients(model, batch) for g in layer]
            step += 1
            if cfg.optimizer == "sgd":
                for p, g in zip(params, grads):
                    p -= cfg.learning_rate * g
                continue
            c1 = 1.0 - cfg.beta1 ** step
            c2 = 1.0 - cfg.beta2 ** step
            for p, g, a, v in zip(params, grads, m1, m2):
                a *= cfg.beta1
                a += (1.0 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1.0 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (a / c1) / (np.sqrt(v / c2) + cfg.eps)
        train_loss = _mean_loss(model, fit)
        val_loss = _mean_loss(model, val) if len(val) else train_loss
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise NumericError(f"non-finite loss at epoch {epoch} (train={train_loss}, val={val_loss})")
        trace.train_loss.append(train_loss)
        trace.val_loss.append(val_loss)
        logger.info("epoch %d/%d train_loss=%.6g val_loss=%.6g", epoch, cfg.epochs, train_loss, val_loss)
    return model, trace


def reconstruction_errors(model: AutoencoderModel, data: FeatureMatrix | np.ndarray) -> np.ndarray:
    """Per-row mean squared reconstruction error, in input order."""
    x = data.values if isinstance(data, FeatureMatrix) else np.atleast_2d(np.asarray(data, dtype=np.float64))
    if x.shape[1] != model.input_dim:
        raise ValueError(f"expected {model.input_dim} columns, got {x.shape[1]}")
    if len(x) == 0:
        return np.zeros(0)
    return np.mean((forward(model, x)[1] - x) ** 2, axis=1)


def save_model(model: AutoencoderModel, path: str | Path, cfg: TrainConfig | None = None) -> None:
    doc = model.to_dict()
    if cfg is not None:
        doc["config"] = cfg.to_dict()
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_model(path: str | Path) -> AutoencoderModel:
    return AutoencoderModel.from_dict(json.loads(Path(path).read_text()))

"""MLP failure-probability surrogate: training, prediction and input saliency."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateData, DimensionMismatch, FormatError

ACTIVATION = "relu-sigmoid"


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Feed-forward net: ReLU hidden layers, one sigmoid output unit.

    ``weights[i]`` has shape ``(layers[i], layers[i + 1])``.
    """

    weights: tuple
    biases: tuple
    history: tuple = field(default=(), compare=False)

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float).reshape(-1) for b in self.biases)
        if not ws or len(ws) != len(bs):
            raise DimensionMismatch("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or w.shape[1] != b.shape[0]:
                raise DimensionMismatch(f"layer {i}: weight {w.shape} vs bias {b.shape}")
            if i and ws[i - 1].shape[1] != w.shape[0]:
                raise DimensionMismatch(f"layer {i}: expects {w.shape[0]} inputs, got {ws[i - 1].shape[1]}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite weights")
        if ws[-1].shape[1] != 1:
            raise DimensionMismatch("output layer must have exactly one unit")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layers(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def final_loss(self) -> float | None:
        return self.history[-1] if self.history else None


def _sigmoid(z):
    # split branches keep exp() from overflowing
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _as_batch(model: MlpModel, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_width:
        raise DimensionMismatch(f"input width {X.shape[-1]} != model input width {model.input_width}")
    return X, single


def _forward(model: MlpModel, X: np.ndarray):
    """Return the pre-activations of every layer (last one is the output logit)."""
    pre = []
    h = X
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(model.weights) - 1 else z
    return pre


def predict(model: MlpModel, x):
    """Failure probability for one encoded vector (float) or a batch (1-D array)."""
    X, single = _as_batch(model, x)
    p = _sigmoid(_forward(model, X)[-1][:, 0])
    return float(p[0]) if single else p


def input_gradient(model: MlpModel, x) -> np.ndarray:
    """Signed gradient of the predicted probability w.r.t. each encoded input."""
    X, single = _as_batch(model, x)
    pre = _forward(model, X)
    p = _sigmoid(pre[-1])
    delta = p * (1.0 - p)
    for i in range(len(model.weights) - 1, 0, -1):
        delta = (delta @ model.weights[i].T) * (pre[i - 1] > 0)
    grad = delta @ model.weights[0].T
    return grad[0] if single else grad


def aggregate_saliency(grad: np.ndarray, blocks=None) -> np.ndarray:
    """Sum |gradient| over each feature block and normalize rows to sum to 1.

    Rows whose gradient is identically zero get uniform weights.
    """
    g = np.abs(np.atleast_2d(grad))
    if blocks is None:
        per_feature = g
    else:
        per_feature = np.stack([g[:, b].sum(axis=1) for b in blocks], axis=1)
    total = per_feature.sum(axis=1, keepdims=True)
    n = per_feature.shape[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        weights = np.where(total > 0, per_feature / np.where(total > 0, total, 1.0), 1.0 / n)
    return weights[0] if np.ndim(grad) == 1 else weights


def saliency(model: MlpModel, x, schema=None) -> np.ndarray:
    """Per-feature mutation weights from the surrogate's input gradient.

    With a schema, encoded columns are grouped into the schema's features;
    otherwise each encoded column is its own feature.
    """
    blocks = schema.blocks() if schema is not None else None
    return aggregate_saliency(input_gradient(model, x), blocks)


# training ---------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple = (64,)
    learning_rate: float = 0.1
    epochs: int = 300
    batch_size: int | None = 32
    seed: int = 0


def init_model(layers, rng: np.random.Generator) -> MlpModel:
    """He-normal weights, zero biases."""
    ws, bs = [], []
    for fan_in, fan_out in zip(layers[:-1], layers[1:]):
        ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MlpModel(tuple(ws), tuple(bs))


def bce_loss(model: MlpModel, X, y) -> float:
    z = _forward(model, np.asarray(X, dtype=float))[-1][:, 0]
    y = np.asarray(y, dtype=float)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def _gradients(ws, bs, X, y):
    pre, acts = [], [X]
    h = X
    for i, (w, b) in enumerate(zip(ws, bs)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i < len(ws) - 1 else z
        acts.append(h)
    delta = (_sigmoid(pre[-1]) - y[:, None]) / len(X)
    gw, gb = [None] * len(ws), [None] * len(ws)
    for i in range(len(ws) - 1, -1, -1):
        gw[i] = acts[i].T @ delta
        gb[i] = delta.sum(axis=0)
        if i:
            delta = (delta @ ws[i].T) * (pre[i - 1] > 0)
    return gw, gb


def train(X, y, config: TrainConfig = TrainConfig()) -> MlpModel:
    """Fit an MLP by mini-batch SGD on binary cross-entropy.

    ``batch_size=None`` means full-batch gradient descent. The returned model's
    ``history`` holds the full-data loss after every epoch.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    if X.ndim != 2 or len(X) != len(y):
        raise DimensionMismatch("X must be (n, d) with one label per row")
    if not (np.any(y == 1) and np.any(y == 0)):
        raise DegenerateData("training data needs both pass (0) and fail (1) labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    rng = np.random.default_rng(config.seed)
    model = init_model([X.shape[1], *config.hidden, 1], rng)
    ws = [w.copy() for w in model.weights]
    bs = [b.copy() for b in model.biases]
    n = len(X)
    bsz = n if config.batch_size is None else min(config.batch_size, n)
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(n) if bsz < n else np.arange(n)
        for start in range(0, n, bsz):
            idx = order[start:start + bsz]
            gw, gb = _gradients(ws, bs, X[idx], y[idx])
            for i in range(len(ws)):
                ws[i] -= config.learning_rate * gw[i]
                bs[i] -= config.learning_rate * gb[i]
        history.append(bce_loss(MlpModel(tuple(ws), tuple(bs)), X, y))
    return MlpModel(tuple(ws), tuple(bs), history=tuple(history))


def accuracy(model: MlpModel, X, y) -> float:
    return float(np.mean((predict(model, np.asarray(X)) >= 0.5) == (np.asarray(y) == 1)))


# persistence ------------------------------------------------------------------


def model_to_json(model: MlpModel) -> dict:
    return {
        "layers": model.layers,
        "weights": [w.reshape(-1).tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
        "activation": ACTIVATION,
    }


def model_from_json(doc) -> MlpModel:
    try:
        layers = [int(n) for n in doc["layers"]]
        weights, biases = doc["weights"], doc["biases"]
        act = doc.get("activation", ACTIVATION)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model document: {exc}") from exc
    if act != ACTIVATION:
        raise FormatError(f"unsupported activation {act!r}")
    if len(layers) < 2 or layers[-1] != 1:
        raise FormatError("layers must end in a single output unit")
    if len(weights) != len(layers) - 1 or len(biases) != len(layers) - 1:
        raise FormatError("declared layer count does not match weight/bias arrays")
    ws, bs = [], []
    for i, (fi, fo) in enumerate(zip(layers[:-1], layers[1:])):
        try:
            w = np.asarray(weights[i], dtype=float).reshape(-1)
            b = np.asarray(biases[i], dtype=float).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise FormatError(f"layer {i}: non-numeric weights") from exc
        if w.size != fi * fo or b.size != fo:
            raise FormatError(f"layer {i}: expected {fi * fo} weights and {fo} biases, "
                              f"got {w.size} and {b.size}")
        ws.append(w.reshape(fi, fo))
        bs.append(b)
    try:
        return MlpModel(tuple(ws), tuple(bs))
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def save_model(model: MlpModel) -> str:
    return json.dumps(model_to_json(model))


def load_model(text: str | bytes) -> MlpModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc}") from exc
    return model_from_json(doc)

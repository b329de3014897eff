"""A small fully-connected classifier trained with Adadelta.

Adadelta per parameter, with decay ``rho``, ``epsilon`` and a learning-rate
scale ``lr``::

    acc_g = rho * acc_g + (1 - rho) * g**2
    step  = -sqrt(acc_d + epsilon) / sqrt(acc_g + epsilon) * g
    acc_d = rho * acc_d + (1 - rho) * step**2
    param += lr * step

Architecture: flatten -> dense(h1) -> ReLU -> dense(h2) -> ReLU -> dense(K)
-> softmax. Pixels are scaled to [0, 1] before the first layer. All maths is
float64.

Model file layout (little-endian)::

    magic    4 bytes  b"SWKM"
    version  u32      1
    h, w, c  3 x u32  image dims
    n_dims   u32      number of layer widths (input, hidden..., K)
    widths   n_dims x u32
    then for each dense layer: weights (fan_in x fan_out, row-major f64)
                               followed by biases (fan_out f64)
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .data import LabeledDataset
from .errors import ConfigError, FormatError, InvalidArgument
from .rng import Rng

MODEL_MAGIC = b"SWKM"
MODEL_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    rho: float = 0.95
    epsilon: float = 1e-6
    learning_rate: float = 0.05
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0
    hidden: tuple[int, int] = (256, 128)

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise InvalidArgument("rho must lie in (0, 1)")
        if not self.epsilon > 0.0:
            raise InvalidArgument("epsilon must be positive")
        if self.epochs < 1:
            raise InvalidArgument("epochs must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")

    def to_json(self) -> dict:
        return {
            "rho": self.rho,
            "epsilon": self.epsilon,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "hidden": list(self.hidden),
        }

    @classmethod
    def from_json(cls, doc: dict) -> TrainConfig:
        doc = dict(doc)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown training settings {sorted(unknown)}")
        if "hidden" in doc:
            doc["hidden"] = tuple(doc["hidden"])
        return cls(**doc)


@dataclass
class TinyClassifier:
    image_dims: tuple[int, int, int]
    widths: tuple[int, ...]  # (input, hidden..., K)
    params: list[np.ndarray] = field(repr=False)  # [W1, b1, W2, b2, ...]

    @classmethod
    def init(cls, image_dims, num_classes: int, hidden=(256, 128), seed: int = 0) -> TinyClassifier:
        """He-uniform weights (limit sqrt(6 / fan_in)) and zero biases."""
        h, w, c = image_dims
        widths = (h * w * c, *hidden, num_classes)
        rng = Rng(seed)
        params = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            lim = math.sqrt(6.0 / fan_in)
            params.append(rng.spawn("init.weight", i).uniform_array(-lim, lim, (fan_in, fan_out)))
            params.append(np.zeros(fan_out))
        return cls(tuple(image_dims), widths, params)

    @classmethod
    def zeros(cls, image_dims, num_classes: int, hidden=(256, 128)) -> TinyClassifier:
        m = cls.init(image_dims, num_classes, hidden)
        m.params = [np.zeros_like(p) for p in m.params]
        return m

    @property
    def num_classes(self) -> int:
        return self.widths[-1]

    def copy(self) -> TinyClassifier:
        return replace(self, params=[p.copy() for p in self.params])

    # -- forward -------------------------------------------------------------

    def _inputs(self, images) -> np.ndarray:
        images = np.asarray(images)
        if images.ndim == 3:
            images = images[None]
        if tuple(images.shape[1:]) != self.image_dims:
            raise InvalidArgument(f"expected images of {self.image_dims}, got {images.shape[1:]}")
        return images.reshape(len(images), self.widths[0]).astype(np.float64) / 255.0

    def logits(self, x: np.ndarray) -> np.ndarray:
        """Logits for already-flattened, scaled inputs."""
        a = x
        n_layers = len(self.params) // 2
        for i in range(n_layers):
            z = a @ self.params[2 * i] + self.params[2 * i + 1]
            a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        return a

    def predict_proba(self, images) -> np.ndarray:
        return softmax(self.logits(self._inputs(images)))

    def predict_batch(self, images) -> np.ndarray:
        # argmax returns the lowest index on ties
        return np.argmax(self.logits(self._inputs(images)), axis=1)

    def predict(self, img) -> int:
        return int(self.predict_batch(np.asarray(img)[None])[0])


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grads(params: list[np.ndarray], x: np.ndarray, y: np.ndarray, want_input_grad=False):
    """Mean cross-entropy over the batch and its gradient for every parameter."""
    n_layers = len(params) // 2
    acts = [x]
    pre = []
    a = x
    for i in range(n_layers):
        z = a @ params[2 * i] + params[2 * i + 1]
        pre.append(z)
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        acts.append(a)
    probs = softmax(a)
    n = len(y)
    loss = -np.mean(np.log(np.maximum(probs[np.arange(n), y], 1e-300)))

    delta = probs
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads = [None] * len(params)
    for i in reversed(range(n_layers)):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i > 0 or want_input_grad:
            delta = delta @ params[2 * i].T
            if i > 0:
                delta = delta * (pre[i - 1] > 0.0)
    if want_input_grad:
        return loss, grads, delta
    return loss, grads


# ----------------------------------------------------------------------------
# training


def _run_adadelta(model: TinyClassifier, ds: LabeledDataset, cfg: TrainConfig, tag: str) -> TinyClassifier:
    model = model.copy()
    params = model.params
    acc_g = [np.zeros_like(p) for p in params]
    acc_d = [np.zeros_like(p) for p in params]
    x_all = model._inputs(ds.images)
    y_all = ds.labels
    rng = Rng(cfg.seed)
    n = len(ds)
    for epoch in range(cfg.epochs):
        order = rng.spawn(tag, epoch).permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            _, grads = loss_and_grads(params, x_all[idx], y_all[idx])
            for p, g, eg, ed in zip(params, grads, acc_g, acc_d):
                _kernels.adadelta(p, g, eg, ed, cfg.rho, cfg.epsilon, cfg.learning_rate)
    return model


def _check_dataset(model: TinyClassifier | None, ds: LabeledDataset):
    if len(ds) == 0:
        raise InvalidArgument("cannot train on an empty dataset")
    if model is not None:
        if ds.dims != model.image_dims:
            raise InvalidArgument(f"dataset dims {ds.dims} do not match model {model.image_dims}")
        if ds.num_classes != model.num_classes:
            raise InvalidArgument("dataset and model disagree on the number of classes")


def train(ds: LabeledDataset, cfg: TrainConfig = TrainConfig()) -> TinyClassifier:
    """Mini-batch cross-entropy training from a seeded initialisation."""
    _check_dataset(None, ds)
    model = TinyClassifier.init(ds.dims, ds.num_classes, cfg.hidden, seed=Rng(cfg.seed).spawn("init").seed)
    return _run_adadelta(model, ds, cfg, "train.shuffle")


def fine_tune(model: TinyClassifier, ds: LabeledDataset, epochs: int = 5, cfg: TrainConfig = TrainConfig()) -> TinyClassifier:
    """Continue training a copy of ``model`` with fresh Adadelta accumulators."""
    if epochs < 1:
        raise InvalidArgument("fine-tuning needs at least one epoch")
    _check_dataset(model, ds)
    return _run_adadelta(model, ds, replace(cfg, epochs=epochs), "finetune.shuffle")


def input_gradient(model: TinyClassifier, images, labels) -> np.ndarray:
    """Gradient of the mean cross-entropy w.r.t. the [0, 1]-scaled input pixels."""
    x = model._inputs(images)
    _, _, gx = loss_and_grads(model.params, x, np.asarray(labels), want_input_grad=True)
    return gx.reshape((len(x),) + model.image_dims)


# ----------------------------------------------------------------------------
# gradient check


def grad_check(model: TinyClassifier, images, labels, seed: int = 0, per_tensor: int = 20,
               step: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients.

    Checks ``per_tensor`` randomly chosen entries of every parameter tensor.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``; ``floor`` keeps
    entries with vanishing gradients from dividing by zero.
    """
    x = model._inputs(images)
    y = np.asarray(labels, dtype=np.int64)
    if len(y) == 0:
        raise InvalidArgument("grad_check needs a non-empty batch")
    params = [p.copy() for p in model.params]
    _, grads = loss_and_grads(params, x, y)
    rng = Rng(seed)
    worst = 0.0
    for t, (p, g) in enumerate(zip(params, grads)):
        picks = rng.spawn("gradcheck", t).random_array(min(per_tensor, p.size))
        flat_idx = np.unique((picks * p.size).astype(np.int64))
        flat = p.reshape(-1)
        for j in flat_idx:
            old = flat[j]
            flat[j] = old + step
            up, _ = loss_and_grads(params, x, y)
            flat[j] = old - step
            down, _ = loss_and_grads(params, x, y)
            flat[j] = old
            numeric = (up - down) / (2.0 * step)
            analytic = g.reshape(-1)[j]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, err)
    return worst


# ----------------------------------------------------------------------------
# persistence


def model_bytes(model: TinyClassifier) -> bytes:
    head = MODEL_MAGIC + struct.pack("<I", MODEL_VERSION)
    head += struct.pack("<3I", *model.image_dims)
    head += struct.pack("<I", len(model.widths)) + struct.pack(f"<{len(model.widths)}I", *model.widths)
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in model.params)
    return head + body


def parse_model(raw: bytes) -> TinyClassifier:
    if len(raw) < 24 or raw[:4] != MODEL_MAGIC:
        raise FormatError("not a model file")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    dims = struct.unpack_from("<3I", raw, 8)
    (n_widths,) = struct.unpack_from("<I", raw, 20)
    if n_widths < 2 or len(raw) < 24 + 4 * n_widths:
        raise FormatError("truncated model header")
    widths = struct.unpack_from(f"<{n_widths}I", raw, 24)
    if widths[0] != dims[0] * dims[1] * dims[2]:
        raise FormatError("model input width does not match image dims")
    off = 24 + 4 * n_widths
    need = sum(a * b + b for a, b in zip(widths[:-1], widths[1:])) * 8
    if len(raw) - off != need:
        raise FormatError(f"model body holds {len(raw) - off} bytes, expected {need}")
    params = []
    for a, b in zip(widths[:-1], widths[1:]):
        params.append(np.frombuffer(raw, "<f8", a * b, off).reshape(a, b).astype(np.float64))
        off += 8 * a * b
        params.append(np.frombuffer(raw, "<f8", b, off).astype(np.float64))
        off += 8 * b
    return TinyClassifier(tuple(dims), tuple(widths), params)


def save(model: TinyClassifier, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def load(path) -> TinyClassifier:
    return parse_model(Path(path).read_bytes())

"""A small numpy CNN with hand-written backward pass, Adam, and Grad-CAM.

Architecture (default widths ``(8, 16, 32)``, one input channel)::

    [conv3x3(pad 1) -> ReLU -> maxpool 2x2] x len(widths)
    -> global average pool (embedding, E = widths[-1])
    -> dense -> C logits

Everything runs in float64 so the analytic gradients can be checked
against central finite differences.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import bilinear, make_rng

MAGIC = b"MCNN"
FORMAT_VERSION = 1
SHUFFLE_STREAM = 7
INIT_STREAM = 3


class ShapeError(ValueError):
    pass


class ModelFormatError(Exception):
    """Raised when a model file is truncated, corrupted, or of another version."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    epochs: int = 3
    batch_size: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")


@dataclass
class ForwardResult:
    logits: np.ndarray  # (N, C)
    embedding: np.ndarray  # (N, E)
    activations: np.ndarray  # (N, E, H/2^k, W/2^k), last block output
    cache: list = field(repr=False, default_factory=list)


@dataclass
class GradCamMap:
    raw: np.ndarray  # nonnegative, last-block resolution
    upsampled: np.ndarray  # input resolution, in [0, 1]
    weights: np.ndarray  # per-channel alpha
    target_class: int


class MicroCnn:
    def __init__(self, params: dict[str, np.ndarray], widths=(8, 16, 32), n_classes=4,
                 in_channels=1):
        self.widths = tuple(int(w) for w in widths)
        self.n_classes = int(n_classes)
        self.in_channels = int(in_channels)
        self.params = params
        expected = param_shapes(self.widths, self.n_classes, self.in_channels)
        if list(params) != list(expected) or any(
                params[k].shape != s for k, s in expected.items()):
            raise ShapeError("parameter dict does not match the architecture")

    @classmethod
    def init(cls, seed: int, widths=(8, 16, 32), n_classes=4, in_channels=1) -> "MicroCnn":
        """He-normal conv weights, small normal head, zero biases."""
        rng = make_rng(seed, INIT_STREAM)
        params = {}
        for name, shape in param_shapes(widths, n_classes, in_channels).items():
            if name.endswith("bias"):
                params[name] = np.zeros(shape)
            elif name.startswith("head"):
                params[name] = rng.normal(0.0, 1.0 / math.sqrt(shape[1]), shape)
            else:
                fan_in = shape[1] * shape[2] * shape[3]
                params[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), shape)
        return cls(params, widths, n_classes, in_channels)

    @classmethod
    def zeros(cls, widths=(8, 16, 32), n_classes=4, in_channels=1) -> "MicroCnn":
        shapes = param_shapes(widths, n_classes, in_channels)
        return cls({k: np.zeros(s) for k, s in shapes.items()}, widths, n_classes, in_channels)

    @property
    def embedding_dim(self) -> int:
        return self.widths[-1]

    @property
    def downsample(self) -> int:
        return 2 ** len(self.widths)

    def copy(self) -> "MicroCnn":
        return MicroCnn({k: v.copy() for k, v in self.params.items()},
                        self.widths, self.n_classes, self.in_channels)

    def forward(self, images) -> ForwardResult:
        return forward(self, images)

    def predict_proba(self, images) -> np.ndarray:
        return softmax(forward(self, images).logits)

    def predict(self, images) -> np.ndarray:
        return np.argmax(forward(self, images).logits, axis=1)


def param_shapes(widths, n_classes, in_channels=1) -> dict[str, tuple]:
    shapes = {}
    prev = in_channels
    for i, w in enumerate(widths, start=1):
        shapes[f"conv{i}.weight"] = (w, prev, 3, 3)
        shapes[f"conv{i}.bias"] = (w,)
        prev = w
    shapes["head.weight"] = (n_classes, prev)
    shapes["head.bias"] = (n_classes,)
    return shapes


# --- layers ---------------------------------------------------------------

def conv3x3_forward(x, weight, bias):
    """Stride-1, zero-padded 3x3 convolution (cross-correlation)."""
    n, cin, h, w = x.shape
    xp = np.zeros((n, cin, h + 2, w + 2))  # cheaper than np.pad for small maps
    xp[:, :, 1:-1, 1:-1] = x
    cols = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (N, Cin, H, W, 3, 3)
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n, h, w, cin * 9)
    out = cols @ weight.reshape(weight.shape[0], -1).T + bias
    return out.transpose(0, 3, 1, 2), cols


def conv3x3_backward(dout, cols, weight, x_shape):
    n, cin, h, w = x_shape
    cout = weight.shape[0]
    d = dout.transpose(0, 2, 3, 1).reshape(-1, cout)
    dweight = (d.T @ cols.reshape(-1, cin * 9)).reshape(weight.shape)
    dbias = d.sum(axis=0)
    dcols = (d @ weight.reshape(cout, -1)).reshape(n, h, w, cin, 3, 3)
    dxp = np.zeros((n, cin, h + 2, w + 2))
    for di in range(3):
        for dj in range(3):
            dxp[:, :, di:di + h, dj:dj + w] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dxp[:, :, 1:-1, 1:-1], dweight, dbias


def maxpool_forward(x):
    """2x2/2 max-pool; ties go to the first position in raster order."""
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    blocks = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(blocks, axis=-1)
    return blocks.max(axis=-1), idx


def maxpool_backward(dout, idx, x_shape):
    n, c, h, w = x_shape
    routed = np.zeros(idx.shape + (4,))
    np.put_along_axis(routed, idx[..., None], dout[..., None], axis=-1)
    routed = routed.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return routed.reshape(n, c, h, w)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# --- network --------------------------------------------------------------

def _as_batch(model, images):
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[:, None] if model.in_channels == 1 else x[None]
    if x.ndim != 4 or x.shape[1] != model.in_channels:
        raise ShapeError(f"cannot interpret input of shape {np.shape(images)}")
    k = model.downsample
    if x.shape[2] % k or x.shape[3] % k:
        raise ShapeError(f"input height and width must be divisible by {k}, got {x.shape[2:]}")
    return x


def forward(model: MicroCnn, images) -> ForwardResult:
    """Logits, embedding and last-block feature maps for an image or a batch.

    ``images`` may be (H, W), (N, H, W) or (N, Cin, H, W).
    """
    x = _as_batch(model, images)
    p = model.params
    cache = []
    for i in range(1, len(model.widths) + 1):
        z, cols = conv3x3_forward(x, p[f"conv{i}.weight"], p[f"conv{i}.bias"])
        a = np.maximum(z, 0.0)
        pooled, idx = maxpool_forward(a)
        cache.append((x.shape, cols, z, idx))
        x = pooled
    embedding = x.mean(axis=(2, 3))
    logits = embedding @ p["head.weight"].T + p["head.bias"]
    return ForwardResult(logits, embedding, x, cache)


def backward_from_activations(model: MicroCnn, result: ForwardResult, dlogits):
    """Reverse pass; returns (grads, d_activations) for a logit gradient."""
    p = model.params
    grads = {}
    grads["head.weight"] = dlogits.T @ result.embedding
    grads["head.bias"] = dlogits.sum(axis=0)
    dembed = dlogits @ p["head.weight"]
    _, _, hh, ww = result.activations.shape
    dact = np.broadcast_to(dembed[:, :, None, None] / (hh * ww), result.activations.shape).copy()
    dx = dact
    for i in range(len(model.widths), 0, -1):
        x_shape, cols, z, idx = result.cache[i - 1]
        da = maxpool_backward(dx, idx, z.shape)
        dz = da * (z > 0)
        dx, grads[f"conv{i}.weight"], grads[f"conv{i}.bias"] = conv3x3_backward(
            dz, cols, p[f"conv{i}.weight"], x_shape)
    return {k: grads[k] for k in p}, dact


def loss_and_backward(model: MicroCnn, images, labels):
    """Mean cross-entropy over the batch and its parameter gradients."""
    labels = np.asarray(labels, dtype=np.intp).ravel()
    result = forward(model, images)
    n = result.logits.shape[0]
    if n == 0 or labels.shape[0] != n:
        raise ShapeError("batch must be non-empty with one label per image")
    logp = log_softmax(result.logits)
    loss = -float(logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    grads, _ = backward_from_activations(model, result, dlogits)
    return loss, grads


def extract_embedding(model: MicroCnn, images) -> np.ndarray:
    emb = forward(model, images).embedding
    return emb[0] if np.ndim(images) == 2 else emb


def grad_cam(model: MicroCnn, image, target_class: int) -> GradCamMap:
    """Grad-CAM on the last conv block for one image.

    The target score is the pre-softmax logit of ``target_class``.
    """
    if not 0 <= target_class < model.n_classes:
        raise IndexError(f"target_class {target_class} outside [0, {model.n_classes})")
    image = np.asarray(image, dtype=np.float64)
    result = forward(model, image)
    if result.logits.shape[0] != 1:
        raise ShapeError("grad_cam takes a single image")
    dlogits = np.zeros_like(result.logits)
    dlogits[0, target_class] = 1.0
    _, dact = backward_from_activations(model, result, dlogits)
    acts = result.activations[0]
    alpha = dact[0].mean(axis=(1, 2))
    raw = np.maximum(np.tensordot(alpha, acts, axes=1), 0.0)
    h, w = image.shape[-2:]
    up = bilinear(raw, h, w)
    lo, hi = up.min(), up.max()
    if hi <= 0.0:
        up = np.zeros_like(up)
    elif hi > lo:
        up = (up - lo) / (hi - lo)
    else:
        up = np.ones_like(up)
    return GradCamMap(raw=raw, upsampled=up, weights=alpha, target_class=target_class)


# --- optimization ---------------------------------------------------------

class Adam:
    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    @classmethod
    def from_config(cls, params, config: TrainConfig) -> "Adam":
        return cls(params, config.learning_rate, config.adam_beta1, config.adam_beta2,
                   config.adam_epsilon)

    def step(self, params, grads) -> None:
        """Bias-corrected update, applied in place."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)


@dataclass
class TrainLog:
    epoch_loss: list[float] = field(default_factory=list)
    validation_accuracy: list[float | None] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"epoch_loss": self.epoch_loss, "validation_accuracy": self.validation_accuracy}


def accuracy(model: MicroCnn, images, labels, batch_size=64) -> float:
    labels = np.asarray(labels)
    preds = np.concatenate([model.predict(images[i:i + batch_size])
                            for i in range(0, len(labels), batch_size)])
    return float(np.mean(preds == labels))


def train(model: MicroCnn, images, labels, config: TrainConfig, val_images=None,
          val_labels=None) -> TrainLog:
    """Minibatch Adam on mean cross-entropy; mutates ``model`` in place.

    Each epoch visits the training set in an order drawn from
    ``make_rng(config.seed, SHUFFLE_STREAM, epoch)``. The logged loss of an
    epoch is the sample-weighted mean of its batch losses.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.intp)
    if len(labels) == 0:
        raise ValueError("training set is empty")
    opt = Adam.from_config(model.params, config)
    log = TrainLog()
    for epoch in range(config.epochs):
        order = make_rng(config.seed, SHUFFLE_STREAM, epoch).permutation(len(labels))
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_backward(model, images[idx], labels[idx])
            opt.step(model.params, grads)
            total += loss * len(idx)
        log.epoch_loss.append(total / len(labels))
        if val_images is not None and len(val_labels) > 0:
            log.validation_accuracy.append(accuracy(model, np.asarray(val_images), val_labels))
        else:
            log.validation_accuracy.append(None)
    return log


# --- persistence ----------------------------------------------------------
# Layout (little-endian): b"MCNN", u32 version, u32 n_blocks, u32 in_channels,
# u32 widths[n_blocks], u32 embedding_dim, u32 n_classes, then every
# parameter as float64 in param_shapes() order, C-contiguous.

def header_bytes(model: MicroCnn) -> bytes:
    n = len(model.widths)
    return MAGIC + struct.pack(f"<III{n}III", FORMAT_VERSION, n, model.in_channels,
                               *model.widths, model.embedding_dim, model.n_classes)


def parameter_count(model: MicroCnn) -> int:
    return sum(v.size for v in model.params.values())


def model_bytes(model: MicroCnn) -> bytes:
    body = b"".join(np.ascontiguousarray(v, dtype="<f8").tobytes()
                    for v in model.params.values())
    return header_bytes(model) + body


def save_model(model: MicroCnn, path) -> None:
    with open(path, "wb") as fh:
        fh.write(model_bytes(model))


def load_model(path) -> MicroCnn:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes")
    try:
        version, n_blocks, in_channels = struct.unpack_from("<III", data, 4)
        if version != FORMAT_VERSION:
            raise ModelFormatError(f"{path}: unsupported format version {version}")
        if not 1 <= n_blocks <= 16:
            raise ModelFormatError(f"{path}: implausible block count {n_blocks}")
        offset = 16
        widths = struct.unpack_from(f"<{n_blocks}I", data, offset)
        offset += 4 * n_blocks
        emb_dim, n_classes = struct.unpack_from("<II", data, offset)
        offset += 8
    except struct.error as exc:
        raise ModelFormatError(f"{path}: truncated header") from exc
    if emb_dim != widths[-1] or n_classes < 1 or min(widths) < 1:
        raise ModelFormatError(f"{path}: inconsistent architecture descriptor")
    shapes = param_shapes(widths, n_classes, in_channels)
    total = sum(math.prod(s) for s in shapes.values())
    if len(data) != offset + 8 * total:
        raise ModelFormatError(
            f"{path}: expected {offset + 8 * total} bytes, found {len(data)}")
    flat = np.frombuffer(data, dtype="<f8", offset=offset).astype(np.float64)
    params, pos = {}, 0
    for name, shape in shapes.items():
        size = math.prod(shape)
        params[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return MicroCnn(params, widths, n_classes, in_channels)

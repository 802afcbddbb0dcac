"""A small white-box CNN written directly on numpy.

Layers operate on batches shaped (N, H, W, C). Every layer exposes
``forward(x) -> (out, cache)`` and ``backward(dout, cache) -> (dx, grads)``
so the same code path serves weight training and input gradients.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import ClassVar

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import FormatError, Image, LabeledDataset, NumericError, ParameterError, ShapeError

PROB_FLOOR = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


# --- layers -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Conv:
    """2-D convolution; ``weight`` is (kh, kw, in_channels, out_channels)."""

    weight: np.ndarray
    bias: np.ndarray
    stride: int = 1
    padding: int = 0
    kind: ClassVar[str] = "conv"

    def __post_init__(self):
        object.__setattr__(self, "weight", _frozen(self.weight))
        object.__setattr__(self, "bias", _frozen(self.bias))
        if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[3],):
            raise ShapeError(f"bad conv parameters {self.weight.shape} / {self.bias.shape}")
        if self.stride < 1 or self.padding < 0:
            raise ParameterError("conv stride must be >= 1 and padding >= 0")

    @property
    def params(self):
        return (self.weight, self.bias)

    def with_params(self, weight, bias):
        return replace(self, weight=weight, bias=bias)

    def output_shape(self, shape):
        h, w, c = shape
        kh, kw, cin, cout = self.weight.shape
        if c != cin:
            raise ShapeError(f"conv expects {cin} input channels, got {c}")
        ho = (h + 2 * self.padding - kh) // self.stride + 1
        wo = (w + 2 * self.padding - kw) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv kernel {kh}x{kw} does not fit input {h}x{w}")
        return (ho, wo, cout)

    def forward(self, x):
        kh, kw, cin, cout = self.weight.shape
        p, s = self.padding, self.stride
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
        win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
        n, ho, wo = win.shape[:3]
        # win is (N, Ho, Wo, C, kh, kw); columns ordered (kh, kw, C) to match weight
        cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(n * ho * wo, kh * kw * cin)
        out = cols @ self.weight.reshape(-1, cout) + self.bias
        return out.reshape(n, ho, wo, cout), (x.shape, cols)

    def backward(self, dout, cache, need_params=True):
        x_shape, cols = cache
        kh, kw, cin, cout = self.weight.shape
        p, s = self.padding, self.stride
        n, ho, wo, _ = dout.shape
        d2 = dout.reshape(-1, cout)
        grads = ((cols.T @ d2).reshape(self.weight.shape), d2.sum(axis=0)) if need_params else ()
        dcols = (d2 @ self.weight.reshape(-1, cout).T).reshape(n, ho, wo, kh, kw, cin)
        h, w = x_shape[1] + 2 * p, x_shape[2] + 2 * p
        dxp = np.zeros((n, h, w, cin))
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, :, i, j]
        dx = dxp[:, p : h - p, p : w - p] if p else dxp
        return dx, grads


@dataclass(frozen=True)
class ReLU:
    kind: ClassVar[str] = "relu"
    params: ClassVar[tuple] = ()

    def output_shape(self, shape):
        return shape

    def forward(self, x):
        mask = x > 0
        return x * mask, mask

    def backward(self, dout, mask, need_params=True):
        return dout * mask, ()


@dataclass(frozen=True)
class MaxPool:
    """Max pooling; gradient goes to the first maximum of each window."""

    window: int = 2
    stride: int = 2
    kind: ClassVar[str] = "maxpool"
    params: ClassVar[tuple] = ()

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ParameterError("maxpool window and stride must be >= 1")

    def output_shape(self, shape):
        h, w, c = shape
        ho = (h - self.window) // self.stride + 1
        wo = (w - self.window) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"maxpool window {self.window} does not fit input {h}x{w}")
        return (ho, wo, c)

    def forward(self, x):
        k, s = self.window, self.stride
        win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::s, ::s]
        flat = win.reshape(*win.shape[:4], k * k)
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
        return out, (x.shape, arg)

    def backward(self, dout, cache, need_params=True):
        x_shape, arg = cache
        k, s = self.window, self.stride
        _, ho, wo, _ = dout.shape
        dx = np.zeros(x_shape)
        for i in range(k):
            for j in range(k):
                hit = arg == i * k + j
                dx[:, i : i + s * ho : s, j : j + s * wo : s] += dout * hit
        return dx, ()


@dataclass(frozen=True)
class Flatten:
    kind: ClassVar[str] = "flatten"
    params: ClassVar[tuple] = ()

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, dout, shape, need_params=True):
        return dout.reshape(shape), ()


@dataclass(frozen=True, eq=False)
class Dense:
    """Affine map; ``weight`` is (in_dim, out_dim)."""

    weight: np.ndarray
    bias: np.ndarray
    kind: ClassVar[str] = "dense"

    def __post_init__(self):
        object.__setattr__(self, "weight", _frozen(self.weight))
        object.__setattr__(self, "bias", _frozen(self.bias))
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ShapeError(f"bad dense parameters {self.weight.shape} / {self.bias.shape}")

    @property
    def params(self):
        return (self.weight, self.bias)

    def with_params(self, weight, bias):
        return replace(self, weight=weight, bias=bias)

    def output_shape(self, shape):
        if shape != (self.weight.shape[0],):
            raise ShapeError(f"dense expects input ({self.weight.shape[0]},), got {shape}")
        return (self.weight.shape[1],)

    def forward(self, x):
        return x @ self.weight + self.bias, x

    def backward(self, dout, x, need_params=True):
        grads = (x.T @ dout, dout.sum(axis=0)) if need_params else ()
        return dout @ self.weight.T, grads


@dataclass(frozen=True)
class Softmax:
    """Marker for the final normalization; applied by the classifier itself."""

    kind: ClassVar[str] = "softmax"
    params: ClassVar[tuple] = ()

    def output_shape(self, shape):
        return shape


LAYER_TYPES = {cls.kind: cls for cls in (Conv, ReLU, MaxPool, Flatten, Dense, Softmax)}


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# --- classifier -------------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    probabilities: np.ndarray
    argmax_label: int
    argmax_probability: float


@dataclass(frozen=True, eq=False)
class Classifier:
    """An immutable layer stack ending in exactly one softmax."""

    layers: tuple
    input_shape: tuple[int, int, int]
    num_classes: int = field(init=False)

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if not layers or layers[-1].kind != "softmax":
            raise ParameterError("the last layer must be softmax")
        if sum(layer.kind == "softmax" for layer in layers) != 1:
            raise ParameterError("softmax must appear exactly once")
        shape = self.input_shape
        for layer in layers:
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise ShapeError(f"network must end in a vector, got shape {shape}")
        for layer in layers:
            for p in layer.params:
                if not np.all(np.isfinite(p)):
                    raise NumericError(f"non-finite weights in {layer.kind} layer")
        object.__setattr__(self, "num_classes", shape[0])

    def logits(self, batch: np.ndarray) -> np.ndarray:
        x = batch
        for layer in self.layers[:-1]:
            x, _ = layer.forward(x)
        return x

    def predict_proba(self, batch: np.ndarray) -> np.ndarray:
        return softmax(self.logits(batch))

    def _check_input(self, batch: np.ndarray):
        if batch.shape[1:] != self.input_shape:
            raise ShapeError(
                f"input shape {batch.shape[1:]} does not match classifier input {self.input_shape}"
            )

    def _check_label(self, y):
        if not 0 <= y < self.num_classes:
            raise ParameterError(f"class id {y} outside [0, {self.num_classes})")

    def loss_and_gradients(self, batch, labels, want_input=False, want_params=True):
        """Mean cross-entropy over the batch with parameter and/or input gradients.

        Returns ``(loss, probabilities, param_grads, input_grad)`` where
        ``param_grads`` has one tuple per layer (empty when not requested).
        """
        x = batch
        caches = []
        for layer in self.layers[:-1]:
            x, cache = layer.forward(x)
            caches.append(cache)
        probs = softmax(x)
        n = len(labels)
        picked = probs[np.arange(n), labels]
        loss = float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())
        d = probs.copy()
        d[np.arange(n), labels] -= 1.0
        # below the floor the clamped loss is flat in p_y
        d[picked < PROB_FLOOR] = 0.0
        d /= n
        grads = [()] * len(self.layers)
        for k in range(len(self.layers) - 2, -1, -1):
            layer = self.layers[k]
            if k == 0 and not want_input and not layer.params:
                break
            d, grads[k] = layer.backward(d, caches[k], want_params)
        return loss, probs, grads, (d if want_input else None)


def _as_batch(f: Classifier, x: Image) -> np.ndarray:
    batch = x.data[None]
    f._check_input(batch)
    return batch


def _prediction(probs: np.ndarray) -> Prediction:
    label = int(np.argmax(probs))
    probs = probs.copy()
    probs.setflags(write=False)
    return Prediction(probs, label, float(probs[label]))


def forward(f: Classifier, x: Image) -> Prediction:
    return _prediction(f.predict_proba(_as_batch(f, x))[0])


def loss(f: Classifier, x: Image, y: int) -> float:
    """Cross-entropy ``-log(max(p_y, 1e-12))``."""
    f._check_label(y)
    p = f.predict_proba(_as_batch(f, x))[0, y]
    return float(-np.log(max(p, PROB_FLOOR)))


def loss_and_input_gradient(f: Classifier, x: Image, y: int):
    """Return ``(loss, prediction, gradient)`` from one forward/backward pass."""
    f._check_label(y)
    value, probs, _, g = f.loss_and_gradients(
        _as_batch(f, x), np.array([y]), want_input=True, want_params=False
    )
    return value, _prediction(probs[0]), g[0]


def input_gradient(f: Classifier, x: Image, y: int) -> np.ndarray:
    """Exact d loss / d pixel, shaped like the image."""
    return loss_and_input_gradient(f, x, y)[2]


def accuracy(f: Classifier, data: LabeledDataset, batch_size: int = 256) -> float:
    return float((predict_labels(f, data, batch_size) == data.labels).mean())


def predict_labels(f: Classifier, data: LabeledDataset, batch_size: int = 256) -> np.ndarray:
    f._check_input(data.images)
    out = [
        f.logits(data.images[i : i + batch_size]).argmax(axis=1)
        for i in range(0, len(data), batch_size)
    ]
    return np.concatenate(out)


# --- initialization -----------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


class SplitMix64:
    """Counter-based splitmix64 stream producing uniform doubles in [0, 1)."""

    def __init__(self, seed: int):
        self.state = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)

    def random(self, n: int) -> np.ndarray:
        with np.errstate(over="ignore"):
            z = self.state + _GOLDEN * np.arange(1, n + 1, dtype=np.uint64)
            self.state = self.state + _GOLDEN * np.uint64(n)
            z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
            z = z ^ (z >> np.uint64(31))
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def _glorot(rng: SplitMix64, shape, fan_in: int, fan_out: int) -> np.ndarray:
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return (rng.random(int(np.prod(shape))) * 2.0 - 1.0).reshape(shape) * s


def build_classifier(specs, input_shape, seed: int = 0) -> Classifier:
    """Instantiate layers from compact specs such as ``("conv", 3, 8, 1, 1)``.

    Supported specs: ``("conv", kernel, out_channels, stride, padding)``,
    ``("relu",)``, ``("maxpool", window, stride)``, ``("flatten",)``,
    ``("dense", out_dim)`` and ``("softmax",)``. Weights are drawn uniformly
    from the Glorot range with a splitmix64 stream; biases start at zero.
    """
    rng = SplitMix64(seed)
    shape = tuple(input_shape)
    layers = []
    for spec in specs:
        kind, args = spec[0], spec[1:]
        if kind == "conv":
            k, cout, stride, pad = args
            cin = shape[2]
            w = _glorot(rng, (k, k, cin, cout), k * k * cin, k * k * cout)
            layer = Conv(w, np.zeros(cout), stride, pad)
        elif kind == "dense":
            (out_dim,) = args
            w = _glorot(rng, (shape[0], out_dim), shape[0], out_dim)
            layer = Dense(w, np.zeros(out_dim))
        elif kind == "maxpool":
            layer = MaxPool(*args)
        elif kind in LAYER_TYPES:
            layer = LAYER_TYPES[kind]()
        else:
            raise ParameterError(f"unknown layer kind {kind!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    return Classifier(tuple(layers), tuple(input_shape))


def default_architecture(num_classes: int):
    return [
        ("conv", 3, 8, 1, 1),
        ("relu",),
        ("maxpool", 2, 2),
        ("conv", 3, 16, 1, 1),
        ("relu",),
        ("maxpool", 2, 2),
        ("flatten",),
        ("dense", num_classes),
        ("softmax",),
    ]


def default_classifier(input_shape=(32, 32, 1), num_classes: int = 4, seed: int = 0) -> Classifier:
    return build_classifier(default_architecture(num_classes), input_shape, seed)


# --- training -----------------------------------------------------------------


def train(
    f: Classifier,
    data: LabeledDataset,
    epochs: int = 20,
    batch_size: int = 32,
    learning_rate: float = 0.05,
    seed: int = 0,
    history: list | None = None,
) -> Classifier:
    """Minibatch SGD on mean cross-entropy; returns a new classifier.

    If ``history`` is given, the mean training loss of each epoch is
    appended to it.
    """
    if len(data) == 0:
        raise ParameterError("cannot train on an empty dataset")
    if data.image_shape != f.input_shape:
        raise ParameterError(
            f"dataset images {data.image_shape} do not match classifier input {f.input_shape}"
        )
    if data.labels.max() >= f.num_classes:
        raise ParameterError("dataset labels exceed classifier outputs")
    if epochs < 0 or batch_size < 1:
        raise ParameterError("epochs must be >= 0 and batch_size >= 1")
    rng = np.random.default_rng(seed)
    layers = list(f.layers)
    for _ in range(epochs):
        order = rng.permutation(len(data))
        total = 0.0
        for start in range(0, len(order), batch_size):
            idx = order[start : start + batch_size]
            model = Classifier(tuple(layers), f.input_shape)
            value, _, grads, _ = model.loss_and_gradients(data.images[idx], data.labels[idx])
            if not np.isfinite(value):
                raise NumericError("training loss became non-finite")
            total += value * len(idx)
            for k, layer in enumerate(layers):
                if layer.params:
                    new = [p - learning_rate * g for p, g in zip(layer.params, grads[k])]
                    layers[k] = layer.with_params(*new)
        if history is not None:
            history.append(total / len(data))
    return Classifier(tuple(layers), f.input_shape)


# --- ADVM model files -----------------------------------------------------------

MODEL_MAGIC = b"ADVM"
MODEL_VERSION = 1
_KIND_TAGS = {"conv": 1, "relu": 2, "maxpool": 3, "flatten": 4, "dense": 5, "softmax": 6}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


def encode_model(f: Classifier) -> bytes:
    """Serialize as little-endian: magic, u32 version, u32 H, W, C, u32 layer count,
    then per layer a u8 kind tag, u32 parameters and f64 weights."""
    out = [MODEL_MAGIC, struct.pack("<I", MODEL_VERSION)]
    out.append(struct.pack("<3I", *f.input_shape))
    out.append(struct.pack("<I", len(f.layers)))
    for layer in f.layers:
        out.append(struct.pack("<B", _KIND_TAGS[layer.kind]))
        if layer.kind == "conv":
            kh, kw, cin, cout = layer.weight.shape
            out.append(struct.pack("<6I", kh, kw, cin, cout, layer.stride, layer.padding))
        elif layer.kind == "maxpool":
            out.append(struct.pack("<2I", layer.window, layer.stride))
        elif layer.kind == "dense":
            out.append(struct.pack("<2I", *layer.weight.shape))
        for p in layer.params:
            out.append(np.ascontiguousarray(p, dtype="<f8").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated model file while reading {what}")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count: int, what: str):
        return struct.unpack(f"<{count}I", self.take(4 * count, what))

    def f64(self, shape, what: str) -> np.ndarray:
        n = int(np.prod(shape))
        return np.frombuffer(self.take(8 * n, what), dtype="<f8").reshape(shape)


def decode_model(buf: bytes) -> Classifier:
    r = _Reader(buf)
    magic = r.take(4, "magic")
    if magic != MODEL_MAGIC:
        raise FormatError(f"bad model magic {magic!r}, expected {MODEL_MAGIC!r}")
    (version,) = r.u32(1, "version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version} (this reader handles {MODEL_VERSION})")
    input_shape = r.u32(3, "input shape")
    (count,) = r.u32(1, "layer count")
    layers = []
    for i in range(count):
        (tag,) = struct.unpack("<B", r.take(1, f"layer {i} tag"))
        kind = _TAG_KINDS.get(tag)
        if kind is None:
            raise FormatError(f"unknown layer tag {tag} at layer {i}")
        if kind == "conv":
            kh, kw, cin, cout, stride, pad = r.u32(6, f"layer {i} conv parameters")
            w = r.f64((kh, kw, cin, cout), f"layer {i} weights")
            b = r.f64((cout,), f"layer {i} bias")
            layers.append(Conv(w, b, stride, pad))
        elif kind == "dense":
            din, dout = r.u32(2, f"layer {i} dense parameters")
            w = r.f64((din, dout), f"layer {i} weights")
            b = r.f64((dout,), f"layer {i} bias")
            layers.append(Dense(w, b))
        elif kind == "maxpool":
            layers.append(MaxPool(*r.u32(2, f"layer {i} maxpool parameters")))
        else:
            layers.append(LAYER_TYPES[kind]())
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after last layer")
    try:
        return Classifier(tuple(layers), input_shape)
    except (ParameterError, NumericError) as exc:
        raise FormatError(f"inconsistent model: {exc}") from None


def save_model(f: Classifier, path) -> None:
    Path(path).write_bytes(encode_model(f))


def load_model(path) -> Classifier:
    return decode_model(Path(path).read_bytes())

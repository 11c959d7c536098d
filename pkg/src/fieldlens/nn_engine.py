"""From-scratch neural-network core.

Forward inference covers dense and convolutional layers; training
(backpropagation + Adam) covers the dense subset (Linear/Tanh/Relu),
which is all the fluid models need.  Conv2D and MaxPool2D exist to run
pre-built image models and are inference-only.

Models are fully described by a ModelSpec: preprocessing recipe
(input_spec), layer stack, and how to read the output (output_spec).
The portable file format is a single JSON document; reals are written
with 17 significant digits so save/load round trips are value-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence, Union

import numpy as np

from .core_data import TensorND

__all__ = [
    "ModelError",
    "ModelFormatError",
    "Linear",
    "Tanh",
    "Relu",
    "Softmax",
    "Flatten",
    "Conv2D",
    "MaxPool2D",
    "InputSpec",
    "OutputSpec",
    "ModelSpec",
    "AdamState",
    "TrainConfig",
    "softmax",
    "forward",
    "cross_entropy_loss",
    "backward",
    "adam_step",
    "train",
    "save_model",
    "load_model",
    "uniform_init",
    "dense_layers",
    "parameter_count",
]

FORMAT_VERSION = 1


class ModelError(ValueError):
    """Model structure or usage violates its contract."""


class ModelFormatError(ModelError):
    """Model file cannot be decoded into a valid ModelSpec."""


def _frozen(arr, shape: tuple, what: str) -> np.ndarray:
    a = np.array(arr, dtype=np.float64, order="C", copy=True)
    if a.shape != shape:
        raise ModelError(f"{what}: expected shape {shape}, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ModelError(f"{what}: contains non-finite values")
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Linear:
    """Affine map y = W x + b with W stored row-major [out][in]."""

    in_width: int
    out_width: int
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.in_width < 1 or self.out_width < 1:
            raise ModelError("Linear widths must be >= 1")
        object.__setattr__(
            self, "W", _frozen(self.W, (self.out_width, self.in_width), "Linear.W")
        )
        object.__setattr__(self, "b", _frozen(self.b, (self.out_width,), "Linear.b"))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Linear)
            and self.in_width == other.in_width
            and self.out_width == other.out_width
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
        )


@dataclass(frozen=True)
class Tanh:
    pass


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class Softmax:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True, eq=False)
class Conv2D:
    """2D cross-correlation over CHW inputs; inference only."""

    in_ch: int
    out_ch: int
    kernel: int
    stride: int
    padding: int
    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        if min(self.in_ch, self.out_ch, self.kernel, self.stride) < 1:
            raise ModelError("Conv2D channels, kernel and stride must be >= 1")
        if self.padding < 0:
            raise ModelError("Conv2D padding must be >= 0")
        object.__setattr__(
            self,
            "weights",
            _frozen(
                self.weights,
                (self.out_ch, self.in_ch, self.kernel, self.kernel),
                "Conv2D.weights",
            ),
        )
        object.__setattr__(self, "bias", _frozen(self.bias, (self.out_ch,), "Conv2D.bias"))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Conv2D)
            and (self.in_ch, self.out_ch, self.kernel, self.stride, self.padding)
            == (other.in_ch, other.out_ch, other.kernel, other.stride, other.padding)
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.bias, other.bias)
        )


@dataclass(frozen=True)
class MaxPool2D:
    """Max pooling over CHW inputs; inference only."""

    kernel: int
    stride: int

    def __post_init__(self):
        if self.kernel < 1 or self.stride < 1:
            raise ModelError("MaxPool2D kernel and stride must be >= 1")


LayerSpec = Union[Linear, Tanh, Relu, Softmax, Flatten, Conv2D, MaxPool2D]

_TRAINABLE = (Linear, Tanh, Relu)


@dataclass(frozen=True)
class InputSpec:
    """Preprocessing recipe applied before the first layer.

    value_scale multiplies raw values; normalize_mean/std are applied
    per leading-axis channel afterwards; channel_policy handles
    greyscale input to models expecting three channels.
    """

    shape: tuple[int, ...]
    value_scale: float = 1.0
    normalize_mean: tuple[float, ...] = (0.0,)
    normalize_std: tuple[float, ...] = (1.0,)
    channel_policy: str = "none"

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if not shape or any(s < 1 for s in shape):
            raise ModelError(f"input shape must be positive integers, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        mean = tuple(float(v) for v in self.normalize_mean)
        std = tuple(float(v) for v in self.normalize_std)
        n_ch = shape[0]
        for name, vals in (("normalize_mean", mean), ("normalize_std", std)):
            if len(vals) not in (1, n_ch):
                raise ModelError(
                    f"{name} must have 1 or {n_ch} entries, got {len(vals)}"
                )
        if any(s == 0 for s in std):
            raise ModelError("normalize_std entries must be non-zero")
        object.__setattr__(self, "normalize_mean", mean)
        object.__setattr__(self, "normalize_std", std)
        object.__setattr__(self, "value_scale", float(self.value_scale))
        if self.channel_policy not in ("none", "grey_to_rgb"):
            raise ModelError(f"unknown channel_policy {self.channel_policy!r}")


@dataclass(frozen=True)
class OutputSpec:
    """How to interpret the final layer's output."""

    kind: str
    labels: tuple[str, ...]
    colors: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        if self.kind not in ("per_point_classes", "whole_input_classes"):
            raise ModelError(f"unknown output kind {self.kind!r}")
        labels = tuple(str(v) for v in self.labels)
        colors = tuple(tuple(int(c) for c in rgb) for rgb in self.colors)
        for rgb in colors:
            if len(rgb) != 3 or any(not 0 <= c <= 255 for c in rgb):
                raise ModelError(f"colors must be RGB triples in [0,255], got {rgb}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "colors", colors)


def _shape_after(layer: LayerSpec, shape: tuple[int, ...], idx: int) -> tuple[int, ...]:
    name = type(layer).__name__

    def err(msg: str):
        raise ModelError(f"layer {idx} ({name}): {msg}")

    if isinstance(layer, Linear):
        if len(shape) != 1 or shape[0] != layer.in_width:
            err(f"expected input of width {layer.in_width}, got shape {shape}")
        return (layer.out_width,)
    if isinstance(layer, (Tanh, Relu, Softmax)):
        return shape
    if isinstance(layer, Flatten):
        return (int(np.prod(shape)),)
    if isinstance(layer, Conv2D):
        if len(shape) != 3 or shape[0] != layer.in_ch:
            err(f"expected {layer.in_ch}-channel CHW input, got shape {shape}")
        out = []
        for n in shape[1:]:
            span = n + 2 * layer.padding - layer.kernel
            if span < 0:
                err(f"kernel {layer.kernel} larger than padded input extent {n + 2 * layer.padding}")
            out.append(span // layer.stride + 1)
        return (layer.out_ch, out[0], out[1])
    if isinstance(layer, MaxPool2D):
        if len(shape) != 3:
            err(f"expected CHW input, got shape {shape}")
        out = []
        for n in shape[1:]:
            span = n - layer.kernel
            if span < 0:
                err(f"pool window {layer.kernel} larger than input extent {n}")
            out.append(span // layer.stride + 1)
        return (shape[0], out[0], out[1])
    err("unknown layer type")


@dataclass(frozen=True)
class ModelSpec:
    """Complete portable model: preprocessing, layers, output reading."""

    input_spec: InputSpec
    layers: tuple[LayerSpec, ...]
    output_spec: OutputSpec
    format_version: int = FORMAT_VERSION
    output_shape: tuple[int, ...] = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.format_version != FORMAT_VERSION:
            raise ModelFormatError(
                f"format_version {self.format_version} not supported; "
                f"this engine reads version {FORMAT_VERSION}"
            )
        shape = self.input_spec.shape
        for idx, layer in enumerate(self.layers):
            shape = _shape_after(layer, shape, idx)
        object.__setattr__(self, "output_shape", shape)
        if len(shape) == 1:
            n_classes = shape[0]
        elif len(shape) == 3:
            n_classes = shape[0]
        else:
            raise ModelError(f"final output shape {shape} is neither a vector nor a channel map")
        if len(self.output_spec.labels) != n_classes:
            raise ModelError(
                f"{len(self.output_spec.labels)} labels for {n_classes} output classes"
            )
        if self.output_spec.colors and len(self.output_spec.colors) != n_classes:
            raise ModelError(
                f"{len(self.output_spec.colors)} colors for {n_classes} output classes"
            )

    @property
    def n_classes(self) -> int:
        return len(self.output_spec.labels)


def parameter_count(model: ModelSpec) -> int:
    n = 0
    for layer in model.layers:
        if isinstance(layer, Linear):
            n += layer.W.size + layer.b.size
        elif isinstance(layer, Conv2D):
            n += layer.weights.size + layer.bias.size
    return n


def softmax(z: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax (max subtraction) along one axis."""
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def _layer_forward(layer: LayerSpec, x: np.ndarray, idx: int) -> np.ndarray:
    # x always carries a leading batch axis here.
    name = type(layer).__name__
    if isinstance(layer, Linear):
        if x.ndim != 2 or x.shape[1] != layer.in_width:
            raise ModelError(
                f"layer {idx} ({name}): expected input of width {layer.in_width}, "
                f"got shape {x.shape[1:]}"
            )
        return x @ layer.W.T + layer.b
    if isinstance(layer, Tanh):
        return np.tanh(x)
    if isinstance(layer, Relu):
        return np.maximum(x, 0.0)
    if isinstance(layer, Softmax):
        return softmax(x, axis=-1)
    if isinstance(layer, Flatten):
        return x.reshape(x.shape[0], -1)
    if isinstance(layer, Conv2D):
        if x.ndim != 4 or x.shape[1] != layer.in_ch:
            raise ModelError(
                f"layer {idx} ({name}): expected {layer.in_ch}-channel CHW input, "
                f"got shape {x.shape[1:]}"
            )
        if layer.padding:
            p = layer.padding
            x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        k, s = layer.kernel, layer.stride
        if x.shape[2] < k or x.shape[3] < k:
            raise ModelError(
                f"layer {idx} ({name}): kernel {k} larger than padded input "
                f"{x.shape[2]}x{x.shape[3]}"
            )
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s]
        out = np.einsum("bchwij,ocij->bohw", win, layer.weights, optimize=True)
        return out + layer.bias[None, :, None, None]
    if isinstance(layer, MaxPool2D):
        if x.ndim != 4:
            raise ModelError(f"layer {idx} ({name}): expected CHW input, got shape {x.shape[1:]}")
        k, s = layer.kernel, layer.stride
        if x.shape[2] < k or x.shape[3] < k:
            raise ModelError(
                f"layer {idx} ({name}): pool window {k} larger than input "
                f"{x.shape[2]}x{x.shape[3]}"
            )
        win = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        return win[:, :, ::s, ::s].max(axis=(-2, -1))
    raise ModelError(f"layer {idx}: unknown layer type {name}")


def _batched_input(model: ModelSpec, t) -> tuple[np.ndarray, bool]:
    """Return (batch-leading array, had_batch_axis)."""
    if isinstance(t, TensorND):
        arr = t.as_array()
    else:
        arr = np.asarray(t, dtype=np.float64)
    want = model.input_spec.shape
    if arr.shape == want:
        return arr[None], False
    if arr.ndim == len(want) + 1 and arr.shape[1:] == want:
        return arr, True
    raise ModelError(
        f"input shape {arr.shape} matches neither {want} nor (batch, *{want})"
    )


def forward(model: ModelSpec, t) -> TensorND:
    """Propagate input through all layers; returns a TensorND.

    The input either matches input_spec.shape exactly or carries one
    extra leading batch axis (preserved on output).
    """
    x, batched = _batched_input(model, t)
    for idx, layer in enumerate(model.layers):
        x = _layer_forward(layer, x, idx)
    if not batched:
        x = x[0]
    return TensorND.from_numpy(x)


def cross_entropy_loss(logits, targets) -> tuple[float, TensorND]:
    """Mean cross-entropy of softmax(logits) against integer targets.

    Returns (loss, gradient w.r.t. logits); gradient rows are
    (softmax - onehot) / batch, so downstream backprop needs no extra
    scaling.
    """
    z = logits.as_array() if isinstance(logits, TensorND) else np.asarray(logits, dtype=np.float64)
    if z.ndim == 1:
        z = z[None]
    if z.ndim != 2:
        raise ModelError(f"logits must be (batch, classes), got shape {z.shape}")
    y = np.asarray(targets, dtype=np.int64).reshape(-1)
    n, c = z.shape
    if y.shape != (n,):
        raise ModelError(f"{y.size} targets for a batch of {n}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise ModelError(f"target out of range [0, {c})")
    shifted = z - z.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), y].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), y] -= 1.0
    grad /= n
    return loss, TensorND.from_numpy(grad)


def _check_trainable(model: ModelSpec, verb: str):
    for idx, layer in enumerate(model.layers):
        if not isinstance(layer, _TRAINABLE):
            raise ModelError(
                f"layer {idx} ({type(layer).__name__}) is an inference-only layer; "
                f"{verb} supports Linear/Tanh/Relu"
            )


def _loss_and_grads(
    model: ModelSpec, x: np.ndarray, targets
) -> tuple[float, list[tuple[np.ndarray, np.ndarray]]]:
    cache: list = []
    for idx, layer in enumerate(model.layers):
        if isinstance(layer, Linear):
            cache.append(x)
            x = _layer_forward(layer, x, idx)
        elif isinstance(layer, Tanh):
            x = np.tanh(x)
            cache.append(x)  # tanh' = 1 - y^2 needs the output
        else:  # Relu
            cache.append(x)
            x = np.maximum(x, 0.0)
    loss, grad_t = cross_entropy_loss(x, targets)
    g = grad_t.as_array()
    grads: list = []
    for layer, saved in zip(reversed(model.layers), reversed(cache)):
        if isinstance(layer, Linear):
            grads.append((g.T @ saved, g.sum(axis=0)))
            g = g @ layer.W
        elif isinstance(layer, Tanh):
            g = g * (1.0 - saved * saved)
        else:  # Relu
            g = g * (saved > 0.0)
    grads.reverse()
    return loss, grads


def backward(model: ModelSpec, input_batch, targets) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gradients of mean cross-entropy w.r.t. every Linear (W, b).

    Only the trainable subset (Linear/Tanh/Relu) is accepted; any other
    layer raises an inference-only error.  Returns one (dW, db) pair
    per Linear layer, in layer order.
    """
    _check_trainable(model, "backward")
    x, _ = _batched_input(model, input_batch)
    return _loss_and_grads(model, x, targets)[1]


@dataclass(frozen=True)
class AdamState:
    """Adam accumulators for a list of parameter arrays."""

    t: int
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def fresh(cls, params: Sequence[np.ndarray], lr: float, **kw) -> "AdamState":
        zeros = tuple(np.zeros_like(p) for p in params)
        return cls(0, zeros, tuple(np.zeros_like(p) for p in params), lr, **kw)


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState
) -> tuple[list[np.ndarray], AdamState]:
    """One Adam update: p <- p - lr * m_hat / (sqrt(v_hat) + eps)."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ModelError("parameter, gradient and state lists must align")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ModelError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_params.append(p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, replace(state, t=t, m=tuple(new_m), v=tuple(new_v))


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ModelError(f"epochs must be >= 1, got {self.epochs}")
        if not 0.0 < self.train_fraction < 1.0:
            raise ModelError("train_fraction must lie in (0, 1)")


def train(model: ModelSpec, X, y, cfg: TrainConfig, progress=None) -> tuple[ModelSpec, list[dict]]:
    """Full-batch Adam training of a dense model; deterministic per seed.

    Data is shuffled once with a generator seeded by cfg.seed and split
    train_fraction / rest; every epoch records losses evaluated with the
    parameters entering that epoch.  Returns the trained model and a
    history of {"train_loss", "val_loss"} dicts, one per epoch.  An
    optional progress callback receives the completed-epoch fraction.
    """
    _check_trainable(model, "training")
    Xa = X.as_array() if isinstance(X, TensorND) else np.asarray(X, dtype=np.float64)
    ya = np.asarray(y, dtype=np.int64).reshape(-1)
    if Xa.ndim != 2:
        raise ModelError(f"training input must be (rows, features), got shape {Xa.shape}")
    n = Xa.shape[0]
    if ya.size != n:
        raise ModelError(f"{ya.size} targets for {n} rows")
    if n < 2:
        raise ModelError("training needs at least 2 rows")
    rng = np.random.default_rng(cfg.seed)
    perm = rng.permutation(n)
    n_train = int(n * cfg.train_fraction)
    if n_train == 0 or n_train == n:
        raise ModelError(
            f"degenerate split: {n_train} training rows out of {n} "
            f"at fraction {cfg.train_fraction}"
        )
    X_train, y_train = Xa[perm[:n_train]], ya[perm[:n_train]]
    X_val, y_val = Xa[perm[n_train:]], ya[perm[n_train:]]

    # Mutable working copies of the Linear parameters, in layer order.
    linear_idx = [i for i, l in enumerate(model.layers) if isinstance(l, Linear)]
    params: list[np.ndarray] = []
    for i in linear_idx:
        params.append(model.layers[i].W.copy())
        params.append(model.layers[i].b.copy())
    state = AdamState.fresh(params, lr=cfg.learning_rate)

    def assemble() -> ModelSpec:
        layers = list(model.layers)
        for slot, i in enumerate(linear_idx):
            old = layers[i]
            layers[i] = Linear(old.in_width, old.out_width, params[2 * slot], params[2 * slot + 1])
        return replace(model, layers=tuple(layers))

    def batch_loss(m: ModelSpec, Xb, yb) -> float:
        logits = forward(m, Xb).as_array()
        loss, _ = cross_entropy_loss(logits, yb)
        return loss

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        current = assemble()
        train_loss, grads_pairs = _loss_and_grads(current, X_train, y_train)
        val_loss = batch_loss(current, X_val, y_val)
        history.append({"train_loss": train_loss, "val_loss": val_loss})
        flat_grads: list[np.ndarray] = []
        for dW, db in grads_pairs:
            flat_grads.append(dW)
            flat_grads.append(db)
        params, state = adam_step(params, flat_grads, state)
        if progress is not None:
            progress((epoch + 1) / cfg.epochs)
    return assemble(), history


def uniform_init(rng: np.random.Generator, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Weights and bias drawn uniformly from [-sqrt(1/n_in), +sqrt(1/n_in)]."""
    bound = float(np.sqrt(1.0 / n_in))
    W = rng.uniform(-bound, bound, size=(n_out, n_in))
    b = rng.uniform(-bound, bound, size=n_out)
    return W, b


def dense_layers(widths: Sequence[int], rng: np.random.Generator) -> tuple[LayerSpec, ...]:
    """Linear stack with Tanh between hidden layers, none after the last."""
    if len(widths) < 2:
        raise ModelError("need at least input and output widths")
    layers: list[LayerSpec] = []
    for i in range(len(widths) - 1):
        W, b = uniform_init(rng, widths[i], widths[i + 1])
        layers.append(Linear(widths[i], widths[i + 1], W, b))
        if i < len(widths) - 2:
            layers.append(Tanh())
    return tuple(layers)


# ---------------------------------------------------------------------------
# Model file format

def _emit(obj, out: list):
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(f"{float(obj):.17g}")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for i, v in enumerate(obj):
            if i:
                out.append(",")
            _emit(v, out)
        out.append("]")
    elif isinstance(obj, dict):
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            if i:
                out.append(",")
            out.append(json.dumps(str(k)))
            out.append(":")
            _emit(v, out)
        out.append("}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def _nested(a: np.ndarray) -> list:
    return a.tolist()


def _layer_to_json(layer: LayerSpec) -> dict:
    if isinstance(layer, Linear):
        return {
            "type": "Linear",
            "in": layer.in_width,
            "out": layer.out_width,
            "W": _nested(layer.W),
            "b": _nested(layer.b),
        }
    if isinstance(layer, Conv2D):
        return {
            "type": "Conv2D",
            "in_ch": layer.in_ch,
            "out_ch": layer.out_ch,
            "kernel": layer.kernel,
            "stride": layer.stride,
            "padding": layer.padding,
            "weights": _nested(layer.weights),
            "bias": _nested(layer.bias),
        }
    if isinstance(layer, MaxPool2D):
        return {"type": "MaxPool2D", "kernel": layer.kernel, "stride": layer.stride}
    return {"type": type(layer).__name__}


def save_model(model: ModelSpec) -> bytes:
    """Serialize to the JSON model-file format (17-digit reals)."""
    doc = {
        "format_version": model.format_version,
        "input_spec": {
            "shape": list(model.input_spec.shape),
            "value_scale": model.input_spec.value_scale,
            "normalize_mean": list(model.input_spec.normalize_mean),
            "normalize_std": list(model.input_spec.normalize_std),
            "channel_policy": model.input_spec.channel_policy,
        },
        "layers": [_layer_to_json(l) for l in model.layers],
        "output_spec": {
            "kind": model.output_spec.kind,
            "labels": list(model.output_spec.labels),
            "colors": [list(c) for c in model.output_spec.colors],
        },
    }
    out: list = []
    _emit(doc, out)
    return "".join(out).encode("utf-8")


def _require_keys(obj: dict, keys: set, what: str):
    if not isinstance(obj, dict):
        raise ModelFormatError(f"{what} must be an object")
    missing = keys - obj.keys()
    extra = obj.keys() - keys
    if missing:
        raise ModelFormatError(f"{what}: missing fields {sorted(missing)}")
    if extra:
        raise ModelFormatError(f"{what}: unknown fields {sorted(extra)}")


def _layer_from_json(obj: dict, idx: int) -> LayerSpec:
    what = f"layers[{idx}]"
    if not isinstance(obj, dict) or "type" not in obj:
        raise ModelFormatError(f"{what}: must be an object with a 'type' field")
    kind = obj["type"]
    try:
        if kind == "Linear":
            _require_keys(obj, {"type", "in", "out", "W", "b"}, what)
            return Linear(int(obj["in"]), int(obj["out"]), obj["W"], obj["b"])
        if kind == "Tanh":
            _require_keys(obj, {"type"}, what)
            return Tanh()
        if kind == "Relu":
            _require_keys(obj, {"type"}, what)
            return Relu()
        if kind == "Softmax":
            _require_keys(obj, {"type"}, what)
            return Softmax()
        if kind == "Flatten":
            _require_keys(obj, {"type"}, what)
            return Flatten()
        if kind == "Conv2D":
            _require_keys(
                obj,
                {"type", "in_ch", "out_ch", "kernel", "stride", "padding", "weights", "bias"},
                what,
            )
            return Conv2D(
                int(obj["in_ch"]),
                int(obj["out_ch"]),
                int(obj["kernel"]),
                int(obj["stride"]),
                int(obj["padding"]),
                obj["weights"],
                obj["bias"],
            )
        if kind == "MaxPool2D":
            _require_keys(obj, {"type", "kernel", "stride"}, what)
            return MaxPool2D(int(obj["kernel"]), int(obj["stride"]))
    except (TypeError, ValueError) as e:
        if isinstance(e, ModelFormatError):
            raise
        raise ModelFormatError(f"{what}: {e}") from None
    raise ModelFormatError(f"{what}: unknown layer type {kind!r}")


def load_model(data: bytes | str) -> ModelSpec:
    """Parse and fully validate a model file; inverse of save_model."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}") from None
    _require_keys(doc, {"format_version", "input_spec", "layers", "output_spec"}, "model file")
    version = doc["format_version"]
    if not isinstance(version, int) or isinstance(version, bool):
        raise ModelFormatError("format_version must be an integer")
    if version != FORMAT_VERSION:
        raise ModelFormatError(
            f"format_version {version} not supported; this engine reads version {FORMAT_VERSION}"
        )
    ispec = doc["input_spec"]
    _require_keys(
        ispec,
        {"shape", "value_scale", "normalize_mean", "normalize_std", "channel_policy"},
        "input_spec",
    )
    ospec = doc["output_spec"]
    _require_keys(ospec, {"kind", "labels", "colors"}, "output_spec")
    if not isinstance(doc["layers"], list):
        raise ModelFormatError("layers must be a list")
    try:
        input_spec = InputSpec(
            shape=tuple(ispec["shape"]),
            value_scale=float(ispec["value_scale"]),
            normalize_mean=tuple(ispec["normalize_mean"]),
            normalize_std=tuple(ispec["normalize_std"]),
            channel_policy=ispec["channel_policy"],
        )
        layers = tuple(_layer_from_json(l, i) for i, l in enumerate(doc["layers"]))
        output_spec = OutputSpec(
            kind=ospec["kind"],
            labels=tuple(ospec["labels"]),
            colors=tuple(ospec["colors"]),
        )
        return ModelSpec(input_spec, layers, output_spec, format_version=version)
    except ModelFormatError:
        raise
    except (ModelError, TypeError, ValueError) as e:
        raise ModelFormatError(str(e)) from None

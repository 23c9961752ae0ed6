"""Feedforward ReLU networks.

Model representation (dense / conv2d / maxpool / flatten layers with optional
ReLU markers), a deterministic forward pass that exposes pre- and post-ReLU
values for every layer, activation-pattern extraction, and a bit-exact JSON
model file format.

Layers are indexed the way the rest of the package expects: the input layer
is layer 1, the output layer is layer K, and hidden layers are 2..K-1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ModelError(ValueError):
    """Invalid architecture or malformed model file."""


class InputShapeError(ValueError):
    """Forward input does not match the network's input shape."""


class DomainError(ValueError):
    """Forward input contains non-finite entries."""


@dataclass(frozen=True)
class Dense:
    """Fully connected layer: u = v_prev @ weights + bias.

    ``weights`` has shape (fan_in, fan_out); row h holds the outgoing weights
    of input neuron h.
    """

    weights: np.ndarray
    bias: np.ndarray
    relu: bool = True


@dataclass(frozen=True)
class Conv2D:
    """2-D convolution with kernels of shape (kh, kw, in_channels, out_channels)."""

    kernels: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int] = (1, 1)
    padding: str = "valid"  # "valid" | "same"
    relu: bool = True


@dataclass(frozen=True)
class MaxPool:
    """Max pooling over non-overlapping windows; window must divide the input dims."""

    window: tuple[int, int]


@dataclass(frozen=True)
class Flatten:
    """Reshape to a flat vector (C order)."""


Layer = Union[Dense, Conv2D, MaxPool, Flatten]


def _conv_out_hw(h: int, w: int, kh: int, kw: int, stride: tuple[int, int], padding: str) -> tuple[int, int]:
    sh, sw = stride
    if padding == "valid":
        if h < kh or w < kw:
            raise ModelError(f"conv2d kernel {kh}x{kw} larger than input {h}x{w}")
        return (h - kh) // sh + 1, (w - kw) // sw + 1
    if padding == "same":
        return math.ceil(h / sh), math.ceil(w / sw)
    raise ModelError(f"unknown conv2d padding {padding!r}")


def _same_pad(size: int, k: int, s: int) -> tuple[int, int]:
    out = math.ceil(size / s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def _layer_out_shape(layer: Layer, in_shape: tuple[int, ...]) -> tuple[int, ...]:
    if isinstance(layer, Dense):
        if len(in_shape) != 1:
            raise ModelError(f"dense layer expects a flat input, got shape {in_shape}")
        fan_in, fan_out = layer.weights.shape
        if fan_in != in_shape[0]:
            raise ModelError(f"dense weights expect {fan_in} inputs, layer receives {in_shape[0]}")
        if layer.bias.shape != (fan_out,):
            raise ModelError(f"dense bias shape {layer.bias.shape} does not match width {fan_out}")
        return (fan_out,)
    if isinstance(layer, Conv2D):
        if len(in_shape) != 3:
            raise ModelError(f"conv2d expects an (H, W, C) input, got shape {in_shape}")
        kh, kw, in_ch, out_ch = layer.kernels.shape
        h, w, c = in_shape
        if in_ch != c:
            raise ModelError(f"conv2d kernels expect {in_ch} channels, layer receives {c}")
        if layer.bias.shape != (out_ch,):
            raise ModelError(f"conv2d bias shape {layer.bias.shape} does not match {out_ch} kernels")
        oh, ow = _conv_out_hw(h, w, kh, kw, layer.stride, layer.padding)
        return (oh, ow, out_ch)
    if isinstance(layer, MaxPool):
        if len(in_shape) != 3:
            raise ModelError(f"maxpool expects an (H, W, C) input, got shape {in_shape}")
        ph, pw = layer.window
        h, w, c = in_shape
        if h % ph or w % pw:
            raise ModelError(f"maxpool window {layer.window} does not divide input dims {h}x{w}")
        return (h // ph, w // pw, c)
    if isinstance(layer, Flatten):
        return (int(np.prod(in_shape)),)
    raise ModelError(f"unknown layer type {type(layer).__name__}")


class Network:
    """An immutable layered feedforward model.

    The input layer is layer 1; ``layers[j]`` produces layer ``j + 2``.
    Construction validates that consecutive shapes compose, that there is at
    least one hidden layer, that the output layer has >= 2 neurons, and that
    all weights are finite.
    """

    def __init__(self, input_shape: tuple[int, ...], layers: list[Layer]):
        self.input_shape = tuple(int(d) for d in input_shape)
        if not self.input_shape or any(d <= 0 for d in self.input_shape):
            raise ModelError(f"invalid input shape {input_shape}")
        self.layers = list(layers)
        if len(self.layers) < 2:
            raise ModelError("network needs at least one hidden layer and an output layer")
        for layer in self.layers:
            for arr_name in ("weights", "bias", "kernels"):
                arr = getattr(layer, arr_name, None)
                if arr is not None and not np.all(np.isfinite(arr)):
                    raise ModelError(f"non-finite values in {type(layer).__name__}.{arr_name}")
        self.layer_shapes: list[tuple[int, ...]] = [self.input_shape]
        for layer in self.layers:
            self.layer_shapes.append(_layer_out_shape(layer, self.layer_shapes[-1]))
        if int(np.prod(self.layer_shapes[-1])) < 2:
            raise ModelError("output layer must have at least 2 neurons")

    @property
    def num_layers(self) -> int:
        """K: total layer count including the input layer."""
        return len(self.layers) + 1

    def layer(self, k: int) -> Layer:
        """Model layer producing layer index k (2 <= k <= K)."""
        return self.layers[k - 2]

    def shape(self, k: int) -> tuple[int, ...]:
        return self.layer_shapes[k - 1]

    def width(self, k: int) -> int:
        """Neuron count of layer k."""
        return int(np.prod(self.layer_shapes[k - 1]))

    @property
    def input_dim(self) -> int:
        return int(np.prod(self.input_shape))

    @property
    def relu_layers(self) -> tuple[int, ...]:
        """Layer indices whose neurons carry ReLU activation bits."""
        return tuple(
            k
            for k in range(2, self.num_layers + 1)
            if getattr(self.layer(k), "relu", False)
        )

    @property
    def hidden_relu_layers(self) -> tuple[int, ...]:
        return tuple(k for k in self.relu_layers if k < self.num_layers)

    def relu_neurons(self) -> list[tuple[int, int]]:
        """All (layer, neuron) positions of hidden ReLU neurons, in index order."""
        return [(k, i) for k in self.hidden_relu_layers for i in range(self.width(k))]


@dataclass
class Activations:
    """Per-layer values of one forward pass.

    ``u[k]`` holds pre-ReLU values and ``v[k]`` post-ReLU values of layer k in
    the layer's natural shape; for the input layer and for layers without a
    ReLU marker the two coincide. ``pool_winners[k]`` records, for each output
    position of a maxpool layer, the flat index of the winning input neuron.
    ``label`` is the argmax over the output layer (ties broken by lowest index).
    """

    u: dict[int, np.ndarray]
    v: dict[int, np.ndarray]
    label: int
    relu_layers: tuple[int, ...]
    pool_winners: dict[int, np.ndarray] = field(default_factory=dict)

    def u_flat(self, k: int) -> np.ndarray:
        return self.u[k].reshape(-1)

    def v_flat(self, k: int) -> np.ndarray:
        return self.v[k].reshape(-1)


@dataclass(frozen=True)
class ActivationPattern:
    """Boolean map (layer, neuron) -> ReLU activated.

    A bit is true iff the neuron's pre-ReLU value is >= 0 (the tie u = 0 is
    classified as activated, since there u equals the post-ReLU value).
    A pattern may be partial: only the positions present in ``bits`` are
    constrained.
    """

    bits: dict[tuple[int, int], bool]

    def __getitem__(self, pos: tuple[int, int]) -> bool:
        return self.bits[pos]

    def __contains__(self, pos: tuple[int, int]) -> bool:
        return pos in self.bits

    def __len__(self) -> int:
        return len(self.bits)


def _conv_forward(layer: Conv2D, x: np.ndarray) -> np.ndarray:
    kh, kw, in_ch, out_ch = layer.kernels.shape
    sh, sw = layer.stride
    if layer.padding == "same":
        (pt, pb) = _same_pad(x.shape[0], kh, sh)
        (pl, pr) = _same_pad(x.shape[1], kw, sw)
        x = np.pad(x, ((pt, pb), (pl, pr), (0, 0)))
    oh, ow = (x.shape[0] - kh) // sh + 1, (x.shape[1] - kw) // sw + 1
    out = np.empty((oh, ow, out_ch), dtype=np.float64)
    flat_k = layer.kernels.reshape(kh * kw * in_ch, out_ch)
    for i in range(oh):
        for j in range(ow):
            patch = x[i * sh : i * sh + kh, j * sw : j * sw + kw, :].reshape(-1)
            out[i, j, :] = patch @ flat_k + layer.bias
    return out


def _pool_forward(layer: MaxPool, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ph, pw = layer.window
    h, w, c = x.shape
    oh, ow = h // ph, w // pw
    out = np.empty((oh, ow, c), dtype=np.float64)
    winners = np.empty(oh * ow * c, dtype=np.int64)
    for i in range(oh):
        for j in range(ow):
            for ch in range(c):
                window = x[i * ph : (i + 1) * ph, j * pw : (j + 1) * pw, ch]
                # np.argmax takes the first maximum: deterministic tie-breaking
                local = int(np.argmax(window))
                li, lj = divmod(local, pw)
                src = (i * ph + li) * (w * c) + (j * pw + lj) * c + ch
                flat_out = (i * ow + j) * c + ch
                winners[flat_out] = src
                out[i, j, ch] = x[i * ph + li, j * pw + lj, ch]
    return out, winners


def forward(net: Network, x: np.ndarray) -> Activations:
    """Deterministic forward pass exposing all pre-/post-ReLU values.

    ``x`` is a flat vector of length prod(input_shape) (an array of the input
    shape itself is also accepted). Raises InputShapeError on a size mismatch
    and DomainError on non-finite entries.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size != net.input_dim:
        raise InputShapeError(f"input has {x.size} entries, network expects {net.input_dim}")
    if not np.all(np.isfinite(x)):
        raise DomainError("input contains non-finite entries")
    value = x.reshape(net.input_shape)
    u: dict[int, np.ndarray] = {1: value}
    v: dict[int, np.ndarray] = {1: value}
    winners: dict[int, np.ndarray] = {}
    for k in range(2, net.num_layers + 1):
        layer = net.layer(k)
        if isinstance(layer, Dense):
            pre = value @ layer.weights + layer.bias
            value = np.maximum(pre, 0.0) if layer.relu else pre
        elif isinstance(layer, Conv2D):
            pre = _conv_forward(layer, value)
            value = np.maximum(pre, 0.0) if layer.relu else pre
        elif isinstance(layer, MaxPool):
            pre, winners[k] = _pool_forward(layer, value)
            value = pre
        elif isinstance(layer, Flatten):
            pre = value.reshape(-1)
            value = pre
        else:  # pragma: no cover - construction already rejects unknown layers
            raise ModelError(f"unknown layer type {type(layer).__name__}")
        u[k] = pre
        v[k] = value
    label = int(np.argmax(v[net.num_layers].reshape(-1)))
    return Activations(u=u, v=v, label=label, relu_layers=net.relu_layers, pool_winners=winners)


def pattern_of(acts: Activations) -> ActivationPattern:
    """Extract the total activation pattern of a forward pass (bit = u >= 0)."""
    bits: dict[tuple[int, int], bool] = {}
    for k in acts.relu_layers:
        flat = acts.u_flat(k)
        for i in range(flat.size):
            bits[(k, i)] = bool(flat[i] >= 0.0)
    return ActivationPattern(bits)


class ActivationCache:
    """Memoizes forward passes by exact input bytes.

    The network is immutable and forward is pure, so a cache entry never goes
    stale; callers share one cache across satisfaction checks and ranking.
    """

    def __init__(self, net: Network):
        self.net = net
        self._entries: dict[bytes, Activations] = {}

    def get(self, x: np.ndarray) -> Activations:
        key = np.asarray(x, dtype=np.float64).tobytes()
        acts = self._entries.get(key)
        if acts is None:
            acts = forward(self.net, x)
            self._entries[key] = acts
        return acts

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# Model file I/O
#
# JSON schema:
#   {"input_shape": [..], "layers": [
#       {"kind": "dense", "weights": [[...]], "bias": [...], "relu": true},
#       {"kind": "conv2d", "kernels": [[[[...]]]], "bias": [...],
#        "stride": [1, 1], "padding": "valid", "relu": true},
#       {"kind": "maxpool", "window": [2, 2]},
#       {"kind": "flatten"}]}
# Floats are written with 17 significant digits so that load(save(net))
# reproduces every weight bit for bit.
# ---------------------------------------------------------------------------


def _emit_json(obj) -> str:
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        text = format(float(obj), ".17g")
        # keep a float token so json round-trips the sign of -0.0
        return text if ("." in text or "e" in text) else text + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = ", ".join(f"{json.dumps(k)}: {_emit_json(v)}" for k, v in obj.items())
        return "{" + items + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_emit_json(v) for v in obj) + "]"
    if isinstance(obj, np.ndarray):
        return _emit_json(obj.tolist())
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _layer_to_json(layer: Layer) -> dict:
    if isinstance(layer, Dense):
        return {
            "kind": "dense",
            "weights": layer.weights,
            "bias": layer.bias,
            "relu": layer.relu,
        }
    if isinstance(layer, Conv2D):
        return {
            "kind": "conv2d",
            "kernels": layer.kernels,
            "bias": layer.bias,
            "stride": list(layer.stride),
            "padding": layer.padding,
            "relu": layer.relu,
        }
    if isinstance(layer, MaxPool):
        return {"kind": "maxpool", "window": list(layer.window)}
    if isinstance(layer, Flatten):
        return {"kind": "flatten"}
    raise ModelError(f"unknown layer type {type(layer).__name__}")


def save_model(net: Network, path: str) -> None:
    doc = {
        "input_shape": list(net.input_shape),
        "layers": [_layer_to_json(layer) for layer in net.layers],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_emit_json(doc))
        fh.write("\n")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelError(msg)


def _parse_float_array(raw, what: str, ndim: int) -> np.ndarray:
    try:
        arr = np.array(raw, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{what}: not a numeric array ({exc})") from exc
    _require(arr.ndim == ndim, f"{what}: expected {ndim} dimensions, got {arr.ndim} (ragged rows?)")
    _require(bool(np.all(np.isfinite(arr))), f"{what}: contains non-finite values")
    return arr


def _layer_from_json(raw: dict, idx: int) -> Layer:
    _require(isinstance(raw, dict) and "kind" in raw, f"layer {idx}: missing 'kind'")
    kind = raw["kind"]
    if kind == "dense":
        weights = _parse_float_array(raw.get("weights"), f"layer {idx}: weights", 2)
        bias = _parse_float_array(raw.get("bias"), f"layer {idx}: bias", 1)
        _require(
            bias.shape[0] == weights.shape[1],
            f"layer {idx}: bias length {bias.shape[0]} does not match {weights.shape[1]} columns",
        )
        return Dense(weights=weights, bias=bias, relu=bool(raw.get("relu", False)))
    if kind == "conv2d":
        kernels = _parse_float_array(raw.get("kernels"), f"layer {idx}: kernels", 4)
        bias = _parse_float_array(raw.get("bias"), f"layer {idx}: bias", 1)
        stride = tuple(int(s) for s in raw.get("stride", [1, 1]))
        _require(len(stride) == 2 and all(s >= 1 for s in stride), f"layer {idx}: bad stride")
        padding = raw.get("padding", "valid")
        _require(padding in ("valid", "same"), f"layer {idx}: bad padding {padding!r}")
        return Conv2D(kernels=kernels, bias=bias, stride=stride, padding=padding,
                      relu=bool(raw.get("relu", False)))
    if kind == "maxpool":
        window = tuple(int(w) for w in raw.get("window", ()))
        _require(len(window) == 2 and all(w >= 1 for w in window), f"layer {idx}: bad window")
        return MaxPool(window=window)
    if kind == "flatten":
        return Flatten()
    raise ModelError(f"layer {idx}: unknown kind {kind!r}")


def load_model(path: str) -> Network:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: invalid JSON ({exc})") from exc
    _require(isinstance(doc, dict), f"{path}: top-level object expected")
    _require("input_shape" in doc and "layers" in doc, f"{path}: missing input_shape or layers")
    input_shape = tuple(int(d) for d in doc["input_shape"])
    layers = [_layer_from_json(raw, i) for i, raw in enumerate(doc["layers"])]
    return Network(input_shape=input_shape, layers=layers)

"""Minimal dense feedforward network with exact reverse-mode gradients.

Everything is float64 numpy. A network is a chain of dense layers with
tanh or identity activation; the forward pass records a trace that the
backward passes consume, so gradients w.r.t. both inputs and parameters
are exact (up to float rounding) rather than approximated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

MAGIC = b"RHN1"
FORMAT_VERSION = 1


class NetError(ValueError):
    """Raised for shape mismatches, invalid traces, or non-finite values."""


class Activation(Enum):
    TANH = 0
    IDENTITY = 1


@dataclass
class LayerParams:
    weights: np.ndarray  # (out_dim, in_dim)
    biases: np.ndarray  # (out_dim,)
    activation: Activation = Activation.TANH

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.biases.ndim != 1:
            raise NetError("layer weights must be 2-D and biases 1-D")
        if self.weights.shape[0] != self.biases.shape[0]:
            raise NetError(
                f"layer bias length {self.biases.shape[0]} does not match "
                f"weight rows {self.weights.shape[0]}"
            )
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise NetError("layer parameters contain non-finite entries")

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    def copy(self):
        return LayerParams(self.weights.copy(), self.biases.copy(), self.activation)


@dataclass
class NetworkParams:
    layers: list[LayerParams]

    def __post_init__(self):
        if not self.layers:
            raise NetError("network needs at least one layer")
        for i in range(1, len(self.layers)):
            prev, cur = self.layers[i - 1], self.layers[i]
            if prev.out_dim != cur.in_dim:
                raise NetError(
                    f"layer {i} expects input dim {cur.in_dim} but layer "
                    f"{i - 1} outputs {prev.out_dim}"
                )

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def copy(self):
        return NetworkParams([layer.copy() for layer in self.layers])


@dataclass
class ForwardTrace:
    """Per-layer pre-activations/activations for one input (or one batch)."""

    x: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    activations: list[np.ndarray] = field(default_factory=list)

    @property
    def output(self):
        return self.activations[-1]


def init_network(layer_sizes, seed, hidden_activation=Activation.TANH,
                 output_activation=Activation.IDENTITY):
    """Build a network with uniform [-1/sqrt(fan_in), 1/sqrt(fan_in)] weights."""
    if len(layer_sizes) < 2:
        raise NetError("layer_sizes needs at least input and output dims")
    rng = np.random.default_rng(seed)
    layers = []
    for i in range(len(layer_sizes) - 1):
        fan_in, fan_out = layer_sizes[i], layer_sizes[i + 1]
        bound = 1.0 / np.sqrt(fan_in)
        act = output_activation if i == len(layer_sizes) - 2 else hidden_activation
        layers.append(
            LayerParams(
                rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                rng.uniform(-bound, bound, size=fan_out),
                act,
            )
        )
    return NetworkParams(layers)


def forward(params: NetworkParams, x) -> ForwardTrace:
    """Evaluate the network on a vector (d,) or batch (n, d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != params.input_dim:
        raise NetError(
            f"input has {x.shape[-1]} features, layer 0 expects {params.input_dim}"
        )
    if not np.isfinite(x).all():
        raise NetError("input contains non-finite entries")
    trace = ForwardTrace(x=x)
    a = x
    for layer in params.layers:
        z = a @ layer.weights.T + layer.biases
        a = np.tanh(z) if layer.activation is Activation.TANH else z
        trace.pre_activations.append(z)
        trace.activations.append(a)
    return trace


def _check_trace(params, trace):
    if len(trace.activations) != len(params.layers):
        raise NetError(
            f"trace has {len(trace.activations)} layers, network has "
            f"{len(params.layers)}"
        )
    for i, layer in enumerate(params.layers):
        if trace.activations[i].shape[-1] != layer.out_dim:
            raise NetError(f"trace layer {i} width does not match network")


def _backprop_deltas(params, trace, upstream):
    """Yield (layer index, delta) pairs from last layer to first."""
    delta = np.asarray(upstream, dtype=np.float64)
    for i in range(len(params.layers) - 1, -1, -1):
        layer = params.layers[i]
        if layer.activation is Activation.TANH:
            delta = delta * (1.0 - trace.activations[i] ** 2)
        yield i, delta
        delta = delta @ layer.weights


def grad_input(params: NetworkParams, trace: ForwardTrace, upstream):
    """d(upstream . f(x)) / dx via reverse accumulation."""
    _check_trace(params, trace)
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape[-1] != params.output_dim:
        raise NetError("upstream length does not match network output dim")
    for _, delta in _backprop_deltas(params, trace, upstream):
        pass
    return delta @ params.layers[0].weights


def zero_grads(params: NetworkParams):
    return [
        (np.zeros_like(layer.weights), np.zeros_like(layer.biases))
        for layer in params.layers
    ]


def grad_params(params: NetworkParams, traces, upstreams):
    """Sum over the batch of parameter gradients of upstream . f(x).

    Accepts a single (possibly batched) trace or a sequence of traces with
    matching upstreams.
    """
    if isinstance(traces, ForwardTrace):
        traces, upstreams = [traces], [upstreams]
    traces, upstreams = list(traces), list(upstreams)
    if not traces or len(traces) != len(upstreams):
        raise NetError("grad_params needs equally many traces and upstreams (>= 1)")
    grads = zero_grads(params)
    for trace, upstream in zip(traces, upstreams):
        _check_trace(params, trace)
        for i, delta in _backprop_deltas(params, trace, upstream):
            inp = trace.x if i == 0 else trace.activations[i - 1]
            gw, gb = grads[i]
            if delta.ndim == 1:
                gw += np.outer(delta, inp)
                gb += delta
            else:
                gw += delta.T @ inp
                gb += delta.sum(axis=0)
    return grads


def scale_grads(grads, factor):
    return [(gw * factor, gb * factor) for gw, gb in grads]


def add_grads(a, b):
    return [(gw + hw, gb + hb) for (gw, gb), (hw, hb) in zip(a, b)]


def sgd_step(params: NetworkParams, grads, learning_rate, momentum=0.0, state=None):
    """Classical momentum SGD; returns (new params, new velocity state)."""
    if learning_rate < 0:
        raise NetError("learning rate must be non-negative")
    if not 0.0 <= momentum < 1.0:
        raise NetError("momentum must lie in [0, 1)")
    for gw, gb in grads:
        if not (np.isfinite(gw).all() and np.isfinite(gb).all()):
            raise NetError("non-finite gradient entries (training diverged?)")
    if state is None:
        state = zero_grads(params)
    new_layers = []
    new_state = []
    for layer, (gw, gb), (vw, vb) in zip(params.layers, grads, state):
        vw = momentum * vw + gw
        vb = momentum * vb + gb
        new_layers.append(
            LayerParams(
                layer.weights - learning_rate * vw,
                layer.biases - learning_rate * vb,
                layer.activation,
            )
        )
        new_state.append((vw, vb))
    return NetworkParams(new_layers), new_state


def save_params(params: NetworkParams, path):
    """Versioned little-endian binary dump of all layers."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(params.layers)))
        for layer in params.layers:
            fh.write(
                struct.pack("<III", layer.out_dim, layer.in_dim, layer.activation.value)
            )
            fh.write(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(layer.biases, dtype="<f8").tobytes())


def load_params(path) -> NetworkParams:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise NetError(f"bad magic {magic!r} in {path}")
        version, n_layers = struct.unpack("<II", fh.read(8))
        if version != FORMAT_VERSION:
            raise NetError(f"unsupported params format version {version}")
        layers = []
        for i in range(n_layers):
            header = fh.read(12)
            if len(header) != 12:
                raise NetError(f"truncated params file at layer {i}")
            out_dim, in_dim, act = struct.unpack("<III", header)
            wbytes = fh.read(8 * out_dim * in_dim)
            bbytes = fh.read(8 * out_dim)
            if len(wbytes) != 8 * out_dim * in_dim or len(bbytes) != 8 * out_dim:
                raise NetError(f"truncated params file at layer {i}")
            weights = np.frombuffer(wbytes, dtype="<f8").reshape(out_dim, in_dim)
            biases = np.frombuffer(bbytes, dtype="<f8")
            layers.append(LayerParams(weights.copy(), biases.copy(), Activation(act)))
    return NetworkParams(layers)

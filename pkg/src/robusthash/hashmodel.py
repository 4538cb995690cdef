"""Hashing model F(x) = sign(f(x)) plus its training losses.

The clean-data objective is the standard pairwise negative log-likelihood
over relaxed codes h = tanh(f(x)) with Theta_ij = h_i.h_j / 2; it is kept
behind `pairwise_loss` so other pairwise objectives can be swapped in.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .netcore import ForwardTrace, NetworkParams

CODES_MAGIC = b"RHC1"
CODES_VERSION = 1


class HashModelError(ValueError):
    pass


@dataclass
class HashModel:
    net: NetworkParams

    @property
    def hash_length(self):
        return self.net.output_dim

    @property
    def input_dim(self):
        return self.net.input_dim

    def copy(self):
        return HashModel(self.net.copy())


def sign_code(values):
    """sign with the tie rule sign(0) = +1, as int8 {-1,+1}."""
    return np.where(np.asarray(values) >= 0, 1, -1).astype(np.int8)


def logits(model: HashModel, x) -> ForwardTrace:
    return netcore.forward(model.net, x)


def relaxed_code(model: HashModel, x, alpha=1.0):
    """tanh(alpha * f(x)); approaches the binary code as alpha grows."""
    if not 0.0 < alpha <= 1.0:
        raise HashModelError(f"alpha must lie in (0, 1], got {alpha}")
    return np.tanh(alpha * logits(model, x).output)


def hash_code(model: HashModel, x):
    return sign_code(logits(model, x).output)


def similarity_matrix(labels):
    """S_ij = 1 iff samples i and j share at least one class."""
    labels = np.asarray(labels, dtype=np.float64)
    return (labels @ labels.T > 0).astype(np.int8)


def _softplus(t):
    # log(1 + exp(t)), stable for large |t|
    return np.logaddexp(0.0, t)


def pairwise_loss(codes, similarity):
    """Mean per-pair likelihood loss over relaxed codes, and d/dcodes.

    Averaging over the n(n-1)/2 pairs keeps the value and gradient scale
    independent of batch size, so it composes with the per-sample terms of
    the adversarial objective at their documented weights.
    """
    h = np.asarray(codes, dtype=np.float64)
    n = h.shape[0]
    if n < 2:
        raise HashModelError("pairwise loss needs a batch of at least 2 samples")
    s = np.asarray(similarity, dtype=np.float64)
    n_pairs = n * (n - 1) // 2
    theta = 0.5 * (h @ h.T)
    mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    value = float(np.sum(_softplus(theta[mask]) - s[mask] * theta[mask])) / n_pairs
    # d/dTheta_ij = sigmoid(Theta_ij) - S_ij for each unordered pair
    g = 1.0 / (1.0 + np.exp(-theta)) - s
    np.fill_diagonal(g, 0.0)
    dcodes = 0.5 * (g @ h) / n_pairs
    return value, dcodes


def original_loss(model: HashModel, x_batch, labels):
    """Clean hashing loss over a batch; returns (value, parameter grads)."""
    x_batch = np.asarray(x_batch, dtype=np.float64)
    if x_batch.ndim != 2 or x_batch.shape[0] < 2:
        raise HashModelError("original_loss needs a 2-D batch with >= 2 samples")
    trace = logits(model, x_batch)
    h = np.tanh(trace.output)
    value, dh = pairwise_loss(h, similarity_matrix(labels))
    upstream = dh * (1.0 - h**2)
    grads = netcore.grad_params(model.net, trace, upstream)
    return value, grads


def quantization_loss(model: HashModel, x):
    """||tanh(f(x)) - sign(f(x))||^2 with gradient only through tanh.

    For a batch the per-sample values are averaged.
    """
    trace = logits(model, x)
    h = np.tanh(trace.output)
    b = sign_code(trace.output).astype(np.float64)
    n = h.shape[0] if h.ndim == 2 else 1
    value = float(np.sum((h - b) ** 2)) / n
    upstream = 2.0 * (h - b) * (1.0 - h**2) / n
    grads = netcore.grad_params(model.net, trace, upstream)
    return value, grads


@dataclass
class PretrainLog:
    epoch_losses: list[float] = field(default_factory=list)


def pretrain(model: HashModel, features, labels, epochs, batch_size,
             learning_rate, momentum=0.9, quantization_weight=1e-4,
             weight_decay=0.0, seed=0):
    """SGD pretraining on the clean pairwise objective (+ small quantization term)."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if features.shape[0] == 0 or features.shape[0] != labels.shape[0]:
        raise HashModelError("dataset empty or features/labels misaligned")
    rng = np.random.default_rng(seed)
    model = model.copy()
    state = None
    log = PretrainLog()
    n = features.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            if idx.size < 2:
                continue
            value, grads = original_loss(model, features[idx], labels[idx])
            if quantization_weight > 0:
                qval, qgrads = quantization_loss(model, features[idx])
                value += quantization_weight * qval
                grads = netcore.add_grads(
                    grads, netcore.scale_grads(qgrads, quantization_weight)
                )
            if not np.isfinite(value):
                raise HashModelError("pretraining diverged: non-finite loss")
            if weight_decay > 0:
                grads = [
                    (gw + weight_decay * layer.weights, gb)
                    for (gw, gb), layer in zip(grads, model.net.layers)
                ]
            model.net, state = netcore.sgd_step(
                model.net, grads, learning_rate, momentum, state
            )
            epoch_loss += value
        log.epoch_losses.append(epoch_loss)
    return model, log


def save_code_database(path, codes, labels):
    """Packed code database: header (N, K, C), code bits, then label bits."""
    from . import hamming

    codes = np.asarray(codes)
    labels = np.asarray(labels)
    if codes.shape[0] != labels.shape[0]:
        raise HashModelError("codes and labels misaligned")
    n, k = codes.shape
    c = labels.shape[1]
    with open(path, "wb") as fh:
        fh.write(CODES_MAGIC)
        fh.write(struct.pack("<IIII", CODES_VERSION, n, k, c))
        fh.write(hamming.pack_codes(codes).tobytes())
        fh.write(np.packbits(labels.astype(np.uint8), axis=1).tobytes())


def load_code_database(path):
    from . import hamming

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CODES_MAGIC:
            raise HashModelError(f"bad magic {magic!r} in {path}")
        version, n, k, c = struct.unpack("<IIII", fh.read(16))
        if version != CODES_VERSION:
            raise HashModelError(f"unsupported code database version {version}")
        code_width = (k + 7) // 8
        label_width = (c + 7) // 8
        cbytes = fh.read(n * code_width)
        lbytes = fh.read(n * label_width)
        if len(cbytes) != n * code_width or len(lbytes) != n * label_width:
            raise HashModelError(f"truncated code database {path}")
    packed = np.frombuffer(cbytes, dtype=np.uint8).reshape(n, code_width)
    codes = hamming.unpack_codes(packed, k)
    packed_labels = np.frombuffer(lbytes, dtype=np.uint8).reshape(n, label_width)
    labels = np.unpackbits(packed_labels, axis=1)[:, :c]
    return codes, labels

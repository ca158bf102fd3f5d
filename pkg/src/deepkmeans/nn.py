"""Fully-connected autoencoder with hand-written backprop and Adam."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, NumericError

RELU = "relu"
IDENTITY = "identity"

DEFAULT_HIDDEN = (500, 500, 2000)


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = RELU

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class DenseNetwork:
    encoder_layers: list[DenseLayer]
    decoder_layers: list[DenseLayer]

    @property
    def input_dim(self) -> int:
        return self.encoder_layers[0].in_dim

    @property
    def embedding_dim(self) -> int:
        return self.encoder_layers[-1].out_dim

    @property
    def layers(self) -> list[DenseLayer]:
        return self.encoder_layers + self.decoder_layers

    def dims(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.encoder_layers]

    def copy(self) -> "DenseNetwork":
        def cp(layers):
            return [DenseLayer(l.weights.copy(), l.bias.copy(), l.activation) for l in layers]

        return DenseNetwork(cp(self.encoder_layers), cp(self.decoder_layers))


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    representatives: np.ndarray | None = None

    @classmethod
    def zeros_like(cls, net: DenseNetwork, representatives: np.ndarray | None = None):
        return cls(
            [np.zeros_like(l.weights) for l in net.layers],
            [np.zeros_like(l.bias) for l in net.layers],
            None if representatives is None else np.zeros_like(representatives),
        )

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        reps = self.representatives
        if other.representatives is not None:
            reps = other.representatives if reps is None else reps + other.representatives
        return GradientBundle(
            [a + b for a, b in zip(self.weights, other.weights)],
            [a + b for a, b in zip(self.biases, other.biases)],
            reps,
        )

    def flat(self) -> np.ndarray:
        parts = [w.ravel() for w in self.weights] + [b.ravel() for b in self.biases]
        if self.representatives is not None:
            parts.append(self.representatives.ravel())
        return np.concatenate(parts)


@dataclass
class AdamState:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]  # input to each layer
    pre_activations: list[np.ndarray]
    net_id: int


def xavier_init(in_dim: int, out_dim: int, rng: np.random.Generator, activation: str = RELU) -> DenseLayer:
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"layer dimensions must be positive, got ({in_dim}, {out_dim})")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    weights = rng.uniform(-limit, limit, size=(out_dim, in_dim))
    return DenseLayer(weights, np.zeros(out_dim), activation)


def build_network(input_dim: int, embedding_dim: int, rng: np.random.Generator,
                  hidden: tuple[int, ...] = DEFAULT_HIDDEN) -> DenseNetwork:
    """Encoder ``input_dim-hidden...-embedding_dim`` with a mirrored decoder.

    The layer producing the embedding and the output layer are linear; every
    other layer uses ReLU.
    """
    enc_dims = [input_dim, *hidden, embedding_dim]
    dec_dims = enc_dims[::-1]

    def stack(dims):
        n = len(dims) - 1
        return [
            xavier_init(dims[i], dims[i + 1], rng, IDENTITY if i == n - 1 else RELU)
            for i in range(n)
        ]

    encoder = stack(enc_dims)
    decoder = stack(dec_dims)
    return DenseNetwork(encoder, decoder)


def _apply(layer: DenseLayer, a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    z = a @ layer.weights.T + layer.bias
    if layer.activation == RELU:
        return z, np.maximum(z, 0.0)
    return z, z


def encode(net: DenseNetwork, batch: np.ndarray) -> np.ndarray:
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"expected batch with {net.input_dim} columns, got shape {a.shape}")
    for layer in net.encoder_layers:
        a = _apply(layer, a)[1]
    return a


def forward(net: DenseNetwork, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, ForwardCache]:
    """Return ``(embeddings, reconstructions, cache)`` for a batch of rows."""
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != net.input_dim:
        raise ValueError(f"expected batch with {net.input_dim} columns, got shape {a.shape}")
    inputs, pre = [], []
    embeddings = None
    n_enc = len(net.encoder_layers)
    for i, layer in enumerate(net.layers):
        inputs.append(a)
        z, a = _apply(layer, a)
        pre.append(z)
        if i == n_enc - 1:
            embeddings = a
    return embeddings, a, ForwardCache(inputs, pre, id(net))


def backward(net: DenseNetwork, cache: ForwardCache, grad_embeddings: np.ndarray,
             grad_reconstructions: np.ndarray) -> GradientBundle:
    """Reverse-mode gradients given the loss partials wrt both network outputs."""
    layers = net.layers
    if cache.net_id != id(net) or len(cache.inputs) != len(layers) or any(
        x.shape[1] != l.in_dim for x, l in zip(cache.inputs, layers)
    ):
        raise ContractError("forward cache does not belong to this network")
    n_enc = len(net.encoder_layers)
    gw: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * len(layers)  # type: ignore[list-item]
    delta = np.asarray(grad_reconstructions, dtype=np.float64)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if i == n_enc - 1:
            delta = delta + grad_embeddings
        if layer.activation == RELU:
            delta = delta * (cache.pre_activations[i] > 0)
        gw[i] = delta.T @ cache.inputs[i]
        gb[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ layer.weights
    return GradientBundle(gw, gb)


def reconstruction_loss(batch: np.ndarray, reconstructions: np.ndarray) -> tuple[float, np.ndarray]:
    """Squared error summed over features, averaged over rows; returns (loss, dL/dA)."""
    diff = reconstructions - batch
    n = batch.shape[0]
    return float(np.sum(diff * diff) / n), (2.0 / n) * diff


def l2_penalty(net: DenseNetwork, weight_decay: float) -> tuple[float, GradientBundle]:
    if weight_decay < 0:
        raise ValueError("weight_decay must be nonnegative")
    penalty = weight_decay * sum(float(np.sum(l.weights ** 2)) for l in net.layers)
    grads = GradientBundle(
        [2.0 * weight_decay * l.weights for l in net.layers],
        [np.zeros_like(l.bias) for l in net.layers],
    )
    return penalty, grads


def _parameters(net: DenseNetwork, representatives: np.ndarray | None):
    params = [l.weights for l in net.layers] + [l.bias for l in net.layers]
    if representatives is not None:
        params.append(representatives)
    return params


def _param_names(net: DenseNetwork, with_reps: bool) -> list[str]:
    n = len(net.layers)
    names = [f"layer {i} weights" for i in range(n)] + [f"layer {i} bias" for i in range(n)]
    if with_reps:
        names.append("representatives")
    return names


def adam_step(net: DenseNetwork, grads: GradientBundle, state: AdamState,
              representatives: np.ndarray | None = None) -> AdamState:
    """One bias-corrected Adam update, applied in place to the network and representatives."""
    params = _parameters(net, representatives)
    gvals = list(grads.weights) + list(grads.biases)
    if representatives is not None:
        if grads.representatives is None:
            raise ContractError("representatives passed without a gradient")
        gvals.append(grads.representatives)
    if len(gvals) != len(params):
        raise ContractError("gradient bundle does not match parameters")
    for name, p, g in zip(_param_names(net, representatives is not None), params, gvals):
        if g.shape != p.shape:
            raise ContractError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name}")
    if not state.first_moment:
        state.first_moment = [np.zeros_like(p) for p in params]
        state.second_moment = [np.zeros_like(p) for p in params]
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    lr_t = state.learning_rate * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
    for p, g, m, v in zip(params, gvals, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        # epsilon-hat form, as in TensorFlow's Adam
        p -= lr_t * m / (np.sqrt(v) + state.epsilon)
    return state


# ---------------------------------------------------------------- checkpoints

_MAGIC = b"DKMCKPT1"


def save_checkpoint(path: str | Path, net: DenseNetwork, state: AdamState | None = None,
                    representatives: np.ndarray | None = None) -> None:
    """Write a self-describing binary checkpoint.

    Layout: magic, u64 header length, JSON header, then each array as
    little-endian float64 in row-major order, in header order.
    """
    arrays: list[np.ndarray] = []
    layers_meta = []
    for part, layers in (("encoder", net.encoder_layers), ("decoder", net.decoder_layers)):
        for l in layers:
            layers_meta.append({"part": part, "in": l.in_dim, "out": l.out_dim, "activation": l.activation})
            arrays += [l.weights, l.bias]
    header: dict = {"version": 1, "layers": layers_meta, "representatives": None, "adam": None}
    if representatives is not None:
        header["representatives"] = list(representatives.shape)
        arrays.append(representatives)
    if state is not None:
        header["adam"] = {
            "learning_rate": state.learning_rate, "beta1": state.beta1, "beta2": state.beta2,
            "epsilon": state.epsilon, "step_count": state.step_count,
            "shapes": [list(m.shape) for m in state.first_moment],
        }
        arrays += state.first_moment + state.second_moment
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[DenseNetwork, AdamState | None, np.ndarray | None]:
    raw = Path(path).read_bytes()
    if raw[:8] != _MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen])
    offset = 16 + hlen

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        end = offset + 8 * n
        if end > len(raw):
            raise ValueError(f"{path}: truncated at byte {offset}")
        a = np.frombuffer(raw[offset:end], dtype="<f8").astype(np.float64).reshape(shape)
        offset = end
        return a

    enc, dec = [], []
    for meta in header["layers"]:
        w = take((meta["out"], meta["in"]))
        b = take((meta["out"],))
        (enc if meta["part"] == "encoder" else dec).append(DenseLayer(w, b, meta["activation"]))
    net = DenseNetwork(enc, dec)
    reps = take(tuple(header["representatives"])) if header["representatives"] else None
    state = None
    if header["adam"] is not None:
        a = header["adam"]
        state = AdamState(a["learning_rate"], a["beta1"], a["beta2"], a["epsilon"], a["step_count"])
        state.first_moment = [take(tuple(s)) for s in a["shapes"]]
        state.second_moment = [take(tuple(s)) for s in a["shapes"]]
    return net, state, reps

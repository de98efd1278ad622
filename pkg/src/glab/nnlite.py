"""Minimal dense-MLP core: manual backpropagation, Adam, binary checkpoints.

Hidden layers use tanh, the output layer is linear, and all math is float64.
Forward/backward are pure functions over value types; batched variants
(`*_batch`) operate on (batch, features) matrices and are what the training
loops use.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, IoError, NumericError

CHECKPOINT_MAGIC = b"GLNN"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    """Weights and biases of a dense MLP (also reused as a gradient container)."""

    layer_sizes: list[int]
    weights: list[np.ndarray]  # per layer, shape (fan_in, fan_out)
    biases: list[np.ndarray]  # per layer, shape (fan_out,)

    def copy(self) -> "MlpParams":
        return MlpParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )


@dataclass
class AdamState:
    step_count: int
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float


@dataclass
class ForwardCache:
    """Activations recorded by a forward pass, consumed by backward."""

    inputs: np.ndarray  # (batch, layer_sizes[0])
    hidden: list[np.ndarray] = field(default_factory=list)  # post-tanh, per hidden layer


def mlp_init(layer_sizes: list[int], seed: int) -> MlpParams:
    """Xavier-uniform weights (bound sqrt(6/(fan_in+fan_out))), zero biases."""
    if len(layer_sizes) < 2:
        raise InvalidArgumentError(f"need at least 2 layers, got {layer_sizes!r}")
    if any(int(s) < 1 for s in layer_sizes):
        raise InvalidArgumentError(f"all layer sizes must be >= 1, got {layer_sizes!r}")
    sizes = [int(s) for s in layer_sizes]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def mlp_forward_batch(params: MlpParams, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass on a (batch, in_dim) matrix. Returns (outputs, cache)."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.ndim != 2 or inputs.shape[1] != params.layer_sizes[0]:
        raise InvalidArgumentError(
            f"input shape {inputs.shape} does not match input layer size {params.layer_sizes[0]}"
        )
    cache = ForwardCache(inputs=inputs)
    act = inputs
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = act @ w + b
        if i < last:
            act = np.tanh(z)
            cache.hidden.append(act)
        else:
            act = z
    return act, cache


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Forward pass for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgumentError(f"expected a 1-D input vector, got shape {x.shape}")
    out, cache = mlp_forward_batch(params, x[None, :])
    return out[0], cache


def mlp_backward_batch(
    params: MlpParams, cache: ForwardCache, output_grad: np.ndarray
) -> MlpParams:
    """Exact reverse-mode gradients for a batched forward pass.

    `output_grad` is dLoss/dOutput with shape (batch, out_dim); the returned
    MlpParams holds the summed-over-batch gradients.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    n_layers = len(params.weights)
    if g.shape != (cache.inputs.shape[0], params.layer_sizes[-1]):
        raise InvalidArgumentError(
            f"output_grad shape {g.shape} does not match "
            f"(batch={cache.inputs.shape[0]}, out={params.layer_sizes[-1]})"
        )
    if len(cache.hidden) != n_layers - 1:
        raise InvalidArgumentError("cache does not match parameter layout")
    grad_w = [None] * n_layers
    grad_b = [None] * n_layers
    for i in range(n_layers - 1, -1, -1):
        below = cache.inputs if i == 0 else cache.hidden[i - 1]
        grad_w[i] = below.T @ g
        grad_b[i] = g.sum(axis=0)
        if i > 0:
            g = (g @ params.weights[i].T) * (1.0 - cache.hidden[i - 1] ** 2)
    return MlpParams(list(params.layer_sizes), grad_w, grad_b)


def mlp_backward(params: MlpParams, cache: ForwardCache, output_grad: np.ndarray) -> MlpParams:
    """Gradients for a single-vector forward pass (see mlp_forward)."""
    return mlp_backward_batch(params, cache, output_grad)


def adam_init(
    params: MlpParams,
    learning_rate: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon: float = 1e-8,
) -> AdamState:
    return AdamState(
        step_count=0,
        first_moment=[np.zeros_like(w) for w in params.weights]
        + [np.zeros_like(b) for b in params.biases],
        second_moment=[np.zeros_like(w) for w in params.weights]
        + [np.zeros_like(b) for b in params.biases],
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon=epsilon,
    )


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState) -> tuple[MlpParams, AdamState]:
    """One Adam update with bias correction. Returns new (params, state)."""
    flat_params = list(params.weights) + list(params.biases)
    flat_grads = list(grads.weights) + list(grads.biases)
    if len(flat_params) != len(flat_grads) or any(
        p.shape != g.shape for p, g in zip(flat_params, flat_grads)
    ):
        raise InvalidArgumentError("gradient shapes do not match parameter shapes")
    for g in flat_grads:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient entries in adam_step")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_flat = [], [], []
    for p, g, m, v in zip(flat_params, flat_grads, state.first_moment, state.second_moment):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        new_flat.append(p - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    n = len(params.weights)
    new_params = MlpParams(list(params.layer_sizes), new_flat[:n], new_flat[n:])
    new_state = AdamState(
        step_count=t,
        first_moment=new_m,
        second_moment=new_v,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        epsilon=state.epsilon,
    )
    return new_params, new_state


def save_params(params: MlpParams, path) -> None:
    """Write a little-endian binary checkpoint (bit-exact round trip).

    Layout: magic "GLNN", u32 version, u32 layer count, u32 layer sizes,
    then per layer the weight matrix (row-major f64) followed by the bias
    vector (f64).
    """
    blobs = [CHECKPOINT_MAGIC, struct.pack("<II", CHECKPOINT_VERSION, len(params.layer_sizes))]
    blobs.append(struct.pack(f"<{len(params.layer_sizes)}I", *params.layer_sizes))
    for w, b in zip(params.weights, params.biases):
        blobs.append(np.ascontiguousarray(w, dtype="<f8").tobytes())
        blobs.append(np.ascontiguousarray(b, dtype="<f8").tobytes())
    try:
        with open(path, "wb") as fh:
            fh.write(b"".join(blobs))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


def load_params(path) -> MlpParams:
    """Read a checkpoint written by save_params."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if data[:4] != CHECKPOINT_MAGIC:
        raise IoError(f"{path}: bad magic, not a GLNN checkpoint")
    version, n_layers = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise IoError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    sizes = list(struct.unpack_from(f"<{n_layers}I", data, offset))
    offset += 4 * n_layers
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, dtype="<f8", count=fan_in * fan_out, offset=offset)
        offset += 8 * fan_in * fan_out
        b = np.frombuffer(data, dtype="<f8", count=fan_out, offset=offset)
        offset += 8 * fan_out
        weights.append(w.reshape(fan_in, fan_out).copy())
        biases.append(b.copy())
    if offset != len(data):
        raise IoError(f"{path}: trailing bytes in checkpoint")
    return MlpParams(sizes, weights, biases)

"""Dense-network numeric engine.

Fixed-topology multilayer perceptrons with layer-granular reverse-mode
gradients, forward-mode Jacobian-vector products, He-style initialization, and
an Adam optimizer. Everything is float64 and deterministic given the RNG
stream used at initialization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY = "identity"
LEAKY_RELU = "leaky_relu"
SIGMOID = "sigmoid"
ACTIVATIONS = (IDENTITY, LEAKY_RELU, SIGMOID)


def _activate(pre: np.ndarray, kind: str, slope: float) -> np.ndarray:
    if kind == IDENTITY:
        return pre
    if kind == LEAKY_RELU:
        return np.where(pre >= 0.0, pre, slope * pre)
    if kind == SIGMOID:
        out = np.empty_like(pre)
        pos = pre >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        e = np.exp(pre[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    raise ValueError(f"unknown activation {kind!r}")


def _activation_deriv(pre: np.ndarray, post: np.ndarray, kind: str, slope: float) -> np.ndarray | None:
    """Derivative of the activation at `pre`; None means identically 1."""
    if kind == IDENTITY:
        return None
    if kind == LEAKY_RELU:
        return np.where(pre >= 0.0, 1.0, slope)
    if kind == SIGMOID:
        return post * (1.0 - post)
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class DenseLayer:
    """One affine map plus activation: act(x @ W^T + b)."""

    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = IDENTITY
    slope: float = 0.2  # leaky_relu only

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"inconsistent layer shapes: weights {self.weights.shape}, bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky-ReLU slope must be in (0, 1), got {self.slope}")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation, self.slope)


@dataclass
class Mlp:
    """An ordered stack of dense layers."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for prev, cur in zip(self.layers, self.layers[1:]):
            if cur.in_dim != prev.out_dim:
                raise ValueError(
                    f"layer dims do not chain: {prev.out_dim} -> {cur.in_dim}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    def params(self) -> list[np.ndarray]:
        """Flat parameter list [W0, b0, W1, b1, ...]; arrays are live views."""
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def copy(self) -> "Mlp":
        return Mlp([layer.copy() for layer in self.layers])


def forward(net: Mlp, batch: np.ndarray) -> np.ndarray:
    """Apply the network row-wise to a (B, input_dim) batch."""
    out, _ = forward_cached(net, batch, keep_cache=False)
    return out


def forward_chunked(net: Mlp, batch: np.ndarray, row_budget: int = 4_000_000) -> np.ndarray:
    """Forward pass splitting very tall batches so no activation exceeds
    roughly `row_budget` floats."""
    width = max(layer.out_dim for layer in net.layers)
    max_rows = max(1024, row_budget // max(width, 1))
    if batch.shape[0] <= max_rows:
        return forward(net, batch)
    parts = [forward(net, batch[i : i + max_rows]) for i in range(0, batch.shape[0], max_rows)]
    return np.concatenate(parts, axis=0)


def forward_cached(net: Mlp, batch: np.ndarray, keep_cache: bool = True):
    """Forward pass returning (output, cache) where cache feeds `backward`."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(
            f"batch shape {x.shape} incompatible with input_dim {net.input_dim}"
        )
    cache = [] if keep_cache else None
    for layer in net.layers:
        pre = x @ layer.weights.T
        pre += layer.bias
        post = _activate(pre, layer.activation, layer.slope)
        if keep_cache:
            cache.append((x, pre, post))
        x = post
    return x, cache


def backward(net: Mlp, cache, upstream_grad: np.ndarray):
    """Reverse-mode pass.

    `upstream_grad` is dLoss/dOutput for the batch the cache was built from.
    Returns (param_grads, input_grads) with param_grads ordered like
    `net.params()`.
    """
    grad = np.asarray(upstream_grad, dtype=np.float64)
    if grad.shape != cache[-1][2].shape:
        raise ValueError(
            f"upstream grad shape {grad.shape} does not match output shape {cache[-1][2].shape}"
        )
    param_grads: list[np.ndarray] = []
    for layer, (x, pre, post) in zip(reversed(net.layers), reversed(cache)):
        deriv = _activation_deriv(pre, post, layer.activation, layer.slope)
        dpre = grad if deriv is None else grad * deriv
        dw = dpre.T @ x
        db = dpre.sum(axis=0)
        grad = dpre @ layer.weights
        param_grads.append(db)
        param_grads.append(dw)
    param_grads.reverse()
    return param_grads, grad


def jvp_batch(net: Mlp, points: np.ndarray, tangents: np.ndarray) -> np.ndarray:
    """Forward-mode directional derivatives.

    points: (P, input_dim); tangents: (P, input_dim, k). Returns (P, output_dim, k)
    where [p, :, j] = J(points[p]) @ tangents[p, :, j].
    """
    x = np.asarray(points, dtype=np.float64)
    t = np.asarray(tangents, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"points shape {x.shape} incompatible with input_dim {net.input_dim}")
    if t.shape[:2] != x.shape:
        raise ValueError(f"tangents shape {t.shape} does not match points {x.shape}")
    for layer in net.layers:
        pre = x @ layer.weights.T + layer.bias
        post = _activate(pre, layer.activation, layer.slope)
        t = np.einsum("oi,pik->pok", layer.weights, t)
        deriv = _activation_deriv(pre, post, layer.activation, layer.slope)
        if deriv is not None:
            t *= deriv[:, :, None]
        x = post
    return t


def jacobian(net: Mlp, z: np.ndarray) -> np.ndarray:
    """Full Jacobian (output_dim x input_dim) at a single point.

    Built from input_dim forward-mode passes, which is the cheap direction when
    the latent dimension is below the data dimension.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != net.input_dim:
        raise ValueError(f"point length {z.shape[0]} != input_dim {net.input_dim}")
    return jacobian_batch(net, z[None, :])[0]


def jacobian_batch(net: Mlp, points: np.ndarray) -> np.ndarray:
    """Jacobians for each row of points: (P, output_dim, input_dim)."""
    points = np.asarray(points, dtype=np.float64)
    p, m = points.shape
    eye = np.eye(m)
    tangents = np.broadcast_to(eye, (p, m, m)).copy()
    return jvp_batch(net, points, tangents)


def jacobian_reverse(net: Mlp, z: np.ndarray) -> np.ndarray:
    """Jacobian via output_dim reverse-mode passes; cross-check for `jacobian`."""
    z = np.asarray(z, dtype=np.float64).reshape(1, -1)
    _, cache = forward_cached(net, z)
    n = net.output_dim
    rows = []
    for i in range(n):
        seed = np.zeros((1, n))
        seed[0, i] = 1.0
        _, din = backward(net, cache, seed)
        rows.append(din[0])
    return np.stack(rows, axis=0)


def init_mlp(
    dims,
    activation: str,
    rng: np.random.Generator,
    *,
    slope: float = 0.2,
    output_activation: str = IDENTITY,
) -> Mlp:
    """Build an Mlp with He-normal weights (std = sqrt(2/fan_in)) and zero biases.

    `dims` chains input through hidden widths to the output; hidden layers get
    `activation`, the final layer `output_activation`.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError("dims must list at least input and output sizes")
    if any(d < 1 for d in dims):
        raise ValueError("all layer sizes must be positive")
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        std = np.sqrt(2.0 / fan_in)
        w = rng.standard_normal((fan_out, fan_in)) * std
        b = np.zeros(fan_out)
        act = activation if i < len(dims) - 2 else output_activation
        layers.append(DenseLayer(w, b, act, slope))
    return Mlp(layers)


def linear_mlp(weights: np.ndarray, bias: np.ndarray) -> Mlp:
    """A single-layer identity-activation network computing W x + b exactly."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.asarray(bias, dtype=np.float64)
    return Mlp([DenseLayer(w, b, IDENTITY)])


@dataclass
class AdamState:
    """Adam accumulators for one flat parameter list."""

    learning_rate: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError("Adam betas must lie in (0, 1)")


def adam_init(params, learning_rate: float = 2e-4, beta1: float = 0.9,
              beta2: float = 0.999, epsilon: float = 1e-8) -> AdamState:
    state = AdamState(learning_rate, beta1, beta2, epsilon)
    state.first_moment = [np.zeros_like(p) for p in params]
    state.second_moment = [np.zeros_like(p) for p in params]
    return state


def adam_step(params, grads, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to `params` in place."""
    if len(params) != len(state.first_moment) or len(params) != len(grads):
        raise ValueError("params/grads/state lengths do not match")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    scale1 = 1.0 / (1.0 - b1 ** t)
    scale2 = 1.0 / (1.0 - b2 ** t)
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m * scale1) / (np.sqrt(v * scale2) + state.epsilon)

"""Dense-layer primitives: forward passes, analytic gradients, MSE loss, Adam.

Everything operates on row-major batches (one sample per row). Gradients are
exact analytic expressions; tests check them against central finite
differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import Rng, ShapeError

LINEAR = "linear"
SIGMOID = "sigmoid"
LEAKY_RELU = "leaky_relu"

ACTIVATIONS = (LINEAR, SIGMOID, LEAKY_RELU)


@dataclass
class DenseLayer:
    weights: np.ndarray  # in_dim x out_dim
    bias: np.ndarray  # 1 x out_dim
    activation: str = LINEAR
    slope: float = 0.2  # leaky_relu only

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == LEAKY_RELU and not 0.0 < self.slope < 1.0:
            raise ValueError(f"leaky_relu slope must be in (0,1), got {self.slope}")
        if self.bias.shape != (1, self.weights.shape[1]):
            raise ShapeError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation, self.slope)


def dense(in_dim: int, out_dim: int, activation: str, rng: Rng, slope: float = 0.2) -> DenseLayer:
    """Glorot-uniform initialized layer: weights in +/- sqrt(6/(fan_in+fan_out))."""
    if in_dim < 1 or out_dim < 1:
        raise ValueError(f"layer dims must be >= 1, got {in_dim}x{out_dim}")
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    w = rng.uniform(in_dim, out_dim, -limit, limit)
    b = np.zeros((1, out_dim))
    return DenseLayer(w, b, activation, slope)


def _activate(pre: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if layer.activation == LINEAR:
        return pre
    if layer.activation == SIGMOID:
        # Piecewise-stable form: never overflows for large |pre|.
        out = np.empty_like(pre)
        pos = pre >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-pre[pos]))
        e = np.exp(pre[~pos])
        out[~pos] = e / (1.0 + e)
        return out
    return np.where(pre > 0.0, pre, layer.slope * pre)


def _activate_grad(pre: np.ndarray, post: np.ndarray, layer: DenseLayer) -> np.ndarray:
    if layer.activation == LINEAR:
        return np.ones_like(pre)
    if layer.activation == SIGMOID:
        return post * (1.0 - post)
    # Derivative at exactly 0 is defined as the slope.
    return np.where(pre > 0.0, 1.0, layer.slope)


@dataclass
class GradientTape:
    """Per-layer (input, pre-activation, output) captured by one forward pass."""

    inputs: list[np.ndarray] = field(default_factory=list)
    pres: list[np.ndarray] = field(default_factory=list)
    outputs: list[np.ndarray] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.inputs)


def forward(
    layers: list[DenseLayer], x: np.ndarray, capture: bool = False
) -> tuple[np.ndarray, GradientTape | None]:
    """Composed affine+activation pass; records a tape when ``capture``."""
    if x.ndim != 2:
        raise ShapeError(f"forward expects a 2-D batch, got shape {x.shape}")
    if layers and x.shape[1] != layers[0].in_dim:
        raise ShapeError(
            f"input dim {x.shape[1]} does not match first layer in_dim {layers[0].in_dim}"
        )
    tape = GradientTape() if capture else None
    out = x
    for layer in layers:
        pre = out @ layer.weights + layer.bias
        post = _activate(pre, layer)
        if tape is not None:
            tape.inputs.append(out)
            tape.pres.append(pre)
            tape.outputs.append(post)
        out = post
    return out, tape


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean over rows of the squared Euclidean row distance (sum over columns)."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    d = pred - target
    return float(np.mean(np.sum(d * d, axis=1)))


def mse_loss_grad(pred: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Gradient of :func:`mse_loss` w.r.t. ``pred``: (2/N)(pred - target)."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss_grad shape mismatch: {pred.shape} vs {target.shape}")
    return (2.0 / pred.shape[0]) * (pred - target)


def backward(
    layers: list[DenseLayer], tape: GradientTape, loss_grad: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Backpropagate ``loss_grad`` through the taped pass.

    Returns ``([(dW, db) per layer], d_input)``; the input gradient lets
    callers chain further (e.g. into a mask network feeding this one).
    """
    if len(tape) != len(layers):
        raise ShapeError(f"tape has {len(tape)} entries for {len(layers)} layers")
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    delta = loss_grad
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        d_pre = delta * _activate_grad(tape.pres[i], tape.outputs[i], layer)
        grads[i] = (tape.inputs[i].T @ d_pre, np.sum(d_pre, axis=0, keepdims=True))
        delta = d_pre @ layer.weights.T
    return grads, delta


def layer_params(layers: list[DenseLayer]) -> list[np.ndarray]:
    """Flatten layers to a parameter list (weights before bias, layer order)."""
    params: list[np.ndarray] = []
    for layer in layers:
        params.append(layer.weights)
        params.append(layer.bias)
    return params


def flatten_grads(grads: list[tuple[np.ndarray, np.ndarray]]) -> list[np.ndarray]:
    flat: list[np.ndarray] = []
    for dw, db in grads:
        flat.append(dw)
        flat.append(db)
    return flat


class AdamState:
    """Adam moments for a fixed parameter list (the optimizer's defaults)."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
    """One bias-corrected Adam update; mutates ``params`` in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ShapeError(
            f"adam_step got {len(params)} params, {len(grads)} grads "
            f"for state of size {len(state.m)}"
        )
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"param/grad shape mismatch at index {i}: {p.shape} vs {g.shape}")
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * (g * g)
        m_hat = state.m[i] / bc1
        v_hat = state.v[i] / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params

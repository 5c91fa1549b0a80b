"""Shared SiLU base network.

Forward evaluation yields the last-hidden-layer features h(x) together with
their derivatives with respect to every input coordinate, propagated as
forward-mode tangents alongside the primal pass (one tangent per coordinate;
the inputs here are at most (t, x), so this is cheap). Parameter gradients of
scalar losses go through the reverse-mode tape in :mod:`stlpinn.tape`, which
differentiates through the tangent computation as well.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tape
from .errors import DimensionMismatch, InvalidWidths, NonFiniteLoss, ShapeMismatch


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def silu(z):
    """SiLU value z*sigmoid(z) and its exact first derivative."""
    z = np.asarray(z, dtype=float)
    s = _sigmoid(z)
    return z * s, s * (1.0 + z * (1.0 - s))


def _silu_d2(z):
    # second derivative, needed when back-propagating through tangents
    s = _sigmoid(z)
    return s * (1.0 - s) * (2.0 + z * (1.0 - 2.0 * s))


@dataclass
class BaseNetwork:
    """MLP with SiLU on every layer; the last layer's width is the feature
    dimension m consumed by the linear heads."""

    widths: list
    params: list = field(repr=False)  # [(W, b)] with W shaped (out, in)
    seed: int = 0

    @property
    def m(self):
        return self.widths[-1]

    @property
    def in_dim(self):
        return self.widths[0]


def init_network(widths, seed) -> BaseNetwork:
    """Uniform fan-in initialization: W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    zero biases. Bitwise deterministic for a given seed."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise InvalidWidths(f"need [input, hidden..., m] all >= 1, got {widths}")
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        lim = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-lim, lim, size=(fan_out, fan_in))
        params.append((w, np.zeros(fan_out)))
    return BaseNetwork(widths=widths, params=params, seed=seed)


@dataclass
class FeatureEval:
    """Features and input-derivative tangents at one point."""

    h: np.ndarray
    dh_dt: np.ndarray
    dh_dx: list


def batch_features(net: BaseNetwork, points):
    """Features and tangents for a batch of points.

    Returns (H, tangents) with H shaped (N, m) and one (N, m) tangent array
    per input coordinate, coordinate 0 being t.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != net.in_dim:
        raise DimensionMismatch(
            f"points have {pts.shape[1]} coordinates, network expects {net.in_dim}"
        )
    a = pts
    tangents = []
    for c in range(net.in_dim):
        t0 = np.zeros_like(pts)
        t0[:, c] = 1.0
        tangents.append(t0)
    for w, b in net.params:
        z = a @ w.T + b
        a, d1 = silu(z)
        tangents = [(t @ w.T) * d1 for t in tangents]
    return a, tangents


def forward_features(net: BaseNetwork, x) -> FeatureEval:
    x = np.asarray(x, dtype=float).reshape(-1)
    h, tangents = batch_features(net, x[None, :])
    return FeatureEval(h=h[0], dh_dt=tangents[0][0], dh_dx=[t[0] for t in tangents[1:]])


@dataclass
class ParamGradient:
    """Gradient of a scalar loss, shape-congruent with BaseNetwork params
    plus any extra leaf parameters registered on the tape (head weights)."""

    layers: list  # [(dW, db)]
    extras: list


class GradTape:
    """Handed to a loss builder by :func:`loss_gradient`.

    Exposes the network features as tape tensors and lets the builder
    register additional trainable leaves (the head weight matrices).
    """

    def __init__(self, net: BaseNetwork):
        self.net = net
        self.layer_tensors = [(tape.Tensor(w), tape.Tensor(b)) for w, b in net.params]
        self.extra_tensors = []

    def parameter(self, value):
        t = tape.Tensor(value)
        self.extra_tensors.append(t)
        return t

    def constant(self, value):
        return tape.Tensor(value)

    def features(self, points):
        """Tape-tracked (h, tangents) for a batch of points; tangents are
        indexed by input coordinate, 0 = t."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.net.in_dim:
            raise DimensionMismatch(
                f"points have {pts.shape[1]} coordinates, network expects "
                f"{self.net.in_dim}"
            )
        a = tape.Tensor(pts)
        tangents = []
        for c in range(self.net.in_dim):
            t0 = np.zeros_like(pts)
            t0[:, c] = 1.0
            tangents.append(tape.Tensor(t0))
        for wt, bt in self.layer_tensors:
            # z = a @ W^T + b, done as matmul against the transpose node
            w_t = tape.Tensor(wt.value.T, (wt,), lambda g: (g.T,))
            z = a @ w_t + bt
            val, d1 = silu(z.value)
            act = tape.unary_from(z, val, d1)
            dact = tape.unary_from(z, d1, _silu_d2(z.value))
            tangents = [dact * (t @ w_t) for t in tangents]
            a = act
        return a, tangents


def loss_gradient(net: BaseNetwork, loss_builder):
    """Evaluate a scalar loss and its gradient with respect to every network
    parameter and every registered head weight.

    ``loss_builder(tape_ctx)`` must return a scalar tape Tensor built from
    ``tape_ctx.features(...)`` and any ``tape_ctx.parameter(...)`` leaves.
    """
    ctx = GradTape(net)
    loss = loss_builder(ctx)
    value = float(loss.value)
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss evaluated to {value}")
    tape.backward(loss)
    layers = [(wt.grad, bt.grad) for wt, bt in ctx.layer_tensors]
    extras = [t.grad for t in ctx.extra_tensors]
    return value, ParamGradient(layers=layers, extras=extras)


@dataclass
class AdamState:
    step: int
    m: list
    v: list


def adam_init(params) -> AdamState:
    return AdamState(
        step=0,
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
    )


def adam_step(params, grads, state: AdamState, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam update over a flat list of arrays. Returns new params/state;
    learning-rate scheduling is the caller's job."""
    if len(params) != len(grads) or any(
        p.shape != g.shape for p, g in zip(params, grads)
    ):
        raise ShapeMismatch("params and grads are not shape-congruent")
    t = state.step + 1
    new_m, new_v, out = [], [], []
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        out.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return out, AdamState(step=t, m=new_m, v=new_v)

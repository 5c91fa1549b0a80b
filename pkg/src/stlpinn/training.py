"""Multi-head training: one shared base network, one linear head per
parameter set, summed per-head collocation losses, full-batch Adam with
stepped learning-rate decay.

Heads always train against the linear part of their problem (the polynomial
term, when present, is handled later by the perturbation cascade), so a
nonlinear spec is linearized implicitly here.
"""

from dataclasses import dataclass, field

import numpy as np

from . import tape
from .equations import ProblemSpec, forcing_values, ic_values
from .errors import (
    ConfigError,
    Diverged,
    InvalidCounts,
    NonFiniteLoss,
    ShapeMismatch,
)
from .network import (
    BaseNetwork,
    adam_init,
    adam_step,
    batch_features,
    init_network,
    loss_gradient,
)


@dataclass
class HeadConfig:
    problem: ProblemSpec


@dataclass
class LossConfig:
    omega1: float = 1.0
    omega2: float = 1.0
    n1: int = 512
    n2: int = 1
    # transport-grid decomposition: interior tensor grid plus per-edge
    # boundary and initial-condition sample counts (n2 = 2*n_bc + n_ic)
    grid_shape: tuple = (75, 125)
    n_bc: int = 201
    n_ic: int = 81
    mode: str = "equispaced"
    sample_seed: int = 0


@dataclass
class TrainConfig:
    lr: float = 1e-3
    gamma: float = 0.98
    step_size: int = 100
    epochs: int = 5000
    seed: int = 0
    widths: list = field(default_factory=lambda: [1, 64, 64, 64])


@dataclass
class CollocationSet:
    interior: np.ndarray  # (N1, d+1)
    boundary: np.ndarray  # (N2, d+1), IC rows first
    is_ic: np.ndarray  # bool mask over boundary rows


@dataclass
class Checkpoint:
    net: BaseNetwork
    heads: list  # (m+1, n) weight matrices, bias row last
    head_specs: list
    loss_config: LossConfig
    train_config: TrainConfig
    loss_history: list  # per-epoch dicts: total / residual / ic / bc


def sample_collocation(spec: ProblemSpec, losscfg: LossConfig) -> CollocationSet:
    """Interior and boundary/IC collocation points for one problem geometry.

    ODEs use n1 equispaced times on [0, T] plus the single initial point;
    the transport family uses the configured (nt, nx) tensor grid with
    separately sampled edge and initial points.
    """
    if losscfg.n1 < 1 or losscfg.n2 < 1:
        raise InvalidCounts("collocation counts must be positive")
    rng = np.random.default_rng(losscfg.sample_seed)
    if spec.is_ode:
        if losscfg.n2 != 1:
            raise InvalidCounts("ODEs use exactly one initial collocation point")
        if losscfg.mode == "random":
            times = np.sort(rng.uniform(0.0, spec.T, losscfg.n1))
        elif losscfg.n1 == 1:
            times = np.array([spec.T / 2.0])
        else:
            times = np.linspace(0.0, spec.T, losscfg.n1)
        return CollocationSet(
            interior=times[:, None],
            boundary=np.array([[0.0]]),
            is_ic=np.array([True]),
        )

    nt, nx = losscfg.grid_shape
    if nt * nx != losscfg.n1:
        raise InvalidCounts(
            f"grid shape {losscfg.grid_shape} does not match n1={losscfg.n1}"
        )
    if 2 * losscfg.n_bc + losscfg.n_ic != losscfg.n2:
        raise InvalidCounts(
            f"n2={losscfg.n2} must equal 2*{losscfg.n_bc}+{losscfg.n_ic}"
        )
    length = spec.L[0]
    if losscfg.mode == "random":
        interior = np.column_stack([
            rng.uniform(0.0, spec.T, losscfg.n1),
            rng.uniform(0.0, length, losscfg.n1),
        ])
        t_bc = rng.uniform(0.0, spec.T, losscfg.n_bc)
        x_ic = rng.uniform(0.0, length, losscfg.n_ic)
    else:
        tt, xx = np.meshgrid(
            np.linspace(0.0, spec.T, nt), np.linspace(0.0, length, nx), indexing="ij"
        )
        interior = np.column_stack([tt.ravel(), xx.ravel()])
        t_bc = np.linspace(0.0, spec.T, losscfg.n_bc)
        x_ic = np.linspace(0.0, length, losscfg.n_ic)
    ic_pts = np.column_stack([np.zeros_like(x_ic), x_ic])
    bc_left = np.column_stack([t_bc, np.zeros_like(t_bc)])
    bc_right = np.column_stack([t_bc, np.full_like(t_bc, length)])
    boundary = np.vstack([ic_pts, bc_left, bc_right])
    is_ic = np.zeros(boundary.shape[0], dtype=bool)
    is_ic[: losscfg.n_ic] = True
    return CollocationSet(interior=interior, boundary=boundary, is_ic=is_ic)


def boundary_values(spec: ProblemSpec, colloc: CollocationSet):
    """Target values at the boundary/IC collocation points, shape (N2, n)."""
    vals = np.full((colloc.boundary.shape[0], spec.n), spec.bc_value, dtype=float)
    if spec.is_ode:
        vals[:] = ic_values(spec)
    else:
        x_ic = colloc.boundary[colloc.is_ic, 1]
        vals[colloc.is_ic] = ic_values(spec, x_ic)
    return vals


def _check_geometry(specs):
    first = specs[0]
    for s in specs[1:]:
        if (s.n, s.d) != (first.n, first.d) or s.T != first.T or s.L != first.L:
            raise ShapeMismatch("all heads must share system size and domain")


def head_loss(net: BaseNetwork, w, spec: ProblemSpec, colloc: CollocationSet,
              losscfg: LossConfig):
    """Eq-style collocation loss of one head: returns
    (total, residual_term, boundary_term)."""
    h_int, tans = batch_features(net, colloc.interior)
    ht = np.hstack([h_int, np.ones((h_int.shape[0], 1))])
    tt = [np.hstack([tn, np.zeros((tn.shape[0], 1))]) for tn in tans]
    u = ht @ w
    resid = (tt[0] @ w) @ spec.B.T + u @ spec.A.T
    for j, c in enumerate(spec.C):
        resid = resid + (tt[1 + j] @ w) @ c.T
    resid = resid - forcing_values(spec, colloc.interior)
    res_term = losscfg.omega1 / losscfg.n1 * float(np.sum(resid * resid))

    h_b, _ = batch_features(net, colloc.boundary)
    hb = np.hstack([h_b, np.ones((h_b.shape[0], 1))])
    diff = hb @ w - boundary_values(spec, colloc)
    bnd_term = losscfg.omega2 / losscfg.n2 * float(np.sum(diff * diff))

    total = res_term + bnd_term
    if not np.isfinite(total):
        raise NonFiniteLoss(f"head loss evaluated to {total}")
    return total, res_term, bnd_term


def _build_loss(ctx, colloc, losscfg, head_data, head_tensors, record=None):
    """Tape graph of the summed multi-head loss. ``head_data`` holds
    per-head (spec, forcing array, boundary-value array)."""
    h_int, tans = ctx.features(colloc.interior)
    ht = tape.append_col(h_int, 1.0)
    tt = [tape.append_col(tn, 0.0) for tn in tans]
    h_b, _ = ctx.features(colloc.boundary)
    hb = tape.append_col(h_b, 1.0)

    total = None
    res_sum = bnd_ic = bnd_bc = 0.0
    for (spec, f_vals, b_vals), w_t in zip(head_data, head_tensors):
        u = ht @ w_t
        resid = (tt[0] @ w_t) @ spec.B.T + u @ spec.A.T
        for j, c in enumerate(spec.C):
            resid = resid + (tt[1 + j] @ w_t) @ c.T
        resid = resid - ctx.constant(f_vals)
        res = (losscfg.omega1 / losscfg.n1) * tape.sum_all(resid * resid)
        diff = hb @ w_t - ctx.constant(b_vals)
        bnd = (losscfg.omega2 / losscfg.n2) * tape.sum_all(diff * diff)
        head_total = res + bnd
        total = head_total if total is None else total + head_total
        if record is not None:
            res_sum += float(res.value)
            d2 = diff.value * diff.value
            bnd_ic += losscfg.omega2 / losscfg.n2 * float(d2[colloc.is_ic].sum())
            bnd_bc += losscfg.omega2 / losscfg.n2 * float(d2[~colloc.is_ic].sum())
    if record is not None:
        record["residual"] = res_sum
        record["ic"] = bnd_ic
        record["bc"] = bnd_bc
    return total


def train(heads, losscfg: LossConfig, traincfg: TrainConfig) -> Checkpoint:
    """Full-batch Adam over base and head parameters, minimizing the sum of
    per-head losses. lr is multiplied by gamma every step_size epochs. The
    whole trajectory is deterministic for a given seed."""
    if not heads:
        raise InvalidCounts("need at least one head")
    specs = [h.problem for h in heads]
    _check_geometry(specs)
    if not (0.0 < traincfg.gamma <= 1.0):
        raise ConfigError(f"gamma must be in (0, 1], got {traincfg.gamma}")
    if traincfg.epochs < 0:
        raise ConfigError("epochs must be non-negative")

    base_spec = specs[0]
    colloc = sample_collocation(base_spec, losscfg)
    head_data = [
        (s, forcing_values(s, colloc.interior), boundary_values(s, colloc))
        for s in specs
    ]

    net = init_network(traincfg.widths, traincfg.seed)
    rng = np.random.default_rng(traincfg.seed + 1)
    m1 = net.m + 1
    lim = 1.0 / np.sqrt(m1)
    head_ws = [rng.uniform(-lim, lim, size=(m1, base_spec.n)) for _ in specs]

    flat = [p for pair in net.params for p in pair] + head_ws
    state = adam_init(flat)
    history = []

    for epoch in range(traincfg.epochs):
        lr = traincfg.lr * traincfg.gamma ** (epoch // traincfg.step_size)
        record = {}

        def builder(ctx):
            head_tensors = [ctx.parameter(w) for w in head_ws]
            return _build_loss(ctx, colloc, losscfg, head_data, head_tensors, record)

        try:
            loss_val, grad = loss_gradient(net, builder)
        except NonFiniteLoss as exc:
            raise Diverged(f"epoch {epoch}: {exc}") from None
        flat_grads = [g for pair in grad.layers for g in pair] + grad.extras
        flat, state = adam_step(flat, flat_grads, state, lr)
        nl = len(net.params)
        net.params = [(flat[2 * i], flat[2 * i + 1]) for i in range(nl)]
        head_ws = flat[2 * nl:]
        record["total"] = loss_val
        history.append(record)

    return Checkpoint(
        net=net,
        heads=[w.copy() for w in head_ws],
        head_specs=specs,
        loss_config=losscfg,
        train_config=traincfg,
        loss_history=history,
    )


def train_vanilla(spec: ProblemSpec, losscfg: LossConfig,
                  traincfg: TrainConfig) -> Checkpoint:
    """Single-head baseline trained directly at the target stiffness."""
    return train([HeadConfig(problem=spec)], losscfg, traincfg)

"""One-shot transfer: closed-form last-layer solve.

After training, the base-network features at the collocation points are
frozen. For a new coefficient set the optimal head weights minimize a
quadratic collocation loss, so they come from a single linear solve

    M w = rhs(f, y_b)

where M is the weighted Gram matrix of the operator-transformed features.
Re-solving for new forcing or boundary data reuses the stored factorization
(the fast path behind the reparametrization protocol). Polynomial
nonlinearities are handled by a perturbation cascade: a sequence of linear
solves on the same operator whose forcings are multinomial products of the
previously solved terms.

Feature lift: with h~(x) the bias-augmented features, the n-output head is
u(x) = (I_n (x) h~(x)^T) vec(W), which couples the output components exactly
as the coefficient matrices do, so M has size n(m+1) x n(m+1).
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import linalg
from .equations import ProblemSpec, forcing_values, linearize
from .errors import (
    GeometryMismatch,
    InvalidOrder,
    NonFiniteSeries,
    SingularM,
    SingularMatrix,
)
from .network import batch_features
from .training import Checkpoint, CollocationSet, boundary_values, sample_collocation


@dataclass
class FrozenFeatures:
    """Bias-augmented features (and their input tangents) evaluated once at
    the collocation points of a trained checkpoint."""

    net: object
    colloc: CollocationSet
    n: int
    interior_h: np.ndarray  # (N1, m+1)
    interior_dt: np.ndarray  # (N1, m+1), bias column identically zero
    interior_dx: list  # d arrays of shape (N1, m+1)
    boundary_h: np.ndarray  # (N2, m+1)

    @property
    def m1(self):
        return self.interior_h.shape[1]


@dataclass
class TransferOperator:
    ff: FrozenFeatures
    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: list
    omega1: float
    omega2: float
    design: np.ndarray  # (N1*n, n*(m+1)) stacked operator rows
    bdesign: np.ndarray  # (N2*n, n*(m+1)) stacked boundary rows
    m_matrix: np.ndarray
    fact: linalg.Factorization
    ridge: float
    assemble_seconds: float


@dataclass
class TransferSolution:
    weights: list  # (m+1, n) arrays, one per expansion order
    beta: float
    feature_fn: object  # points -> bias-augmented features
    factor_seconds: float
    solve_seconds: float

    def u(self, points):
        """Evaluate the reconstruction sum_k beta^k h~(x) W_k on points."""
        ht = self.feature_fn(points)
        out = ht @ self.weights[0]
        bk = 1.0
        for w in self.weights[1:]:
            bk *= self.beta
            out = out + bk * (ht @ w)
        return out


def _augment(h):
    return np.hstack([h, np.ones((h.shape[0], 1))])


def _augment_tangent(t):
    return np.hstack([t, np.zeros((t.shape[0], 1))])


def freeze_features(ckpt: Checkpoint, colloc: CollocationSet | None = None):
    """Evaluate and fix the features at the collocation points.

    With no explicit collocation set, the checkpoint's own training points
    are regenerated, so the frozen features equal the ones the last training
    epoch saw, bitwise.
    """
    spec = ckpt.head_specs[0]
    if colloc is None:
        colloc = sample_collocation(spec, ckpt.loss_config)
    if colloc.interior.shape[1] != ckpt.net.in_dim:
        raise GeometryMismatch(
            f"collocation has {colloc.interior.shape[1]} coordinates, "
            f"checkpoint network expects {ckpt.net.in_dim}"
        )
    h_int, tans = batch_features(ckpt.net, colloc.interior)
    h_b, _ = batch_features(ckpt.net, colloc.boundary)
    return FrozenFeatures(
        net=ckpt.net,
        colloc=colloc,
        n=spec.n,
        interior_h=_augment(h_int),
        interior_dt=_augment_tangent(tans[0]),
        interior_dx=[_augment_tangent(t) for t in tans[1:]],
        boundary_h=_augment(h_b),
    )


def _stack_design(coeffs, feats, n):
    """Stacked per-point operator rows: row (p, i) and column block (j) hold
    sum_c coeffs_c[i, j] * feats_c[p]."""
    n1, m1 = feats[0].shape
    d4 = np.zeros((n1, n, n, m1))
    for coef, feat in zip(coeffs, feats):
        d4 += np.einsum("ij,pl->pijl", coef, feat)
    return d4.reshape(n1 * n, n * m1)


def assemble_operator(ff: FrozenFeatures, a_hat, b_hat, c_hat, omega1, omega2,
                      ridge=0.0, kind=linalg.LU) -> TransferOperator:
    """Build and factor the normal-equation matrix for a coefficient set.

    A failed factorization signals rank-deficient features; more collocation
    points or a smaller feature dimension are the usual remedies. ``ridge``
    adds an explicit Tikhonov term for rescue runs and is never applied
    implicitly.
    """
    start = time.perf_counter()
    a_hat = np.asarray(a_hat, dtype=float)
    b_hat = np.asarray(b_hat, dtype=float)
    c_hat = [np.asarray(c, dtype=float) for c in c_hat]
    n = ff.n
    if a_hat.shape != (n, n) or b_hat.shape != (n, n):
        raise GeometryMismatch("coefficient matrices must be n x n")
    if len(c_hat) != len(ff.interior_dx):
        raise GeometryMismatch("need one C matrix per spatial dimension")

    design = _stack_design(
        [a_hat, b_hat, *c_hat],
        [ff.interior_h, ff.interior_dt, *ff.interior_dx],
        n,
    )
    bdesign = _stack_design([np.eye(n)], [ff.boundary_h], n)
    n1 = ff.interior_h.shape[0]
    n2 = ff.boundary_h.shape[0]
    m = (omega1 / n1) * (design.T @ design) + (omega2 / n2) * (bdesign.T @ bdesign)
    m = 0.5 * (m + m.T)
    if ridge:
        m[np.diag_indices_from(m)] += ridge
    try:
        fact = linalg.factorize(m, kind)
    except SingularMatrix as exc:
        raise SingularM(
            f"normal-equation matrix is singular ({exc}); the frozen features "
            "are rank deficient - try more collocation points or a smaller m"
        ) from None
    return TransferOperator(
        ff=ff, a_hat=a_hat, b_hat=b_hat, c_hat=c_hat,
        omega1=omega1, omega2=omega2,
        design=design, bdesign=bdesign, m_matrix=m, fact=fact, ridge=ridge,
        assemble_seconds=time.perf_counter() - start,
    )


def solve_weights(op: TransferOperator, f_vals, y_vals) -> TransferSolution:
    """RHS-only solve against the stored factorization: no re-assembly, no
    re-factorization. f_vals is (N1, n) forcing, y_vals (N2, n) boundary
    data; both in the collocation order of the frozen features."""
    start = time.perf_counter()
    f_vals = np.asarray(f_vals, dtype=float)
    y_vals = np.asarray(y_vals, dtype=float)
    n1 = op.ff.interior_h.shape[0]
    n2 = op.ff.boundary_h.shape[0]
    rhs = (op.omega1 / n1) * (op.design.T @ f_vals.ravel())
    rhs += (op.omega2 / n2) * (op.bdesign.T @ y_vals.ravel())
    w_vec = linalg.solve(op.fact, rhs)
    w = w_vec.reshape(op.ff.n, op.ff.m1).T
    elapsed = time.perf_counter() - start
    net = op.ff.net
    return TransferSolution(
        weights=[w],
        beta=0.0,
        feature_fn=lambda pts: _augment(batch_features(net, pts)[0]),
        factor_seconds=0.0,
        solve_seconds=elapsed,
    )


def transfer_linear(ckpt: Checkpoint, target: ProblemSpec,
                    omega1=None, omega2=None) -> TransferSolution:
    """Freeze, assemble, solve: the full one-shot path for a linear target."""
    start = time.perf_counter()
    ff = freeze_features(ckpt)
    op = assemble_operator(
        ff, target.A, target.B, target.C,
        ckpt.loss_config.omega1 if omega1 is None else omega1,
        ckpt.loss_config.omega2 if omega2 is None else omega2,
    )
    setup = time.perf_counter() - start
    sol = solve_weights(
        op,
        forcing_values(target, ff.colloc.interior),
        boundary_values(target, ff.colloc),
    )
    sol.factor_seconds = setup
    return sol


def perturbation_forcings(k, q, history):
    """Multinomial forcing of expansion order k for exponent q.

    ``history`` holds the nonlinear-variable values of Y_0 .. Y_{k-1} on the
    collocation points. Returns that component of F_k (the other components
    are zero): minus the sum over all exponent tuples (l_0 .. l_{k-1}) with
    sum l_i = q and sum i*l_i = k - 1 of q!/(l_0! .. !) * prod Y_i^l_i.
    """
    if k < 1:
        raise InvalidOrder(f"forcing order must be >= 1, got {k}")
    if len(history) < k:
        raise InvalidOrder(f"need {k} previous terms, got {len(history)}")
    out = 0.0
    q_fact = math.factorial(q)

    def walk(i, remaining, weight, coeff, product):
        nonlocal out
        if i == k:
            if remaining == 0 and weight == k - 1:
                out += coeff * product
            return
        for li in range(remaining + 1):
            if weight + i * li > k - 1:
                break
            walk(
                i + 1,
                remaining - li,
                weight + i * li,
                coeff / math.factorial(li),
                product * history[i] ** li if li else product,
            )

    walk(0, q, 0, float(q_fact), 1.0)
    return -out


def solve_cascade(op: TransferOperator, target: ProblemSpec, p) -> TransferSolution:
    """Perturbation cascade on an existing operator: p+1 RHS-only solves.

    Order 0 carries the original forcing and initial/boundary data; higher
    orders are forced by the multinomial products of earlier terms and carry
    zero data, so the reconstruction's initial value sums to y0 for any beta.
    """
    nl = target.nonlinearity
    if nl is None:
        raise InvalidOrder("target spec has no polynomial nonlinearity")
    if p < 0 or p > 20:
        raise InvalidOrder(f"expansion order must be in [0, 20], got {p}")
    ff = op.ff
    n1 = ff.interior_h.shape[0]
    weights = []
    var_history = []  # nonlinear-variable values at the interior points
    solve_seconds = 0.0
    f0 = forcing_values(target, ff.colloc.interior)
    y0 = boundary_values(target, ff.colloc)
    zeros_y = np.zeros_like(y0)
    for k in range(p + 1):
        if k == 0:
            f_k, y_k = f0, y0
        else:
            f_k = np.zeros((n1, ff.n))
            f_k[:, nl.row] = perturbation_forcings(k, nl.exponent, var_history)
            y_k = zeros_y
        sol_k = solve_weights(op, f_k, y_k)
        solve_seconds += sol_k.solve_seconds
        w = sol_k.weights[0]
        if not np.all(np.isfinite(w)):
            raise NonFiniteSeries(f"expansion term {k} is non-finite")
        weights.append(w)
        var_history.append(ff.interior_h @ w[:, nl.var])

    net = ff.net
    return TransferSolution(
        weights=weights,
        beta=nl.beta,
        feature_fn=lambda pts: _augment(batch_features(net, pts)[0]),
        factor_seconds=0.0,
        solve_seconds=solve_seconds,
    )


def transfer_nonlinear(ckpt: Checkpoint, target: ProblemSpec, p) -> TransferSolution:
    """Freeze, assemble once, then run the perturbation cascade."""
    nl = target.nonlinearity
    if nl is None:
        raise InvalidOrder("target spec has no polynomial nonlinearity")
    lin = linearize(target)
    start = time.perf_counter()
    ff = freeze_features(ckpt)
    op = assemble_operator(
        ff, lin.A, lin.B, lin.C, ckpt.loss_config.omega1, ckpt.loss_config.omega2
    )
    setup = time.perf_counter() - start
    sol = solve_cascade(op, target, p)
    sol.factor_seconds = setup
    return sol


def select_p(ckpt: Checkpoint, target: ProblemSpec, p_range, reference):
    """Pick the expansion order minimizing the mean absolute error against a
    reference solution.

    ``reference`` is (points, values) with values shaped (N, n). Returns
    (p_opt, errors) where errors[i] is the MAE at p_range[i]; ties resolve
    to the smallest order.
    """
    p_range = sorted(int(p) for p in p_range)
    if not p_range or p_range[0] < 0 or p_range[-1] > 20:
        raise InvalidOrder(f"p range must lie within [0, 20], got {p_range}")
    points, ref_values = reference
    ref_values = np.asarray(ref_values, dtype=float)

    sol = transfer_nonlinear(ckpt, target, p_range[-1])
    ht = sol.feature_fn(np.atleast_2d(np.asarray(points, dtype=float)))
    partial = np.zeros_like(ref_values)
    errors = []
    k = 0
    bk = 1.0
    for p in p_range:
        while k <= p:
            if k > 0:
                bk *= sol.beta
            partial = partial + bk * (ht @ sol.weights[k])
            k += 1
        errors.append(float(np.mean(np.abs(partial - ref_values))))
    p_opt = p_range[int(np.argmin(errors))]
    return p_opt, errors

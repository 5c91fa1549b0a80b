"""Parameterized first-order systems in coefficient-matrix form.

Every problem is written as

    sum_j C_j du/dx_j + B du/dt + A u + beta * g(u) = f(t, x)

with constant n x n coefficient matrices, an optional single polynomial
nonlinearity, and Dirichlet boundary / initial data. Four built-in families
are provided (a damped oscillator, a sinusoidally forced linear system, the
cubic Duffing oscillator, and an advection-reaction transport system), all
with n = 2, plus closed-form solutions used as validation oracles.
"""

import dataclasses
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    AlreadyLinear,
    InvalidAlpha,
    OutOfDomain,
    RepeatedRoot,
    ResonantFrequency,
    Unsupported,
    UnknownFamily,
    ZeroEigenvalue,
)
from .linalg import eig2x2

FAMILIES = ("oho", "ncff", "duffing", "ar")


@dataclass(frozen=True)
class Nonlinearity:
    """beta * y[var]**exponent added to equation ``row`` (0-based indices)."""

    row: int
    var: int
    exponent: int
    beta: float


@dataclass
class ProblemSpec:
    family: str
    n: int
    d: int
    A: np.ndarray
    B: np.ndarray
    C: list
    forcing: object  # forcing(t, *x) -> (..., n), vectorized
    nonlinearity: Nonlinearity | None
    T: float
    L: list
    ic: object  # y0 vector (ODE) or ic(x) -> (..., n) (PDE)
    bc_value: float
    alpha: float
    params: dict = field(default_factory=dict)

    @property
    def is_ode(self):
        return self.d == 0


@dataclass
class StiffnessReport:
    eigenvalues: tuple
    sr: float


def _zero_forcing(t, *xs):
    t = np.asarray(t, dtype=float)
    return np.zeros(t.shape + (2,))


def instantiate(family, alpha, params=None, T=1.0) -> ProblemSpec:
    """Build a ProblemSpec for one of the built-in families.

    ``params`` overrides the family defaults (initial values, frequency,
    reaction constants, ...). The stiffness parameter scales the coefficient
    matrix A in every family.
    """
    name = str(family).lower()
    if name not in FAMILIES:
        raise UnknownFamily(f"unknown family {family!r}; known: {FAMILIES}")
    p = dict(params or {})
    alpha = float(alpha)
    # alpha = 0 is allowed only for the transport family (pure advection).
    if alpha < 0 or (alpha == 0 and name != "ar"):
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")

    if name == "oho":
        y0 = np.asarray(p.pop("y0", [1.0, 0.5]), dtype=float)
        spec = ProblemSpec(
            family=name, n=2, d=0,
            A=np.array([[0.0, -1.0], [1.0, alpha]]),
            B=np.eye(2), C=[],
            forcing=_zero_forcing,
            nonlinearity=None,
            T=float(p.pop("T", T)), L=[],
            ic=y0, bc_value=0.0, alpha=alpha,
            params={"y0": y0.tolist()},
        )
    elif name == "ncff":
        y0 = np.asarray(p.pop("y0", [2.0, 4.0]), dtype=float)
        omega = float(p.pop("omega", 1.0))

        def forcing(t, *xs, _w=omega, _a=alpha):
            t = np.asarray(t, dtype=float)
            return np.stack(
                [2.0 * np.sin(_w * t), _a * (np.cos(_w * t) - np.sin(_w * t))],
                axis=-1,
            )

        spec = ProblemSpec(
            family=name, n=2, d=0,
            A=np.array([[2.0, -1.0], [1.0 - alpha, alpha]]),
            B=np.eye(2), C=[],
            forcing=forcing,
            nonlinearity=None,
            T=float(p.pop("T", T)), L=[],
            ic=y0, bc_value=0.0, alpha=alpha,
            params={"y0": y0.tolist(), "omega": omega},
        )
    elif name == "duffing":
        y0 = np.asarray(p.pop("y0", [1.0, 0.5]), dtype=float)
        beta = float(p.pop("beta", 0.5))
        a21 = float(p.pop("a21", 0.1))

        def forcing(t, *xs):
            t = np.asarray(t, dtype=float)
            return np.stack([np.zeros_like(t), np.cos(t)], axis=-1)

        spec = ProblemSpec(
            family=name, n=2, d=0,
            A=np.array([[0.0, -1.0], [a21, alpha]]),
            B=np.eye(2), C=[],
            forcing=forcing,
            nonlinearity=Nonlinearity(row=1, var=0, exponent=3, beta=beta),
            T=float(p.pop("T", T)), L=[],
            ic=y0, bc_value=0.0, alpha=alpha,
            params={"y0": y0.tolist(), "beta": beta, "a21": a21},
        )
    elif name == "ar":
        y0max = float(p.pop("y0max", 1.0))
        mu = float(p.pop("mu", 1.8e-4))
        k1 = float(p.pop("k1", 1.0e-3))
        k2 = float(p.pop("k2", 2.0e-3))
        length = float(p.pop("L", 1.0))

        def ic(x, _m=y0max, _l=length):
            v = spline_ic(_m, _l, x)
            return np.stack([v, v], axis=-1)

        spec = ProblemSpec(
            family=name, n=2, d=1,
            A=alpha * np.array([[k1, -k2], [-k1, k2]]),
            B=np.eye(2), C=[mu * np.eye(2)],
            forcing=_zero_forcing,
            nonlinearity=None,
            T=float(p.pop("T", T)), L=[length],
            ic=ic, bc_value=0.0, alpha=alpha,
            params={"y0max": y0max, "mu": mu, "k1": k1, "k2": k2, "L": length},
        )

    if p:
        raise UnknownFamily(f"unknown parameters for {name}: {sorted(p)}")
    return spec


def stiffness_ratio(spec: ProblemSpec) -> StiffnessReport:
    """Eigenvalues of the Jacobian -B^-1 A and their magnitude ratio."""
    if spec.n != 2:
        raise Unsupported(f"stiffness diagnostics implemented for n=2, got n={spec.n}")
    jac = -np.linalg.solve(spec.B, spec.A)
    lam1, lam2 = eig2x2(jac)
    if abs(lam2) < 1e-300:
        raise ZeroEigenvalue("smallest eigenvalue magnitude is zero")
    return StiffnessReport(eigenvalues=(lam1, lam2), sr=abs(lam1) / abs(lam2))


def analytic_oho(alpha, y0, t):
    """Closed-form damped-oscillator solution [y1, y1'] for alpha > 2."""
    alpha = float(alpha)
    if alpha <= 2.0:
        raise RepeatedRoot(f"distinct real roots require alpha > 2, got {alpha}")
    t = np.asarray(t, dtype=float)
    root = np.sqrt(alpha * alpha - 4.0)
    lam1 = (-alpha + root) / 2.0
    lam2 = (-alpha - root) / 2.0
    y10, y20 = float(y0[0]), float(y0[1])
    c1 = (y20 - lam2 * y10) / (lam1 - lam2)
    c2 = y10 - c1
    e1 = np.exp(lam1 * t)
    e2 = np.exp(lam2 * t)
    y1 = c1 * e1 + c2 * e2
    y2 = c1 * lam1 * e1 + c2 * lam2 * e2
    return np.stack([y1, y2], axis=-1)


def analytic_ncff(alpha, omega, y0, t):
    """Closed-form forced-system solution: a sinusoidal particular part from
    undetermined coefficients plus decaying modes exp(-t), exp(-(alpha+1)t)."""
    alpha = float(alpha)
    omega = float(omega)
    if alpha <= 0:
        raise InvalidAlpha(f"alpha must be positive, got {alpha}")
    t = np.asarray(t, dtype=float)
    a = np.array([[2.0, -1.0], [1.0 - alpha, alpha]])
    fc = np.array([0.0, alpha])
    fs = np.array([2.0, -alpha])
    # y' + A y = fc cos wt + fs sin wt with y_p = P cos wt + Q sin wt
    sys = np.block([[a, omega * np.eye(2)], [-omega * np.eye(2), a]])
    rhs = np.concatenate([fc, fs])
    try:
        pq = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError:
        raise ResonantFrequency(
            f"singular frequency-domain system at omega={omega}"
        ) from None
    p_vec, q_vec = pq[:2], pq[2:]
    yp0 = p_vec
    modes = np.array([[1.0, 1.0], [1.0, 1.0 - alpha]])  # columns: eigvecs of A
    c = np.linalg.solve(modes, np.asarray(y0, dtype=float) - yp0)
    ct = t[..., None] if t.ndim else t
    particular = p_vec * np.cos(omega * ct) + q_vec * np.sin(omega * ct)
    homogeneous = (
        c[0] * np.exp(-ct) * modes[:, 0]
        + c[1] * np.exp(-(alpha + 1.0) * ct) * modes[:, 1]
    )
    return particular + homogeneous


_SPLINE_FRACTIONS = np.array([0.0, 0.25, 0.5, 0.75, 1.0])


def spline_ic(y0max, length, x):
    """Clamped cubic spline bump: knots at {0, L/4, L/2, 3L/4, L} with values
    {0, y0max/2, y0max, y0max/2, 0} and zero end slopes."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > length):
        raise OutOfDomain(f"x outside [0, {length}]")
    knots = _SPLINE_FRACTIONS * length
    values = np.array([0.0, 0.5, 1.0, 0.5, 0.0]) * y0max
    return CubicSpline(knots, values, bc_type="clamped")(x)


def linearize(spec: ProblemSpec) -> ProblemSpec:
    """Drop the polynomial nonlinearity, keeping everything else intact."""
    if spec.nonlinearity is None:
        warnings.warn("spec is already linear", AlreadyLinear, stacklevel=2)
        return spec
    return dataclasses.replace(spec, nonlinearity=None)


def forcing_values(spec: ProblemSpec, points):
    """Evaluate the forcing on a batch of (t, x...) points, shape (N, n)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cols = [pts[:, j] for j in range(pts.shape[1])]
    return np.asarray(spec.forcing(*cols), dtype=float)


def ic_values(spec: ProblemSpec, x=None):
    """Initial values: the constant y0 for ODEs, ic(x) on a grid for PDEs."""
    if spec.is_ode:
        return np.asarray(spec.ic, dtype=float)
    return np.asarray(spec.ic(np.asarray(x, dtype=float)), dtype=float)


def nonlinear_term(spec: ProblemSpec, y):
    """beta * g(y) with g the single polynomial component, shape (..., n)."""
    out = np.zeros_like(y)
    nl = spec.nonlinearity
    if nl is not None:
        out[..., nl.row] = nl.beta * y[..., nl.var] ** nl.exponent
    return out


def ode_rhs(spec: ProblemSpec):
    """dy/dt = B^-1 (f(t) - A y - beta g(y)) as a callable f(t, y)."""
    b_inv = np.linalg.inv(spec.B)
    a = spec.A
    nl = spec.nonlinearity

    def rhs(t, y):
        val = spec.forcing(t) - a @ y
        if nl is not None:
            val = val - nonlinear_term(spec, y)
        return b_inv @ val

    return rhs


def ode_jacobian(spec: ProblemSpec):
    """Analytic Jacobian of the RHS: -B^-1 (A + beta dg/dy)."""
    b_inv = np.linalg.inv(spec.B)
    a = spec.A
    nl = spec.nonlinearity

    def jac(t, y):
        j = a.copy()
        if nl is not None:
            j[nl.row, nl.var] += nl.beta * nl.exponent * y[nl.var] ** (nl.exponent - 1)
        return -b_inv @ j

    return jac

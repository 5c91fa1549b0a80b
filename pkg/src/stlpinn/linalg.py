"""Dense matrix primitives: factorizations, solves, 2x2 eigenvalues.

Matrices are plain float64 ndarrays (row-major, as numpy defaults). The
factorization kernels are scipy's LAPACK wrappers; this module adds the
validation and failure contracts the rest of the package relies on.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    SingularMatrix,
)

LU = "lu"
CHOLESKY = "cholesky"

# A pivot this small relative to the largest entry is treated as exact
# rank deficiency.
_PIVOT_RTOL = 1e-14
_SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class Factorization:
    """Packed LU (with pivots) or Cholesky factors of a square matrix."""

    kind: str
    factors: np.ndarray
    piv: np.ndarray | None = None

    @property
    def n(self):
        return self.factors.shape[0]


def _require_square(m):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DimensionMismatch("matrix contains non-finite entries")
    return m


def factorize(m, kind=LU) -> Factorization:
    """Factor a square matrix for repeated solves.

    Cholesky is opt-in and never used as a silent fallback: asymmetric input
    raises NotSymmetric, an indefinite one NotPositiveDefinite.
    """
    m = _require_square(m)
    scale = np.abs(m).max()
    if kind == LU:
        lu, piv = scipy.linalg.lu_factor(m, check_finite=False)
        pivots = np.abs(np.diag(lu))
        if scale == 0.0 or pivots.min() < _PIVOT_RTOL * scale:
            raise SingularMatrix(
                f"pivot {pivots.min():.3e} below {_PIVOT_RTOL:.0e} * max|entry|"
            )
        return Factorization(LU, lu, piv)
    if kind == CHOLESKY:
        asym = np.abs(m - m.T).max()
        if scale > 0 and asym > _SYMMETRY_RTOL * scale:
            raise NotSymmetric(f"relative asymmetry {asym / scale:.3e}")
        try:
            c, _ = scipy.linalg.cho_factor(m, lower=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(str(exc)) from None
        return Factorization(CHOLESKY, c)
    raise ValueError(f"unknown factorization kind {kind!r}")


def solve(fact: Factorization, b):
    """Back-substitute one or more right-hand sides through a factorization."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != fact.n:
        raise DimensionMismatch(
            f"rhs has leading dimension {b.shape[0]}, factorization is {fact.n}"
        )
    if fact.kind == LU:
        return scipy.linalg.lu_solve((fact.factors, fact.piv), b, check_finite=False)
    return scipy.linalg.cho_solve((fact.factors, True), b, check_finite=False)


def eig2x2(m):
    """Both eigenvalues of a 2x2 matrix, ordered by descending magnitude.

    Uses the quadratic formula on the characteristic polynomial, returning a
    complex pair when the discriminant is negative.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (2, 2):
        raise DimensionMismatch(f"eig2x2 requires a 2x2 matrix, got {m.shape}")
    tr = m[0, 0] + m[1, 1]
    det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    disc = complex(tr * tr - 4.0 * det)
    root = np.sqrt(disc)
    lam1 = (tr + root) / 2.0
    lam2 = (tr - root) / 2.0
    if abs(lam2) > abs(lam1):
        lam1, lam2 = lam2, lam1
    return lam1, lam2

"""Dense linear-algebra primitives shared by every other module.

All matrices in this package are plain ``numpy.ndarray`` objects with float64
entries.  Symmetric matrices are kept bitwise symmetric by constructing them
from triangles or as ``X + X.T``; the helpers here enforce that discipline.
"""

import numpy as np

__all__ = [
    "NumericsError",
    "NonFiniteMatrixError",
    "SingularSystemError",
    "SINGULAR_COND_LIMIT",
    "as_matrix",
    "is_symmetric",
    "he",
    "sym_eig_max",
    "sym_eig_min",
    "solve_linear",
    "cond_2norm",
]

# Condition-number threshold beyond which a linear system is treated as
# singular; leaves ~4 decimal digits of headroom in double precision.
SINGULAR_COND_LIMIT = 1e12


class NumericsError(ValueError):
    """Base class for numerical-kernel failures."""


class NonFiniteMatrixError(NumericsError):
    """A matrix contains NaN or infinite entries."""


class SingularSystemError(NumericsError):
    """A linear system is numerically singular (condition estimate too large)."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a 2-D float64 array, rejecting non-finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise NumericsError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.size and not np.all(np.isfinite(m)):
        raise NonFiniteMatrixError(f"{name} has non-finite entries")
    return m


def is_symmetric(m: np.ndarray) -> bool:
    """True when ``m`` is square and bitwise equal to its transpose."""
    m = np.asarray(m)
    return m.ndim == 2 and m.shape[0] == m.shape[1] and bool(np.array_equal(m, m.T))


def he(m) -> np.ndarray:
    """Return ``m + m.T`` for a square matrix.

    The sum of mirrored entries is evaluated with commuted operands, so the
    result is bitwise symmetric.
    """
    m = as_matrix(m, "he() argument")
    if m.shape[0] != m.shape[1]:
        raise NumericsError(f"he() needs a square matrix, got {m.shape}")
    return m + m.T


def _check_sym(m, name: str) -> np.ndarray:
    m = as_matrix(m, name)
    if m.shape[0] != m.shape[1]:
        raise NumericsError(f"{name} must be square, got {m.shape}")
    if not np.array_equal(m, m.T):
        raise NumericsError(f"{name} is not symmetric")
    return m


def sym_eig_max(m) -> float:
    """Largest eigenvalue of a symmetric matrix (empty matrix counts as 0)."""
    m = _check_sym(m, "sym_eig_max() argument")
    if m.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(m)[-1])


def sym_eig_min(m) -> float:
    """Smallest eigenvalue of a symmetric matrix (empty matrix counts as 0)."""
    m = _check_sym(m, "sym_eig_min() argument")
    if m.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(m)[0])


def cond_2norm(a) -> float:
    """2-norm condition number via SVD; ``inf`` for rank-deficient input."""
    a = as_matrix(a, "cond_2norm() argument")
    if a.size == 0:
        return 1.0
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] == 0.0:
        return np.inf
    return float(s[0] / s[-1])


def solve_linear(a, b, name: str = "system") -> np.ndarray:
    """Solve ``a @ x = b`` for a square, well-conditioned ``a``.

    Parameters
    ----------
    a : array_like
        Square coefficient matrix.
    b : array_like
        Right-hand side, one or more columns.

    Returns
    -------
    numpy.ndarray
        Solution ``x`` with residual ``||a x - b||_inf <= 1e-9 (1 + ||b||_inf)``;
        one refinement step is applied if the first solve misses that bound.

    Raises
    ------
    SingularSystemError
        If the condition estimate of ``a`` exceeds ``SINGULAR_COND_LIMIT`` or
        the residual bound cannot be met.
    """
    a = as_matrix(a, f"{name} matrix")
    b = as_matrix(b, f"{name} rhs")
    if a.shape[0] != a.shape[1]:
        raise NumericsError(f"{name} matrix must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise NumericsError(
            f"{name} rhs has {b.shape[0]} rows, expected {a.shape[0]}"
        )
    if a.shape[0] == 0:
        return np.zeros((0, b.shape[1]))
    cond = cond_2norm(a)
    if not np.isfinite(cond) or cond > SINGULAR_COND_LIMIT:
        raise SingularSystemError(
            f"{name} is numerically singular (condition estimate {cond:.3e})"
        )
    x = np.linalg.solve(a, b)
    tol = 1e-9 * (1.0 + float(np.max(np.abs(b))) if b.size else 1.0)
    resid = np.max(np.abs(a @ x - b)) if b.size else 0.0
    if resid > tol:
        x = x + np.linalg.solve(a, b - a @ x)
        resid = np.max(np.abs(a @ x - b))
        if resid > tol:
            raise SingularSystemError(
                f"{name} solve residual {resid:.3e} exceeds tolerance {tol:.3e}"
            )
    return x

"""Hyper-rectangular parameter domains, vertex enumeration and convex coordinates.

A bounded parameter vector of dimension ``r`` lives in a box with ``2**r``
vertices.  Any interior point is a convex combination of the vertices; the
weights used here are the tensor products of the per-axis barycentric
weights, which is the unique multi-affine choice.
"""

from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DegenerateIntervalError",
    "ParameterOutOfRangeError",
    "ParameterBox",
    "VertexSet",
    "ConvexCoordinates",
    "ParamTrajectory",
    "enumerate_vertices",
    "coords",
]

BOX_SLACK = 1e-9


class DegenerateIntervalError(ValueError):
    """A parameter interval has zero or negative width."""


class ParameterOutOfRangeError(ValueError):
    """A parameter value lies outside the declared box."""


@dataclass(frozen=True)
class ParameterBox:
    """Axis-aligned box ``lower_k < rho_k < upper_k`` for each component."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.ndim != 1 or hi.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise DegenerateIntervalError(
                f"bounds must be equal-length 1-D vectors, got {lo.shape} and {hi.shape}"
            )
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise DegenerateIntervalError("bounds must be finite")
        if not np.all(lo < hi):
            bad = int(np.argmin(hi - lo))
            raise DegenerateIntervalError(
                f"interval {bad} is degenerate: [{lo[bad]}, {hi[bad]}]"
            )
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def r(self) -> int:
        return self.lower.size

    @property
    def n_vertices(self) -> int:
        return 2 ** self.r

    def contains(self, rho, slack: float = BOX_SLACK) -> bool:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        if rho.shape != self.lower.shape:
            return False
        return bool(
            np.all(rho >= self.lower - slack) and np.all(rho <= self.upper + slack)
        )

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Uniform interior samples, shape ``(size, r)``."""
        return rng.uniform(self.lower, self.upper, size=(size, self.r))


@dataclass(frozen=True)
class VertexSet:
    """The ``2**r`` box corners in binary-encoding order.

    Bit ``k`` of the vertex index selects ``upper_k`` when set, ``lower_k``
    otherwise.
    """

    vertices: np.ndarray  # (2**r, r)

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def __getitem__(self, j: int) -> np.ndarray:
        return self.vertices[j]


@dataclass(frozen=True)
class ConvexCoordinates:
    """Nonnegative weights over the vertex set summing to one."""

    alpha: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        if np.any(a < 0.0):
            raise ParameterOutOfRangeError("convex coordinates must be nonnegative")
        if abs(float(a.sum()) - 1.0) > 1e-12:
            raise ParameterOutOfRangeError(
                f"convex coordinates sum to {a.sum()!r}, expected 1"
            )
        object.__setattr__(self, "alpha", a)

    def __len__(self) -> int:
        return self.alpha.size

    def combine(self, items) -> np.ndarray:
        """Weighted sum ``sum_i alpha_i * items[i]``."""
        out = self.alpha[0] * np.asarray(items[0], dtype=float)
        for w, it in zip(self.alpha[1:], items[1:]):
            out = out + w * np.asarray(it, dtype=float)
        return out


def enumerate_vertices(box: ParameterBox) -> VertexSet:
    """All ``2**r`` corners of ``box`` in binary-encoding order."""
    r = box.r
    n = box.n_vertices
    verts = np.empty((n, r))
    for j in range(n):
        for k in range(r):
            verts[j, k] = box.upper[k] if (j >> k) & 1 else box.lower[k]
    return VertexSet(verts)


def coords(box: ParameterBox, rho) -> ConvexCoordinates:
    """Barycentric weights of ``rho`` over the vertices of ``box``.

    The weight of vertex ``j`` is the product over axes of
    ``(rho_k - lower_k) / (upper_k - lower_k)`` when bit ``k`` of ``j`` is
    set, and of the complement otherwise.  At a vertex this returns the
    corresponding standard basis vector exactly.

    Raises
    ------
    ParameterOutOfRangeError
        If ``rho`` lies outside the box by more than ``1e-9``.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    if rho.shape != box.lower.shape:
        raise ParameterOutOfRangeError(
            f"parameter has shape {rho.shape}, box expects {box.lower.shape}"
        )
    if not box.contains(rho):
        raise ParameterOutOfRangeError(
            f"parameter {rho.tolist()} outside box "
            f"[{box.lower.tolist()}, {box.upper.tolist()}]"
        )
    # Clipping removes the 1e-9 admission slack so weights stay in [0, 1].
    w = np.clip((rho - box.lower) / (box.upper - box.lower), 0.0, 1.0)
    alpha = np.ones(box.n_vertices)
    for j in range(box.n_vertices):
        for k in range(box.r):
            alpha[j] *= w[k] if (j >> k) & 1 else 1.0 - w[k]
    return ConvexCoordinates(alpha)


@dataclass(frozen=True)
class ParamTrajectory:
    """Time-varying parameter signal confined to a declared box."""

    sampler: Callable[[float], np.ndarray]
    box: ParameterBox
    description: str = field(default="")

    def __call__(self, t: float) -> np.ndarray:
        rho = np.atleast_1d(np.asarray(self.sampler(t), dtype=float))
        if not self.box.contains(rho):
            raise ParameterOutOfRangeError(
                f"trajectory value {rho.tolist()} at t={t} leaves the box"
            )
        return rho

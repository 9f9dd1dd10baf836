"""Differential-algebraic representation (DAR) of rational LPV plants.

The plant

    xdot = A1 x + A2 pi + A3 u + A4 w
    z    = B1 x + B2 pi + B3 u + B4 w
    y    = C1 x + C2 pi + C3 w
    0    = Ups1(rho) x + Ups2(rho) pi + Ups3(rho) u + Ups4(rho) w

carries all parameter dependence in the affine blocks ``Ups*(rho)`` while the
named matrices stay constant.  The auxiliary vector ``pi`` collects the
rational/polynomial terms; it is well defined whenever ``Ups2(rho)`` is
invertible.  The undisturbed plant is the degenerate case ``q = l = 0``.

This module also builds the augmented ("bar") system that embeds the
disturbance and performance channels into an extended state, which lets the
L2-gain synthesis reuse the plain stabilization machinery.
"""

from dataclasses import dataclass, replace

import numpy as np

from .numerics import SingularSystemError, as_matrix, solve_linear
from .param_domain import ParameterBox, coords, enumerate_vertices

__all__ = [
    "NoPerformanceChannelError",
    "IllPosedError",
    "DarDims",
    "AffineParamMatrix",
    "DarSystem",
    "BarSystem",
    "ScheduledGain",
    "DarValidationReport",
    "WellPosednessReport",
    "RealizedPlant",
    "ClosedLoopBlocks",
    "ClosedLoopRealization",
    "validate",
    "well_posedness",
    "realize",
    "pi_value",
    "lift_l2",
    "closed_loop",
    "realize_closed_loop",
    "hurwitz_grid_margin",
    "strip_performance_channels",
]

WELL_POSED_COND_LIMIT = 1e10


class NoPerformanceChannelError(ValueError):
    """The operation needs a disturbance or performance channel (q or l > 0)."""


class IllPosedError(ValueError):
    """The system fails structural validation or well-posedness."""


@dataclass(frozen=True)
class DarDims:
    """Declared dimensions: state, auxiliary vector, input, output,
    disturbance, performance output and parameter count."""

    n: int
    n_pi: int
    m: int
    p: int
    q: int
    l: int
    r: int

    def __post_init__(self):
        for name in ("n", "n_pi", "m", "p", "r"):
            if getattr(self, name) < 1:
                raise IllPosedError(f"dimension {name} must be >= 1")
        if self.q < 0 or self.l < 0:
            raise IllPosedError("dimensions q and l must be >= 0")


@dataclass(frozen=True)
class AffineParamMatrix:
    """Matrix-valued affine function ``M(rho) = const + sum_k rho_k coeffs[k]``."""

    const: np.ndarray
    coeffs: tuple

    def __post_init__(self):
        const = as_matrix(self.const, "const part")
        parts = tuple(as_matrix(c, "coefficient part") for c in self.coeffs)
        for c in parts:
            if c.shape != const.shape:
                raise ValueError(
                    f"coefficient shape {c.shape} differs from const {const.shape}"
                )
        object.__setattr__(self, "const", const)
        object.__setattr__(self, "coeffs", parts)

    @property
    def shape(self):
        return self.const.shape

    @property
    def n_params(self) -> int:
        return len(self.coeffs)

    def __call__(self, rho) -> np.ndarray:
        rho = np.atleast_1d(np.asarray(rho, dtype=float))
        out = self.const.copy()
        for k in range(len(self.coeffs)):
            out += rho[k] * self.coeffs[k]
        return out

    @staticmethod
    def constant(mat, r: int) -> "AffineParamMatrix":
        mat = as_matrix(mat, "constant matrix")
        return AffineParamMatrix(mat, tuple(np.zeros_like(mat) for _ in range(r)))

    @staticmethod
    def zeros(rows: int, cols: int, r: int) -> "AffineParamMatrix":
        return AffineParamMatrix.constant(np.zeros((rows, cols)), r)

    def hstack_with(self, *others) -> "AffineParamMatrix":
        """Column-wise concatenation of affine matrices with matching rows."""
        consts = [self.const] + [o.const for o in others]
        coeffs = [
            np.hstack([self.coeffs[k]] + [o.coeffs[k] for o in others])
            for k in range(len(self.coeffs))
        ]
        return AffineParamMatrix(np.hstack(consts), tuple(coeffs))


@dataclass(frozen=True)
class DarSystem:
    """A complete DAR with declared dimensions and parameter box.

    Construction only coerces the blocks to float arrays; cross-dimension
    consistency is checked by :func:`validate`, which reports violations
    instead of raising so that broken inputs can be diagnosed.
    """

    dims: DarDims
    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray
    a4: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    ups1: AffineParamMatrix
    ups2: AffineParamMatrix
    ups3: AffineParamMatrix
    ups4: AffineParamMatrix
    box: ParameterBox

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "a4", "b1", "b2", "b3", "b4", "c1", "c2", "c3"):
            object.__setattr__(
                self, name, np.asarray(getattr(self, name), dtype=float)
            )

    @property
    def is_disturbed(self) -> bool:
        return self.dims.q > 0 or self.dims.l > 0

    def vertices(self):
        return enumerate_vertices(self.box)


_BLOCK_SHAPES = {
    "a1": ("n", "n"),
    "a2": ("n", "n_pi"),
    "a3": ("n", "m"),
    "a4": ("n", "q"),
    "b1": ("l", "n"),
    "b2": ("l", "n_pi"),
    "b3": ("l", "m"),
    "b4": ("l", "q"),
    "c1": ("p", "n"),
    "c2": ("p", "n_pi"),
    "c3": ("p", "q"),
    "ups1": ("n_pi", "n"),
    "ups2": ("n_pi", "n_pi"),
    "ups3": ("n_pi", "m"),
    "ups4": ("n_pi", "q"),
}


@dataclass(frozen=True)
class DarValidationReport:
    dims: DarDims
    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations


def validate(dar: DarSystem) -> DarValidationReport:
    """Check every dimension invariant of the DAR; never raises.

    Returns a report whose ``violations`` name each offending block and the
    expected shape, e.g. ``"a2 cols = 5, expected n_pi = 6"``.
    """
    d = dar.dims
    expected = {k: getattr(d, k) for k in ("n", "n_pi", "m", "p", "q", "l", "r")}
    bad = []
    for name, (rdim, cdim) in _BLOCK_SHAPES.items():
        blk = getattr(dar, name)
        shape = blk.shape if isinstance(blk, np.ndarray) else blk.const.shape
        want = (expected[rdim], expected[cdim])
        if shape[0] != want[0]:
            bad.append(f"{name} rows = {shape[0]}, expected {rdim} = {want[0]}")
        if shape[1] != want[1]:
            bad.append(f"{name} cols = {shape[1]}, expected {cdim} = {want[1]}")
        if not isinstance(blk, np.ndarray):
            if blk.n_params != d.r:
                bad.append(
                    f"{name} has {blk.n_params} coefficient parts, expected r = {d.r}"
                )
        elif blk.size and not np.all(np.isfinite(blk)):
            bad.append(f"{name} has non-finite entries")
    if dar.box.r != d.r:
        bad.append(f"parameter box has r = {dar.box.r}, expected {d.r}")
    return DarValidationReport(dims=d, violations=tuple(bad))


@dataclass(frozen=True)
class WellPosednessReport:
    well_posed: bool
    min_singular_value: float
    max_condition: float
    worst_rho: np.ndarray
    n_evaluations: int
    cond_limit: float = WELL_POSED_COND_LIMIT


def well_posedness(dar: DarSystem, grid_points_per_axis: int = 33) -> WellPosednessReport:
    """Certify invertibility of ``Ups2(rho)`` over the box by dense sampling.

    ``Ups2`` is affine, so invertibility at the vertices does not imply
    invertibility inside the box; the check therefore scans all vertices plus
    a uniform grid and flags the system whenever the condition number exceeds
    ``1e10`` anywhere.
    """
    if grid_points_per_axis < 2:
        raise ValueError("grid_points_per_axis must be >= 2")
    axes = [
        np.linspace(dar.box.lower[k], dar.box.upper[k], grid_points_per_axis)
        for k in range(dar.box.r)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    grid = np.stack([m.ravel() for m in mesh], axis=-1)
    points = np.vstack([dar.vertices().vertices, grid])

    worst_cond = 0.0
    min_sigma = np.inf
    worst_rho = points[0]
    for rho in points:
        u2 = dar.ups2(rho)
        s = np.linalg.svd(u2, compute_uv=False)
        sigma_min = float(s[-1]) if s.size else np.inf
        cond = np.inf if sigma_min == 0.0 else float(s[0] / s[-1])
        if cond > worst_cond:
            worst_cond = cond
            worst_rho = rho
        min_sigma = min(min_sigma, sigma_min)
    return WellPosednessReport(
        well_posed=bool(worst_cond <= WELL_POSED_COND_LIMIT),
        min_singular_value=float(min_sigma),
        max_condition=float(worst_cond),
        worst_rho=np.asarray(worst_rho, dtype=float),
        n_evaluations=points.shape[0],
    )


def pi_value(dar: DarSystem, rho, x, u=None, w=None) -> np.ndarray:
    """Unique solution of the algebraic row at frozen ``rho``:
    ``pi = -Ups2(rho)^-1 (Ups1(rho) x + Ups3(rho) u + Ups4(rho) w)``."""
    d = dar.dims
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.zeros(d.m) if u is None else np.atleast_1d(np.asarray(u, dtype=float))
    w = np.zeros(d.q) if w is None else np.atleast_1d(np.asarray(w, dtype=float))
    rhs = dar.ups1(rho) @ x + dar.ups3(rho) @ u + dar.ups4(rho) @ w
    return -solve_linear(dar.ups2(rho), rhs, name="Ups2").ravel()


@dataclass(frozen=True)
class RealizedPlant:
    """Frozen-parameter state-space matrices after eliminating ``pi``.

    ``du`` is the input-to-output feedthrough generated by the elimination;
    it is zero for plants whose measured output has no direct input path.
    """

    a: np.ndarray     # state matrix
    b: np.ndarray     # input matrix
    bw: np.ndarray    # disturbance input matrix
    az: np.ndarray    # performance output from state
    bz: np.ndarray    # performance output from input
    dz: np.ndarray    # performance output from disturbance
    c: np.ndarray     # measured output from state
    d: np.ndarray     # measured output from disturbance
    du: np.ndarray    # measured output from input


def realize(dar: DarSystem, rho) -> RealizedPlant:
    """Eliminate ``pi`` at frozen ``rho`` and return the rational plant matrices.

    Raises
    ------
    SingularSystemError
        If ``Ups2(rho)`` is numerically singular.
    """
    u2 = dar.ups2(rho)
    stacked = np.hstack([dar.ups1(rho), dar.ups3(rho), dar.ups4(rho)])
    sol = solve_linear(u2, stacked, name="Ups2")  # Ups2^-1 [Ups1 Ups3 Ups4]
    d = dar.dims
    s1 = sol[:, : d.n]
    s3 = sol[:, d.n : d.n + d.m]
    s4 = sol[:, d.n + d.m :]
    return RealizedPlant(
        a=dar.a1 - dar.a2 @ s1,
        b=dar.a3 - dar.a2 @ s3,
        bw=dar.a4 - dar.a2 @ s4,
        az=dar.b1 - dar.b2 @ s1,
        bz=dar.b3 - dar.b2 @ s3,
        dz=dar.b4 - dar.b2 @ s4,
        c=dar.c1 - dar.c2 @ s1,
        d=dar.c3 - dar.c2 @ s4,
        du=-dar.c2 @ s3,
    )


@dataclass(frozen=True)
class BarSystem:
    """Augmented system over the extended state ``[x; w; z]`` used for
    L2-gain synthesis.

    The extended state matrix is ``abar1(gamma) = abar1_const + gamma *
    abar1_gamma`` with ``abar1_gamma = diag(0_n, -I_q/2, -I_l/2)``; the gain
    bound enters the synthesis only through this term.
    """

    n: int
    q: int
    l: int
    n_pi: int
    m: int
    p: int
    abar1_const: np.ndarray
    abar1_gamma: np.ndarray
    abar2: np.ndarray
    abar3: np.ndarray
    cbar1: np.ndarray
    cbar2: np.ndarray
    upsbar1: AffineParamMatrix
    upsbar2: AffineParamMatrix
    upsbar3: AffineParamMatrix
    box: ParameterBox

    @property
    def n_l(self) -> int:
        return self.n + self.q + self.l

    def abar1(self, gamma: float) -> np.ndarray:
        return self.abar1_const + gamma * self.abar1_gamma

    def vertices(self):
        return enumerate_vertices(self.box)


def lift_l2(dar: DarSystem) -> BarSystem:
    """Embed the disturbance and performance rows into the extended state.

    Block layout (rows of the extended state matrix):

    ==========  =================================================
    rows        ``[A1  A4  0]`` over ``[x; w; z]`` columns
    q rows      ``[0  -gamma/2 I_q  0]``
    l rows      ``[B1  B4  -gamma/2 I_l]``
    ==========  =================================================

    with ``abar2 = [A2; 0; B2]``, ``abar3 = [A3; 0; B3]``,
    ``cbar1 = [C1 C3 0]``, ``cbar2 = C2`` and the annihilator columns
    extended as ``upsbar1 = [Ups1 Ups4 0]``.

    Raises
    ------
    NoPerformanceChannelError
        If the system has neither disturbance nor performance channel.
    """
    d = dar.dims
    if d.q == 0 and d.l == 0:
        raise NoPerformanceChannelError(
            "L2 lifting needs q >= 1 or l >= 1; the system has no such channel"
        )
    n, q, l, n_pi, m, p, r = d.n, d.q, d.l, d.n_pi, d.m, d.p, d.r
    abar1_const = np.block([
        [dar.a1, dar.a4, np.zeros((n, l))],
        [np.zeros((q, n)), np.zeros((q, q)), np.zeros((q, l))],
        [dar.b1, dar.b4, np.zeros((l, l))],
    ])
    abar1_gamma = np.diag(
        np.concatenate([np.zeros(n), -0.5 * np.ones(q), -0.5 * np.ones(l)])
    )
    abar2 = np.vstack([dar.a2, np.zeros((q, n_pi)), dar.b2])
    abar3 = np.vstack([dar.a3, np.zeros((q, m)), dar.b3])
    cbar1 = np.hstack([dar.c1, dar.c3, np.zeros((p, l))])
    upsbar1 = dar.ups1.hstack_with(
        dar.ups4, AffineParamMatrix.zeros(n_pi, l, r)
    )
    return BarSystem(
        n=n, q=q, l=l, n_pi=n_pi, m=m, p=p,
        abar1_const=abar1_const,
        abar1_gamma=abar1_gamma,
        abar2=abar2,
        abar3=abar3,
        cbar1=cbar1,
        cbar2=dar.c2.copy(),
        upsbar1=upsbar1,
        upsbar2=dar.ups2,
        upsbar3=dar.ups3,
        box=dar.box,
    )


@dataclass(frozen=True)
class ScheduledGain:
    """Output-feedback gain scheduled as ``K(rho) = sum_i alpha_i K_i`` with
    the convex coordinates of ``rho`` over the box vertices."""

    gains: tuple        # one (m, p) array per vertex
    box: ParameterBox

    def __post_init__(self):
        ks = tuple(as_matrix(k, "vertex gain") for k in self.gains)
        if len(ks) != self.box.n_vertices:
            raise ValueError(
                f"{len(ks)} vertex gains for a box with {self.box.n_vertices} vertices"
            )
        object.__setattr__(self, "gains", ks)

    def __call__(self, rho) -> np.ndarray:
        return coords(self.box, rho).combine(self.gains)

    @staticmethod
    def zero(m: int, p: int, box: ParameterBox) -> "ScheduledGain":
        return ScheduledGain(
            tuple(np.zeros((m, p)) for _ in range(box.n_vertices)), box
        )


@dataclass(frozen=True)
class ClosedLoopBlocks:
    """DAR blocks of the loop closed with ``u = K(rho) y`` at frozen ``rho``."""

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray    # disturbance input column
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    ups1: np.ndarray
    ups2: np.ndarray
    ups3: np.ndarray  # disturbance column of the algebraic row


def closed_loop(dar: DarSystem, gain: ScheduledGain, rho) -> ClosedLoopBlocks:
    """Substitute ``u = K(rho)(C1 x + C2 pi + C3 w)`` into every DAR row."""
    k = gain(rho)
    a3k = dar.a3 @ k
    b3k = dar.b3 @ k
    u3k = dar.ups3(rho) @ k
    return ClosedLoopBlocks(
        a1=dar.a1 + a3k @ dar.c1,
        a2=dar.a2 + a3k @ dar.c2,
        a3=dar.a4 + a3k @ dar.c3,
        b1=dar.b1 + b3k @ dar.c1,
        b2=dar.b2 + b3k @ dar.c2,
        b3=dar.b4 + b3k @ dar.c3,
        ups1=dar.ups1(rho) + u3k @ dar.c1,
        ups2=dar.ups2(rho) + u3k @ dar.c2,
        ups3=dar.ups4(rho) + u3k @ dar.c3,
    )


@dataclass(frozen=True)
class ClosedLoopRealization:
    """Frozen-parameter closed-loop state-space matrices."""

    a: np.ndarray
    bw: np.ndarray
    cz: np.ndarray
    dzw: np.ndarray


def realize_closed_loop(dar: DarSystem, gain: ScheduledGain, rho) -> ClosedLoopRealization:
    """Eliminate ``pi`` from the closed loop at frozen ``rho``.

    Raises
    ------
    SingularSystemError
        If the closed-loop algebraic matrix is singular; the offending
        parameter value is included in the message.
    """
    cl = closed_loop(dar, gain, rho)
    stacked = np.hstack([cl.ups1, cl.ups3])
    try:
        sol = solve_linear(cl.ups2, stacked, name="closed-loop Ups2")
    except SingularSystemError as exc:
        rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
        raise SingularSystemError(f"{exc} at rho={rho_arr.tolist()}") from exc
    n = dar.dims.n
    s1 = sol[:, :n]
    s3 = sol[:, n:]
    return ClosedLoopRealization(
        a=cl.a1 - cl.a2 @ s1,
        bw=cl.a3 - cl.a2 @ s3,
        cz=cl.b1 - cl.b2 @ s1,
        dzw=cl.b3 - cl.b2 @ s3,
    )


def hurwitz_grid_margin(dar: DarSystem, gain: ScheduledGain,
                        points_per_axis: int = 33) -> float:
    """Largest real eigenvalue part of the realized closed-loop state matrix
    over a uniform parameter grid; negative means every frozen-parameter
    closed loop on the grid is Hurwitz."""
    axes = [
        np.linspace(dar.box.lower[k], dar.box.upper[k], points_per_axis)
        for k in range(dar.box.r)
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    worst = -np.inf
    for rho in np.stack([m.ravel() for m in mesh], axis=-1):
        cl = realize_closed_loop(dar, gain, rho)
        worst = max(worst, float(np.max(np.real(np.linalg.eigvals(cl.a)))))
    return worst


def strip_performance_channels(dar: DarSystem) -> DarSystem:
    """Drop the disturbance and performance channels, giving the ``q = l = 0``
    undisturbed plant with the same state, input and output structure."""
    d = dar.dims
    dims = replace(d, q=0, l=0)
    return DarSystem(
        dims=dims,
        a1=dar.a1,
        a2=dar.a2,
        a3=dar.a3,
        a4=np.zeros((d.n, 0)),
        b1=np.zeros((0, d.n)),
        b2=np.zeros((0, d.n_pi)),
        b3=np.zeros((0, d.m)),
        b4=np.zeros((0, 0)),
        c1=dar.c1,
        c2=dar.c2,
        c3=np.zeros((d.p, 0)),
        ups1=dar.ups1,
        ups2=dar.ups2,
        ups3=dar.ups3,
        ups4=AffineParamMatrix.zeros(d.n_pi, 0, d.r),
        box=dar.box,
    )

"""Closed-loop time-domain validation for DAR plants.

Fixed-step integration of the loop closed with a scheduled output-feedback
gain, dissipation audits along trajectories and an empirical check of the
certified L2 gain.  The interdependence between the auxiliary vector and the
control input (``u`` depends on ``y``, which depends on ``pi``, which depends
on ``u``) is resolved exactly as one linear system per stage evaluation.
"""

import csv
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .dar_model import DarSystem, ScheduledGain, closed_loop
from .numerics import cond_2norm
from .param_domain import ParamTrajectory

__all__ = [
    "AlgebraicLoopSingularError",
    "DivergedError",
    "SimConfig",
    "Signal",
    "Trajectory",
    "constant_signal",
    "sine_signal",
    "pulse_signal",
    "seeded_noise_signal",
    "stack_signals",
    "zero_signal",
    "step_algebraic",
    "integrate",
    "l2_report",
    "L2Report",
    "dissipation_audit",
    "l2_dissipation_audit",
    "AuditReport",
    "yw_sample_check",
    "YwSampleReport",
    "export_csv",
]

ALGEBRAIC_COND_LIMIT = 1e12
AUDIT_TOL = 1e-7


class AlgebraicLoopSingularError(RuntimeError):
    """The coupled (pi, u) system is numerically singular."""

    def __init__(self, message: str, rho=None, t: float | None = None,
                 partial=None):
        super().__init__(message)
        self.rho = rho
        self.t = t
        self.partial = partial


class DivergedError(RuntimeError):
    """The state left the finite range; carries the partial trajectory."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    dt: float
    x0: np.ndarray
    integrator: str = "rk4"

    def __post_init__(self):
        if self.dt <= 0.0 or self.t_end < self.dt:
            raise ValueError("need dt > 0 and t_end >= dt")
        if self.integrator not in ("rk4", "euler"):
            raise ValueError(f"unknown integrator {self.integrator!r}")
        object.__setattr__(
            self, "x0", np.atleast_1d(np.asarray(self.x0, dtype=float))
        )


@dataclass(frozen=True)
class Signal:
    """Time signal of fixed dimension, finite on the simulation horizon."""

    sampler: Callable[[float], np.ndarray]
    dim: int
    description: str = ""

    def __call__(self, t: float) -> np.ndarray:
        v = np.atleast_1d(np.asarray(self.sampler(t), dtype=float))
        if v.size != self.dim or not np.all(np.isfinite(v)):
            raise ValueError(
                f"signal {self.description!r} returned {v!r} at t={t}"
            )
        return v


def constant_signal(level) -> Signal:
    level = np.atleast_1d(np.asarray(level, dtype=float))
    return Signal(lambda t: level, level.size, f"constant({level.tolist()})")


def zero_signal(dim: int) -> Signal:
    z = np.zeros(max(dim, 0))
    return Signal(lambda t: z, dim, "zero")


def sine_signal(amplitude: float, frequency: float, phase: float = 0.0,
                offset: float = 0.0) -> Signal:
    """``offset + amplitude * sin(frequency * t + phase)`` (rad/s)."""

    def f(t):
        return np.array([offset + amplitude * np.sin(frequency * t + phase)])

    return Signal(f, 1, f"sine(a={amplitude}, w={frequency}, phi={phase}, c={offset})")


def pulse_signal(t0: float, t1: float, level: float) -> Signal:
    """``level`` on ``[t0, t1)``, zero elsewhere."""

    def f(t):
        return np.array([level if t0 <= t < t1 else 0.0])

    return Signal(f, 1, f"pulse([{t0},{t1}), {level})")


def seeded_noise_signal(band: float, rms: float, seed: int = 0,
                        n_components: int = 32) -> Signal:
    """Band-limited noise: a seeded sum of sinusoids with frequencies
    uniform on ``(0, band]`` rad/s, scaled so the expected RMS is ``rms``."""
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.0, band, n_components)
    phases = rng.uniform(0.0, 2.0 * np.pi, n_components)
    amp = rms * np.sqrt(2.0 / n_components)

    def f(t):
        return np.array([amp * np.sum(np.sin(freqs * t + phases))])

    return Signal(f, 1, f"seeded_noise(band={band}, rms={rms}, seed={seed})")


def stack_signals(signals) -> Signal:
    sigs = list(signals)
    dim = sum(s.dim for s in sigs)

    def f(t):
        return np.concatenate([s(t) for s in sigs])

    return Signal(f, dim, " | ".join(s.description for s in sigs))


@dataclass
class Trajectory:
    """Sampled closed-loop run with per-sample algebraic variables and
    cumulative squared-signal integrals (trapezoidal)."""

    t: np.ndarray
    x: np.ndarray
    pi: np.ndarray
    u: np.ndarray
    y: np.ndarray
    z: np.ndarray
    w: np.ndarray
    rho: np.ndarray
    v: np.ndarray | None = None
    td: np.ndarray | None = None
    cum_z2: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cum_w2: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_samples(self) -> int:
        return self.t.size

    @property
    def z_norm(self) -> float:
        return float(np.sqrt(self.cum_z2[-1])) if self.cum_z2.size else 0.0

    @property
    def w_norm(self) -> float:
        return float(np.sqrt(self.cum_w2[-1])) if self.cum_w2.size else 0.0

    def algebraic_residual(self, dar: DarSystem) -> float:
        """Worst residual of the algebraic row over all samples."""
        worst = 0.0
        for k in range(self.n_samples):
            res = (
                dar.ups1(self.rho[k]) @ self.x[k]
                + dar.ups2(self.rho[k]) @ self.pi[k]
                + dar.ups3(self.rho[k]) @ self.u[k]
                + dar.ups4(self.rho[k]) @ self.w[k]
            )
            if res.size:
                worst = max(worst, float(np.max(np.abs(res))))
        return worst


def step_algebraic(dar: DarSystem, gain: ScheduledGain, rho, x, w):
    """Solve the coupled algebraic constraint and feedback law at one point.

    Unknowns ``(pi, u)`` satisfy::

        Ups2(rho) pi + Ups3(rho) u = -Ups1(rho) x - Ups4(rho) w
        -K(rho) C2 pi +        u  =  K(rho) (C1 x + C3 w)

    solved as a single linear system of size ``n_pi + m``.

    Returns
    -------
    tuple of numpy.ndarray
        ``(pi, u, y)``.

    Raises
    ------
    AlgebraicLoopSingularError
        If the coupling matrix condition exceeds ``1e12``.
    """
    d = dar.dims
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    k = gain(rho)
    m = np.zeros((d.n_pi + d.m, d.n_pi + d.m))
    m[: d.n_pi, : d.n_pi] = dar.ups2(rho)
    m[: d.n_pi, d.n_pi :] = dar.ups3(rho)
    m[d.n_pi :, : d.n_pi] = -k @ dar.c2
    m[d.n_pi :, d.n_pi :] = np.eye(d.m)
    rhs = np.concatenate([
        -dar.ups1(rho) @ x - dar.ups4(rho) @ w,
        k @ (dar.c1 @ x + dar.c3 @ w),
    ])
    cond = cond_2norm(m)
    if not np.isfinite(cond) or cond > ALGEBRAIC_COND_LIMIT:
        raise AlgebraicLoopSingularError(
            f"algebraic loop condition {cond:.3e} at rho="
            f"{np.atleast_1d(rho).tolist()}",
            rho=np.atleast_1d(np.asarray(rho, dtype=float)),
        )
    sol = np.linalg.solve(m, rhs)
    pi = sol[: d.n_pi]
    u = sol[d.n_pi :]
    y = dar.c1 @ x + dar.c2 @ pi + dar.c3 @ w
    return pi, u, y


def integrate(dar: DarSystem, gain: ScheduledGain, rho_signal: ParamTrajectory,
              w_signal: Signal, cfg: SimConfig, p_matrix=None) -> Trajectory:
    """Fixed-step integration of the closed loop.

    At every integrator stage the algebraic pair ``(pi, u)`` is recomputed
    for the stage state, so the recorded samples satisfy the algebraic row
    to solver precision.  When ``p_matrix`` is given the storage value
    ``x^T P x`` is recorded per sample.

    Raises
    ------
    DivergedError
        When the state leaves the finite range; the partial trajectory up to
        the last finite sample is attached.
    AlgebraicLoopSingularError
        When the coupling matrix becomes singular along the run.
    """
    d = dar.dims
    steps = int(round(cfg.t_end / cfg.dt))
    ts = cfg.dt * np.arange(steps + 1)
    n_rec = steps + 1

    rec = {
        "x": np.zeros((n_rec, d.n)), "pi": np.zeros((n_rec, d.n_pi)),
        "u": np.zeros((n_rec, d.m)), "y": np.zeros((n_rec, d.p)),
        "z": np.zeros((n_rec, d.l)), "w": np.zeros((n_rec, d.q)),
        "rho": np.zeros((n_rec, d.r)),
    }
    v = np.zeros(n_rec) if p_matrix is not None else None
    zz = np.zeros(n_rec)
    ww = np.zeros(n_rec)

    def rhs(t, x):
        rho = rho_signal(t)
        w = w_signal(t)
        pi, u, y = step_algebraic(dar, gain, rho, x, w)
        xdot = dar.a1 @ x + dar.a2 @ pi + dar.a3 @ u + dar.a4 @ w
        return xdot, (rho, w, pi, u, y)

    def partial(k):
        tr = Trajectory(
            t=ts[:k], x=rec["x"][:k], pi=rec["pi"][:k], u=rec["u"][:k],
            y=rec["y"][:k], z=rec["z"][:k], w=rec["w"][:k], rho=rec["rho"][:k],
            v=v[:k] if v is not None else None,
        )
        _finish_accumulators(tr, zz[:k], ww[:k])
        return tr

    x = cfg.x0.copy()
    if x.size != d.n:
        raise ValueError(f"x0 has size {x.size}, state dimension is {d.n}")
    for k in range(n_rec):
        t = ts[k]
        if not np.all(np.isfinite(x)):
            raise DivergedError(f"state diverged at t={t:.6g}", partial=partial(k))
        try:
            xdot, (rho, w, pi, u, y) = rhs(t, x)
        except AlgebraicLoopSingularError as exc:
            exc.t = t
            exc.partial = partial(k)
            raise
        rec["x"][k] = x
        rec["pi"][k] = pi
        rec["u"][k] = u
        rec["y"][k] = y
        rec["w"][k] = w
        rec["rho"][k] = rho
        z = dar.b1 @ x + dar.b2 @ pi + dar.b3 @ u + dar.b4 @ w
        rec["z"][k] = z
        zz[k] = float(z @ z)
        ww[k] = float(w @ w)
        if v is not None:
            v[k] = float(x @ p_matrix @ x)
        if k == steps:
            break
        h = cfg.dt
        if cfg.integrator == "euler":
            x = x + h * xdot
        else:
            k1 = xdot
            k2 = rhs(t + h / 2.0, x + (h / 2.0) * k1)[0]
            k3 = rhs(t + h / 2.0, x + (h / 2.0) * k2)[0]
            k4 = rhs(t + h, x + h * k3)[0]
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    traj = Trajectory(
        t=ts, x=rec["x"], pi=rec["pi"], u=rec["u"], y=rec["y"], z=rec["z"],
        w=rec["w"], rho=rec["rho"], v=v,
    )
    _finish_accumulators(traj, zz, ww)
    return traj


def _finish_accumulators(traj: Trajectory, zz: np.ndarray, ww: np.ndarray) -> None:
    if traj.t.size < 2:
        traj.cum_z2 = np.zeros(traj.t.size)
        traj.cum_w2 = np.zeros(traj.t.size)
        return
    dt = np.diff(traj.t)
    traj.cum_z2 = np.concatenate([[0.0], np.cumsum(0.5 * dt * (zz[1:] + zz[:-1]))])
    traj.cum_w2 = np.concatenate([[0.0], np.cumsum(0.5 * dt * (ww[1:] + ww[:-1]))])


@dataclass(frozen=True)
class L2Report:
    z_norm: float
    w_norm: float
    theta: float
    bound: float
    bound_ok: bool
    ratio: float | None
    slack: float = 1e-6


def l2_report(traj: Trajectory, gamma: float, p_matrix) -> L2Report:
    """Check the certified bound ``||z|| <= gamma ||w|| + theta`` with bias
    ``theta = sqrt(gamma * x0' P x0)`` along an integrated trajectory."""
    x0 = traj.x[0]
    theta = float(np.sqrt(max(gamma * float(x0 @ p_matrix @ x0), 0.0)))
    zn, wn = traj.z_norm, traj.w_norm
    bound = gamma * wn + theta
    ratio = zn / wn if wn > 0.0 else None
    return L2Report(
        z_norm=zn, w_norm=wn, theta=theta, bound=bound,
        bound_ok=bool(zn <= bound + 1e-6), ratio=ratio,
    )


@dataclass(frozen=True)
class AuditReport:
    values: np.ndarray
    max_value: float
    passed: bool
    tol: float = AUDIT_TOL
    label: str = ""


def dissipation_audit(dar: DarSystem, certificate, traj: Trajectory) -> AuditReport:
    """Evaluate the dissipation rate along a trajectory of the undisturbed
    loop, using the analytic state derivative (no finite differences):

        2 x'P xdot + x'H(rho)x - y'Q(rho)y - 2 y'S(rho)u - u'R u

    Passes when the maximum over samples is at most ``1e-7``.
    """
    from .param_domain import coords as _coords

    vals = np.zeros(traj.n_samples)
    for k in range(traj.n_samples):
        x, pi, u, y, w, rho = (
            traj.x[k], traj.pi[k], traj.u[k], traj.y[k], traj.w[k], traj.rho[k],
        )
        alpha = _coords(dar.box, rho).alpha
        qr = _mix(alpha, certificate.q)
        sr = _mix(alpha, certificate.s)
        hr = _mix(alpha, certificate.h)
        xdot = dar.a1 @ x + dar.a2 @ pi + dar.a3 @ u + dar.a4 @ w
        vals[k] = (
            2.0 * float(x @ certificate.p @ xdot)
            + float(x @ hr @ x)
            - float(y @ qr @ y)
            - 2.0 * float(y @ sr @ u)
            - float(u @ certificate.r @ u)
        )
    mx = float(vals.max()) if vals.size else 0.0
    return AuditReport(values=vals, max_value=mx, passed=bool(mx <= AUDIT_TOL),
                       label="dissipation rate")


def l2_dissipation_audit(dar: DarSystem, gains: ScheduledGain, gamma: float,
                         p_matrix, traj: Trajectory) -> AuditReport:
    """Evaluate ``vdot + z'z/gamma - gamma w'w`` analytically per sample;
    samples with ``x = 0`` and ``w = 0`` are excluded from the verdict."""
    del gains  # the trajectory already contains the closed-loop signals
    vals = np.zeros(traj.n_samples)
    active = np.zeros(traj.n_samples, dtype=bool)
    for k in range(traj.n_samples):
        x, pi, u, z, w = traj.x[k], traj.pi[k], traj.u[k], traj.z[k], traj.w[k]
        xdot = dar.a1 @ x + dar.a2 @ pi + dar.a3 @ u + dar.a4 @ w
        vals[k] = (
            2.0 * float(x @ p_matrix @ xdot)
            + float(z @ z) / gamma
            - gamma * float(w @ w)
        )
        active[k] = bool(np.any(x != 0.0) or np.any(w != 0.0))
    mx = float(vals[active].max()) if np.any(active) else 0.0
    return AuditReport(values=vals, max_value=mx, passed=bool(mx <= AUDIT_TOL),
                       label="l2 dissipation rate")


def _mix(alpha: np.ndarray, items) -> np.ndarray:
    out = alpha[0] * np.asarray(items[0], dtype=float)
    for a, m in zip(alpha[1:], items[1:]):
        out = out + a * np.asarray(m, dtype=float)
    return out


@dataclass(frozen=True)
class YwSampleReport:
    n_samples: int
    n_violations: int
    worst_value: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def yw_sample_check(dar: DarSystem, gains: ScheduledGain, gamma: float,
                    p_matrix, n_samples: int = 500, rng=None) -> YwSampleReport:
    """Sample the closed-loop performance form on its constraint kernel.

    For random parameters, the quadratic form of
    ``vdot + z'z/gamma - gamma w'w`` over ``[x; w; pi]`` (with the closed-loop
    blocks substituted) must be negative for every nonzero kernel vector of
    the closed-loop annihilator ``[Ups1h  Ups3h  Ups2h]``.
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    d = dar.dims
    worst = -np.inf
    violations = 0
    done = 0
    while done < n_samples:
        rho = dar.box.sample(rng, 1)[0]
        cl = closed_loop(dar, gains, rho)
        ig = 1.0 / gamma
        pa1 = p_matrix @ cl.a1
        yw = np.block([
            [pa1 + pa1.T + ig * cl.b1.T @ cl.b1,
             p_matrix @ cl.a3 + ig * cl.b1.T @ cl.b3,
             p_matrix @ cl.a2 + ig * cl.b1.T @ cl.b2],
            [(p_matrix @ cl.a3 + ig * cl.b1.T @ cl.b3).T,
             ig * cl.b3.T @ cl.b3 - gamma * np.eye(d.q),
             ig * cl.b3.T @ cl.b2],
            [(p_matrix @ cl.a2 + ig * cl.b1.T @ cl.b2).T,
             (ig * cl.b3.T @ cl.b2).T,
             ig * cl.b2.T @ cl.b2],
        ])
        annihilator = np.hstack([cl.ups1, cl.ups3, cl.ups2])
        basis = scipy.linalg.null_space(annihilator)
        if basis.shape[1] == 0:
            continue
        vec = basis @ rng.standard_normal(basis.shape[1])
        nv = np.linalg.norm(vec)
        if nv < 1e-12:
            continue
        vec /= nv
        value = float(vec @ yw @ vec)
        worst = max(worst, value)
        if value >= 0.0:
            violations += 1
        done += 1
    return YwSampleReport(n_samples=n_samples, n_violations=violations,
                          worst_value=worst)


def export_csv(traj: Trajectory, path) -> None:
    """Write the trajectory with one header row and 15-significant-digit
    values.  Vector columns are suffixed ``_1..`` when wider than one."""

    def names(base, dim):
        return [base] if dim == 1 else [f"{base}_{i + 1}" for i in range(dim)]

    header = (
        ["t"]
        + names("x", traj.x.shape[1])
        + names("u", traj.u.shape[1])
        + names("y", traj.y.shape[1])
        + names("z", traj.z.shape[1])
        + names("w", traj.w.shape[1])
        + names("rho", traj.rho.shape[1])
        + ["V", "t_d"]
    )
    v = traj.v if traj.v is not None else np.zeros(traj.n_samples)
    td = traj.td if traj.td is not None else np.zeros(traj.n_samples)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(traj.n_samples):
            row = (
                [traj.t[k]]
                + list(traj.x[k]) + list(traj.u[k]) + list(traj.y[k])
                + list(traj.z[k]) + list(traj.w[k]) + list(traj.rho[k])
                + [v[k], td[k]]
            )
            writer.writerow([f"{val:.15g}" for val in row])

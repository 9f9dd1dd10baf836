"""Vertex LMI assembly and gain-scheduled output-feedback synthesis.

The synthesis searches for a quadratic storage matrix ``P``, per-vertex
absorption matrices ``H_i``, per-vertex supply-rate blocks ``Q_i``, ``S_i``
and a shared ``R`` such that, at every box vertex ``i``,

* the dissipation form ``Y_i`` relaxed with a constant multiplier ``L``
  against the annihilator ``C_di = [Ups1_i Ups2_i Ups3_i]`` is negative
  definite, and
* the supply rate itself is forced negative under output feedback through a
  second small LMI parameterized by a scalar ``beta``.

Feasibility yields vertex gains ``K_i = -R^-1 S_i^T``; scheduling them with
the convex coordinates of ``rho`` stabilizes the plant over the whole box.
The disturbed variant runs the same conditions on the augmented system from
:func:`lpvsof.dar_model.lift_l2`, where the storage matrix is
``diag(P, I, I)`` and the gain bound ``gamma`` enters linearly; minimizing
``gamma`` gives the smallest certified L2 gain.

Strict inequalities are realized as semidefinite constraints shifted by
``eps_strict`` times the identity, which is what an interior-point solver
can represent.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import sdp_core
from .dar_model import (
    BarSystem,
    DarSystem,
    IllPosedError,
    ScheduledGain,
    lift_l2,
    validate,
    well_posedness,
)
from .numerics import solve_linear, sym_eig_max, sym_eig_min
from .param_domain import ParameterBox, coords, enumerate_vertices
from .sdp_core import NSD, PSD, AffineLmi, SdpProblem, SolveTolerances

__all__ = [
    "InfeasibleError",
    "AllInfeasibleError",
    "SynthesisOptions",
    "CertificateVars",
    "SynthesisResult",
    "DissipativityData",
    "build_yi",
    "build_cdi",
    "build_gain_lmi",
    "synth_stabilize",
    "synth_l2",
    "extract_gains",
    "beta_search",
    "verify_certificate",
    "VerificationReport",
    "dissipativity_form_at",
    "gain_condition_form_at",
    "sample_kernel_dissipativity",
    "KernelSampleReport",
]


class InfeasibleError(RuntimeError):
    """The vertex LMI system admits no solution at the requested settings."""

    def __init__(self, message: str, solver_status: str = "", diagnostics=None):
        super().__init__(message)
        self.solver_status = solver_status
        self.diagnostics = diagnostics or {}


class AllInfeasibleError(RuntimeError):
    """Every entry of a beta grid failed; per-beta statuses attached."""

    def __init__(self, statuses: dict):
        lines = ", ".join(f"beta={b:g}: {s}" for b, s in statuses.items())
        super().__init__(f"no feasible synthesis on the beta grid ({lines})")
        self.statuses = statuses


@dataclass(frozen=True)
class SynthesisOptions:
    """Settings shared by the stabilization and L2 syntheses.

    ``beta`` scales the coupling between the supply-rate blocks in the gain
    condition; there is no general selection rule, so it is a required input
    (or a grid via :func:`beta_search`).  ``gamma_mode`` is either
    ``"minimize"`` or ``"fixed"`` (with ``gamma_value``).
    """

    beta: float | None = None
    beta_grid: tuple = ()
    eps_strict: float = 1e-6
    gamma_mode: str = "minimize"
    gamma_value: float | None = None
    gamma_backoff: float = 1e-3
    well_posedness_grid: int = 33
    tolerances: SolveTolerances = field(default_factory=SolveTolerances)

    def __post_init__(self):
        if self.eps_strict <= 0.0:
            raise ValueError("eps_strict must be positive")
        if self.gamma_mode not in ("minimize", "fixed"):
            raise ValueError(f"unknown gamma_mode {self.gamma_mode!r}")
        if self.gamma_mode == "fixed" and (
            self.gamma_value is None or self.gamma_value <= 0.0
        ):
            raise ValueError("gamma_mode='fixed' needs a positive gamma_value")
        if self.gamma_backoff < 0.0:
            raise ValueError("gamma_backoff must be nonnegative")


@dataclass(frozen=True)
class CertificateVars:
    """Solved decision variables.  ``p`` is always the physical-state block
    (n x n); in L2 mode the full storage matrix is ``diag(p, I, I)`` and the
    ``h`` matrices live on the extended state."""

    p: np.ndarray
    h: tuple
    q: tuple
    s: tuple
    r: np.ndarray
    l: np.ndarray
    gamma: float | None = None


@dataclass(frozen=True)
class SynthesisResult:
    certificate: CertificateVars
    gains: ScheduledGain
    gamma: float | None
    beta: float
    diagnostics: dict
    data: "DissipativityData"
    problem: SdpProblem
    solution: sdp_core.SdpSolution
    handles: dict


@dataclass(frozen=True)
class DissipativityData:
    """Block data feeding the dissipation-form LMI over ``[state; pi; u]``.

    ``pdim`` is the size of the decision block of the storage matrix; the
    remaining ``ns - pdim`` state components carry a fixed identity storage
    (the L2 lifting).  ``a1_gamma`` is the gamma coefficient of the state
    matrix, absent for the undisturbed case.
    """

    ns: int
    pdim: int
    n_pi: int
    m: int
    p: int
    a1_const: np.ndarray
    a1_gamma: np.ndarray | None
    a2: np.ndarray
    a3: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    ups1: object
    ups2: object
    ups3: object
    box: ParameterBox

    @property
    def total(self) -> int:
        return self.ns + self.n_pi + self.m

    @property
    def n_vertices(self) -> int:
        return self.box.n_vertices

    @staticmethod
    def from_dar(dar: DarSystem) -> "DissipativityData":
        d = dar.dims
        if d.q != 0 or d.l != 0:
            raise IllPosedError(
                "stabilization data needs q = l = 0; strip the channels or "
                "use the L2 synthesis"
            )
        return DissipativityData(
            ns=d.n, pdim=d.n, n_pi=d.n_pi, m=d.m, p=d.p,
            a1_const=dar.a1, a1_gamma=None, a2=dar.a2, a3=dar.a3,
            c1=dar.c1, c2=dar.c2,
            ups1=dar.ups1, ups2=dar.ups2, ups3=dar.ups3, box=dar.box,
        )

    @staticmethod
    def from_bar(bar: BarSystem) -> "DissipativityData":
        return DissipativityData(
            ns=bar.n_l, pdim=bar.n, n_pi=bar.n_pi, m=bar.m, p=bar.p,
            a1_const=bar.abar1_const, a1_gamma=bar.abar1_gamma,
            a2=bar.abar2, a3=bar.abar3,
            c1=bar.cbar1, c2=bar.cbar2,
            ups1=bar.upsbar1, ups2=bar.upsbar2, ups3=bar.upsbar3, box=bar.box,
        )

    def vertex(self, i: int) -> np.ndarray:
        return enumerate_vertices(self.box)[i]

    def output_rows(self) -> np.ndarray:
        """Output map over the stacked coordinates ``[state; pi; u]``."""
        return np.hstack([self.c1, self.c2, np.zeros((self.p, self.m))])

    def state_selector(self) -> np.ndarray:
        e = np.zeros((self.total, self.ns))
        e[: self.ns, :] = np.eye(self.ns)
        return e

    def input_selector(self) -> np.ndarray:
        e = np.zeros((self.total, self.m))
        e[self.ns + self.n_pi :, :] = np.eye(self.m)
        return e


def _storage_tail_rows(data: DissipativityData) -> np.ndarray:
    """Rows of ``storage @ [A1 A2 A3]`` carried by the fixed identity block."""
    return np.hstack([
        data.a1_const[data.pdim :, :],
        data.a2[data.pdim :, :],
        data.a3[data.pdim :, :],
    ])


def build_yi(data, i: int, handles: dict) -> AffineLmi:
    """Dissipation form at vertex ``i`` as an affine LMI in the certificate
    variables (without the annihilator relaxation or strictness shift).

    ``data`` may be a :class:`DissipativityData` or an undisturbed
    :class:`DarSystem`.  ``handles`` maps ``"p"``, ``"h"``, ``"q"``, ``"s"``,
    ``"r"`` (and ``"gamma"`` in L2 mode) to problem variables.
    """
    if isinstance(data, DarSystem):
        data = DissipativityData.from_dar(data)
    tot = data.total
    lmi = AffineLmi(tot, sense=NSD, name=f"dissipation[{i}]")

    # storage term: He{ E_p P [A1 A2 A3]_top } plus the identity-block rows
    ep = np.zeros((tot, data.pdim))
    ep[: data.pdim, :] = np.eye(data.pdim)
    wp = np.hstack([
        data.a1_const[: data.pdim, :],
        data.a2[: data.pdim, :],
        data.a3[: data.pdim, :],
    ])
    lmi.add_he_term(handles["p"], ep, wp)
    if data.ns > data.pdim:
        tail = np.zeros((tot, tot))
        tail[data.pdim : data.ns, :] = _storage_tail_rows(data)
        lmi.add_constant(tail + tail.T)
    if data.a1_gamma is not None:
        gcol = np.zeros((tot, tot))
        gcol[: data.ns, : data.ns] = data.a1_gamma
        lmi.add_scalar_term(handles["gamma"], gcol + gcol.T)

    cfull = data.output_rows()
    eh = data.state_selector()
    eu = data.input_selector()
    lmi.add_he_term(handles["q"][i], -0.5 * cfull.T, cfull)
    lmi.add_he_term(handles["h"][i], 0.5 * eh, eh.T)
    lmi.add_he_term(handles["s"][i], -cfull.T, eu.T)
    lmi.add_he_term(handles["r"], -0.5 * eu, eu.T)
    return lmi


def build_cdi(data, i: int) -> np.ndarray:
    """Annihilator row block ``[Ups1 Ups2 Ups3]`` evaluated at vertex ``i``."""
    if isinstance(data, DarSystem):
        data = DissipativityData.from_dar(data)
    v = data.vertex(i)
    return np.hstack([data.ups1(v), data.ups2(v), data.ups3(v)])


def build_gain_lmi(handles: dict, i: int, beta: float) -> AffineLmi:
    """Supply-rate negativity condition at vertex ``i``.

    The block form over ``[y; u]`` is::

        [ Q_i + beta * he(1 S_i^T)    beta * 1 R ]
        [          *                     -R      ]

    with ``1`` the all-ones p x m matrix.
    """
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    q0 = handles["q"][i]
    p, m = q0.rows, handles["r"].rows
    dim = p + m
    ones = np.ones((p, m))
    lmi = AffineLmi(dim, sense=NSD, name=f"gain[{i}]")
    ey = np.zeros((dim, p)); ey[:p, :] = np.eye(p)
    eu = np.zeros((dim, m)); eu[p:, :] = np.eye(m)
    lmi.add_he_term(q0, 0.5 * ey, ey.T)
    lmi.add_he_term(handles["s"][i], ey, beta * ones.T @ ey.T)
    lmi.add_he_term(handles["r"], beta * ey @ ones, eu.T)
    lmi.add_he_term(handles["r"], -0.5 * eu, eu.T)
    return lmi


def _declare_variables(problem: SdpProblem, data: DissipativityData,
                       l2: bool) -> dict:
    n = data.n_vertices
    handles = {
        "p": problem.add_symmetric(data.pdim, "P"),
        "h": [problem.add_symmetric(data.ns, f"H{i}") for i in range(n)],
        "q": [problem.add_symmetric(data.p, f"Q{i}") for i in range(n)],
        "s": [problem.add_rectangular(data.p, data.m, f"S{i}") for i in range(n)],
        "r": problem.add_symmetric(data.m, "R"),
        "l": problem.add_rectangular(data.total, data.n_pi, "L"),
    }
    if l2:
        handles["gamma"] = problem.add_scalar("gamma")
    return handles


def _psd_shift(var, dim: int, eps: float, name: str) -> AffineLmi:
    lmi = AffineLmi(dim, sense=PSD, name=name)
    lmi.add_constant(-eps * np.eye(dim))
    if var.kind == "scalar":
        lmi.add_scalar_term(var, np.eye(1))
    else:
        lmi.add_he_term(var, 0.5 * np.eye(dim), np.eye(dim))
    return lmi


def _assemble(data: DissipativityData, opts: SynthesisOptions, l2: bool,
              beta: float, slack: bool = False) -> tuple:
    """Build the full vertex LMI problem.

    With ``slack=True`` a phase-I margin variable ``t`` (capped at 1) is
    added to every constraint and maximized; its optimal sign decides
    feasibility when the plain solve ends in an ambiguous solver status.
    """
    eps = opts.eps_strict
    problem = SdpProblem(name="l2-synthesis" if l2 else "stabilization")
    handles = _declare_variables(problem, data, l2=l2 and opts.gamma_mode == "minimize")
    if l2 and opts.gamma_mode == "fixed":
        # fixed gain bound: baked into the constant blocks of each vertex LMI
        handles["gamma"] = None

    lmis = [
        _psd_shift(handles["p"], data.pdim, eps, "P"),
        _psd_shift(handles["r"], data.m, eps, "R"),
    ]
    for i in range(data.n_vertices):
        lmis.append(_psd_shift(handles["h"][i], data.ns, eps, f"H[{i}]"))
    if l2 and opts.gamma_mode == "minimize":
        lmis.append(_psd_shift(handles["gamma"], 1, eps, "gamma"))

    for i in range(data.n_vertices):
        yi = build_yi(data, i, handles) if handles.get("gamma") is not None or not l2 \
            else _build_yi_fixed_gamma(data, i, handles, opts.gamma_value)
        yi.add_constant(eps * np.eye(data.total))
        yi.add_he_term(handles["l"], np.eye(data.total), build_cdi(data, i))
        lmis.append(yi)
        gi = build_gain_lmi(handles, i, beta)
        gi.add_constant(eps * np.eye(data.p + data.m))
        lmis.append(gi)

    if slack:
        t = problem.add_scalar("slack")
        handles["slack"] = t
        for lmi in lmis:
            sign = 1.0 if lmi.sense == NSD else -1.0
            lmi.add_scalar_term(t, sign * np.eye(lmi.dim))
        cap = AffineLmi(1, sense=NSD, name="slack cap")
        cap.add_constant(-np.eye(1))
        cap.add_scalar_term(t, np.eye(1))
        lmis.append(cap)
        problem.set_objective({t: -1.0})
    elif l2 and opts.gamma_mode == "minimize":
        problem.set_objective({handles["gamma"]: 1.0})

    for lmi in lmis:
        problem.add_lmi(lmi)
    return problem, handles


def _build_yi_fixed_gamma(data: DissipativityData, i: int, handles: dict,
                          gamma_value: float) -> AffineLmi:
    fixed = replace(data, a1_const=data.a1_const + gamma_value * data.a1_gamma,
                    a1_gamma=None)
    return build_yi(fixed, i, handles)


def extract_gains(r_value, s_values, box: ParameterBox) -> ScheduledGain:
    """Vertex gains ``K_i = -R^-1 S_i^T`` packaged for scheduling."""
    ks = tuple(
        -solve_linear(r_value, np.asarray(s, dtype=float).T, name="R")
        for s in s_values
    )
    return ScheduledGain(ks, box)


def _check_system(dar: DarSystem, opts: SynthesisOptions) -> None:
    report = validate(dar)
    if not report.ok:
        raise IllPosedError(
            "system fails validation: " + "; ".join(report.violations)
        )
    wp = well_posedness(dar, opts.well_posedness_grid)
    if not wp.well_posed:
        raise IllPosedError(
            f"system is not well posed: condition {wp.max_condition:.3e} at "
            f"rho={wp.worst_rho.tolist()}"
        )


def _solve_min_gamma(data: DissipativityData, opts: SynthesisOptions,
                     beta: float) -> float:
    """Phase one of the L2 synthesis: the raw gain-bound minimum.

    The optimizer sits on the constraint boundary, so only the objective
    value is kept; the certificate itself comes from a strictly interior
    re-solve at a slightly backed-off bound.
    """
    problem, handles = _assemble(data, opts, l2=True, beta=beta)
    solution = sdp_core.solve(problem, opts.tolerances)
    if solution.status == "infeasible":
        raise InfeasibleError(
            f"synthesis infeasible at beta={beta:g}",
            solver_status=solution.stats.get("solver_status", ""),
            diagnostics=solution.stats,
        )
    if solution.values and handles["gamma"].uid in solution.values:
        return float(solution.value(handles["gamma"]))
    raise InfeasibleError(
        f"solver failed at beta={beta:g}: "
        f"{solution.stats.get('solver_status', 'unknown')}",
        solver_status=solution.stats.get("solver_status", ""),
        diagnostics=solution.stats,
    )


def _solve_feasibility(data: DissipativityData, run_opts: SynthesisOptions,
                       l2: bool, beta: float) -> tuple:
    """Feasibility solve with a phase-I fallback decision.

    When the plain solve ends in an ambiguous solver status (neither solved
    nor a clean infeasibility certificate), the question is settled by
    maximizing a uniform margin ``t`` added to every constraint: that
    problem is always strictly feasible, and the sign of its optimum decides
    the original one.  A positive margin also hands back a usable interior
    point for the original constraints.
    """
    problem, handles = _assemble(data, run_opts, l2, beta)
    solution = sdp_core.solve(problem, run_opts.tolerances)
    if solution.status == "infeasible":
        raise InfeasibleError(
            f"synthesis infeasible at beta={beta:g}",
            solver_status=solution.stats.get("solver_status", ""),
            diagnostics=solution.stats,
        )
    if solution.ok:
        return problem, handles, solution

    aux_problem, aux_handles = _assemble(data, run_opts, l2, beta, slack=True)
    aux = sdp_core.solve(aux_problem, run_opts.tolerances)
    if not aux.ok:
        raise InfeasibleError(
            f"solver failed at beta={beta:g}: "
            f"{solution.stats.get('solver_status', 'unknown')} "
            f"(phase-I: {aux.stats.get('solver_status', 'unknown')})",
            solver_status=solution.stats.get("solver_status", ""),
            diagnostics=solution.stats,
        )
    t_star = float(aux.value(aux_handles["slack"]))
    if t_star <= 0.0:
        raise InfeasibleError(
            f"synthesis infeasible at beta={beta:g} "
            f"(maximal constraint margin {t_star:.3e})",
            solver_status=f"phase-I margin {t_star:.3e}",
            diagnostics=aux.stats,
        )
    # the phase-I point satisfies the original constraints with margin t*;
    # variable uids coincide because both problems declare them in order
    values = {
        uid: v for uid, v in aux.values.items()
        if uid != aux_handles["slack"].uid
    }
    report = sdp_core.validate_solution(problem, values)
    stats = dict(aux.stats)
    stats["phase1_margin"] = t_star
    stats["worst_violation"] = report.worst_violation
    solution = sdp_core.SdpSolution(
        status="feasible", values=values, objective_value=0.0, stats=stats
    )
    if not report.ok:
        raise InfeasibleError(
            f"solver failed at beta={beta:g}: phase-I point violates "
            f"constraints by {report.worst_violation:.3e}",
            solver_status="phase-I validation",
            diagnostics=stats,
        )
    return problem, handles, solution


def _run(data: DissipativityData, opts: SynthesisOptions, l2: bool,
         beta: float, box: ParameterBox) -> SynthesisResult:
    extra_diag = {}
    run_opts = opts
    if l2 and opts.gamma_mode == "minimize":
        gamma_star = _solve_min_gamma(data, opts, beta)
        gamma_final = gamma_star * (1.0 + opts.gamma_backoff)
        run_opts = replace(opts, gamma_mode="fixed", gamma_value=gamma_final)
        extra_diag = {"gamma_star": gamma_star,
                      "gamma_backoff": opts.gamma_backoff}

    problem, handles, solution = _solve_feasibility(data, run_opts, l2, beta)

    val = solution.value
    n = data.n_vertices
    gamma = float(run_opts.gamma_value) if l2 else None
    cert = CertificateVars(
        p=val(handles["p"])[: data.pdim, : data.pdim],
        h=tuple(val(handles["h"][i]) for i in range(n)),
        q=tuple(val(handles["q"][i]) for i in range(n)),
        s=tuple(val(handles["s"][i]) for i in range(n)),
        r=val(handles["r"]),
        l=val(handles["l"]),
        gamma=gamma,
    )
    gains = extract_gains(cert.r, cert.s, box)
    report = sdp_core.validate_solution(problem, solution)
    diag = {
        **extra_diag,
        "beta": beta,
        "gamma": gamma,
        "solver_status": solution.stats.get("solver_status"),
        "iterations": solution.stats.get("iterations"),
        "solve_time": solution.stats.get("solve_time"),
        "worst_violation": report.worst_violation,
        # largest eigenvalue over the unshifted vertex LMIs; < 0 on success
        "worst_lmi_eig": max(
            (c.extreme_eig for c in report.checks if c.sense == NSD),
            default=float("nan"),
        ) - opts.eps_strict,
        "eps_strict": opts.eps_strict,
    }
    return SynthesisResult(
        certificate=cert, gains=gains, gamma=gamma, beta=beta,
        diagnostics=diag, data=data, problem=problem, solution=solution,
        handles=handles,
    )


def synth_stabilize(dar: DarSystem, opts: SynthesisOptions) -> SynthesisResult:
    """Feasibility synthesis of a scheduled stabilizing output feedback for
    an undisturbed plant (``q = l = 0``).

    Raises
    ------
    IllPosedError
        If the system fails validation or well-posedness.
    InfeasibleError
        If the vertex LMIs admit no solution at ``opts.beta``.
    """
    if opts.beta is None:
        raise ValueError("SynthesisOptions.beta is required")
    _check_system(dar, opts)
    data = DissipativityData.from_dar(dar)
    return _run(data, opts, l2=False, beta=float(opts.beta), box=dar.box)


def synth_l2(dar: DarSystem, opts: SynthesisOptions) -> SynthesisResult:
    """Synthesis with L2-gain certificate on a disturbed plant.

    Runs the stabilization conditions on the augmented system.  In
    ``minimize`` mode the gain bound is found in two solves: a raw
    minimization, then a feasibility re-solve at the optimum backed off by
    ``gamma_backoff`` (relative).  Feasibility is monotone in the bound, so
    the second solve always succeeds and returns a strictly interior
    certificate whose margins survive verification; the reported ``gamma``
    is the backed-off value.  In ``fixed`` mode only the feasibility solve
    runs.

    Raises
    ------
    NoPerformanceChannelError
        If the plant has no disturbance or performance channel.
    InfeasibleError
        If the conditions admit no solution at ``opts.beta``.
    """
    if opts.beta is None:
        raise ValueError("SynthesisOptions.beta is required")
    _check_system(dar, opts)
    bar = lift_l2(dar)
    data = DissipativityData.from_bar(bar)
    return _run(data, opts, l2=True, beta=float(opts.beta), box=dar.box)


def beta_search(dar: DarSystem, beta_grid, opts: SynthesisOptions) -> SynthesisResult:
    """Run the L2 synthesis over a beta grid and keep the smallest gamma.

    Ties within 1e-9 relative are broken toward the smaller ``|beta|``.

    Raises
    ------
    AllInfeasibleError
        If every grid entry fails; per-beta statuses are attached.
    """
    grid = [float(b) for b in beta_grid]
    if not grid:
        raise ValueError("beta grid must be nonempty")
    best = None
    statuses: dict = {}
    for beta in grid:
        try:
            res = synth_l2(dar, replace(opts, beta=beta))
        except InfeasibleError as exc:
            statuses[beta] = exc.solver_status or "infeasible"
            continue
        statuses[beta] = f"gamma={res.gamma:.6g}"
        if best is None:
            best = res
            continue
        if res.gamma < best.gamma * (1.0 - 1e-9):
            best = res
        elif abs(res.gamma - best.gamma) <= 1e-9 * max(1.0, best.gamma) and abs(
            beta
        ) < abs(best.beta):
            best = res
    if best is None:
        raise AllInfeasibleError(statuses)
    return best


# -- certificate verification ---------------------------------------------


@dataclass(frozen=True)
class VerificationCheck:
    name: str
    kind: str       # "vertex" | "interior" | "definiteness"
    margin: float   # signed distance into the feasible side
    passed: bool


@dataclass(frozen=True)
class VerificationReport:
    checks: tuple
    eps_strict: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_margin(self) -> float:
        return min(c.margin for c in self.checks)


def verify_certificate(dar: DarSystem, result: SynthesisResult,
                       n_interior: int = 100, rng=None) -> VerificationReport:
    """Re-substitute the solved certificate into every constraint.

    Vertex constraints must hold with eigenvalue slack ``eps_strict / 2``
    (negative-definite ones at most ``-eps/2``, definiteness ones at least
    ``eps/2``).  Additionally, ``n_interior`` random interior parameter
    values are checked: the convex combination of the vertex constraint
    matrices must stay negative definite.  Interior checks are implied by
    the vertex ones (the combination is affine in the weights) but are
    asserted anyway as an independent numerical guard.
    """
    del dar  # the stored problem carries all constraint data
    eps = result.diagnostics["eps_strict"]
    values = result.solution.values
    checks = []
    vertex_families: dict = {}
    for lmi in result.problem.constraints:
        m = lmi.evaluate(values)
        if lmi.sense == NSD:
            # stored constraint already contains the +eps*I shift
            lam = sym_eig_max(m) - eps
            margin = -lam - eps / 2.0
            checks.append(VerificationCheck(lmi.name, "vertex", margin, margin >= 0.0))
            family = lmi.name.split("[")[0]
            vertex_families.setdefault(family, []).append(m - eps * np.eye(lmi.dim))
        else:
            lam = sym_eig_min(m) + eps
            margin = lam - eps / 2.0
            checks.append(
                VerificationCheck(lmi.name, "definiteness", margin, margin >= 0.0)
            )

    rng = np.random.default_rng(0 if rng is None else rng)
    box = result.data.box
    for k in range(n_interior):
        rho = box.sample(rng, 1)[0]
        alpha = coords(box, rho).alpha
        for family, mats in vertex_families.items():
            combo = sum(alpha[i] * mats[i] for i in range(box.n_vertices))
            lam = sym_eig_max(combo)
            checks.append(
                VerificationCheck(
                    f"interior[{k}] {family}", "interior", -lam, lam < 0.0
                )
            )
    return VerificationReport(checks=tuple(checks), eps_strict=eps)


# -- direct numeric forms (independent of the AffineLmi machinery) ---------


def _combine(alpha: np.ndarray, items) -> np.ndarray:
    out = alpha[0] * np.asarray(items[0], dtype=float)
    for a, m in zip(alpha[1:], items[1:]):
        out = out + a * np.asarray(m, dtype=float)
    return out


def dissipativity_form_at(data: DissipativityData, cert: CertificateVars,
                          rho) -> tuple:
    """Directly assembled dissipation form ``Y(rho)`` and annihilator
    ``C_d(rho)`` at an arbitrary parameter value, interpolating the
    per-vertex supply blocks with the convex coordinates of ``rho``."""
    alpha = coords(data.box, rho).alpha
    qr = _combine(alpha, cert.q)
    sr = _combine(alpha, cert.s)
    hr = _combine(alpha, cert.h)

    storage = np.zeros((data.ns, data.ns))
    storage[: data.pdim, : data.pdim] = cert.p
    if data.ns > data.pdim:
        storage[data.pdim :, data.pdim :] = np.eye(data.ns - data.pdim)
    a1 = data.a1_const.copy()
    if data.a1_gamma is not None:
        a1 = a1 + cert.gamma * data.a1_gamma

    tot = data.total
    y = np.zeros((tot, tot))
    pa = storage @ np.hstack([a1, data.a2, data.a3])
    y[: data.ns, :] += pa
    y += y.T.copy()
    cfull = np.hstack([data.c1, data.c2, np.zeros((data.p, data.m))])
    y -= cfull.T @ qr @ cfull
    y[: data.ns, : data.ns] += hr
    su = np.zeros((tot, tot))
    su[:, data.ns + data.n_pi :] = -cfull.T @ sr
    y += su + su.T
    y[data.ns + data.n_pi :, data.ns + data.n_pi :] -= cert.r
    y = 0.5 * (y + y.T)

    cd = np.hstack([data.ups1(rho), data.ups2(rho), data.ups3(rho)])
    return y, cd


def gain_condition_form_at(cert: CertificateVars, box: ParameterBox, rho,
                           beta: float) -> np.ndarray:
    """Directly assembled supply-rate condition block at ``rho``."""
    alpha = coords(box, rho).alpha
    qr = _combine(alpha, cert.q)
    sr = _combine(alpha, cert.s)
    p, m = sr.shape
    ones = np.ones((p, m))
    top = np.hstack([qr + beta * (ones @ sr.T + sr @ ones.T), beta * ones @ cert.r])
    bot = np.hstack([beta * cert.r @ ones.T, -cert.r])
    return np.vstack([top, bot])


@dataclass(frozen=True)
class KernelSampleReport:
    n_samples: int
    n_violations: int
    worst_value: float

    @property
    def passed(self) -> bool:
        return self.n_violations == 0


def sample_kernel_dissipativity(data: DissipativityData, cert: CertificateVars,
                                n_samples: int, rng=None) -> KernelSampleReport:
    """Sample the annihilator kernel and check the dissipation form there.

    For random parameter values and random unit vectors ``v`` in the kernel
    of ``C_d(rho)``, the solved certificate must give ``v^T Y(rho) v < 0``.
    The kernel is computed as the orthogonal complement of the annihilator
    rows, independently of the multiplier used during synthesis.
    """
    rng = np.random.default_rng(0 if rng is None else rng)
    worst = -np.inf
    violations = 0
    done = 0
    while done < n_samples:
        rho = data.box.sample(rng, 1)[0]
        y, cd = dissipativity_form_at(data, cert, rho)
        basis = scipy.linalg.null_space(cd)
        if basis.shape[1] == 0:
            continue
        v = basis @ rng.standard_normal(basis.shape[1])
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            continue
        v /= nv
        val = float(v @ y @ v)
        worst = max(worst, val)
        if val >= 0.0:
            violations += 1
        done += 1
    return KernelSampleReport(
        n_samples=n_samples, n_violations=violations, worst_value=worst
    )

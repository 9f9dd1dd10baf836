"""Solver-agnostic semidefinite programming layer.

Problems are declared in terms of matrix/scalar decision variables, affine
LMI constraints and a linear objective.  ``lower()`` flattens every variable
into a decision vector ``theta`` and rewrites each constraint as

    F0 + sum_j theta_j Fj   (positive or negative semidefinite),

which a single adapter function hands to an interior-point conic solver
(clarabel by default).  Alternate solvers only need a new adapter; nothing
in the assembly or validation code changes.

Affine terms come in two shapes:

* a matrix-variable term contributes ``left @ V @ right + (left @ V @ right).T``,
  which is symmetric by construction for any ``V``;
* a scalar-variable term contributes ``value * coeff`` with ``coeff`` symmetric.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .numerics import as_matrix, is_symmetric, sym_eig_max, sym_eig_min

__all__ = [
    "SdpError",
    "VarHandle",
    "MatTerm",
    "ScalarTerm",
    "AffineLmi",
    "SdpProblem",
    "SdpSolution",
    "SolveTolerances",
    "ConstraintCheck",
    "SolutionReport",
    "LoweredBlock",
    "LoweredSdp",
    "solve",
    "validate_solution",
    "dump_lowered_text",
    "svec",
    "smat",
    "NSD",
    "PSD",
]

NSD = "nsd"
PSD = "psd"

#: Worst per-constraint eigenvalue violation a reported feasible solution may
#: carry; anything larger is downgraded to a numerical failure.
FEASIBLE_VIOLATION_LIMIT = 1e-7


class SdpError(RuntimeError):
    """Problem construction or solver adapter failure."""


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled triangular vectorization: lower triangle in row-major order,
    off-diagonal entries multiplied by sqrt(2) so that inner products match
    the Frobenius inner product."""
    d = m.shape[0]
    rows, cols = np.tril_indices(d)
    v = m[rows, cols].astype(float).copy()
    v[rows != cols] *= np.sqrt(2.0)
    return v


def smat(v: np.ndarray, dim: int) -> np.ndarray:
    """Inverse of :func:`svec`."""
    rows, cols = np.tril_indices(dim)
    out = np.zeros((dim, dim))
    vals = np.asarray(v, dtype=float).copy()
    off = rows != cols
    vals[off] /= np.sqrt(2.0)
    out[rows, cols] = vals
    out[cols, rows] = vals
    return out


@dataclass(frozen=True)
class VarHandle:
    """Registered decision variable: symmetric(dim), rectangular(rows, cols)
    or scalar.  ``offset`` is its slice start in the flat decision vector."""

    uid: int
    kind: str
    rows: int
    cols: int
    name: str
    offset: int

    @property
    def num_scalars(self) -> int:
        if self.kind == "symmetric":
            return self.rows * (self.rows + 1) // 2
        if self.kind == "rectangular":
            return self.rows * self.cols
        return 1

    def unpack(self, theta: np.ndarray):
        """Matrix (or float) value of this variable from the decision vector."""
        seg = theta[self.offset : self.offset + self.num_scalars]
        if self.kind == "scalar":
            return float(seg[0])
        if self.kind == "rectangular":
            return seg.reshape(self.rows, self.cols).copy()
        out = np.zeros((self.rows, self.rows))
        rows, cols = np.tril_indices(self.rows)
        out[rows, cols] = seg
        out[cols, rows] = seg
        return out

    def pack(self, value) -> np.ndarray:
        """Inverse of :meth:`unpack`."""
        if self.kind == "scalar":
            return np.array([float(value)])
        value = as_matrix(value, self.name)
        if self.kind == "rectangular":
            return value.ravel().copy()
        rows, cols = np.tril_indices(self.rows)
        return value[rows, cols].copy()

    def basis(self, j: int) -> np.ndarray:
        """Matrix basis element for local scalar index ``j``."""
        if self.kind == "scalar":
            return np.ones((1, 1))
        e = np.zeros((self.rows, self.cols))
        if self.kind == "rectangular":
            e[j // self.cols, j % self.cols] = 1.0
            return e
        rows, cols = np.tril_indices(self.rows)
        i, k = rows[j], cols[j]
        e[i, k] = 1.0
        e[k, i] = 1.0
        return e


@dataclass(frozen=True)
class MatTerm:
    var: VarHandle
    left: np.ndarray   # (dim, var.rows)
    right: np.ndarray  # (var.cols, dim)


@dataclass(frozen=True)
class ScalarTerm:
    var: VarHandle
    coeff: np.ndarray  # symmetric (dim, dim)


class AffineLmi:
    """Affine symmetric-matrix constraint ``M(vars) <= 0`` or ``>= 0``."""

    def __init__(self, dim: int, sense: str = NSD, name: str = ""):
        if sense not in (NSD, PSD):
            raise SdpError(f"unknown sense {sense!r}")
        self.dim = int(dim)
        self.sense = sense
        self.name = name
        self.constant = np.zeros((dim, dim))
        self.terms: list = []

    def add_constant(self, mat) -> "AffineLmi":
        mat = as_matrix(mat, f"{self.name} constant block")
        if mat.shape != (self.dim, self.dim) or not is_symmetric(mat):
            raise SdpError(
                f"constant block of {self.name!r} must be symmetric {self.dim}x{self.dim}"
            )
        self.constant = self.constant + mat
        return self

    def add_he_term(self, var: VarHandle, left, right) -> "AffineLmi":
        """Add ``he(left @ V @ right)`` for matrix variable ``V``."""
        left = as_matrix(left, "term left factor")
        right = as_matrix(right, "term right factor")
        if var.kind == "scalar":
            raise SdpError("use add_scalar_term for scalar variables")
        if left.shape != (self.dim, var.rows) or right.shape != (var.cols, self.dim):
            raise SdpError(
                f"term factors for {var.name!r} have shapes {left.shape}, "
                f"{right.shape}; expected ({self.dim},{var.rows}), ({var.cols},{self.dim})"
            )
        self.terms.append(MatTerm(var, left, right))
        return self

    def add_scalar_term(self, var: VarHandle, coeff) -> "AffineLmi":
        coeff = as_matrix(coeff, "scalar term coefficient")
        if var.kind != "scalar":
            raise SdpError("add_scalar_term needs a scalar variable")
        if coeff.shape != (self.dim, self.dim) or not is_symmetric(coeff):
            raise SdpError("scalar term coefficient must be symmetric of the LMI dim")
        self.terms.append(ScalarTerm(var, coeff))
        return self

    def evaluate(self, values) -> np.ndarray:
        """Numeric constraint matrix at ``values`` (a mapping uid -> value)."""
        out = self.constant.copy()
        for term in self.terms:
            v = values[term.var.uid]
            if isinstance(term, ScalarTerm):
                out = out + float(v) * term.coeff
            else:
                x = term.left @ as_matrix(v, term.var.name) @ term.right
                # symmetrize before accumulating so the sum stays bitwise
                # symmetric in floating point
                out = out + (x + x.T)
        return out

    def referenced_vars(self):
        return {t.var.uid for t in self.terms}


class SdpProblem:
    """Container of variables, LMI constraints and a linear objective."""

    def __init__(self, name: str = "sdp"):
        self.name = name
        self.variables: list[VarHandle] = []
        self._by_name: dict[str, VarHandle] = {}
        self.constraints: list[AffineLmi] = []
        self.objective: dict[int, np.ndarray] = {}
        self._num_scalars = 0

    # -- variables -----------------------------------------------------

    def add_variable(self, kind: str, name: str, *, dim: int | None = None,
                     rows: int | None = None, cols: int | None = None) -> VarHandle:
        if not name:
            raise SdpError("variable name must be nonempty")
        if name in self._by_name:
            raise SdpError(f"duplicate variable name {name!r}")
        if kind == "symmetric":
            if not dim or dim < 1:
                raise SdpError("symmetric variable needs dim >= 1")
            rows = cols = dim
        elif kind == "rectangular":
            if not rows or not cols or rows < 1 or cols < 1:
                raise SdpError("rectangular variable needs rows, cols >= 1")
        elif kind == "scalar":
            rows = cols = 1
        else:
            raise SdpError(f"unknown variable kind {kind!r}")
        handle = VarHandle(
            uid=len(self.variables), kind=kind, rows=rows, cols=cols,
            name=name, offset=self._num_scalars,
        )
        self.variables.append(handle)
        self._by_name[name] = handle
        self._num_scalars += handle.num_scalars
        return handle

    def add_symmetric(self, dim: int, name: str) -> VarHandle:
        return self.add_variable("symmetric", name, dim=dim)

    def add_rectangular(self, rows: int, cols: int, name: str) -> VarHandle:
        return self.add_variable("rectangular", name, rows=rows, cols=cols)

    def add_scalar(self, name: str) -> VarHandle:
        return self.add_variable("scalar", name)

    @property
    def num_unknowns(self) -> int:
        return self._num_scalars

    # -- constraints and objective --------------------------------------

    def add_lmi(self, lmi: AffineLmi) -> int:
        for term in lmi.terms:
            v = term.var
            if v.uid >= len(self.variables) or self.variables[v.uid] is not v:
                raise SdpError(
                    f"constraint {lmi.name!r} references variable {v.name!r} "
                    "that is not registered in this problem"
                )
        self.constraints.append(lmi)
        return len(self.constraints) - 1

    def set_objective(self, linear: dict) -> None:
        """Minimize ``sum_v <coeff_v, V>`` (Frobenius inner product; plain
        product for scalars)."""
        packed = {}
        for var, coeff in linear.items():
            if var.kind == "scalar":
                packed[var.uid] = np.atleast_2d(float(coeff))
            else:
                c = as_matrix(coeff, f"objective coefficient for {var.name}")
                if c.shape != (var.rows, var.cols):
                    raise SdpError("objective coefficient shape mismatch")
                packed[var.uid] = c
        self.objective = packed

    @property
    def has_objective(self) -> bool:
        return any(np.any(c != 0.0) for c in self.objective.values())

    # -- lowering --------------------------------------------------------

    def lower(self) -> "LoweredSdp":
        """Flatten to ``F0 + sum_j theta_j Fj`` per constraint."""
        blocks = []
        for lmi in self.constraints:
            fj: dict[int, np.ndarray] = {}
            for term in lmi.terms:
                var = term.var
                for j in range(var.num_scalars):
                    e = var.basis(j)
                    if isinstance(term, ScalarTerm):
                        contrib = term.coeff
                    else:
                        x = term.left @ e @ term.right
                        contrib = x + x.T
                    idx = var.offset + j
                    if idx in fj:
                        fj[idx] = fj[idx] + contrib
                    else:
                        fj[idx] = contrib.copy()
            blocks.append(
                LoweredBlock(dim=lmi.dim, sense=lmi.sense, name=lmi.name,
                             f0=lmi.constant.copy(), fj=fj)
            )
        c = np.zeros(self.num_unknowns)
        for uid, coeff in self.objective.items():
            var = self.variables[uid]
            for j in range(var.num_scalars):
                c[var.offset + j] = float(np.sum(coeff * var.basis(j)))
        return LoweredSdp(num_unknowns=self.num_unknowns, c=c, blocks=blocks)

    def values_from_theta(self, theta: np.ndarray) -> dict:
        return {v.uid: v.unpack(theta) for v in self.variables}

    def theta_from_values(self, values) -> np.ndarray:
        theta = np.zeros(self.num_unknowns)
        for v in self.variables:
            theta[v.offset : v.offset + v.num_scalars] = v.pack(values[v.uid])
        return theta


@dataclass
class LoweredBlock:
    dim: int
    sense: str
    name: str
    f0: np.ndarray
    fj: dict

    def evaluate(self, theta: np.ndarray) -> np.ndarray:
        out = self.f0.copy()
        for j, f in self.fj.items():
            out = out + theta[j] * f
        return out


@dataclass
class LoweredSdp:
    num_unknowns: int
    c: np.ndarray
    blocks: list


@dataclass(frozen=True)
class SolveTolerances:
    """Interior-point stopping tolerances with a looser rescue retry."""

    feas: float = 1e-8
    gap: float = 1e-8
    rescue_feas: float = 1e-6
    rescue_gap: float = 1e-6
    max_iter: int = 500


@dataclass
class SdpSolution:
    status: str                  # optimal | feasible | infeasible | numerical_failure
    values: dict
    objective_value: float | None
    stats: dict

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")

    def value(self, handle: VarHandle):
        return self.values[handle.uid]


@dataclass(frozen=True)
class ConstraintCheck:
    name: str
    dim: int
    sense: str
    violation: float
    extreme_eig: float


@dataclass(frozen=True)
class SolutionReport:
    checks: tuple
    worst_violation: float

    @property
    def ok(self) -> bool:
        return self.worst_violation <= FEASIBLE_VIOLATION_LIMIT


def validate_solution(problem: SdpProblem, solution_or_values) -> SolutionReport:
    """Re-substitute values into every constraint and report the worst
    eigenvalue violation per constraint."""
    values = (
        solution_or_values.values
        if isinstance(solution_or_values, SdpSolution)
        else solution_or_values
    )
    checks = []
    worst = 0.0
    for lmi in problem.constraints:
        m = lmi.evaluate(values)
        if lmi.sense == NSD:
            ext = sym_eig_max(m)
            viol = max(ext, 0.0)
        else:
            ext = sym_eig_min(m)
            viol = max(-ext, 0.0)
        worst = max(worst, viol)
        checks.append(
            ConstraintCheck(name=lmi.name, dim=lmi.dim, sense=lmi.sense,
                            violation=viol, extreme_eig=ext)
        )
    return SolutionReport(checks=tuple(checks), worst_violation=worst)


# -- clarabel adapter ----------------------------------------------------

_CLARABEL_INFEASIBLE = {"PrimalInfeasible", "AlmostPrimalInfeasible"}
_CLARABEL_SOLVED = {"Solved", "AlmostSolved"}
_CLARABEL_CLEAN = {"Solved"}


def _clarabel_adapter(lowered: LoweredSdp, feas: float, gap: float,
                      max_iter: int) -> dict:
    """Lowered problem in, flat solution out.  This is the full solver
    boundary: swapping SDP backends means swapping this function."""
    import clarabel

    d = lowered.num_unknowns
    a_rows = []
    b_parts = []
    cones = []
    for blk in lowered.blocks:
        sign = 1.0 if blk.sense == PSD else -1.0
        tri = blk.dim * (blk.dim + 1) // 2
        a_blk = np.zeros((tri, d))
        for j, f in blk.fj.items():
            a_blk[:, j] = -sign * svec(f)
        a_rows.append(a_blk)
        b_parts.append(sign * svec(blk.f0))
        cones.append(clarabel.PSDTriangleConeT(blk.dim))
    a = sp.csc_matrix(np.vstack(a_rows)) if a_rows else sp.csc_matrix((0, d))
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)

    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = feas
    settings.tol_gap_abs = gap
    settings.tol_gap_rel = gap
    settings.max_iter = max_iter
    solver = clarabel.DefaultSolver(
        sp.csc_matrix((d, d)), lowered.c, a, b, cones, settings
    )
    t0 = time.perf_counter()
    sol = solver.solve()
    return {
        "raw_status": str(sol.status),
        "theta": np.asarray(sol.x, dtype=float),
        "iterations": int(sol.iterations),
        "solve_time": time.perf_counter() - t0,
        "objective": float(sol.obj_val),
    }


def solve(problem: SdpProblem, tolerances: SolveTolerances | None = None,
          adapter=None) -> SdpSolution:
    """Lower the problem and run the conic solver, enforcing the layer
    contract: a solution reported feasible satisfies every constraint with
    eigenvalue violation at most ``1e-7``, otherwise the status is
    ``numerical_failure`` with diagnostics attached.

    A failed first attempt is retried once at the looser rescue tolerances.
    """
    if not problem.variables:
        raise SdpError("problem has no variables")
    tol = tolerances or SolveTolerances()
    run = adapter or _clarabel_adapter
    lowered = problem.lower()

    out = run(lowered, tol.feas, tol.gap, tol.max_iter)
    attempts = [out["raw_status"]]
    if out["raw_status"] not in _CLARABEL_CLEAN | _CLARABEL_INFEASIBLE:
        retry = run(lowered, tol.rescue_feas, tol.rescue_gap, tol.max_iter)
        attempts.append(retry["raw_status"])
        # keep the retry only if it reached a definitive status, otherwise
        # prefer the tighter first attempt
        if retry["raw_status"] in _CLARABEL_CLEAN | _CLARABEL_INFEASIBLE or (
            out["raw_status"] not in _CLARABEL_SOLVED
        ):
            out = retry

    stats = {
        "solver_status": out["raw_status"],
        "attempts": attempts,
        "iterations": out["iterations"],
        "solve_time": out["solve_time"],
        "num_unknowns": problem.num_unknowns,
        "num_constraints": len(problem.constraints),
    }

    if out["raw_status"] in _CLARABEL_INFEASIBLE:
        return SdpSolution(status="infeasible", values={}, objective_value=None,
                           stats=stats)
    if out["raw_status"] not in _CLARABEL_SOLVED:
        return SdpSolution(status="numerical_failure", values={},
                           objective_value=None, stats=stats)

    values = problem.values_from_theta(out["theta"])
    report = validate_solution(problem, values)
    stats["worst_violation"] = report.worst_violation
    objective = float(lowered.c @ out["theta"]) if problem.has_objective else 0.0
    if not report.ok:
        stats["violation_checks"] = report.checks
        return SdpSolution(status="numerical_failure", values=values,
                           objective_value=objective, stats=stats)
    status = "optimal" if problem.has_objective else "feasible"
    return SdpSolution(status=status, values=values, objective_value=objective,
                       stats=stats)


def dump_lowered_text(problem: SdpProblem, stream) -> None:
    """Write the lowered problem in a sparse SDPA-like text layout.

    Layout (whitespace-separated, ``#`` starts a comment):

    * line 1: ``<num_unknowns> <num_blocks>``
    * line 2: signed block dimensions, negative for NSD sense
    * line 3: objective vector ``c`` (num_unknowns entries)
    * then one line per nonzero: ``<block> <var> <row> <col> <value>`` with
      1-based block/row/col indices, ``var = 0`` for the constant matrix and
      ``var = j`` for the coefficient of ``theta_j`` (1-based); only lower
      triangles are listed.
    """
    lowered = problem.lower()
    stream.write(f"# lowered SDP dump: {problem.name}\n")
    stream.write(f"{lowered.num_unknowns} {len(lowered.blocks)}\n")
    dims = " ".join(
        str(blk.dim if blk.sense == PSD else -blk.dim) for blk in lowered.blocks
    )
    stream.write(dims + "\n")
    stream.write(" ".join(f"{v:.17g}" for v in lowered.c) + "\n")
    for bi, blk in enumerate(lowered.blocks, start=1):
        mats = [(0, blk.f0)] + [(j + 1, f) for j, f in sorted(blk.fj.items())]
        for var_idx, mat in mats:
            rows, cols = np.tril_indices(blk.dim)
            for i, k in zip(rows, cols):
                if mat[i, k] != 0.0:
                    stream.write(f"{bi} {var_idx} {i + 1} {k + 1} {mat[i, k]:.17g}\n")

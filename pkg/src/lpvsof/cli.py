"""Command-line front end: problem-file ingestion, synthesis, simulation
and report merging.

Commands
--------
validate   structural and well-posedness checks of a problem file
synth      stabilization synthesis (undisturbed problems, q = l = 0)
synth-l2   L2-gain synthesis, minimizing or checking a fixed gain bound
simulate   closed-loop integration against a previously written result
report     merge synthesis/simulation summaries into one JSON document

Exit codes are stable: 0 ok, 2 validation failure, 3 I/O or parse failure,
4 infeasible synthesis, 5 diverged simulation.

The problem file is a single JSON document (see the bundled fixtures for
complete examples)::

    {
      "schema_version": 1,
      "dims": {"n": .., "n_pi": .., "m": .., "p": .., "q": .., "l": .., "r": ..},
      "parameter_box": {"lower": [..], "upper": [..]},
      "matrices": {"A1": [[..]], .., "C3": [[..]]},
      "ups": {"Ups1": {"const": [[..]], "coeffs": [[[..]], ..]}, .., "Ups4": ..},
      "synthesis": {"beta": .., "eps": .., "gamma_mode": "minimize"},
      "simulation": {"x0": [..], "t_end": .., "dt": ..,
                     "rho_signal": [{"kind": "sine", ..}],
                     "w_signal": [{"kind": "constant", ..}]}
    }

Signal primitives: ``sine{amplitude, frequency, phase, offset}``,
``constant{level}``, ``pulse{t0, t1, level}``, ``seeded_noise{band, rms,
seed}``.  A list stacks one primitive per channel.  Flags always override
file-embedded synthesis options.
"""

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fixtures as _fixtures
from .dar_model import (
    _BLOCK_SHAPES,
    DarDims,
    AffineParamMatrix,
    DarSystem,
    ScheduledGain,
    hurwitz_grid_margin,
    validate,
    well_posedness,
)
from .lmi_synthesis import (
    AllInfeasibleError,
    CertificateVars,
    InfeasibleError,
    SynthesisOptions,
    beta_search,
    synth_l2,
    synth_stabilize,
    verify_certificate,
)
from .param_domain import ParameterBox, ParamTrajectory
from .simulate import (
    AlgebraicLoopSingularError,
    DivergedError,
    SimConfig,
    Signal,
    constant_signal,
    dissipation_audit,
    export_csv,
    integrate,
    l2_dissipation_audit,
    l2_report,
    pulse_signal,
    seeded_noise_signal,
    sine_signal,
    stack_signals,
    zero_signal,
)

__all__ = [
    "ProblemFile",
    "ParseError",
    "load_problem",
    "problem_to_dict",
    "build_signal",
    "build_param_trajectory",
    "main",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_PARSE",
    "EXIT_INFEASIBLE",
    "EXIT_DIVERGED",
]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_DIVERGED = 5

SCHEMA_VERSION = 1

_MATRIX_KEYS = ("A1", "A2", "A3", "A4", "B1", "B2", "B3", "B4", "C1", "C2", "C3")
_UPS_KEYS = ("Ups1", "Ups2", "Ups3", "Ups4")
_ATTR_FOR_KEY = {k: k.lower() for k in _MATRIX_KEYS + _UPS_KEYS}


class ParseError(ValueError):
    """Problem-file structure or number parsing failure; names the field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ProblemFile:
    """Parsed problem document plus the DAR it defines."""

    schema_version: int
    dims: DarDims
    box: ParameterBox
    matrices: dict
    ups: dict
    synthesis: dict
    simulation: dict
    path: str

    def to_system(self) -> DarSystem:
        kwargs = {_ATTR_FOR_KEY[k]: v for k, v in self.matrices.items()}
        kwargs.update({_ATTR_FOR_KEY[k]: v for k, v in self.ups.items()})
        return DarSystem(dims=self.dims, box=self.box, **kwargs)


def _require(obj: dict, field: str, path: str):
    if field not in obj:
        raise ParseError(f"{path}.{field}" if path else field, "missing field")
    return obj[field]


def _as_array(value, field: str, ndim: int, empty_shape=None) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(field, f"not numeric: {exc}") from exc
    if arr.size == 0 and empty_shape is not None:
        # "[]" is the only JSON spelling of a matrix without rows; give it
        # the declared shape so downstream block algebra stays well formed
        return np.zeros(empty_shape)
    if arr.ndim != ndim:
        raise ParseError(field, f"expected {ndim}-D array, got {arr.ndim}-D")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ParseError(field, "contains non-finite values")
    return arr


def parse_problem_dict(doc: dict, path: str = "<memory>") -> ProblemFile:
    if not isinstance(doc, dict):
        raise ParseError("<root>", "problem document must be a JSON object")
    version = _require(doc, "schema_version", "")
    if version != SCHEMA_VERSION:
        raise ParseError("schema_version", f"unsupported version {version!r}")

    dims_doc = _require(doc, "dims", "")
    try:
        dims = DarDims(**{
            k: int(_require(dims_doc, k, "dims"))
            for k in ("n", "n_pi", "m", "p", "q", "l", "r")
        })
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParseError):
            raise
        raise ParseError("dims", str(exc)) from exc

    box_doc = _require(doc, "parameter_box", "")
    box = ParameterBox(
        _as_array(_require(box_doc, "lower", "parameter_box"), "parameter_box.lower", 1),
        _as_array(_require(box_doc, "upper", "parameter_box"), "parameter_box.upper", 1),
    )

    def declared_shape(key):
        rdim, cdim = _BLOCK_SHAPES[_ATTR_FOR_KEY[key]]
        return (getattr(dims, rdim), getattr(dims, cdim))

    mats_doc = _require(doc, "matrices", "")
    matrices = {
        key: _as_array(
            _require(mats_doc, key, "matrices"), f"matrices.{key}", 2,
            empty_shape=declared_shape(key),
        )
        for key in _MATRIX_KEYS
    }

    ups_doc = _require(doc, "ups", "")
    ups = {}
    for key in _UPS_KEYS:
        blk = _require(ups_doc, key, "ups")
        shape = declared_shape(key)
        const = _as_array(
            _require(blk, "const", f"ups.{key}"), f"ups.{key}.const", 2,
            empty_shape=shape,
        )
        coeffs_raw = _require(blk, "coeffs", f"ups.{key}")
        coeffs = [
            _as_array(c, f"ups.{key}.coeffs[{i}]", 2, empty_shape=shape)
            for i, c in enumerate(coeffs_raw)
        ]
        ups[key] = AffineParamMatrix(const, tuple(coeffs))

    return ProblemFile(
        schema_version=version,
        dims=dims,
        box=box,
        matrices=matrices,
        ups=ups,
        synthesis=dict(doc.get("synthesis", {})),
        simulation=dict(doc.get("simulation", {})),
        path=path,
    )


def load_problem(path) -> ProblemFile:
    """Parse a problem file.  A bare fixture name (``ex1.json``) that does
    not exist on disk falls back to the packaged fixture of that name."""
    p = Path(path)
    if not p.exists():
        built_in = _fixtures.fixture_path(p.stem)
        if built_in is not None:
            p = built_in
        else:
            raise ParseError(str(path), "file not found")
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(str(p), f"invalid JSON at line {exc.lineno}, column {exc.colno}") from exc
    return parse_problem_dict(doc, path=str(p))


def problem_to_dict(pf: ProblemFile) -> dict:
    """Serialize back to the wire layout (exact float round-trip)."""
    return {
        "schema_version": pf.schema_version,
        "dims": {k: getattr(pf.dims, k) for k in ("n", "n_pi", "m", "p", "q", "l", "r")},
        "parameter_box": {
            "lower": pf.box.lower.tolist(),
            "upper": pf.box.upper.tolist(),
        },
        "matrices": {k: v.tolist() for k, v in pf.matrices.items()},
        "ups": {
            k: {"const": v.const.tolist(), "coeffs": [c.tolist() for c in v.coeffs]}
            for k, v in pf.ups.items()
        },
        "synthesis": pf.synthesis,
        "simulation": pf.simulation,
    }


# -- signals ----------------------------------------------------------------


def _build_primitive(spec: dict, field: str, base_seed: int) -> Signal:
    kind = _require(spec, "kind", field)
    if kind == "constant":
        return constant_signal([float(spec.get("level", 0.0))])
    if kind == "sine":
        return sine_signal(
            amplitude=float(_require(spec, "amplitude", field)),
            frequency=float(_require(spec, "frequency", field)),
            phase=float(spec.get("phase", 0.0)),
            offset=float(spec.get("offset", 0.0)),
        )
    if kind == "pulse":
        return pulse_signal(
            t0=float(_require(spec, "t0", field)),
            t1=float(_require(spec, "t1", field)),
            level=float(_require(spec, "level", field)),
        )
    if kind == "seeded_noise":
        return seeded_noise_signal(
            band=float(_require(spec, "band", field)),
            rms=float(_require(spec, "rms", field)),
            seed=int(spec.get("seed", base_seed)),
        )
    raise ParseError(field, f"unknown signal kind {kind!r}")


def build_signal(spec, dim: int, field: str, base_seed: int = 0) -> Signal:
    """Signal from a primitive spec or a list of per-channel primitives."""
    if spec is None:
        return zero_signal(dim)
    if isinstance(spec, dict):
        spec = [spec]
    sigs = [
        _build_primitive(s, f"{field}[{i}]", base_seed + i)
        for i, s in enumerate(spec)
    ]
    built = stack_signals(sigs)
    if built.dim != dim:
        raise ParseError(field, f"signal has {built.dim} channels, expected {dim}")
    return built


def build_param_trajectory(spec, box: ParameterBox, field: str,
                           base_seed: int = 0) -> ParamTrajectory:
    if spec is None:
        mid = 0.5 * (box.lower + box.upper)
        return ParamTrajectory(lambda t: mid, box, "box midpoint")
    sig = build_signal(spec, box.r, field, base_seed)
    return ParamTrajectory(sig.sampler, box, sig.description)


# -- result bundles ----------------------------------------------------------


def _result_bundle(pf: ProblemFile, result, command: str) -> dict:
    cert = result.certificate
    bundle = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "problem": pf.path,
        "beta": result.beta,
        "gamma": result.gamma,
        "gains": [k.tolist() for k in result.gains.gains],
        "certificate": {
            "P": cert.p.tolist(),
            "H": [h.tolist() for h in cert.h],
            "Q": [q.tolist() for q in cert.q],
            "S": [s.tolist() for s in cert.s],
            "R": cert.r.tolist(),
            "L": cert.l.tolist(),
            "gamma": cert.gamma,
        },
        "diagnostics": {
            k: v for k, v in result.diagnostics.items()
            if isinstance(v, (int, float, str, type(None)))
        },
    }
    return bundle


def _write_json(doc: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def _load_result_bundle(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ParseError(str(path), "result file not found")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(str(p), f"invalid JSON at line {exc.lineno}") from exc


# -- commands ----------------------------------------------------------------


def cmd_validate(args) -> int:
    pf = load_problem(args.problem)
    dar = pf.to_system()
    report = validate(dar)
    if not report.ok:
        print(f"INVALID: {pf.path}")
        for v in report.violations:
            print(f"  - {v}")
        return EXIT_VALIDATION
    wp = well_posedness(dar, grid_points_per_axis=args.grid)
    d = dar.dims
    print(f"valid: n={d.n} n_pi={d.n_pi} m={d.m} p={d.p} q={d.q} l={d.l} r={d.r}")
    print(
        f"well-posedness over {wp.n_evaluations} samples: "
        f"min singular value {wp.min_singular_value:.6g}, "
        f"worst condition {wp.max_condition:.6g}"
    )
    if not wp.well_posed:
        print(
            f"NOT WELL POSED near rho={wp.worst_rho.tolist()} "
            f"(condition limit {wp.cond_limit:.1e})"
        )
        return EXIT_VALIDATION
    print("well posed")
    return EXIT_OK


def _synthesis_options(pf: ProblemFile, args) -> SynthesisOptions:
    synth = pf.synthesis
    beta = args.beta if args.beta is not None else synth.get("beta")
    eps = args.eps if args.eps is not None else synth.get("eps", 1e-6)
    if args.gamma_fixed is not None:
        mode, value = "fixed", args.gamma_fixed
    elif synth.get("gamma_mode", "minimize") == "fixed":
        mode, value = "fixed", synth.get("gamma")
    else:
        mode, value = "minimize", None
    return SynthesisOptions(
        beta=None if beta is None else float(beta),
        eps_strict=float(eps),
        gamma_mode=mode,
        gamma_value=None if value is None else float(value),
    )


def _beta_grid(pf: ProblemFile, args):
    if args.beta_grid:
        return [float(tok) for tok in args.beta_grid.split(",") if tok.strip()]
    grid = pf.synthesis.get("beta_grid")
    return [float(b) for b in grid] if grid else None


def _run_synthesis(args, l2: bool) -> int:
    pf = load_problem(args.problem)
    dar = pf.to_system()
    report = validate(dar)
    if not report.ok:
        print("validation failed: " + "; ".join(report.violations))
        return EXIT_VALIDATION
    if l2 and dar.dims.q == 0 and dar.dims.l == 0:
        print("problem has no disturbance/performance channel; use 'synth'")
        return EXIT_VALIDATION
    if not l2 and (dar.dims.q != 0 or dar.dims.l != 0):
        print("problem has performance channels; use 'synth-l2'")
        return EXIT_VALIDATION

    opts = _synthesis_options(pf, args)
    grid = _beta_grid(pf, args) if l2 else None
    try:
        if grid:
            result = beta_search(dar, grid, opts)
        elif opts.beta is None:
            raise ParseError("synthesis.beta", "beta missing (file or --beta)")
        elif l2:
            result = synth_l2(dar, opts)
        else:
            result = synth_stabilize(dar, opts)
    except AllInfeasibleError as exc:
        print(f"infeasible for every beta: {exc}")
        return EXIT_INFEASIBLE
    except InfeasibleError as exc:
        print(f"infeasible: {exc} (solver status: {exc.solver_status})")
        return EXIT_INFEASIBLE

    verification = verify_certificate(dar, result)
    out_dir = Path(args.out)
    stem = Path(pf.path).stem
    bundle = _result_bundle(pf, result, "synth-l2" if l2 else "synth")
    bundle["certificate_verified"] = verification.passed
    bundle["verification_worst_margin"] = verification.worst_margin
    result_path = out_dir / f"{stem}_result.json"
    _write_json(bundle, result_path)

    if l2:
        print(f"gamma = {result.gamma:.6g} (beta = {result.beta:g})")
    else:
        print(f"feasible (beta = {result.beta:g})")
    for i, k in enumerate(result.gains.gains):
        print(f"K_{i + 1} = {np.array2string(k, precision=6)}")
    print(f"certificate verified: {verification.passed}")
    print(f"result written to {result_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    return _run_synthesis(args, l2=False)


def cmd_synth_l2(args) -> int:
    return _run_synthesis(args, l2=True)


def cmd_simulate(args) -> int:
    pf = load_problem(args.problem)
    dar = pf.to_system()
    report = validate(dar)
    if not report.ok:
        print("validation failed: " + "; ".join(report.violations))
        return EXIT_VALIDATION
    bundle = _load_result_bundle(args.result)
    gains = ScheduledGain(
        tuple(np.asarray(k, dtype=float) for k in bundle["gains"]), dar.box
    )
    p_matrix = np.asarray(bundle["certificate"]["P"], dtype=float)
    gamma = bundle.get("gamma")

    sim = pf.simulation
    cfg = SimConfig(
        t_end=float(sim.get("t_end", 10.0)),
        dt=float(sim.get("dt", 1e-3)),
        x0=np.asarray(sim.get("x0", np.zeros(dar.dims.n)), dtype=float),
    )
    rho_signal = build_param_trajectory(
        sim.get("rho_signal"), dar.box, "simulation.rho_signal", args.seed
    )
    w_signal = build_signal(
        sim.get("w_signal"), dar.dims.q, "simulation.w_signal", args.seed
    )

    try:
        traj = integrate(dar, gains, rho_signal, w_signal, cfg, p_matrix=p_matrix)
    except DivergedError as exc:
        print(f"DIVERGED: {exc}")
        return EXIT_DIVERGED
    except AlgebraicLoopSingularError as exc:
        print(f"algebraic loop singular: {exc}")
        return EXIT_DIVERGED

    summary = {
        "schema_version": SCHEMA_VERSION,
        "command": "simulate",
        "problem": pf.path,
        "result": str(args.result),
        "t_end": cfg.t_end,
        "dt": cfg.dt,
        "final_state_norm": float(np.linalg.norm(traj.x[-1])),
        "algebraic_residual": traj.algebraic_residual(dar),
        "hurwitz_grid_margin": hurwitz_grid_margin(dar, gains),
        "audits": {},
    }
    if gamma is not None and dar.is_disturbed:
        rep = l2_report(traj, float(gamma), p_matrix)
        audit = l2_dissipation_audit(dar, gains, float(gamma), p_matrix, traj)
        traj.td = audit.values
        summary["l2"] = {
            "z_norm": rep.z_norm,
            "w_norm": rep.w_norm,
            "theta": rep.theta,
            "ratio": rep.ratio,
            "bound_ok": rep.bound_ok,
            "gamma": float(gamma),
        }
        summary["audits"]["l2_dissipation"] = {
            "max_value": audit.max_value,
            "passed": audit.passed,
        }
    elif not dar.is_disturbed:
        cert_doc = bundle["certificate"]
        cert = CertificateVars(
            p=p_matrix,
            h=tuple(np.asarray(h, dtype=float) for h in cert_doc["H"]),
            q=tuple(np.asarray(q, dtype=float) for q in cert_doc["Q"]),
            s=tuple(np.asarray(s, dtype=float) for s in cert_doc["S"]),
            r=np.asarray(cert_doc["R"], dtype=float),
            l=np.asarray(cert_doc["L"], dtype=float),
        )
        audit = dissipation_audit(dar, cert, traj)
        traj.td = audit.values
        summary["audits"]["dissipation"] = {
            "max_value": audit.max_value,
            "passed": audit.passed,
        }

    out_dir = Path(args.out)
    stem = Path(pf.path).stem
    csv_path = out_dir / f"{stem}_traj.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    export_csv(traj, csv_path)
    summary["csv"] = str(csv_path)
    summary_path = out_dir / f"{stem}_summary.json"
    _write_json(summary, summary_path)

    print(f"simulated {cfg.t_end:g} s at dt={cfg.dt:g}")
    print(f"final state norm = {summary['final_state_norm']:.6g}")
    if "l2" in summary:
        l2 = summary["l2"]
        ratio = "n/a" if l2["ratio"] is None else f"{l2['ratio']:.6g}"
        print(
            f"||z||2 = {l2['z_norm']:.6g}, ||w||2 = {l2['w_norm']:.6g}, "
            f"ratio = {ratio}, bound ok: {l2['bound_ok']}"
        )
    print(f"trajectory written to {csv_path}")
    print(f"summary written to {summary_path}")
    return EXIT_OK


def cmd_report(args) -> int:
    if not args.inputs:
        print("no input summaries given")
        return EXIT_PARSE
    docs = []
    for path in args.inputs:
        p = Path(path)
        if not p.exists():
            print(f"missing input: {path}")
            return EXIT_PARSE
        try:
            docs.append(json.loads(p.read_text()))
        except json.JSONDecodeError as exc:
            print(f"invalid JSON in {path}: line {exc.lineno}")
            return EXIT_PARSE
    versions = {doc.get("schema_version") for doc in docs}
    if len(versions) != 1:
        print(f"conflicting schema versions: {sorted(versions, key=str)}")
        return EXIT_PARSE

    entries: dict = {}
    order = []
    for doc in docs:
        key = doc.get("problem", "<unknown>")
        if key not in entries:
            entries[key] = {"problem": key}
            order.append(key)
        slot = "simulation" if doc.get("command") == "simulate" else "synthesis"
        entries[key][slot] = doc
    merged = {
        "schema_version": SCHEMA_VERSION,
        "entries": [entries[k] for k in order],
    }
    out_path = Path(args.out) / "report.json"
    _write_json(merged, out_path)
    print(f"report with {len(order)} entries written to {out_path}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lpvsof",
        description=(
            "Gain-scheduled static output feedback synthesis and validation "
            "for rational LPV systems in differential-algebraic form."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="base RNG seed")

    p_val = sub.add_parser("validate", help="check a problem file")
    p_val.add_argument("problem")
    p_val.add_argument("--grid", type=int, default=33,
                       help="well-posedness grid points per axis")
    p_val.set_defaults(func=cmd_validate)

    for name, func in (("synth", cmd_synth), ("synth-l2", cmd_synth_l2)):
        p_syn = sub.add_parser(name, help=f"{name} on a problem file")
        p_syn.add_argument("problem")
        p_syn.add_argument("--beta", type=float, default=None)
        p_syn.add_argument("--beta-grid", default=None,
                           help="comma-separated beta values")
        p_syn.add_argument("--eps", type=float, default=None,
                           help="strictness margin (default 1e-6)")
        p_syn.add_argument("--gamma-fixed", type=float, default=None,
                           help="check feasibility at this gain bound")
        add_common(p_syn)
        p_syn.set_defaults(func=func)

    p_sim = sub.add_parser("simulate", help="integrate a closed loop")
    p_sim.add_argument("problem")
    p_sim.add_argument("result", help="result JSON from synth/synth-l2")
    add_common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_rep = sub.add_parser("report", help="merge summaries into one report")
    p_rep.add_argument("inputs", nargs="*")
    p_rep.add_argument("--out", default=".")
    p_rep.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}")
        return EXIT_PARSE
    except OSError as exc:
        print(f"I/O error: {exc}")
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())

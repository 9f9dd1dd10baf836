"""Gain-scheduled static output feedback synthesis for rational LPV systems.

The package designs scheduled output-feedback gains for plants given in
differential-algebraic representation (DAR), certifies them through vertex
LMI conditions solved as semidefinite programs, and validates the result by
certificate re-substitution and closed-loop simulation with an empirical
L2-gain check.
"""

from .dar_model import (
    AffineParamMatrix,
    BarSystem,
    DarDims,
    DarSystem,
    IllPosedError,
    NoPerformanceChannelError,
    ScheduledGain,
    closed_loop,
    hurwitz_grid_margin,
    lift_l2,
    pi_value,
    realize,
    realize_closed_loop,
    strip_performance_channels,
    validate,
    well_posedness,
)
from .lmi_synthesis import (
    AllInfeasibleError,
    CertificateVars,
    DissipativityData,
    InfeasibleError,
    SynthesisOptions,
    SynthesisResult,
    beta_search,
    extract_gains,
    synth_l2,
    synth_stabilize,
    verify_certificate,
)
from .numerics import (
    NonFiniteMatrixError,
    SingularSystemError,
    he,
    solve_linear,
    sym_eig_max,
    sym_eig_min,
)
from .param_domain import (
    ConvexCoordinates,
    DegenerateIntervalError,
    ParameterBox,
    ParameterOutOfRangeError,
    ParamTrajectory,
    VertexSet,
    coords,
    enumerate_vertices,
)
from .simulate import (
    AlgebraicLoopSingularError,
    DivergedError,
    SimConfig,
    Signal,
    Trajectory,
    dissipation_audit,
    integrate,
    l2_dissipation_audit,
    l2_report,
    step_algebraic,
    yw_sample_check,
)

__version__ = "0.1.0"

__all__ = [
    "AffineParamMatrix", "BarSystem", "DarDims", "DarSystem", "IllPosedError",
    "NoPerformanceChannelError", "ScheduledGain", "closed_loop",
    "hurwitz_grid_margin", "lift_l2", "pi_value", "realize",
    "realize_closed_loop", "strip_performance_channels", "validate",
    "well_posedness",
    "AllInfeasibleError", "CertificateVars", "DissipativityData",
    "InfeasibleError", "SynthesisOptions", "SynthesisResult", "beta_search",
    "extract_gains", "synth_l2", "synth_stabilize", "verify_certificate",
    "NonFiniteMatrixError", "SingularSystemError", "he", "solve_linear",
    "sym_eig_max", "sym_eig_min",
    "ConvexCoordinates", "DegenerateIntervalError", "ParameterBox",
    "ParameterOutOfRangeError", "ParamTrajectory", "VertexSet", "coords",
    "enumerate_vertices",
    "AlgebraicLoopSingularError", "DivergedError", "SimConfig", "Signal",
    "Trajectory", "dissipation_audit", "integrate", "l2_dissipation_audit",
    "l2_report", "step_algebraic", "yw_sample_check",
    "__version__",
]

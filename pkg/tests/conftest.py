import numpy as np
import pytest

from lpvsof.cli import load_problem
from lpvsof.dar_model import strip_performance_channels
from lpvsof.lmi_synthesis import SynthesisOptions, synth_l2, synth_stabilize
from lpvsof.param_domain import ParamTrajectory
from lpvsof.simulate import SimConfig, constant_signal, integrate


@pytest.fixture(scope="session")
def ex1():
    return load_problem("ex1.json").to_system()


@pytest.fixture(scope="session")
def ex2():
    return load_problem("ex2.json").to_system()


@pytest.fixture(scope="session")
def ex1_stripped(ex1):
    return strip_performance_channels(ex1)


@pytest.fixture(scope="session")
def ex2_stripped(ex2):
    return strip_performance_channels(ex2)


@pytest.fixture(scope="session")
def ex1_l2(ex1):
    return synth_l2(ex1, SynthesisOptions(beta=-1.3))


@pytest.fixture(scope="session")
def ex2_l2(ex2):
    return synth_l2(ex2, SynthesisOptions(beta=-29.3))


@pytest.fixture(scope="session")
def ex1_stab(ex1_stripped):
    return synth_stabilize(ex1_stripped, SynthesisOptions(beta=-1.3))


@pytest.fixture(scope="session")
def ex2_stab(ex2_stripped):
    return synth_stabilize(ex2_stripped, SynthesisOptions(beta=-29.3))


def ex1_rho_trajectory(box):
    return ParamTrajectory(
        lambda t: np.array([1.5 * np.sin(1.6 * t)]), box, "1.5 sin(1.6 t)"
    )


@pytest.fixture(scope="session")
def fig_trajectory(ex1, ex1_l2):
    """Reference closed-loop run: x0 = (1, -1), sinusoidal parameter, no
    disturbance, dt = 1e-3 over 10 s."""
    cfg = SimConfig(t_end=10.0, dt=1e-3, x0=[1.0, -1.0])
    return integrate(
        ex1, ex1_l2.gains, ex1_rho_trajectory(ex1.box), constant_signal([0.0]),
        cfg, p_matrix=ex1_l2.certificate.p,
    )

import numpy as np
import pytest
from dataclasses import replace

from lpvsof.dar_model import ScheduledGain
from lpvsof.simulate import (
    DivergedError,
    SimConfig,
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
    step_algebraic,
    yw_sample_check,
    zero_signal,
)

from conftest import ex1_rho_trajectory


def test_step_algebraic_zero_state(ex1, ex1_l2):
    pi, u, y = step_algebraic(ex1, ex1_l2.gains, [0.3], np.zeros(2), np.zeros(1))
    np.testing.assert_array_equal(pi, np.zeros(6))
    np.testing.assert_array_equal(u, np.zeros(1))
    np.testing.assert_array_equal(y, np.zeros(1))


def test_step_algebraic_decoupled_input_channel(ex1, ex1_l2):
    # the measured output has no auxiliary-vector component and the input
    # does not enter the algebraic row, so u = K (C1 x + C3 w) directly
    rng = np.random.default_rng(1)
    for _ in range(20):
        rho = ex1.box.sample(rng, 1)[0]
        x = rng.standard_normal(2)
        w = rng.standard_normal(1)
        pi, u, y = step_algebraic(ex1, ex1_l2.gains, rho, x, w)
        k = ex1_l2.gains(rho)
        np.testing.assert_allclose(u, (k @ (ex1.c1 @ x + ex1.c3 @ w)).ravel(),
                                   atol=1e-10)
        resid = (ex1.ups1(rho) @ x + ex1.ups2(rho) @ pi
                 + ex1.ups3(rho) @ u + ex1.ups4(rho) @ w)
        assert np.max(np.abs(resid)) <= 1e-9


def test_step_algebraic_matches_block_elimination(ex2, ex2_l2):
    # at rho = 0 the input column of the algebraic row vanishes, so the
    # auxiliary vector decouples and the chain can be solved by hand
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal(2)
        w = rng.standard_normal(1)
        rho = np.array([0.0])
        pi_hand = -np.linalg.solve(
            ex2.ups2(rho), ex2.ups1(rho) @ x + ex2.ups4(rho) @ w
        )
        y_hand = ex2.c1 @ x + ex2.c2 @ pi_hand + ex2.c3 @ w
        u_hand = ex2_l2.gains(rho) @ y_hand
        pi, u, y = step_algebraic(ex2, ex2_l2.gains, rho, x, w)
        np.testing.assert_allclose(pi, pi_hand, atol=1e-10)
        np.testing.assert_allclose(u, u_hand.ravel(), atol=1e-10)
        np.testing.assert_allclose(y, y_hand, atol=1e-10)


def test_reference_run_decays(fig_trajectory):
    assert np.linalg.norm(fig_trajectory.x[-1]) <= 1e-3
    v = fig_trajectory.v
    assert np.all(np.diff(v) <= 1e-6 * v[0])


def test_reference_run_algebraic_residual(ex1, fig_trajectory):
    assert fig_trajectory.algebraic_residual(ex1) <= 1e-7


def test_destabilizing_gain_diverges(ex1):
    bad = ScheduledGain((np.array([[100.0]]), np.array([[100.0]])), ex1.box)
    cfg = SimConfig(t_end=10.0, dt=0.01, x0=[1.0, -1.0])
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(DivergedError) as exc_info:
            integrate(ex1, bad, ex1_rho_trajectory(ex1.box),
                      constant_signal([0.0]), cfg)
    assert exc_info.value.partial is not None
    assert exc_info.value.partial.n_samples > 0


def test_zero_initial_state_stays_zero(ex1, ex1_l2):
    cfg = SimConfig(t_end=0.5, dt=1e-3, x0=[0.0, 0.0])
    traj = integrate(ex1, ex1_l2.gains, ex1_rho_trajectory(ex1.box),
                     constant_signal([0.0]), cfg)
    assert np.max(np.abs(traj.x)) == 0.0
    assert np.max(np.abs(traj.u)) == 0.0
    assert traj.z_norm == 0.0


def test_euler_integrator_runs(ex1, ex1_l2):
    cfg = SimConfig(t_end=1.0, dt=1e-3, x0=[1.0, -1.0], integrator="euler")
    traj = integrate(ex1, ex1_l2.gains, ex1_rho_trajectory(ex1.box),
                     constant_signal([0.0]), cfg)
    assert np.all(np.isfinite(traj.x))


def test_rk4_observed_order(ex1, ex1_l2):
    rho = ex1_rho_trajectory(ex1.box)
    w = constant_signal([0.0])
    finals = []
    for dt in (0.02, 0.01, 0.005):
        cfg = SimConfig(t_end=1.0, dt=dt, x0=[1.0, -1.0])
        finals.append(integrate(ex1, ex1_l2.gains, rho, w, cfg).x[-1])
    e_coarse = np.linalg.norm(finals[0] - finals[1])
    e_fine = np.linalg.norm(finals[1] - finals[2])
    order = np.log2(e_coarse / e_fine)
    assert order >= 3.5


def test_l2_report_trivial_and_monotone(fig_trajectory, ex1_l2):
    p = ex1_l2.certificate.p
    rep = l2_report(fig_trajectory, ex1_l2.gamma, p)
    assert rep.bound_ok
    assert rep.w_norm == 0.0
    doubled = l2_report(fig_trajectory, 2.0 * ex1_l2.gamma, p)
    assert doubled.bound_ok
    assert doubled.theta > rep.theta


def test_l2_report_zero_start():
    # a two-sample all-zero trajectory gives the 0 <= 0 case
    from lpvsof.simulate import Trajectory

    traj = Trajectory(
        t=np.array([0.0, 1.0]), x=np.zeros((2, 2)), pi=np.zeros((2, 1)),
        u=np.zeros((2, 1)), y=np.zeros((2, 1)), z=np.zeros((2, 1)),
        w=np.zeros((2, 1)), rho=np.zeros((2, 1)),
        cum_z2=np.zeros(2), cum_w2=np.zeros(2),
    )
    rep = l2_report(traj, 1.5, np.eye(2))
    assert rep.bound_ok and rep.theta == 0.0 and rep.ratio is None


def test_l2_ratio_under_pulse(ex1, ex1_l2):
    cfg = SimConfig(t_end=10.0, dt=1e-3, x0=[0.0, 0.0])
    traj = integrate(ex1, ex1_l2.gains, ex1_rho_trajectory(ex1.box),
                     pulse_signal(1.0, 2.0, 1.0), cfg,
                     p_matrix=ex1_l2.certificate.p)
    rep = l2_report(traj, ex1_l2.gamma, ex1_l2.certificate.p)
    assert rep.ratio is not None
    assert rep.ratio <= ex1_l2.gamma
    assert rep.bound_ok


def stripped_reference_run(ex1_stripped, ex1_stab):
    cfg = SimConfig(t_end=5.0, dt=1e-3, x0=[1.0, -1.0])
    return integrate(
        ex1_stripped, ex1_stab.gains, ex1_rho_trajectory(ex1_stripped.box),
        zero_signal(0), cfg, p_matrix=ex1_stab.certificate.p,
    )


def test_dissipation_audit_passes(ex1_stripped, ex1_stab):
    traj = stripped_reference_run(ex1_stripped, ex1_stab)
    report = dissipation_audit(ex1_stripped, ex1_stab.certificate, traj)
    assert report.passed
    assert report.max_value < 0.0


def test_dissipation_audit_detects_inflated_absorption(ex1_stripped, ex1_stab):
    traj = stripped_reference_run(ex1_stripped, ex1_stab)
    inflated = replace(
        ex1_stab.certificate, h=tuple(1e6 * h for h in ex1_stab.certificate.h)
    )
    report = dissipation_audit(ex1_stripped, inflated, traj)
    assert not report.passed


def test_dissipation_audit_zero_trajectory(ex1_stripped, ex1_stab):
    cfg = SimConfig(t_end=0.2, dt=1e-3, x0=[0.0, 0.0])
    traj = integrate(ex1_stripped, ex1_stab.gains,
                     ex1_rho_trajectory(ex1_stripped.box), zero_signal(0), cfg)
    report = dissipation_audit(ex1_stripped, ex1_stab.certificate, traj)
    assert report.passed
    np.testing.assert_array_equal(report.values, 0.0)


def test_l2_dissipation_audit_passes(ex1, ex1_l2, fig_trajectory):
    report = l2_dissipation_audit(
        ex1, ex1_l2.gains, ex1_l2.gamma, ex1_l2.certificate.p, fig_trajectory
    )
    assert report.passed


def test_l2_dissipation_audit_with_disturbance(ex1, ex1_l2):
    cfg = SimConfig(t_end=5.0, dt=1e-3, x0=[0.2, -0.4])
    traj = integrate(ex1, ex1_l2.gains, ex1_rho_trajectory(ex1.box),
                     seeded_noise_signal(5.0, 1.0, seed=3), cfg)
    good = l2_dissipation_audit(
        ex1, ex1_l2.gains, ex1_l2.gamma, ex1_l2.certificate.p, traj
    )
    assert good.passed
    halved = l2_dissipation_audit(
        ex1, ex1_l2.gains, 0.5 * ex1_l2.gamma, ex1_l2.certificate.p, traj
    )
    assert not halved.passed


def test_yw_sample_check(ex1, ex1_l2):
    report = yw_sample_check(
        ex1, ex1_l2.gains, ex1_l2.gamma, ex1_l2.certificate.p,
        n_samples=200, rng=np.random.default_rng(7),
    )
    assert report.passed
    assert report.worst_value < 0.0
    reduced = yw_sample_check(
        ex1, ex1_l2.gains, 0.5 * ex1_l2.gamma, ex1_l2.certificate.p,
        n_samples=200, rng=np.random.default_rng(7),
    )
    assert reduced.n_violations > 0


def test_signal_primitives():
    s = sine_signal(2.0, 3.0, phase=0.5, offset=1.0)
    assert s(0.0)[0] == pytest.approx(1.0 + 2.0 * np.sin(0.5))
    p = pulse_signal(1.0, 2.0, 5.0)
    assert p(0.5)[0] == 0.0 and p(1.5)[0] == 5.0 and p(2.0)[0] == 0.0
    n = seeded_noise_signal(4.0, 1.0, seed=9)
    other = seeded_noise_signal(4.0, 1.0, seed=9)
    assert n(1.234)[0] == other(1.234)[0]
    ts = np.linspace(0.0, 50.0, 20001)
    rms = np.sqrt(np.mean([n(t)[0] ** 2 for t in ts]))
    assert rms == pytest.approx(1.0, rel=0.25)
    stacked = stack_signals([s, p])
    assert stacked.dim == 2 and stacked(1.5)[1] == 5.0


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(t_end=1.0, dt=0.0, x0=[0.0])
    with pytest.raises(ValueError):
        SimConfig(t_end=0.5, dt=1.0, x0=[0.0])
    with pytest.raises(ValueError):
        SimConfig(t_end=1.0, dt=0.1, x0=[0.0], integrator="rk9")


def test_export_csv_roundtrip(tmp_path, ex1, fig_trajectory):
    fig_trajectory.td = np.zeros(fig_trajectory.n_samples)
    path = tmp_path / "traj.csv"
    export_csv(fig_trajectory, path)
    header = path.read_text().splitlines()[0].split(",")
    assert header == ["t", "x_1", "x_2", "u", "y", "z", "w", "rho", "V", "t_d"]
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert data.shape == (fig_trajectory.n_samples, len(header))
    np.testing.assert_allclose(data[:, 1:3], fig_trajectory.x, rtol=1e-12,
                               atol=1e-300)
    np.testing.assert_allclose(data[:, 8], fig_trajectory.v, rtol=1e-12,
                               atol=1e-300)

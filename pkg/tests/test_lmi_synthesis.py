import numpy as np
import pytest
from dataclasses import replace

from lpvsof.dar_model import DarDims, DarSystem, AffineParamMatrix, lift_l2
from lpvsof.lmi_synthesis import (
    AllInfeasibleError,
    DissipativityData,
    InfeasibleError,
    SynthesisOptions,
    _assemble,
    beta_search,
    build_cdi,
    build_gain_lmi,
    build_yi,
    dissipativity_form_at,
    extract_gains,
    sample_kernel_dissipativity,
    synth_l2,
    synth_stabilize,
    verify_certificate,
)
from lpvsof.numerics import he
from lpvsof.param_domain import ParameterBox, coords
from lpvsof.sdp_core import SdpProblem


def stable_trivial_plant():
    """Open-loop stable single-state plant with identity output and a
    decoupled auxiliary vector."""
    dims = DarDims(n=1, n_pi=1, m=1, p=1, q=0, l=0, r=1)
    return DarSystem(
        dims=dims,
        a1=np.array([[-1.0]]), a2=np.zeros((1, 1)), a3=np.array([[1.0]]),
        a4=np.zeros((1, 0)),
        b1=np.zeros((0, 1)), b2=np.zeros((0, 1)), b3=np.zeros((0, 1)),
        b4=np.zeros((0, 0)),
        c1=np.array([[1.0]]), c2=np.zeros((1, 1)), c3=np.zeros((1, 0)),
        ups1=AffineParamMatrix.zeros(1, 1, 1),
        ups2=AffineParamMatrix.constant(-np.eye(1), 1),
        ups3=AffineParamMatrix.zeros(1, 1, 1),
        ups4=AffineParamMatrix.zeros(1, 0, 1),
        box=ParameterBox([-1.0], [1.0]),
    )


def _numeric_handles(data, l2=False):
    """Fresh problem and handle set for structural evaluations."""
    prob = SdpProblem("structure")
    handles = {
        "p": prob.add_symmetric(data.pdim, "P"),
        "h": [prob.add_symmetric(data.ns, f"H{i}") for i in range(data.n_vertices)],
        "q": [prob.add_symmetric(data.p, f"Q{i}") for i in range(data.n_vertices)],
        "s": [prob.add_rectangular(data.p, data.m, f"S{i}") for i in range(data.n_vertices)],
        "r": prob.add_symmetric(data.m, "R"),
        "l": prob.add_rectangular(data.total, data.n_pi, "L"),
    }
    if l2:
        handles["gamma"] = prob.add_scalar("gamma")
    return prob, handles


def _zero_values(handles, data, l2=False):
    values = {
        handles["p"].uid: np.zeros((data.pdim, data.pdim)),
        handles["r"].uid: np.zeros((data.m, data.m)),
        handles["l"].uid: np.zeros((data.total, data.n_pi)),
    }
    for i in range(data.n_vertices):
        values[handles["h"][i].uid] = np.zeros((data.ns, data.ns))
        values[handles["q"][i].uid] = np.zeros((data.p, data.p))
        values[handles["s"][i].uid] = np.zeros((data.p, data.m))
    if l2:
        values[handles["gamma"].uid] = 0.0
    return values


def test_build_yi_baseline_structure(ex2_stripped):
    # P = I, Q = 0, S = 0, R = I, H = 0 gives [[he(A1), A2, A3], [*, 0, 0],
    # [*, 0, -I]]
    data = DissipativityData.from_dar(ex2_stripped)
    prob, handles = _numeric_handles(data)
    lmi = build_yi(data, 0, handles)
    values = _zero_values(handles, data)
    values[handles["p"].uid] = np.eye(2)
    values[handles["r"].uid] = np.eye(1)
    y = lmi.evaluate(values)
    a1, a2, a3 = ex2_stripped.a1, ex2_stripped.a2, ex2_stripped.a3
    expected = np.block([
        [he(a1), a2, a3],
        [a2.T, np.zeros((4, 4)), np.zeros((4, 1))],
        [a3.T, np.zeros((1, 4)), -np.eye(1)],
    ])
    np.testing.assert_allclose(y, expected, atol=1e-14)
    assert np.allclose(y[:2, :2], he(np.array([[1.0, 2.0], [0.0, -4.0]])))


def test_build_yi_output_terms_structure(ex2_stripped):
    # the supply blocks enter only through the output rows: with both
    # output maps zeroed the form is independent of Q and S, and in general
    # S appears only in the input column blocks
    data = DissipativityData.from_dar(ex2_stripped)
    prob, handles = _numeric_handles(data)
    lmi = build_yi(data, 0, handles)

    base = _zero_values(handles, data)
    with_q = dict(base)
    with_q[handles["q"][0].uid] = 3.0 * np.eye(1)
    with_s = dict(base)
    with_s[handles["s"][0].uid] = np.array([[2.0]])
    delta_s = lmi.evaluate(with_s) - lmi.evaluate(base)
    u_col = data.ns + data.n_pi
    mask = np.ones_like(delta_s, dtype=bool)
    mask[:, u_col:] = False
    mask[u_col:, :] = False
    assert np.all(delta_s[mask] == 0.0)
    assert np.any(delta_s != 0.0)

    blind = replace(data, c1=np.zeros_like(data.c1), c2=np.zeros_like(data.c2))
    lmi_blind = build_yi(blind, 0, handles)
    np.testing.assert_array_equal(
        lmi_blind.evaluate(with_q), lmi_blind.evaluate(base)
    )
    np.testing.assert_array_equal(
        lmi_blind.evaluate(with_s), lmi_blind.evaluate(base)
    )


def test_build_cdi_ex2(ex2_stripped):
    data = DissipativityData.from_dar(ex2_stripped)
    cd0 = build_cdi(data, 0)   # vertex rho = 0
    assert cd0.shape == (4, 2 + 4 + 1)
    np.testing.assert_array_equal(cd0[:, :2], np.zeros((4, 2)))
    np.testing.assert_array_equal(cd0[:, 2:6], -np.eye(4))
    np.testing.assert_array_equal(cd0[:, 6:], np.zeros((4, 1)))

    cd1 = build_cdi(data, 1)   # vertex rho = 1
    np.testing.assert_array_equal(cd1[:, :2], np.array(
        [[1.0, 0.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]
    ))
    np.testing.assert_array_equal(cd1[:, 6:], np.array([[0.0], [0.0], [1.0], [0.0]]))


def test_build_gain_lmi_scalar_expansion():
    prob = SdpProblem("gain")
    handles = {
        "q": [prob.add_symmetric(1, "Q0")],
        "s": [prob.add_rectangular(1, 1, "S0")],
        "r": prob.add_symmetric(1, "R"),
    }
    beta = -1.3
    lmi = build_gain_lmi(handles, 0, beta)
    q, s, r = 0.7, -0.4, 2.0
    values = {
        handles["q"][0].uid: np.array([[q]]),
        handles["s"][0].uid: np.array([[s]]),
        handles["r"].uid: np.array([[r]]),
    }
    np.testing.assert_allclose(
        lmi.evaluate(values),
        [[q + 2.0 * beta * s, beta * r], [beta * r, -r]],
        atol=1e-14,
    )
    zero_beta = build_gain_lmi(handles, 0, 0.0)
    np.testing.assert_allclose(
        zero_beta.evaluate(values), [[q, 0.0], [0.0, -r]], atol=1e-14
    )


def test_build_gain_lmi_rejects_nonfinite_beta():
    prob = SdpProblem("gain")
    handles = {
        "q": [prob.add_symmetric(1, "Q0")],
        "s": [prob.add_rectangular(1, 1, "S0")],
        "r": prob.add_symmetric(1, "R"),
    }
    with pytest.raises(ValueError):
        build_gain_lmi(handles, 0, np.inf)


def test_synth_stabilize_trivial_stable_plant():
    result = synth_stabilize(stable_trivial_plant(), SynthesisOptions(beta=-1.0))
    assert result.solution.ok
    # near-zero gain is admissible for an already stable plant
    assert abs(float(result.gains.gains[0][0, 0])) < 50.0


def test_synth_stabilize_examples(ex1_stab, ex2_stab):
    for result in (ex1_stab, ex2_stab):
        assert result.solution.ok
        assert result.gamma is None
        assert result.diagnostics["worst_lmi_eig"] < 0.0


def test_synth_stabilize_requires_undisturbed(ex1):
    with pytest.raises(Exception, match="q = l = 0|strip"):
        synth_stabilize(ex1, SynthesisOptions(beta=-1.3))


def test_synth_l2_requires_channel(ex1_stripped):
    from lpvsof.dar_model import NoPerformanceChannelError

    with pytest.raises(NoPerformanceChannelError):
        synth_l2(ex1_stripped, SynthesisOptions(beta=-1.3))


def test_synth_requires_beta(ex1):
    with pytest.raises(ValueError, match="beta"):
        synth_l2(ex1, SynthesisOptions())


def test_synth_l2_fixed_above_optimum_feasible(ex1):
    result = synth_l2(
        ex1, SynthesisOptions(beta=-1.3, gamma_mode="fixed", gamma_value=10.0)
    )
    assert result.solution.ok
    assert result.gamma == pytest.approx(10.0)


def test_extract_gains_scalars():
    box = ParameterBox([0.0], [1.0])
    g = extract_gains(np.eye(1), [np.array([[2.0]]), np.array([[2.0]])], box)
    np.testing.assert_allclose(g.gains[0], [[-2.0]])
    g2 = extract_gains(np.array([[2.0]]), [np.array([[3.0]]), np.array([[3.0]])], box)
    np.testing.assert_allclose(g2.gains[0], [[-1.5]])


def test_extract_gains_shape(ex1_l2):
    assert all(k.shape == (1, 1) for k in ex1_l2.gains.gains)
    expected = -np.linalg.solve(ex1_l2.certificate.r, ex1_l2.certificate.s[0].T)
    np.testing.assert_allclose(ex1_l2.gains.gains[0], expected, atol=1e-12)


def test_beta_search_single_entry(ex1, ex1_l2):
    result = beta_search(ex1, [-1.3], SynthesisOptions())
    assert result.beta == -1.3
    assert result.gamma == pytest.approx(ex1_l2.gamma, rel=1e-6)


def test_beta_search_picks_smaller_gamma(ex1):
    result = beta_search(ex1, [-1.3, -29.3], SynthesisOptions())
    assert result.beta == -1.3


def test_beta_search_empty_grid(ex1):
    with pytest.raises(ValueError):
        beta_search(ex1, [], SynthesisOptions())


def test_beta_search_all_infeasible(ex1):
    with pytest.raises(AllInfeasibleError) as exc_info:
        beta_search(ex1, [1e6, 2e6], SynthesisOptions())
    assert set(exc_info.value.statuses) == {1e6, 2e6}


def test_verify_certificate_passes(ex1, ex1_l2):
    report = verify_certificate(ex1, ex1_l2, n_interior=100)
    assert report.passed
    assert report.worst_margin > 0.0


def test_verify_certificate_detects_zeroed_storage(ex1, ex1_l2):
    values = dict(ex1_l2.solution.values)
    values[ex1_l2.handles["p"].uid] = np.zeros((2, 2))
    broken_solution = replace(ex1_l2.solution, values=values)
    broken = replace(ex1_l2, solution=broken_solution)
    report = verify_certificate(ex1, broken, n_interior=5)
    assert not report.passed
    assert any(c.name == "P" and not c.passed for c in report.checks)


def test_polytopic_consistency(ex1, ex1_l2):
    """The convex combination of the vertex constraint matrices equals the
    directly assembled dissipation form at the combined parameter."""
    eps = ex1_l2.diagnostics["eps_strict"]
    values = ex1_l2.solution.values
    vertex_mats = [
        lmi.evaluate(values) - eps * np.eye(lmi.dim)
        for lmi in ex1_l2.problem.constraints
        if lmi.name.startswith("dissipation")
    ]
    cert = ex1_l2.certificate
    data = ex1_l2.data
    rng = np.random.default_rng(23)
    for _ in range(20):
        rho = ex1.box.sample(rng, 1)[0]
        alpha = coords(ex1.box, rho).alpha
        combo = sum(a * m for a, m in zip(alpha, vertex_mats))
        y_rho, cd_rho = dissipativity_form_at(data, cert, rho)
        direct = y_rho + cert.l @ cd_rho + (cert.l @ cd_rho).T
        np.testing.assert_allclose(combo, direct, atol=1e-10)


def test_polytopic_consistency_gain_family(ex1, ex1_l2):
    from lpvsof.lmi_synthesis import gain_condition_form_at

    eps = ex1_l2.diagnostics["eps_strict"]
    values = ex1_l2.solution.values
    vertex_mats = [
        lmi.evaluate(values) - eps * np.eye(lmi.dim)
        for lmi in ex1_l2.problem.constraints
        if lmi.name.startswith("gain")
    ]
    rng = np.random.default_rng(31)
    for _ in range(20):
        rho = ex1.box.sample(rng, 1)[0]
        alpha = coords(ex1.box, rho).alpha
        combo = sum(a * m for a, m in zip(alpha, vertex_mats))
        direct = gain_condition_form_at(
            ex1_l2.certificate, ex1.box, rho, ex1_l2.beta
        )
        np.testing.assert_allclose(combo, direct, atol=1e-10)


def test_kernel_dissipativity_sampling(ex1_l2):
    report = sample_kernel_dissipativity(
        ex1_l2.data, ex1_l2.certificate, 300, rng=np.random.default_rng(2)
    )
    assert report.passed
    assert report.worst_value < 0.0


def test_gain_consistency_supply_rate(ex1, ex1_l2):
    """With u = K(rho) y the scheduled supply rate is nonpositive."""
    cert = ex1_l2.certificate
    rng = np.random.default_rng(4)
    for _ in range(200):
        rho = ex1.box.sample(rng, 1)[0]
        alpha = coords(ex1.box, rho).alpha
        q = sum(a * qi for a, qi in zip(alpha, cert.q))
        s = sum(a * si for a, si in zip(alpha, cert.s))
        k = ex1_l2.gains(rho)
        y = rng.standard_normal(1)
        u = k @ y
        xd = np.block([[q, s], [s.T, cert.r]])
        zeta = np.concatenate([y, u])
        assert float(zeta @ xd @ zeta) <= 1e-12


def test_gamma_enters_linearly(ex1):
    data = DissipativityData.from_bar(lift_l2(ex1))
    mats = []
    gammas = (1.0, 2.0, 3.0)
    values = None
    for g in gammas:
        opts = SynthesisOptions(beta=-1.3, gamma_mode="fixed", gamma_value=g)
        problem, handles = _assemble(data, opts, l2=True, beta=-1.3)
        if values is None:
            rng = np.random.default_rng(9)
            theta = rng.standard_normal(problem.num_unknowns)
            values = problem.values_from_theta(theta)
        target = next(
            lmi for lmi in problem.constraints if lmi.name == "dissipation[0]"
        )
        mats.append(target.evaluate(values))
    first = mats[1] - mats[0]
    second = mats[2] - mats[1]
    np.testing.assert_allclose(first, second, atol=1e-10)
    assert np.any(first != 0.0)


def test_synthesis_options_validation():
    with pytest.raises(ValueError):
        SynthesisOptions(eps_strict=0.0)
    with pytest.raises(ValueError):
        SynthesisOptions(gamma_mode="bogus")
    with pytest.raises(ValueError):
        SynthesisOptions(gamma_mode="fixed")
    with pytest.raises(ValueError):
        SynthesisOptions(gamma_backoff=-1.0)


def test_infeasible_carries_diagnostics(ex1, ex1_l2):
    with pytest.raises(InfeasibleError) as exc_info:
        synth_l2(ex1, SynthesisOptions(
            beta=-1.3, gamma_mode="fixed", gamma_value=0.5 * ex1_l2.gamma
        ))
    assert exc_info.value.solver_status

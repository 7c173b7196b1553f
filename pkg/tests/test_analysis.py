import numpy as np
import pytest

from dckf import analysis, matkit
from dckf.filtering import build_filter, gamma_threshold
from dckf.graph import complete
from dckf.model import NominalModel, Sensor, TrueSystem, deviations
from dckf.solvers import steady_state, propagate
from conftest import random_spd
from test_filtering import random_assumption2_setup, as_true


def tiny_pair():
    """n=1, N=2: small enough to invert the Kronecker sum explicitly."""
    ts = TrueSystem(
        a=[[-1.0]],
        q=[[0.4]],
        sensors=[Sensor(c=[[1.0]], r=[[0.2]]), Sensor(c=[[0.7]], r=[[0.25]])],
        x0=[0.0],
        sigma0=[[0.3]],
    )
    nm = NominalModel(
        a=[[-1.2]],
        q=[[0.5]],
        sensors=[Sensor(c=[[1.1]], r=[[0.3]]), Sensor(c=[[0.6]], r=[[0.2]])],
    )
    return ts, nm, complete(2)


def test_gap_factors_match_explicit_kronecker_inverse():
    ts, nm, topo = tiny_pair()
    fr = build_filter(nm, ts, topo, gamma=3.0)
    acl = fr.closed_loop
    q = acl.shape[0]
    kron_sum = np.kron(np.eye(q), acl) + np.kron(acl, np.eye(q))
    row = matkit.vec(np.eye(q)) @ np.linalg.inv(kron_sum)
    plain_explicit = np.linalg.norm(row)
    weighted_explicit = np.linalg.norm(row @ np.kron(fr.gain_diag, fr.gain_diag))
    plain, weighted = analysis._inverse_vec_norms(acl, fr.gain_diag)
    assert plain == pytest.approx(plain_explicit, rel=1e-12)
    assert weighted == pytest.approx(weighted_explicit, rel=1e-12)


def test_zero_deviation_gap_vanishes(baseline):
    ts, nm, topo = baseline.true_system, baseline.nominal, baseline.topology
    fr = build_filter(nm, ts, topo, float(baseline.resolve_gammas()[0]))
    ss = steady_state(fr, ts, nm)
    rep = analysis.trace_bounds(fr, ss, deviations(ts, nm))
    assert rep.gap == 0.0
    assert rep.lower == pytest.approx(rep.upper)
    assert rep.tr_error == pytest.approx(rep.tr_nominal, rel=1e-10)
    assert rep.sandwich_holds


def test_trace_bounds_sandwich_case1(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    dev = deviations(ts, nm)
    gammas = case1.resolve_gammas()
    fr = build_filter(nm, ts, topo, float(gammas[-1]))
    for g in gammas[::5]:
        frg = fr.with_gamma(float(g))
        rep = analysis.trace_bounds(frg, steady_state(frg, ts, nm), dev)
        assert rep.sandwich_holds
        assert rep.lower == max(0.0, rep.tr_nominal - rep.gap)
        assert rep.upper == rep.tr_nominal + rep.gap


def test_trace_bounds_margin_variants_differ(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    dev = deviations(ts, nm)
    fr = build_filter(nm, ts, topo, float(case1.resolve_gammas()[0]))
    ss = steady_state(fr, ts, nm)
    proof = analysis.trace_bounds(fr, ss, dev, margin_variant="dimension")
    statement = analysis.trace_bounds(fr, ss, dev, margin_variant="sensors")
    # sqrt(nN) shrinks the margin denominator more, giving the larger gap.
    assert proof.cross_margin < statement.cross_margin
    assert proof.gap > statement.gap
    assert statement.sandwich_holds


def test_trace_bounds_rejects_zero_margin():
    ts, nm, topo = tiny_pair()
    fr = build_filter(nm, ts, topo, gamma=3.0)
    a_diag_nom = matkit.kron(np.eye(2), nm.a)
    target = matkit.kron_sum_fro_norm(fr.closed_loop, a_diag_nom)
    # Craft a state-matrix deviation whose stacked norm hits the margin zero.
    d_a_norm = target / (np.sqrt(2.0) * np.sqrt(2.0))
    dev = deviations(
        ts,
        NominalModel(a=nm.a, q=nm.q, sensors=nm.sensors),
    )
    rigged = type(dev)(
        d_a=np.array([[d_a_norm]]), d_c=dev.d_c, d_q=dev.d_q, d_r=dev.d_r
    )
    with pytest.raises(analysis.HypothesisError):
        analysis.deviation_gap(fr, rigged, 1.0, 1.0)


def test_trace_bounds_gamma_gate(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    fr = build_filter(nm, ts, topo, float(case1.resolve_gammas()[-1]))
    below = fr.with_gamma(0.5 * fr.gamma_ref)
    with pytest.raises(analysis.HypothesisError):
        analysis.nominal_trace_floor(below, nm)


def test_nominal_trace_floor_bounds_and_decay(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    gammas = case1.resolve_gammas()
    fr = build_filter(nm, ts, topo, float(gammas[-1]))
    floors = []
    for g in gammas[::4]:
        frg = fr.with_gamma(float(g))
        floor = analysis.nominal_trace_floor(frg, nm)
        tr_nominal = float(np.trace(steady_state(frg, ts, nm).nominal_cov))
        assert floor <= tr_nominal + 1e-12
        floors.append(floor)
    assert all(b < a for a, b in zip(floors, floors[1:]))


def test_nominal_trace_floor_reference_gain_denominator(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    thr = gamma_threshold(nm, topo)
    fr = build_filter(nm, ts, topo, gamma=1.05 * thr)  # working gain == reference gain
    floor = analysis.nominal_trace_floor(fr, nm)
    r_diag_nom = matkit.block_diag([s.r for s in nm.sensors])
    drive = np.trace(fr.gain_diag @ r_diag_nom @ fr.gain_diag.T) + 6 * np.trace(nm.q)
    assert floor == pytest.approx(drive / (2.0 * np.trace(-fr.closed_loop_ref)), rel=1e-12)


def test_asymptotic_fit_case1(case1):
    nm, topo = case1.nominal, case1.topology
    thr = gamma_threshold(nm, topo)
    grid = np.logspace(np.log10(2 * thr), np.log10(200 * thr), 20)
    fit = analysis.asymptotic_fit(nm, topo, grid)
    assert fit.fit_residual <= 1e-3
    assert fit.plain_positive
    # Extrapolation far beyond the fitted range stays within a percent.
    g = 1e4 * thr
    from dckf.filtering import _nominal_core

    core = _nominal_core(nm, topo)
    acl = core.feedback_diag - g * matkit.kron(core.lap, core.p_inf)
    plain, _ = analysis._inverse_vec_norms(acl, core.gain_diag)
    predicted = np.sqrt(fit.a1 + fit.b1 / g + fit.c1 / g**2)
    assert predicted == pytest.approx(plain, rel=0.01)


def test_asymptotic_fit_grid_validation(case1):
    nm, topo = case1.nominal, case1.topology
    thr = gamma_threshold(nm, topo)
    with pytest.raises(ValueError):
        analysis.asymptotic_fit(nm, topo, np.linspace(2 * thr, 3 * thr, 20))  # < decade
    with pytest.raises(ValueError):
        analysis.asymptotic_fit(nm, topo, np.array([2, 3, 40]) * thr)  # too few
    with pytest.raises(ValueError):
        analysis.asymptotic_fit(nm, topo, np.logspace(-1, 1, 8) * thr)  # below threshold


def test_divergence_case2_certificate(case2):
    ts, nm, topo = case2.true_system, case2.nominal, case2.topology
    report = analysis.divergence_test(nm, ts, topo, gamma=10.0)
    assert report.mismatch_zero
    assert len(report.certificates) == 1
    cert = report.certificates[0]
    assert cert.freq == 0.0
    np.testing.assert_allclose(cert.vector.real, [1.0, 0.0, 0.0, 0.0], atol=1e-12)
    assert np.linalg.norm(cert.vector.imag) == 0.0
    assert cert.aug_residual <= 1e-10
    assert cert.will_diverge
    assert cert.growth_rate == pytest.approx(36 * 0.03, rel=1e-12)
    assert report.any_divergence


def test_divergence_case1_empty(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    report = analysis.divergence_test(nm, ts, topo, gamma=600.0)
    assert report.certificates == ()
    assert not report.any_divergence


def test_divergence_pd_nominal_noise_never_certifies():
    rng = np.random.default_rng(31)
    for _ in range(5):
        nm, topo = random_assumption2_setup(rng)  # q is PD by construction
        report = analysis.divergence_test(nm, as_true(nm), topo, gamma=2.0)
        assert report.certificates == ()


def test_divergence_blind_true_noise_not_flagged(case2):
    # Same blind nominal noise, but the true noise is blind too: the mode is
    # certified yet nothing drives it.
    nm, topo = case2.nominal, case2.topology
    ts = case2.true_system
    blind_true = TrueSystem(a=ts.a, q=nm.q, sensors=ts.sensors, x0=ts.x0, sigma0=ts.sigma0)
    report = analysis.divergence_test(nm, blind_true, topo, gamma=10.0)
    assert len(report.certificates) == 1
    cert = report.certificates[0]
    assert not cert.will_diverge
    assert cert.growth_rate == pytest.approx(0.0, abs=1e-12)
    assert not report.any_divergence


def oscillatory_blind_pair():
    """A marginal rotation plane the nominal noise cannot see (complex pair)."""
    a = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    sensors = [Sensor(c=[[1.0, 0.0, 0.0]], r=[[0.2]]), Sensor(c=[[0.0, 0.0, 1.0]], r=[[0.2]])]
    nm = NominalModel(a=a, q=np.diag([0.0, 0.0, 0.1]), sensors=sensors)
    ts = TrueSystem(
        a=a, q=0.03 * np.eye(3), sensors=sensors, x0=np.zeros(3), sigma0=0.1 * np.eye(3)
    )
    return ts, nm, complete(2)


def test_divergence_complex_pair_certificate():
    ts, nm, topo = oscillatory_blind_pair()
    report = analysis.divergence_test(nm, ts, topo, gamma=4.0)
    assert len(report.certificates) == 1  # conjugate pair reported once
    cert = report.certificates[0]
    assert cert.freq == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.norm(cert.vector.imag) > 0.1
    assert cert.aug_residual <= 1e-10
    assert cert.will_diverge
    # Unit eigenvector in the blind plane: excitation is the plane's noise level.
    assert cert.growth_rate == pytest.approx(4 * 0.03, rel=1e-10)


def test_divergence_complex_pair_projected_growth():
    # The two real projections oscillate, but their sum grows linearly at
    # the certificate rate.
    ts, nm, topo = oscillatory_blind_pair()
    report = analysis.divergence_test(nm, ts, topo, gamma=4.0)
    cert = report.certificates[0]
    fr = build_filter(nm, ts, topo, 4.0)
    grid = np.linspace(0.0, 20.0, 81)
    traj = propagate(fr, ts, nm, grid, dt=1e-3)
    v_re = np.kron(np.ones(2), cert.vector.real)
    v_im = np.kron(np.ones(2), cert.vector.imag)
    combined = np.array([v_re @ m @ v_re + v_im @ m @ v_im for m in traj.error_cov])
    slope = np.polyfit(grid[20:], combined[20:], 1)[0]
    assert slope == pytest.approx(cert.growth_rate, rel=1e-6)


def test_relation_case3_nominal_upper_bound(case3):
    ts, nm, topo = case3.true_system, case3.nominal, case3.topology
    dev = deviations(ts, nm)
    fr = build_filter(nm, ts, topo, float(case3.resolve_gammas()[0]))
    grid = np.linspace(0.0, 5.0, 26)
    rel = analysis.relation_analysis(fr, dev, np.zeros((24, 24)), grid)
    assert rel.drive_sign == "psd"
    assert rel.ordering == "nominal_upper"
    assert np.all(rel.gap_min_eig >= -1e-8)
    # Closed form and integrated trajectory agree.
    assert np.max(np.abs(rel.gap - rel.gap_closed)) <= 1e-8
    # The spectral-norm bound dominates the measured norm.
    assert np.all(rel.gap_norm <= rel.gap_norm_bound + 1e-10)
    assert abs(rel.coupling_log_norm) <= 1e-10


def test_relation_matches_propagate_difference(case3):
    ts, nm, topo = case3.true_system, case3.nominal, case3.topology
    dev = deviations(ts, nm)
    fr = build_filter(nm, ts, topo, float(case3.resolve_gammas()[0]))
    grid = np.linspace(0.0, 3.0, 13)
    init = case3.initial_state()
    rel = analysis.relation_analysis(fr, dev, init.nominal_cov - init.error_cov, grid)
    traj = propagate(fr, ts, nm, grid, dt=1e-3, init=init)
    diff = traj.nominal_cov - traj.error_cov
    assert np.max(np.abs(rel.gap - diff)) <= 1e-9


def test_relation_zero_drive_zero_gap(baseline):
    ts, nm, topo = baseline.true_system, baseline.nominal, baseline.topology
    fr = build_filter(nm, ts, topo, float(baseline.resolve_gammas()[0]))
    dev = deviations(ts, nm)
    grid = np.linspace(0.0, 2.0, 11)
    rel = analysis.relation_analysis(fr, dev, np.zeros((24, 24)), grid)
    assert rel.drive_sign == "zero"
    assert np.max(np.abs(rel.gap)) == 0.0
    assert np.max(rel.gap_norm_bound) == 0.0
    assert rel.ordering == "nominal_upper"


def test_relation_bound_on_random_admissible_scenarios():
    rng = np.random.default_rng(17)
    accepted = 0
    while accepted < 5:
        nm, topo = random_assumption2_setup(rng)
        n = nm.n
        thr = gamma_threshold(nm, topo)
        fr_probe = build_filter(nm, as_true(nm), topo, gamma=1.2 * thr)
        if np.linalg.norm(fr_probe.closed_loop, 2) > 300.0:
            continue  # keep the capped integrator fast
        accepted += 1
        # True system shares a and c; only the noise intensities deviate.
        shrink = rng.uniform(0.3, 0.9)
        ts = TrueSystem(
            a=nm.a,
            q=shrink * nm.q,
            sensors=[Sensor(c=s.c, r=0.8 * s.r) for s in nm.sensors],
            x0=np.zeros(n),
            sigma0=np.eye(n),
        )
        fr = build_filter(nm, ts, topo, gamma=1.2 * thr)
        e0 = random_spd(rng, n * nm.sensor_count, floor=0.0)
        grid = np.linspace(0.0, 2.0, 21)
        rel = analysis.relation_analysis(fr, deviations(ts, nm), e0, grid, dt=2.5e-4)
        assert np.all(rel.gap_norm <= rel.gap_norm_bound * (1 + 1e-9) + 1e-12)
        assert np.max(np.abs(rel.gap - rel.gap_closed)) <= 1e-8


def test_relation_indefinite_drive_inconclusive():
    ts, nm, topo = tiny_pair()
    # Same a and c, mixed-sign noise deviations: one r up, one r down.
    nm2 = NominalModel(
        a=ts.a,
        q=ts.q,
        sensors=[
            Sensor(c=ts.sensors[0].c, r=ts.sensors[0].r + 0.2),
            Sensor(c=ts.sensors[1].c, r=ts.sensors[1].r - 0.1),
        ],
    )
    fr = build_filter(nm2, ts, topo, gamma=3.0)
    rel = analysis.relation_analysis(
        fr, deviations(ts, nm2), np.zeros((2, 2)), np.linspace(0, 1, 6)
    )
    assert rel.drive_sign == "indefinite"
    assert rel.ordering == "inconclusive"


def test_relation_rejects_state_deviation(case1):
    ts, nm, topo = case1.true_system, case1.nominal, case1.topology
    fr = build_filter(nm, ts, topo, float(case1.resolve_gammas()[0]))
    with pytest.raises(analysis.HypothesisError):
        analysis.relation_analysis(
            fr, deviations(ts, nm), np.zeros((24, 24)), np.linspace(0, 1, 6)
        )

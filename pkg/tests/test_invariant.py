import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcl import kernels
from bcl.errors import CertificateInfeasible, NonPD, PreconditionViolated
from bcl.invariant import (
    InvariantCertificate,
    check_lmi_prop1,
    check_lmi_prop2,
    corner_a_builder,
    fixed_certificate,
    monte_carlo_invariance,
    search_trivial_solution,
    skew_samples,
    slack_a,
    witness_slack,
)
from bcl.linalg import build_A0, build_Ag
from bcl.perf import PerformanceSpec, ppf

A0 = build_A0([2, 3, 4])
I3 = np.eye(3)
G1 = [(1.0, 1.0)] * 3


def test_witness_examples():
    assert witness_slack(A0, I3, 0.5) == pytest.approx(-1.9, abs=1e-12)
    assert witness_slack(A0, 10 * I3, 0.5) == pytest.approx(2.6, abs=1e-12)
    ok, (sa, sb) = check_lmi_prop1(A0, skew_samples(G1), I3, I3, 0.5, 0.1, 0.5, form="eq5")
    assert ok and sa == pytest.approx(-1.9) and sb == pytest.approx(-0.1)
    ok, (sa, _) = check_lmi_prop1(A0, skew_samples(G1), I3, 10 * I3, 0.5, 0.1, 0.5, form="eq5")
    assert not ok and sa == pytest.approx(2.6)


@given(st.lists(st.floats(0.1, 5.0), min_size=2, max_size=2), st.floats(0.01, 100.0))
def test_trivial_x_cancels_skew_part(g, vh):
    Ag = build_Ag(g, 3)
    X = vh * I3
    np.testing.assert_allclose(Ag @ X + X @ Ag.T, 0.0, atol=1e-12)


@pytest.mark.parametrize("form", ["eq5", "h-matrix"])
@given(st.integers(0, 2), st.floats(0.0, 3.0))
@settings(max_examples=40)
def test_slack_monotone_in_gains(form, i, dk):
    k = [2.0, 3.0, 4.0]
    k2 = list(k)
    k2[i] += dk
    X = np.diag([0.7, 1.1, 1.3])
    a = slack_a(build_A0(k), X, I3, 0.5, 0.1, 0.5, form)
    b = slack_a(build_A0(k2), X, I3, 0.5, 0.1, 0.5, form)
    assert b <= a + 1e-12


@pytest.mark.parametrize("form", ["eq5", "h-matrix"])
def test_search_case_a(form):
    cert = search_trivial_solution(A0, 0.5, I3, G1, form=form)
    assert cert.form == form
    np.testing.assert_allclose(cert.P @ cert.X, I3, atol=1e-8)
    assert cert.witness_slack == pytest.approx(-1.9)
    if cert.feasible:
        ok, _ = check_lmi_prop1(A0, skew_samples(G1), cert.X, cert.W, cert.alpha, cert.eps_lmi, 0.5, form=form)
        assert ok
        assert cert.gamma_inf == pytest.approx(0.01 / cert.X[0, 0])


def test_search_rejects_fast_kappa():
    with pytest.raises(PreconditionViolated):
        search_trivial_solution(A0, 2.5, I3, G1)


def test_heavy_weight_infeasible_under_eq5():
    cert = search_trivial_solution(A0, 0.5, 1e6 * I3, G1, form="eq5")
    assert not cert.feasible and cert.max_eig_H > 0


def test_non_pd_inputs():
    with pytest.raises(NonPD):
        check_lmi_prop1(A0, skew_samples(G1), -I3, I3, 0.5, 0.1, 0.5)
    with pytest.raises(NonPD):
        check_lmi_prop1(A0, skew_samples(G1), I3, np.diag([1.0, 0.0, 1.0]), 0.5, 0.1, 0.5)


def test_prop2_block_diagonal():
    ok, info = check_lmi_prop2(build_A0([1, 1, 1]), skew_samples(G1), 4.0, 4.0 * np.eye(2), I3, 0.5, 0.1, 0.5,
                               (1.0, 1e7), 0.0, form="h-matrix", omega_samples=[[0.1, 0.1, 0.0]])
    assert info["X"].shape == (3, 3)
    assert set(info["disturbance_ok"]) == {1.0, 1e7}
    assert info["slack_b"] == pytest.approx(-0.4)
    with pytest.raises(ValueError):
        check_lmi_prop2(A0, skew_samples(G1), 1.0, np.eye(2), I3, 0.5, 0.1, 0.5, (1, 2), -1.0)


def test_certificate_round_trip(tmp_path, cert_a):
    path = tmp_path / "c.json"
    cert_a.save(path)
    back = InvariantCertificate.load(path)
    np.testing.assert_array_equal(back.X, cert_a.X)
    assert back.feasible == cert_a.feasible and back.form == cert_a.form
    assert "Gamma_inf" in back.report()


def _mc(cert, **kw):
    spec = PerformanceSpec()
    args = dict(n_trials=60, horizon=10.0, rng_seed=7)
    args.update(kw)
    return monte_carlo_invariance(corner_a_builder(A0, G1), cert, lambda t: ppf(spec, t), **args)


def test_monte_carlo_pass_and_fail(cert_a):
    good = _mc(cert_a)
    assert good.passed, good.summary()
    bad = _mc(cert_a, omega_scale=5.0)
    assert not bad.passed
    assert "FAIL" in bad.summary()


def test_monte_carlo_deterministic(cert_a):
    a = _mc(cert_a, n_trials=20, workers=1)
    b = _mc(cert_a, n_trials=20, workers=3)
    assert a.max_v_ratio == b.max_v_ratio and a.max_z1_ratio == b.max_z1_ratio


def test_monte_carlo_sound_for_accepted_certificates():
    # any certificate accepted at tol = 0 must survive the boundary-started trials
    A2 = build_A0([1.5, 2.5])
    g2 = [(0.5, 2.0), (1.0, 1.0)]
    cert = search_trivial_solution(A2, 0.5, np.eye(2), g2)
    assert cert.feasible
    spec = PerformanceSpec()
    rep = monte_carlo_invariance(corner_a_builder(A2, g2), cert, lambda t: ppf(spec, t), 40, 8.0, 3)
    assert rep.passed, rep.summary()


def test_monte_carlo_vacuous_and_infeasible(cert_a):
    assert _mc(cert_a, n_trials=0).passed
    bad = fixed_certificate(A0, 0.5, 1e6 * I3, G1, 1.0, 0.5, 0.1, form="eq5")
    with pytest.raises(CertificateInfeasible):
        _mc(bad)


def test_zero_state_stays_zero():
    K, n, seg = 3, 3, 5
    A = np.repeat(A0[None], K, axis=0)
    rho = np.ones(seg * 10 + 1)
    for backend in ["python"] + (["compiled"] if kernels.COMPILED_AVAILABLE else []):
        v, z = kernels.linear_trials(A, I3, np.zeros((K, n)), np.zeros((K, seg, n)), 10, 0.01, rho, rho,
                                     backend=backend)
        assert np.all(v == 0) and np.all(z == 0)

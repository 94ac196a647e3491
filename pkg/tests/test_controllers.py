import math
from dataclasses import replace

import numpy as np
import pytest

from bcl.controllers import (
    BcfbState,
    BpcState,
    ControllerConfig,
    Region,
    bcfb_aux_derivative,
    bcfb_control,
    bcfb_errors,
    bpc_aux_derivative,
    bpc_control,
    bpc_errors,
    cfb_aux_derivative,
    cfb_control,
    compact_form_bcfb,
    compact_form_bpc,
)
from bcl.errors import CertificateInfeasible, GainSingularity, NonPositiveRho
from bcl.perf import EtfState, PerformanceSpec, etf_forward, ppf
from bcl.plant import PlantModel, make_paper_disturbance, make_paper_plant
from oracles import bcfb_residual, bpc_residual, random_states

SPEC = PerformanceSpec()
N_STATES = 1000


def _wobbly_plant():
    # state-dependent input gains so the skew coupling terms are exercised
    return PlantModel(
        n=3,
        f=(lambda xb: math.sin(xb[0]), lambda xb: xb[0] * xb[1], lambda xb: math.cos(xb[2]) - xb[0]),
        g=(lambda xb: 1.0 + 0.4 * math.sin(xb[0]), lambda xb: 1.2 + 0.3 * math.cos(xb[1]),
           lambda xb: 0.9 + 0.2 * math.tanh(xb[2])),
        u_min=-5.0, u_max=5.0,
    )


def _zero_plant(n=3):
    return PlantModel(n=n, f=(lambda xb: 0.0,) * n, g=(lambda xb: 1.0,) * n, u_min=-5.0, u_max=5.0)


@pytest.mark.parametrize("plant", ["paper", "wobbly"])
def test_bcfb_compact_form(case_a, cert_a, rng, plant):
    loop = case_a.build_loop(cert_a)
    if plant == "wobbly":
        loop = replace(loop, plant=_wobbly_plant())
    fps = []
    for t, y in random_states(loop, rng, N_STATES):
        z_num, rhs, out, omega = bcfb_residual(loop, t, y)
        assert np.max(np.abs(z_num - rhs)) <= 1e-8
        eta = y[2 * loop.n - 1:]
        np.testing.assert_allclose(compact_form_bcfb(out, eta, omega, loop.controller.k), rhs, rtol=0, atol=1e-8)
        fps.append(out.f_p)
    fps = np.array(fps)
    assert np.any(fps == 0.0) and np.any(fps == 1.0)


def test_cfb_closed_loop_identity(case_a, cert_a, rng):
    # the baseline closes stage 1 on s1, so z1' carries an uncancelled k1*eta1
    loop = replace(case_a.build_loop(cert_a), controller=replace(case_a.controller, kind="cfb"))
    k = np.asarray(loop.controller.k)
    n = loop.n
    for t, y in random_states(loop, rng, 200):
        dy, out, omega, _ = loop.evaluate(t, y)
        xc, eta = y[n:2 * n - 1], y[2 * n - 1:]
        z1_dot = dy[0] - math.cos(t) - dy[2 * n - 1]
        s = np.concatenate(([y[0] - math.sin(t)], y[1:n] - xc))
        z = s - eta
        expected = -k[0] * s[0] + out.g[0] * z[1] + omega[0] + k[0] * eta[0]
        assert z1_dot == pytest.approx(expected, abs=1e-8)
        np.testing.assert_allclose(compact_form_bcfb(out, eta, omega, k, use_balance=False)[1:],
                                   (dy[1:n] - dy[n:2 * n - 1] - dy[2 * n:]), atol=1e-8)


def _bpc_loop(case_b, cert_b, nu, plant=None):
    loop = case_b.build_loop(cert_b)
    loop = replace(loop, controller=replace(case_b.controller, nu=nu))
    if plant is not None:
        loop = replace(loop, plant=plant)
    return loop


@pytest.mark.parametrize("nu, plant", [(0.0, None), (0.5, None), (1.0, "wobbly"), (-0.5, "wobbly")])
def test_bpc_compact_form(case_b, cert_b, rng, nu, plant):
    loop = _bpc_loop(case_b, cert_b, nu, _wobbly_plant() if plant else None)
    n = loop.n
    k = np.asarray(loop.controller.k)
    spec = loop.perf
    seen_ft = set()
    for t, y in random_states(loop, rng, N_STATES):
        z_num, rhs, out, omega = bpc_residual(loop, t, y)
        assert not out.clamped
        rho, eta = y[2 * n - 1], y[2 * n:]
        assert np.max(np.abs(z_num - rhs)) <= 1e-8
        np.testing.assert_allclose(compact_form_bpc(out, eta, omega, rho, spec, k, nu), rhs, rtol=0, atol=1e-8)
        seen_ft.add(out.f_t if out.f_t in (0.0, 1.0) else 0.5)
    assert {0.0, 1.0} <= seen_ft


def test_bcfb_errors_examples(case_a, cert_a):
    st = BcfbState.zero(3)
    s, z = bcfb_errors([0.3, 0.2, -0.1], 0.3, st)
    assert s[0] == 0.0 and np.array_equal(s, z)
    loop = case_a.build_loop(cert_a)
    y0 = loop.initial_state()
    out = loop.evaluate(0.0, y0)[1]
    assert out.s[0] == pytest.approx(-0.8)
    np.testing.assert_array_equal(out.x_e, 0.0)
    np.testing.assert_array_equal(out.s, out.z)


def test_equilibrium_gives_zero_input(cert_a):
    model = _zero_plant()
    st = BcfbState.zero(3)
    for law in (bcfb_control, cfb_control):
        out = law(model, np.zeros(3), 0.0, 0.0, st, cert_a, 1.0, 0.9, (2, 3, 4), (0.01, 0.01))
        assert out.u_raw == 0.0 and out.region == Region.SAFE and out.f_p == 1.0
    bst = BpcState(rho=1.0, eta=np.zeros(2), x_c=np.zeros(2))
    out = bpc_control(model, np.zeros(3), 0.0, 0.0, bst, np.eye(3), SPEC, SPEC.etf(), (1, 1, 1), (0.01, 0.01))
    assert out.u_raw == 0.0 and out.z[0] == 0.0


def test_scalar_reduction(cert_a):
    from bcl.invariant import InvariantCertificate

    model = PlantModel(n=1, f=(lambda xb: 0.3,), g=(lambda xb: 2.0,), u_min=-5.0, u_max=5.0)
    cert = InvariantCertificate(X=np.eye(1), W=np.eye(1), alpha=1.0, eps_lmi=0.1, kappa=0.5, v_h=1.0,
                                feasible=True, gamma_inf=0.01, max_eig_H=-1.0)
    st = BcfbState(eta=np.array([0.1]), x_c=np.zeros(0))
    out = bcfb_control(model, np.array([0.5]), 0.2, 0.7, st, cert, 1.0, 0.9, (3.0,), ())
    z1 = 0.5 - 0.2 - 0.1
    assert out.u_raw == pytest.approx((-3.0 * z1 - 0.3 + 0.7) / 2.0)


def test_cfb_matches_bcfb_at_start(case_a, cert_a):
    a = case_a.build_loop(cert_a)
    b = replace(a, controller=replace(case_a.controller, kind="cfb"))
    ya, yb = a.initial_state(), b.initial_state()
    np.testing.assert_array_equal(ya, yb)
    assert a.evaluate(0.0, ya)[1].u_raw == b.evaluate(0.0, yb)[1].u_raw


def test_cfb_requires_no_certificate(case_a):
    loop = replace(case_a, controller=replace(case_a.controller, kind="cfb")).build_loop(None)
    assert not loop.cert.feasible
    with pytest.raises(CertificateInfeasible):
        case_a.build_loop(None)


def test_bcfb_aux_examples():
    k = (2.0, 3.0, 4.0)
    g = np.ones(3)
    eta = np.array([0.4, 0.0, 0.1])
    d = bcfb_aux_derivative(eta, 1.0, g, np.zeros(2), 0.0, k)
    assert d[0] == pytest.approx(-0.8)
    eta = np.array([0.4, 0.2, 0.1])
    x_e = np.array([0.05, -0.02])
    d0 = bcfb_aux_derivative(eta, 0.0, g, x_e, 0.3, k)
    assert d0[0] == pytest.approx(0.25)
    c = cfb_aux_derivative(eta, g, x_e, 0.3, k)
    assert c[0] - d0[0] == pytest.approx(-k[0] * eta[0])
    np.testing.assert_allclose(c[1:], d0[1:])
    assert c[2] == pytest.approx(-0.4 + 0.3)
    np.testing.assert_array_equal(bcfb_aux_derivative(np.zeros(3), 0.37, g, np.zeros(2), 0.0, k), 0.0)


def test_bpc_aux_examples():
    g = np.ones(3)
    k = (1.0, 1.0, 1.0)
    rd, _ = bpc_aux_derivative(1.0, np.zeros(2), 1.0, 0.0, 0.1, g, np.zeros(2), 0.0, SPEC, k)
    assert rd == pytest.approx(-0.45)
    rd, _ = bpc_aux_derivative(0.6, np.array([0.3, 0.0]), 0.0, 0.0, 0.0, g, np.zeros(2), 0.0, SPEC, k)
    assert rd == 0.0
    rd, de = bpc_aux_derivative(0.5, np.array([0.3, 0.1]), 0.0, 1.0, 0.25, g, np.array([0.1, 0.0]), 0.2, SPEC, k)
    assert rd == pytest.approx((0.5 / 0.25) * 0.4)
    np.testing.assert_allclose(de, [-0.3 + 0.1, -0.1 + 0.2])


def test_bpc_errors_examples():
    etf = EtfState()
    st = BpcState(rho=0.4, eta=np.array([0.1, -0.2]), x_c=np.array([0.5, 0.5]))
    s, z, e, clamped = bpc_errors([0.2, 0.7, 0.1], 0.0, st, etf)
    assert z[0] == s[0] == pytest.approx(0.549306, abs=1e-6) and not clamped
    np.testing.assert_allclose(z[1:], [0.2 - 0.1, -0.4 + 0.2])
    s, z, _, _ = bpc_errors([0.0, 0.5, 0.5], 0.0, replace(st, eta=np.zeros(2)), etf)
    assert z[0] == 0.0 and np.array_equal(s, z)
    _, _, _, clamped = bpc_errors([5.0, 0.0, 0.0], 0.0, st, etf)
    assert clamped
    with pytest.raises(NonPositiveRho):
        bpc_errors([0, 0, 0], 0.0, replace(st, rho=0.0), etf)


def test_bpc_x2d_uses_inverse_mu_at_nu_zero():
    model = _zero_plant()
    etf = EtfState()
    st = BpcState(rho=0.5, eta=np.zeros(2), x_c=np.zeros(2), nu=0.0)
    out = bpc_control(model, np.array([0.25, 0.0, 0.0]), 0.0, 0.0, st, np.eye(3), SPEC, etf, (1.3, 1, 1), (1, 1))
    mu = out.mu
    assert mu == pytest.approx(0.5 * (1 / 1.5 + 1 / 0.5) / 0.5)
    assert out.x_d[0] == pytest.approx(-1.3 / mu * math.atanh(0.5))


def test_bpc_regions():
    model = _zero_plant()
    etf = EtfState()
    P = np.eye(3)
    st = BpcState(rho=1.0, eta=np.zeros(2), x_c=np.array([0.0, 0.0]))
    k, tau = (1, 1, 1), (1, 1)
    assert bpc_control(model, np.array([0.01, 0.1, 0.1]), 0.0, 0.0, st, P, SPEC, etf, k, tau).region == Region.SAFE
    dz = bpc_control(model, np.array([0.01, 0.9, 0.0]), 0.0, 0.0, st, P, SPEC, etf, k, tau)
    assert dz.region == Region.DEADZONE and dz.f_t == 0.0
    tr = bpc_control(model, np.array([0.3, 0.8, 0.0]), 0.0, 0.0, st, P, SPEC, etf, k, tau)
    assert tr.region == Region.TRANSITION and 0 < tr.f_p < 1 and tr.f_t == 1.0
    out = bpc_control(model, np.array([0.3, 2.0, 0.0]), 0.0, 0.0, st, P, SPEC, etf, k, tau)
    assert out.region == Region.OUTSIDE and out.f_p == 0.0
    forced = bpc_control(model, np.array([0.3, 2.0, 0.0]), 0.0, 0.0, st, P, SPEC, etf, k, tau, force_safe=True)
    assert forced.f_p == 1.0


def test_bpc_band_from_finite_z1(rng):
    etf = EtfState(1.3, 0.6)
    for z1 in rng.uniform(-15, 15, 200):
        rho = rng.uniform(0.05, 2.0)
        e = rho * etf_forward(etf, z1)
        assert -0.6 * rho < e < 1.3 * rho or abs(z1) > 14


def test_balanced_eta1_stays_zero_when_safe(cert_a):
    # f_p = 1, eta(0) = 0, no saturation and no filter error: eta1 never moves
    eta = np.array([0.0, 0.3, -0.2])
    d = bcfb_aux_derivative(eta, 1.0, np.ones(3), np.array([0.2, 0.1]), 0.4, (2, 3, 4))
    assert d[0] == 0.0


def test_gain_singularity(cert_a):
    model = PlantModel(n=3, f=(lambda xb: 0.0,) * 3, g=(lambda xb: 1.0, lambda xb: 1e-12, lambda xb: 1.0),
                       u_min=-5, u_max=5)
    with pytest.raises(GainSingularity):
        bcfb_control(model, np.zeros(3), 0.0, 0.0, BcfbState.zero(3), cert_a, 1.0, 0.9, (2, 3, 4), (0.01, 0.01))


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig("ppc", (1, 1), (0.1,))
    with pytest.raises(ValueError):
        ControllerConfig("bcfb", (1, -1), (0.1,))
    with pytest.raises(ValueError):
        ControllerConfig("bcfb", (1, 1), ())
    with pytest.raises(ValueError):
        ControllerConfig("bpc", (1, 1), (0.1,), nu=-1.0)
    assert ControllerConfig("bpc", [1, 2], [0.1]).n == 2


def test_saturation_feeds_last_aux_state(case_a, cert_a):
    loop = replace(case_a.build_loop(cert_a), plant=make_paper_plant(u_max=0.5))
    y = loop.initial_state()
    dy, out, _, _ = loop.evaluate(0.0, y)
    assert out.u_applied in (-0.5, 0.5) and out.delta_u != 0
    assert dy[-1] == pytest.approx(-4.0 * y[-1] + out.delta_u)
    assert ppf(loop.perf, 0.0) == 1.0 and make_paper_disturbance().pulse(0.0) == 0.0

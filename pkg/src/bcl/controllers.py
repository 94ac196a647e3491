"""Control laws: balanced command-filtered backstepping (bcfb), the plain
command-filtered baseline (cfb) and balanced performance control (bpc).

Every law is a pure function of the current plant state, reference and
controller state; the simulator owns integration.  Arrays follow zero-based
stage indexing, so ``k[0]`` is the first-stage gain and ``x_c[0]`` is the
filter that produces the second-stage command.
"""

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import GainSingularity, NonPositiveRho
from .perf import dzt, etf_inverse, etf_lambda, pse_bcfb, pse_bpc
from .plant import saturate

KINDS = ("bcfb", "cfb", "bpc")
GAIN_EPS = 1e-9


class Region(IntEnum):
    SAFE = 0
    TRANSITION = 1
    OUTSIDE = 2
    DEADZONE = 3

    @property
    def label(self):
        return {0: "Safe", 1: "Transition", 2: "Outside", 3: "DeadZone"}[int(self)]

    @classmethod
    def from_label(cls, text):
        for r in cls:
            if r.label == text:
                return r
        raise ValueError(f"unknown region {text!r}")


@dataclass(frozen=True)
class ControllerConfig:
    kind: str
    k: tuple
    tau: tuple
    nu: float = 0.0
    force_safe: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"controller must be one of {KINDS}, got {self.kind!r}")
        object.__setattr__(self, "k", tuple(float(v) for v in self.k))
        object.__setattr__(self, "tau", tuple(float(v) for v in self.tau))
        if not self.k or any(not (v > 0) for v in self.k):
            raise ValueError(f"gains must be positive, got {self.k}")
        if len(self.tau) != len(self.k) - 1:
            raise ValueError(f"{len(self.k)} stages need {len(self.k) - 1} filter constants, got {len(self.tau)}")
        if any(not (v > 0) for v in self.tau):
            raise ValueError(f"filter constants must be positive, got {self.tau}")
        if not (self.nu > -1):
            raise ValueError(f"nu must exceed -1, got {self.nu}")

    @property
    def n(self):
        return len(self.k)


@dataclass
class BcfbState:
    eta: np.ndarray
    x_c: np.ndarray

    @classmethod
    def zero(cls, n):
        return cls(eta=np.zeros(n), x_c=np.zeros(n - 1))


@dataclass
class BpcState:
    rho: float
    eta: np.ndarray  # stages 2..n
    x_c: np.ndarray
    nu: float = 0.0


@dataclass
class ControlOutput:
    u_raw: float
    u_applied: float
    x_d: np.ndarray
    x_c_dot: np.ndarray
    x_e: np.ndarray
    s: np.ndarray
    z: np.ndarray
    f_p: float
    f_t: float
    region: Region
    lyap: float
    level: float
    g: np.ndarray = field(repr=False, default=None)
    f: np.ndarray = field(repr=False, default=None)
    e: float = 0.0
    mu: float = 1.0
    clamped: bool = False

    @property
    def delta_u(self):
        return self.u_applied - self.u_raw


def _check_gains(g):
    for i, gi in enumerate(g):
        if abs(gi) < GAIN_EPS:
            raise GainSingularity(f"|g_{i + 1}| = {abs(gi):.3e} too small to invert")


def backstep(f, g, s, z, k, x_c, tau, v1, c2):
    """Recursive virtual controls.

    ``v1`` is the first-stage numerator (divided by g_1 to give x_{2,d}) and
    ``c2`` the coupling term subtracted at stage 2.  Returns
    ``(x_d, x_c_dot, u)`` where ``x_d[j]`` is the command for stage j+2.
    """
    n = len(s)
    x_d = np.empty(n - 1)
    x_c_dot = np.empty(n - 1)
    virt = v1 / g[0]
    for i in range(1, n):
        x_d[i - 1] = virt
        x_c_dot[i - 1] = (virt - x_c[i - 1]) / tau[i - 1]
        coupling = c2 if i == 1 else g[i - 1] * z[i - 1]
        virt = (-k[i] * s[i] - f[i] - coupling + x_c_dot[i - 1]) / g[i]
    return x_d, x_c_dot, virt


def bcfb_errors(x, y_d, st):
    x = np.asarray(x, dtype=float)
    s = np.empty_like(x)
    s[0] = x[0] - y_d
    s[1:] = x[1:] - st.x_c
    return s, s - st.eta


def _bcfb_like(model, x, y_d, yd_dot, st, cert, rho_t, sigma, k, tau, use_s1):
    x = np.asarray(x, dtype=float)
    f = model.f_values(x)
    g = model.g_values(x)
    _check_gains(g)
    s, z = bcfb_errors(x, y_d, st)
    first = s[0] if use_s1 else z[0]
    v1 = -k[0] * first - f[0] + yd_dot
    c2 = g[0] * z[0]
    x_d, x_c_dot, u = backstep(f, g, s, z, k, st.x_c, tau, v1, c2)
    P = cert.P
    V = float(z @ P @ z)
    gamma = rho_t * rho_t / float(cert.X[0, 0])
    f_p = pse_bcfb(V, gamma, sigma * gamma)
    if V <= sigma * gamma:
        region = Region.SAFE
    elif V < gamma:
        region = Region.TRANSITION
    else:
        region = Region.OUTSIDE
    ua = saturate(u, model.u_min, model.u_max)
    return ControlOutput(
        u_raw=u, u_applied=ua, x_d=x_d, x_c_dot=x_c_dot, x_e=st.x_c - x_d, s=s, z=z, f_p=f_p, f_t=1.0,
        region=region, lyap=V, level=gamma, g=g, f=f, e=x[0] - y_d,
    )


def bcfb_control(model, x, y_d, yd_dot, st, cert, rho_t, sigma, k, tau):
    return _bcfb_like(model, x, y_d, yd_dot, st, cert, rho_t, sigma, k, tau, use_s1=False)


def cfb_control(model, x, y_d, yd_dot, st, cert, rho_t, sigma, k, tau):
    """Baseline law: identical to bcfb except x_{2,d} is built from s_1.

    The safety evaluation is still computed for labelling but never used.
    """
    return _bcfb_like(model, x, y_d, yd_dot, st, cert, rho_t, sigma, k, tau, use_s1=True)


def _dev(eta, x_e, delta_u, i):
    """Destabilising input of stage i: eta_{i+1} + x_{i+1,e}, or the saturation excess at the last stage."""
    if i == len(eta) - 1:
        return delta_u
    return eta[i + 1] + x_e[i]


def bcfb_aux_derivative(eta, f_p, g, x_e, delta_u, k):
    n = len(eta)
    d = np.empty(n)
    d[0] = -f_p * k[0] * eta[0] + (1.0 - f_p) * g[0] * _dev(eta, x_e, delta_u, 0)
    for i in range(1, n):
        d[i] = -k[i] * eta[i] + g[i] * _dev(eta, x_e, delta_u, i)
    return d


def cfb_aux_derivative(eta, g, x_e, delta_u, k):
    n = len(eta)
    d = np.empty(n)
    for i in range(n):
        d[i] = -k[i] * eta[i] + g[i] * _dev(eta, x_e, delta_u, i)
    return d


def bpc_errors(x, y_r, st, etf):
    """Returns ``(s, z, e, clamped)``; z_1 = s_1 is the transformed tracking error."""
    if not (st.rho > 0):
        raise NonPositiveRho(f"rho must stay positive, got {st.rho}")
    x = np.asarray(x, dtype=float)
    e = x[0] - y_r
    r = e / st.rho
    rc, clamped = etf.clamp(r)
    s = np.empty_like(x)
    s[0] = etf_inverse(etf, rc, clamp=False)
    s[1:] = x[1:] - st.x_c
    z = s.copy()
    z[1:] -= st.eta
    return s, z, e, clamped


def bpc_control(model, x, y_r, yr_dot, st, P, spec, etf, k, tau, force_safe=False):
    x = np.asarray(x, dtype=float)
    f = model.f_values(x)
    g = model.g_values(x)
    _check_gains(g)
    s, z, e, clamped = bpc_errors(x, y_r, st, etf)
    lam = etf_lambda(etf, e / st.rho)
    mu = lam / st.rho
    nu = st.nu
    v1 = -k[0] * mu ** (nu - 1.0) * z[0] - f[0] + yr_dot
    c2 = g[0] * mu * z[0]
    x_d, x_c_dot, u = backstep(f, g, s, z, k, st.x_c, tau, v1, c2)
    w = z.copy()
    w[0] *= mu ** (nu / 2.0)
    phi = float(w @ P @ w)
    f_p = 1.0 if force_safe else pse_bpc(phi, spec.phi0)
    f_t = dzt(e, st.rho, spec.epsilon)
    if phi <= spec.phi0:
        region = Region.SAFE
    elif abs(e) / st.rho <= spec.epsilon:
        region = Region.DEADZONE
    elif phi < 1.0:
        region = Region.TRANSITION
    else:
        region = Region.OUTSIDE
    ua = saturate(u, model.u_min, model.u_max)
    return ControlOutput(
        u_raw=u, u_applied=ua, x_d=x_d, x_c_dot=x_c_dot, x_e=st.x_c - x_d, s=s, z=z, f_p=f_p, f_t=f_t,
        region=region, lyap=phi, level=1.0, g=g, f=f, e=e, mu=mu, clamped=clamped,
    )


def bpc_aux_derivative(rho, eta, f_p, f_t, e, g, x_e, delta_u, spec, k):
    """Returns ``(rho_dot, eta_dot)`` with ``eta`` holding stages 2..n.

    The rho/e compensation term is only evaluated when the dead-zone ramp is
    non-zero, which keeps |e| > 0.5*eps*rho > 0.
    """
    n = len(eta) + 1
    full = np.concatenate(([0.0], eta))
    dev1 = g[0] * _dev(full, x_e, delta_u, 0)
    rho_dot = -f_p * spec.k_rho * (rho - spec.rho_inf)
    if f_t > 0.0 and f_p < 1.0:
        rho_dot += (1.0 - f_p) * f_t * (rho / e) * dev1
    d = np.empty(n - 1)
    for i in range(1, n):
        d[i - 1] = -k[i] * full[i] + g[i] * _dev(full, x_e, delta_u, i)
    return rho_dot, d


def compact_form_bcfb(out, eta, omega, k, use_balance=True):
    """Right-hand side A(x) z + f_p B1 (k1 eta1 + g1 dev1) + w of the closed-loop error system."""
    z, g = out.z, out.g
    n = len(z)
    A = np.diag(-np.asarray(k, dtype=float))
    for i in range(n - 1):
        A[i, i + 1] = g[i]
        A[i + 1, i] = -g[i]
    rhs = A @ z + omega
    if use_balance:
        dev1 = _dev(eta, out.x_e, out.delta_u, 0)
        rhs[0] += out.f_p * (k[0] * eta[0] + g[0] * dev1)
    return rhs


def compact_form_bpc(out, eta, omega, rho, spec, k, nu):
    """Right-hand side of the transformed error system for bpc."""
    z, g, mu, e = out.z, out.g, out.mu, out.e
    n = len(z)
    A = np.diag(-np.asarray(k, dtype=float))
    A[0, 0] *= mu**nu
    for i in range(n - 1):
        c = g[i] * (mu if i == 0 else 1.0)
        A[i, i + 1] = c
        A[i + 1, i] = -c
    Dw = np.array(omega, dtype=float)
    Dw[0] *= mu
    rhs = A @ z + Dw
    full = np.concatenate(([0.0], eta))
    dev1 = _dev(full, out.x_e, out.delta_u, 0)
    rhs[0] += mu * out.f_p * spec.k_rho * (e / rho) * (rho - spec.rho_inf)
    rhs[0] += mu * (1.0 + (out.f_p - 1.0) * out.f_t) * g[0] * dev1
    return rhs


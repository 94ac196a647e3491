"""Performance-constraint geometry.

Covers the exponential performance envelope rho(t), the error transform
T(z1) with its inverse and slope, the two safety-evaluation ramps, the
dead-zone transition ramp and the level functions Gamma(t) and Phi.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateX, InvalidLevels, NonPD, OutOfBand
from .linalg import as_square, build_Dmu, is_positive_definite, quadratic_form

log = logging.getLogger(__name__)

DEFAULT_EPSILON_DZ = 0.05


@dataclass(frozen=True)
class PerformanceSpec:
    rho0: float = 1.0
    rho_inf: float = 0.1
    kappa: float = 0.5
    k_rho: float = 0.5
    delta_bar: float = 1.0
    delta_underbar: float = 1.0
    sigma: float = 0.9
    phi0: float = 0.7
    epsilon: float = DEFAULT_EPSILON_DZ

    def __post_init__(self):
        if not (self.rho0 > self.rho_inf > 0):
            raise ValueError(f"need rho0 > rho_inf > 0, got rho0={self.rho0}, rho_inf={self.rho_inf}")
        if not (self.kappa > 0 and self.k_rho > 0):
            raise ValueError("kappa and k_rho must be positive")
        if not (self.delta_bar > 0 and self.delta_underbar > 0):
            raise ValueError("band factors must be positive")
        if not (0 < self.sigma < 1 and 0 < self.phi0 < 1):
            raise ValueError("sigma and phi0 must lie in (0, 1)")
        if not (self.epsilon > 0):
            raise ValueError("dead-zone width must be positive")

    def etf(self, margin=None):
        return EtfState(self.delta_bar, self.delta_underbar, margin)


@dataclass(frozen=True)
class EtfState:
    """Band factors of the error transform plus the clamp margin near the band edges."""

    delta_bar: float = 1.0
    delta_underbar: float = 1.0
    margin: float = None

    def __post_init__(self):
        if self.margin is None:
            object.__setattr__(self, "margin", 1e-6 * min(self.delta_bar, self.delta_underbar))
        if not (0 < self.margin < min(self.delta_bar, self.delta_underbar) / 10):
            raise ValueError(f"clamp margin {self.margin} must lie in (0, min(delta)/10)")

    @property
    def lo(self):
        return -self.delta_underbar + self.margin

    @property
    def hi(self):
        return self.delta_bar - self.margin

    def clamp(self, r):
        """Clamp ``r`` into the admissible band; returns ``(r_clamped, was_clamped)``."""
        if r < self.lo:
            return self.lo, True
        if r > self.hi:
            return self.hi, True
        return r, False


def ppf(spec, t):
    return (spec.rho0 - spec.rho_inf) * math.exp(-spec.kappa * t) + spec.rho_inf


def ppf_derivative(spec, t):
    return -spec.kappa * (spec.rho0 - spec.rho_inf) * math.exp(-spec.kappa * t)


def pse_bcfb(V, gamma, gamma0):
    if not (0 < gamma0 < gamma):
        raise InvalidLevels(f"need 0 < Gamma0 < Gamma, got Gamma0={gamma0}, Gamma={gamma}")
    if V >= gamma:
        return 0.0
    if V <= gamma0:
        return 1.0
    return (gamma - V) / (gamma - gamma0)


def pse_bpc(phi, phi0):
    if phi >= 1.0:
        return 0.0
    if phi <= phi0:
        return 1.0
    return (1.0 - phi) / (1.0 - phi0)


def dzt(e, rho, eps):
    # Continuous 0 -> 1 ramp on (eps/2, eps); see the decisions note on the middle branch.
    r = abs(e) / rho
    if r <= 0.5 * eps:
        return 0.0
    if r >= eps:
        return 1.0
    return 2.0 * r / eps - 1.0


def etf_forward(s, z1):
    """T(z1) = (db*exp(z1) - du*exp(-z1)) / (exp(z1) + exp(-z1)), overflow-free."""
    q = math.exp(-2.0 * abs(z1))
    if z1 >= 0:
        return (s.delta_bar - s.delta_underbar * q) / (1.0 + q)
    return (s.delta_bar * q - s.delta_underbar) / (q + 1.0)


def etf_inverse(s, r, clamp=True):
    if clamp:
        r, hit = s.clamp(r)
        if hit:
            log.debug("ETF input clamped to %g", r)
    elif not (-s.delta_underbar < r < s.delta_bar):
        raise OutOfBand(f"e/rho = {r} outside (-{s.delta_underbar}, {s.delta_bar})")
    return 0.5 * math.log((r + s.delta_underbar) / (s.delta_bar - r))


def etf_lambda(s, r):
    """Slope of the inverse transform at ``r`` (after clamping)."""
    r, _ = s.clamp(r)
    return 0.5 * (1.0 / (r + s.delta_underbar) + 1.0 / (s.delta_bar - r))


def etf_lambda_mu(s, e, rho):
    lam = etf_lambda(s, e / rho)
    return lam, lam / rho


def mu_bounds(s, rho_min, rho_max):
    """Range of mu = lambda/rho reachable with rho in [rho_min, rho_max] under the clamp."""
    lam_min = 2.0 / (s.delta_bar + s.delta_underbar)
    lam_max = max(etf_lambda(s, s.lo), etf_lambda(s, s.hi))
    return lam_min / rho_max, lam_max / rho_min


def gamma_level(rho_t, X, C=None):
    X = as_square(X)
    C = np.eye(X.shape[0])[0] if C is None else np.asarray(C, dtype=float).reshape(-1)
    cxc = float(C @ X @ C)
    if not (cxc > 0):
        raise DegenerateX(f"C X C^T = {cxc} must be positive")
    return rho_t * rho_t / cxc


def phi_level(z, P, mu, nu):
    P = as_square(P)
    if not is_positive_definite(P):
        raise NonPD("P must be symmetric positive definite")
    D = build_Dmu(P.shape[0], mu, nu / 2.0)
    return quadratic_form(D @ P @ D, z)

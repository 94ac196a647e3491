"""Matrix-inequality certificates for the performance invariant sets.

Two forms of the first inequality are supported:

``eq5``
    ``A0 X + X A0^T + (eps + alpha + 2 kappa) X + alpha W <= 0`` taken literally.
``h-matrix``
    the block matrix ``[[P A0 + A0^T P + (eps + alpha + 2 kappa) P, P], [P, -alpha W]] <= 0``
    with ``P = X^-1``, i.e. the condition the invariance argument actually uses.

The second inequality ``A_g X + X A_g^T - eps X <= 0`` is shared by both.
"""

import itertools
import json
import logging
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CertificateInfeasible, DimensionMismatch, NonPD, PreconditionViolated
from .linalg import as_square, build_Ag, build_Dmu, is_positive_definite, max_eigenvalue

log = logging.getLogger(__name__)

FORMS = ("eq5", "h-matrix")
# the block form is the one whose feasibility implies invariance (see above)
DEFAULT_FORM = "h-matrix"
CERT_VERSION = 1

# X = I point used as a hand-checkable witness for the literal inequality.
WITNESS_EPS = 0.1
WITNESS_ALPHA = 0.5

VH_GRID = np.logspace(-3, 3, 61)
ALPHA_GRID = np.round(np.arange(1, 21) * 0.1, 10)
EPS_GRID = (0.01, 0.1, 0.5)


@dataclass
class InvariantCertificate:
    X: np.ndarray
    W: np.ndarray
    alpha: float
    eps_lmi: float
    kappa: float
    v_h: float
    feasible: bool
    gamma_inf: float
    max_eig_H: float
    slack_b: float = 0.0
    form: str = DEFAULT_FORM
    prop: int = 1
    nu: float = 0.0
    rho_inf: float = 0.1
    rho0: float = 1.0
    gains: tuple = ()
    g_bounds: tuple = ()
    mu_range: tuple = ()
    witness_slack: float = float("nan")
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = as_square(self.X)
        self.W = as_square(self.W)

    @property
    def P(self):
        return np.linalg.inv(self.X)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def condition_ii(self):
        """Gamma_inf >= 1, the level half of the disturbance condition."""
        return self.gamma_inf >= 1.0

    def disturbance_level(self):
        """Largest w^T W w the invariance argument tolerates for this certificate.

        Equals 1 when ``Gamma_inf >= 1`` and ``Gamma_inf`` otherwise.
        """
        if self.prop == 2:
            return 1.0
        return min(1.0, self.gamma_inf)

    def to_dict(self):
        d = asdict(self)
        d["X"] = self.X.tolist()
        d["W"] = self.W.tolist()
        d["version"] = CERT_VERSION
        d["gains"] = list(self.gains)
        d["g_bounds"] = [list(b) for b in self.g_bounds]
        d["mu_range"] = list(self.mu_range)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("version", CERT_VERSION)
        if version != CERT_VERSION:
            raise ValueError(f"unsupported certificate version {version}")
        d["X"] = np.array(d["X"], dtype=float)
        d["W"] = np.array(d["W"], dtype=float)
        d["gains"] = tuple(d.get("gains", ()))
        d["g_bounds"] = tuple(tuple(b) for b in d.get("g_bounds", ()))
        d["mu_range"] = tuple(d.get("mu_range", ()))
        return cls(**d)

    def save(self, path):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=True) + "\n"
        atomic_write(path, text)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def report(self):
        lines = [
            f"certificate (Proposition-{self.prop} set, form={self.form})",
            f"  feasible        : {self.feasible}",
            f"  V_h             : {self.v_h:.6g}",
            f"  alpha           : {self.alpha:.6g}",
            f"  eps_lmi         : {self.eps_lmi:.6g}",
            f"  kappa           : {self.kappa:.6g}",
            f"  worst slack (a) : {self.max_eig_H:.6g}",
            f"  worst slack (b) : {self.slack_b:.6g}",
        ]
        if self.prop == 1:
            lines.append(f"  Gamma_inf       : {self.gamma_inf:.6g}")
            lines.append(f"  Gamma_inf >= 1  : {self.condition_ii}")
        else:
            lines.append(f"  nu              : {self.nu:.6g}")
            if self.mu_range:
                lines.append(f"  mu range        : [{self.mu_range[0]:.6g}, {self.mu_range[1]:.6g}]")
        lines.append(f"  X=I witness     : {self.witness_slack:.6g}  (eq5, eps={WITNESS_EPS}, alpha={WITNESS_ALPHA})")
        for k, v in sorted(self.notes.items()):
            lines.append(f"  {k:<16}: {v}")
        return "\n".join(lines)


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def skew_samples(g_bounds):
    """A_g at every corner of the gain box; enough because the inequality is affine in A_g."""
    n = len(g_bounds)
    if n == 1:
        return [np.zeros((1, 1))]
    corners = itertools.product(*[sorted(set(b)) for b in g_bounds[:-1]])
    return [build_Ag(c, n) for c in corners]


def _require_pd(M, what):
    M = as_square(M)
    if np.max(np.abs(M - M.T)) > 1e-10 or not is_positive_definite(M):
        raise NonPD(f"{what} must be symmetric positive definite")
    return 0.5 * (M + M.T)


def slack_a(A0, X, W, alpha, eps, kappa, form=DEFAULT_FORM):
    """Largest eigenvalue of the first inequality's left-hand side."""
    c = eps + alpha + 2.0 * kappa
    if form == "eq5":
        M = A0 @ X + X @ A0.T + c * X + alpha * W
        return max_eigenvalue(0.5 * (M + M.T))
    if form == "h-matrix":
        P = np.linalg.inv(X)
        P = 0.5 * (P + P.T)
        top = P @ A0 + A0.T @ P + c * P
        H = np.block([[top, P], [P, -alpha * W]])
        return max_eigenvalue(0.5 * (H + H.T))
    raise ValueError(f"unknown inequality form {form!r}; expected one of {FORMS}")


def slack_b(Ag_samples, X, eps):
    worst = -math.inf
    for Ag in Ag_samples:
        M = Ag @ X + X @ Ag.T - eps * X
        worst = max(worst, max_eigenvalue(0.5 * (M + M.T)))
    return worst


def check_lmi_prop1(A0, Ag_samples, X, W, alpha, eps_lmi, kappa, tol=0.0, form=DEFAULT_FORM):
    """Check both inequalities; returns ``(feasible, (slack_a, slack_b))``."""
    A0 = as_square(A0)
    X = _require_pd(X, "X")
    W = _require_pd(W, "W")
    if X.shape != A0.shape or W.shape != A0.shape:
        raise DimensionMismatch("A0, X and W must share a dimension")
    if not (alpha > 0 and eps_lmi > 0):
        raise ValueError("alpha and eps must be positive")
    sa = slack_a(A0, X, W, alpha, eps_lmi, kappa, form)
    sb = slack_b(Ag_samples, X, eps_lmi)
    return (sa <= tol and sb <= tol), (sa, sb)


def check_lmi_prop2(A0, Ag_samples, X1, X_rest, W, alpha, eps_lmi, kappa, mu_range, nu, tol=0.0,
                    form=DEFAULT_FORM, omega_samples=None):
    """Block-diagonal X = blkdiag(X1, X_rest) version.

    The coupling inequality is additionally checked against ``D_mu A_g D_mu`` at the
    ends of ``mu_range``.  Returns ``(feasible, info)`` where ``info`` holds the
    slacks and, if ``omega_samples`` are given, the per-endpoint disturbance verdicts.
    """
    if not (nu > -1):
        raise ValueError(f"nu must exceed -1, got {nu}")
    A0 = as_square(A0)
    n = A0.shape[0]
    X_rest = np.zeros((0, 0)) if n == 1 else as_square(X_rest)
    X = np.zeros((n, n))
    X[0, 0] = float(X1)
    X[1:, 1:] = X_rest
    mu_lo, mu_hi = mu_range
    scaled = list(Ag_samples)
    for mu in (mu_lo, mu_hi):
        D = build_Dmu(n, mu, 1.0)
        scaled.extend(D @ Ag @ D for Ag in Ag_samples)
    ok, (sa, sb) = check_lmi_prop1(A0, scaled, X, W, alpha, eps_lmi, kappa, tol, form)
    info = {"slack_a": sa, "slack_b": sb, "X": X}
    if omega_samples is not None:
        verdicts = {}
        for mu in (mu_lo, mu_hi):
            D = build_Dmu(n, mu, 1.0 - nu / 2.0)
            M = D @ as_square(W) @ D
            worst = max(float(w @ M @ w) for w in np.atleast_2d(omega_samples))
            verdicts[mu] = worst <= 1.0
        info["disturbance_ok"] = verdicts
    return ok, info


def witness_slack(A0, W, kappa):
    return slack_a(as_square(A0), np.eye(A0.shape[0]), as_square(W), WITNESS_ALPHA, WITNESS_EPS, kappa, "eq5")


def _feasible_vh(A0, samples, W, alpha, eps, kappa, form, tol):
    """Index of the smallest feasible grid V_h for fixed (alpha, eps), or None.

    With X = V_h I, feasibility is monotone in V_h for both forms, so bisect the grid.
    """
    n = A0.shape[0]
    I = np.eye(n)

    def feasible(vh):
        sa = slack_a(A0, vh * I, W, alpha, eps, kappa, form)
        return sa <= tol, sa

    ok_hi, _ = feasible(VH_GRID[-1])
    if not ok_hi:
        return None
    lo, hi = -1, len(VH_GRID) - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if feasible(VH_GRID[mid])[0]:
            hi = mid
        else:
            lo = mid
    return hi


def search_trivial_solution(A0, kappa, W, g_bounds, rho_inf=0.1, rho0=1.0, form=DEFAULT_FORM, tol=0.0,
                            prop=1, nu=0.0, mu_range=None):
    """Search X = V_h I over (V_h, alpha, eps) and return the best certificate.

    The smallest feasible V_h is preferred (largest Gamma_inf, tightest set); the
    grid optimum is then refined by bisection on V_h.  An infeasible result comes
    back with ``feasible=False`` and the least-violating point.
    """
    A0 = as_square(A0)
    W = _require_pd(W, "W")
    gains = tuple(float(-d) for d in np.diag(A0))
    if not (0 < kappa <= min(gains)):
        raise PreconditionViolated(f"need 0 < kappa <= min k_i = {min(gains)}, got kappa={kappa}")
    if form not in FORMS:
        raise ValueError(f"unknown inequality form {form!r}")
    n = A0.shape[0]
    samples = skew_samples(g_bounds)
    if prop == 2:
        if mu_range is None:
            raise ValueError("the block-diagonal check needs a mu range")
        for mu in mu_range:
            D = build_Dmu(n, mu, 1.0)
            samples = samples + [D @ Ag @ D for Ag in skew_samples(g_bounds)]
    I = np.eye(n)

    best = None
    for alpha in ALPHA_GRID:
        for eps in EPS_GRID:
            idx = _feasible_vh(A0, samples, W, alpha, eps, kappa, form, tol)
            if idx is None:
                continue
            vh = VH_GRID[idx]
            sa = slack_a(A0, vh * I, W, alpha, eps, kappa, form)
            key = (vh, sa)
            if best is None or key < best[0]:
                best = (key, alpha, eps, idx)

    witness = witness_slack(A0, W, kappa)
    if best is None:
        # report the least-violating point at the top of the grid
        worst = None
        for alpha in ALPHA_GRID:
            for eps in EPS_GRID:
                sa = slack_a(A0, VH_GRID[-1] * I, W, alpha, eps, kappa, form)
                if worst is None or sa < worst[0]:
                    worst = (sa, alpha, eps)
        sa, alpha, eps = worst
        vh = VH_GRID[-1]
        return InvariantCertificate(
            X=vh * I, W=W, alpha=float(alpha), eps_lmi=float(eps), kappa=kappa, v_h=float(vh),
            feasible=False, gamma_inf=rho_inf**2 / vh, max_eig_H=float(sa),
            slack_b=slack_b(samples, vh * I, eps), form=form, prop=prop, nu=nu, rho_inf=rho_inf,
            rho0=rho0, gains=gains, g_bounds=tuple(tuple(b) for b in g_bounds),
            mu_range=tuple(mu_range or ()), witness_slack=witness,
        )

    (vh, sa), alpha, eps, idx = best
    if idx > 0:
        lo, hi = VH_GRID[idx - 1], VH_GRID[idx]
        for _ in range(40):
            mid = math.sqrt(lo * hi)
            s_mid = slack_a(A0, mid * I, W, alpha, eps, kappa, form)
            if s_mid <= tol:
                hi, sa = mid, s_mid
            else:
                lo = mid
        vh = hi
    X = vh * I
    ok, (sa, sb) = check_lmi_prop1(A0, samples, X, W, alpha, eps, kappa, tol, form)
    return InvariantCertificate(
        X=X, W=W, alpha=float(alpha), eps_lmi=float(eps), kappa=float(kappa), v_h=float(vh),
        feasible=bool(ok), gamma_inf=rho_inf**2 / float(X[0, 0]), max_eig_H=float(sa), slack_b=float(sb),
        form=form, prop=prop, nu=float(nu), rho_inf=float(rho_inf), rho0=float(rho0), gains=gains,
        g_bounds=tuple(tuple(float(v) for v in b) for b in g_bounds), mu_range=tuple(mu_range or ()),
        witness_slack=witness,
    )


def fixed_certificate(A0, kappa, W, g_bounds, v_h, alpha, eps, rho_inf=0.1, rho0=1.0, form=DEFAULT_FORM,
                      prop=1, nu=0.0, mu_range=None, tol=0.0):
    """Certificate at a user-chosen X = V_h I (no search)."""
    A0 = as_square(A0)
    W = _require_pd(W, "W")
    n = A0.shape[0]
    samples = skew_samples(g_bounds)
    if prop == 2 and mu_range is not None:
        for mu in mu_range:
            D = build_Dmu(n, mu, 1.0)
            samples = samples + [D @ Ag @ D for Ag in skew_samples(g_bounds)]
    X = v_h * np.eye(n)
    ok, (sa, sb) = check_lmi_prop1(A0, samples, X, W, alpha, eps, kappa, tol, form)
    return InvariantCertificate(
        X=X, W=W, alpha=float(alpha), eps_lmi=float(eps), kappa=float(kappa), v_h=float(v_h),
        feasible=bool(ok), gamma_inf=rho_inf**2 / v_h, max_eig_H=float(sa), slack_b=float(sb), form=form,
        prop=prop, nu=float(nu), rho_inf=float(rho_inf), rho0=float(rho0),
        gains=tuple(float(-d) for d in np.diag(A0)), g_bounds=tuple(tuple(b) for b in g_bounds),
        mu_range=tuple(mu_range or ()), witness_slack=witness_slack(A0, W, kappa),
    )


# --- Monte Carlo invariance --------------------------------------------------------


@dataclass
class InvarianceReport:
    n_trials: int
    horizon: float
    max_v_ratio: float
    max_z1_ratio: float
    worst_trial: int
    worst_seed: int
    level: float
    omega_scale: float
    tol: float = 1e-3

    @property
    def passed(self):
        return self.max_v_ratio <= 1.0 + self.tol and self.max_z1_ratio <= 1.0 + self.tol

    def summary(self):
        verdict = "PASS" if self.passed else "FAIL"
        return (
            f"{verdict}: {self.n_trials} trials over {self.horizon:g} s, "
            f"max V/Gamma = {self.max_v_ratio:.6f}, max |z1|/rho = {self.max_z1_ratio:.6f} "
            f"(w^T W w = {self.level:.4g} x {self.omega_scale:g}^2; worst trial {self.worst_trial}, "
            f"seed {self.worst_seed})"
        )


def corner_a_builder(A0, g_bounds):
    """Per-trial system matrix with gains drawn uniformly inside their bounds."""
    A0 = as_square(A0)
    n = A0.shape[0]

    def build(rng):
        if n == 1:
            return A0.copy()
        g = [rng.uniform(lo, hi) for lo, hi in g_bounds[:-1]]
        return A0 + build_Ag(g, n)

    return build


def _unit_on_ellipsoid(rng, M, level, count):
    """``count`` vectors v with v^T M v = level, directions uniform on the sphere."""
    n = M.shape[0]
    v = rng.standard_normal((count, n))
    q = np.einsum("ij,jk,ik->i", v, M, v)
    return v * np.sqrt(level / q)[:, None]


def monte_carlo_invariance(A_builder, cert, rho_fn, n_trials, horizon, rng_seed, h=0.01, segment=0.1,
                           omega_scale=1.0, tol=1e-3, workers=None):
    """Boundary-started trials of z' = A z + w under admissible piecewise-constant w.

    Each trial starts on V(0) = Gamma(0) and draws a fresh disturbance on the
    ellipsoid w^T W w = level every ``segment`` seconds.  The report carries the
    largest V/Gamma and |z1|/rho seen over all trials.
    """
    from . import kernels

    if not cert.feasible:
        raise CertificateInfeasible("Monte Carlo invariance needs a feasible certificate")
    n = cert.n
    P = cert.P
    cxc = float(cert.X[0, 0])
    level = cert.disturbance_level()
    if n_trials <= 0:
        log.warning("zero trials requested; invariance check is vacuous")
        return InvarianceReport(0, horizon, 0.0, 0.0, -1, rng_seed, level, omega_scale, tol)

    steps_per_seg = max(1, int(round(segment / h)))
    n_seg = int(math.ceil(horizon / (steps_per_seg * h)))
    n_steps = n_seg * steps_per_seg
    t = np.arange(n_steps + 1) * h
    rho = np.array([rho_fn(ti) for ti in t])
    gamma = rho**2 / cxc

    A = np.empty((n_trials, n, n))
    z0 = np.empty((n_trials, n))
    omega = np.empty((n_trials, n_seg, n))
    seeds = np.random.SeedSequence(rng_seed).spawn(n_trials)
    for k in range(n_trials):
        rng = np.random.default_rng(seeds[k])
        A[k] = A_builder(rng)
        z0[k] = _unit_on_ellipsoid(rng, P, gamma[0], 1)[0]
        omega[k] = omega_scale * _unit_on_ellipsoid(rng, cert.W, level, n_seg)

    v_ratio, z_ratio = kernels.linear_trials(A, P, z0, omega, steps_per_seg, h, rho, gamma, workers=workers)
    worst = int(np.argmax(np.maximum(v_ratio, z_ratio)))
    return InvarianceReport(
        n_trials=n_trials, horizon=float(n_steps * h), max_v_ratio=float(v_ratio.max()),
        max_z1_ratio=float(z_ratio.max()), worst_trial=worst, worst_seed=int(rng_seed), level=level,
        omega_scale=omega_scale, tol=tol,
    )

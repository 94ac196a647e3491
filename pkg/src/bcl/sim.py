"""Closed-loop simulation: state bundle, fixed-step integration, traces and events."""

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .controllers import (
    BcfbState,
    BpcState,
    ControllerConfig,
    Region,
    bcfb_aux_derivative,
    bcfb_control,
    bpc_aux_derivative,
    bpc_control,
    cfb_aux_derivative,
    cfb_control,
)
from .errors import CertificateInfeasible, GridMismatch, NonFinite, PreconditionViolated
from .invariant import InvariantCertificate, atomic_write
from .perf import EtfState, PerformanceSpec, etf_forward, ppf
from .plant import DisturbanceSchedule, PlantModel, evaluate_disturbance

log = logging.getLogger(__name__)

INTEGRATORS = ("rk4", "euler")
VIOLATION_TOL = 1e-3


def _sin_ref(t):
    return math.sin(t), math.cos(t)


def _zero_ref(t):
    return 0.0, 0.0


REFERENCES = {"sin": _sin_ref, "zero": _zero_ref}


@dataclass(frozen=True)
class SimConfig:
    h: float = 1e-3
    T: float = 30.0
    integrator: str = "rk4"
    record_every: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.h > 0):
            raise ValueError(f"step size must be positive, got {self.h}")
        if not (self.T >= self.h):
            raise ValueError(f"horizon {self.T} shorter than one step {self.h}")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if int(self.record_every) < 1:
            raise ValueError("record_every must be >= 1")

    @property
    def n_steps(self):
        return int(round(self.T / self.h))


def rk4_step(derivative, t, state, h):
    """Classical four-stage Runge-Kutta step of ``state' = derivative(t, state)``."""
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(derivative(t, y), dtype=float)
    k2 = np.asarray(derivative(t + 0.5 * h, y + 0.5 * h * k1), dtype=float)
    k3 = np.asarray(derivative(t + 0.5 * h, y + 0.5 * h * k2), dtype=float)
    k4 = np.asarray(derivative(t + h, y + h * k3), dtype=float)
    out = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"non-finite state after RK4 step at t={t:.6g}")
    return out


@dataclass
class ClosedLoop:
    """Plant, controller and disturbance coupled into one ODE.

    The state bundle is ``[x (n), x_c (n-1), eta (n)]`` for bcfb/cfb and
    ``[x (n), x_c (n-1), rho, eta_2..eta_n]`` for bpc.
    """

    plant: PlantModel
    controller: ControllerConfig
    perf: PerformanceSpec
    cert: InvariantCertificate
    disturbance: DisturbanceSchedule
    x0: tuple
    reference: str = "sin"

    def __post_init__(self):
        n = self.plant.n
        if self.controller.n != n:
            raise ValueError(f"controller has {self.controller.n} stages but plant has {n}")
        if len(self.x0) != n:
            raise ValueError(f"initial state needs {n} entries")
        if self.reference not in REFERENCES:
            raise ValueError(f"unknown reference {self.reference!r}; choose from {sorted(REFERENCES)}")
        if self.cert is None:
            if self.controller.kind != "cfb":
                raise CertificateInfeasible(f"{self.controller.kind} needs an invariant-set certificate")
            self.cert = labelling_certificate(n, self.perf)
        if self.cert.n != n:
            raise ValueError("certificate dimension does not match the plant")
        self._P = self.cert.P
        self._etf = self.perf.etf()
        self._ref = REFERENCES[self.reference]

    @property
    def n(self):
        return self.plant.n

    @property
    def kind(self):
        return self.controller.kind

    @property
    def size(self):
        return 3 * self.n - 1

    @property
    def rho_floor(self):
        return 0.5 * self.perf.rho_inf

    def evaluate(self, t, y):
        """Returns ``(dy, out, omega, floor_hit)`` at one instant."""
        n = self.n
        c = self.controller
        x = y[:n]
        xc = y[n : 2 * n - 1]
        yr, yr_dot = self._ref(t)
        omega = evaluate_disturbance(self.disturbance, t, x)
        floor_hit = False
        if c.kind == "bpc":
            rho = y[2 * n - 1]
            eta = y[2 * n :]
            st = BpcState(rho=rho, eta=eta, x_c=xc, nu=c.nu)
            out = bpc_control(self.plant, x, yr, yr_dot, st, self._P, self.perf, self._etf, c.k, c.tau, c.force_safe)
            rho_dot, deta = bpc_aux_derivative(rho, eta, out.f_p, out.f_t, out.e, out.g, out.x_e, out.delta_u,
                                               self.perf, c.k)
            if rho <= self.rho_floor and rho_dot < 0.0:
                rho_dot = 0.0
                floor_hit = True
            rest = np.concatenate(([rho_dot], deta))
        else:
            eta = y[2 * n - 1 :]
            st = BcfbState(eta=eta, x_c=xc)
            rho_t = ppf(self.perf, t)
            if c.kind == "bcfb":
                out = bcfb_control(self.plant, x, yr, yr_dot, st, self.cert, rho_t, self.perf.sigma, c.k, c.tau)
                rest = bcfb_aux_derivative(eta, out.f_p, out.g, out.x_e, out.delta_u, c.k)
            else:
                out = cfb_control(self.plant, x, yr, yr_dot, st, self.cert, rho_t, self.perf.sigma, c.k, c.tau)
                rest = cfb_aux_derivative(eta, out.g, out.x_e, out.delta_u, c.k)
        nxt = np.empty(n)
        nxt[:-1] = x[1:]
        nxt[-1] = out.u_applied
        xdot = out.f + out.g * nxt + omega
        dy = np.concatenate((xdot, out.x_c_dot, rest))
        return dy, out, omega, floor_hit

    def derivative(self, t, y):
        return self.evaluate(t, y)[0]

    def initial_state(self):
        """Plant at x0, filters started on their commands, auxiliary states at zero."""
        n = self.n
        y = np.zeros(self.size)
        y[:n] = self.x0
        if self.kind == "bpc":
            y[2 * n - 1] = self.perf.rho0
        # command j depends only on filters 0..j-1, so fill them in order
        for j in range(n - 1):
            out = self.evaluate(0.0, y)[1]
            y[n + j] = out.x_d[j]
        return y

    def rho_of(self, t, y):
        return y[2 * self.n - 1] if self.kind == "bpc" else ppf(self.perf, t)

    def record_row(self, t, y, out):
        n = self.n
        if self.kind == "bpc":
            eta = np.concatenate(([0.0], y[2 * n :]))
            rho = y[2 * n - 1]
        else:
            eta = y[2 * n - 1 :]
            rho = ppf(self.perf, t)
        return np.concatenate((
            [t], y[:n], out.s, out.z, eta,
            [rho, out.level, out.lyap, out.f_p, out.f_t, out.u_raw, out.u_applied, out.delta_u, float(out.region)],
            out.x_e,
        ))

    def compiled_ok(self):
        """Whether the compiled kernel covers this problem (the three-stage preset only)."""
        from .plant import PAPER_PLANT

        return (
            self.plant.name == PAPER_PLANT
            and self.n == 3
            and self.disturbance.name in (PAPER_PLANT, "none")
            and self.reference in REFERENCES
        )

    def kernel_params(self):
        c = self.controller
        p = self.perf
        times = list(self.disturbance.pulse_times)
        return {
            "kind": {"bcfb": 0, "cfb": 1, "bpc": 2}[c.kind],
            "k": list(c.k),
            "tau": list(c.tau),
            "nu": c.nu,
            "force_safe": int(c.force_safe),
            "u_min": self.plant.u_min,
            "u_max": self.plant.u_max,
            "rho0": p.rho0,
            "rho_inf": p.rho_inf,
            "kappa": p.kappa,
            "k_rho": p.k_rho,
            "delta_bar": p.delta_bar,
            "delta_underbar": p.delta_underbar,
            "sigma": p.sigma,
            "phi0": p.phi0,
            "epsilon": p.epsilon,
            "margin": self._etf.margin,
            "P": self._P.reshape(-1).tolist(),
            "cxc": float(self.cert.X[0, 0]),
            "rho_floor": self.rho_floor,
            "base_disturbance": int(self.disturbance.name != "none"),
            "pulse_amp": self.disturbance.pulse_amp,
            "pulse_decay": self.disturbance.pulse_decay,
            "pulse_times": times,
            "reference": {"sin": 0, "zero": 1}[self.reference],
        }


def labelling_certificate(n, perf):
    return InvariantCertificate(
        X=np.eye(n), W=np.eye(n), alpha=1.0, eps_lmi=1.0, kappa=perf.kappa, v_h=1.0, feasible=False,
        gamma_inf=perf.rho_inf**2, max_eig_H=float("nan"), notes={"origin": "identity labelling only"},
    )


# --- traces -------------------------------------------------------------------------


def trace_columns(n):
    cols = ["t"]
    for name in ("x", "s", "z", "eta"):
        cols += [f"{name}{i}" for i in range(1, n + 1)]
    cols += ["rho", "gamma", "lyap", "f_p", "f_t", "u_raw", "u_applied", "delta_u", "region"]
    cols += [f"xe{i}" for i in range(2, n + 1)]
    return cols


@dataclass
class SimulationTrace:
    kind: str
    n: int
    data: np.ndarray
    step_region: np.ndarray = None
    step_sat: np.ndarray = None
    step_clamp: np.ndarray = None
    step_floor: np.ndarray = None
    e: np.ndarray = None
    meta: dict = field(default_factory=dict)

    @property
    def columns(self):
        return trace_columns(self.n)

    def __len__(self):
        return self.data.shape[0]

    def col(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def t(self):
        return self.data[:, 0]

    def regions(self):
        return [Region(int(r)) for r in self.col("region")]

    def tracking_error(self):
        """e = x1 - y_r at every recorded step."""
        if self.e is not None:
            return self.e
        if self.kind == "bpc":
            db = self.meta.get("delta_bar", 1.0)
            du = self.meta.get("delta_underbar", 1.0)
            etf = EtfState(db, du)
            return np.array([r * etf_forward(etf, z) for r, z in zip(self.col("rho"), self.col("z1"))])
        return self.col("s1")

    def violations(self, tol=VIOLATION_TOL):
        """Steps breaking the performance constraint (|z1| > rho for bcfb/cfb, e outside the band for bpc)."""
        rho = self.col("rho")
        if self.kind == "bpc":
            e = self.tracking_error()
            db = self.meta.get("delta_bar", 1.0)
            du = self.meta.get("delta_underbar", 1.0)
            return int(np.sum((e >= db * rho) | (e <= -du * rho)))
        return int(np.sum(np.abs(self.col("z1")) > rho * (1.0 + tol)))

    def saturation_duty(self):
        flags = self.step_sat if self.step_sat is not None else (self.col("delta_u") != 0.0)
        return float(np.mean(flags)) if len(flags) else 0.0

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        ridx = self.columns.index("region")
        for row in self.data:
            cells = [f"{v:.9g}" for v in row]
            cells[ridx] = Region(int(row[ridx])).label
            w.writerow(cells)
        text = buf.getvalue()
        if path is not None:
            atomic_write(path, text)
        return text

    @classmethod
    def from_csv(cls, source, kind=None):
        """Parse a trace written by :meth:`to_csv` from a path or an open file."""
        if hasattr(source, "read"):
            text = source.read()
        else:
            with open(source) as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or not rows[0]:
            raise ValueError("empty trace file")
        header = rows[0]
        n = sum(1 for c in header if c.startswith("x") and c[1:].isdigit())
        if n < 1 or header != trace_columns(n):
            raise ValueError("trace header does not match the expected column layout")
        body = rows[1:]
        if not body:
            raise ValueError("trace has no rows")
        ridx = header.index("region")
        data = np.empty((len(body), len(header)))
        for i, row in enumerate(body):
            if len(row) != len(header):
                raise ValueError(f"row {i + 2} has {len(row)} cells, expected {len(header)}")
            for j, cell in enumerate(row):
                data[i, j] = float(Region.from_label(cell)) if j == ridx else float(cell)
        if kind is None:
            kind = "bpc" if np.allclose(data[:, header.index("gamma")], 1.0) and np.all(data[:, header.index("eta1")] == 0) else "bcfb"
        return cls(kind=kind, n=n, data=data)


# --- events -------------------------------------------------------------------------


class EventKind(Enum):
    SaturationOn = "SaturationOn"
    SaturationOff = "SaturationOff"
    EnterSafe = "EnterSafe"
    ExitSafe = "ExitSafe"
    ExitOmega = "ExitOmega"
    EnterDeadZone = "EnterDeadZone"
    ExitDeadZone = "ExitDeadZone"
    EtfClamp = "EtfClamp"
    RhoFloor = "RhoFloor"


@dataclass(frozen=True)
class Event:
    t: float
    kind: EventKind
    detail: str = ""


class EventLog(list):
    def of(self, kind):
        return [e for e in self if e.kind is kind]

    def count(self, kind):
        return len(self.of(kind))

    def to_text(self):
        return "".join(f"{e.t:.6f}\t{e.kind.value}\t{e.detail}\n" for e in self)

    def write(self, path):
        atomic_write(path, "t\tkind\tdetail\n" + self.to_text())


def _edges(flags):
    """Indices where a boolean series switches on and off (on at index 0 counts)."""
    f = np.asarray(flags, dtype=bool)
    prev = np.concatenate(([False], f[:-1]))
    return np.flatnonzero(f & ~prev), np.flatnonzero(~f & prev)


def extract_events(t, region, sat, clamp, floor):
    """Event log from per-step flags; nothing is decimated."""
    events = []
    on, off = _edges(sat)
    events += [(t[i], EventKind.SaturationOn, "") for i in on]
    events += [(t[i], EventKind.SaturationOff, "") for i in off]
    safe = region == int(Region.SAFE)
    on, off = _edges(safe)
    events += [(t[i], EventKind.EnterSafe, "") for i in on]
    events += [(t[i], EventKind.ExitSafe, "") for i in off]
    outside = region == int(Region.OUTSIDE)
    on, _ = _edges(outside)
    events += [(t[i], EventKind.ExitOmega, "") for i in on if i > 0]
    dz = region == int(Region.DEADZONE)
    on, off = _edges(dz)
    events += [(t[i], EventKind.EnterDeadZone, "") for i in on]
    events += [(t[i], EventKind.ExitDeadZone, "") for i in off]
    on, _ = _edges(clamp)
    events += [(t[i], EventKind.EtfClamp, "e/rho clamped to the band margin") for i in on]
    on, _ = _edges(floor)
    events += [(t[i], EventKind.RhoFloor, "rho held at its floor") for i in on]
    order = {k: i for i, k in enumerate(EventKind)}
    events.sort(key=lambda ev: (ev[0], order[ev[1]]))
    return EventLog(Event(float(tt), k, d) for tt, k, d in events)


# --- running ------------------------------------------------------------------------


@dataclass
class Preconditions:
    band_ok: bool
    omega_ok: bool
    initial_ratio: float

    def describe(self):
        return (f"band {'ok' if self.band_ok else 'VIOLATED'}, initial level ratio {self.initial_ratio:.4g} "
                f"({'inside' if self.omega_ok else 'outside'} the invariant set)")


def check_preconditions(loop, y0=None):
    if y0 is None:
        y0 = loop.initial_state()
    _, out, _, _ = loop.evaluate(0.0, y0)
    rho0 = loop.perf.rho0
    e0 = out.e
    band_ok = -loop.perf.delta_underbar * rho0 < e0 < loop.perf.delta_bar * rho0
    ratio = out.lyap / out.level
    return Preconditions(band_ok=bool(band_ok), omega_ok=bool(ratio <= 1.0), initial_ratio=float(ratio))


def run_simulation(loop, sim, force=False, backend=None):
    """Integrate the closed loop over [0, T]; returns ``(trace, events)``."""
    from . import kernels

    if loop.kind != "cfb" and not loop.cert.feasible:
        if not force:
            raise CertificateInfeasible(f"{loop.kind} needs a feasible certificate (or force)")
        log.warning("running %s with an infeasible certificate; safety evaluation is unsound", loop.kind)
    y0 = loop.initial_state()
    pre = check_preconditions(loop, y0)
    if not pre.band_ok:
        raise PreconditionViolated(f"initial tracking error outside the performance band: {pre.describe()}")
    if not pre.omega_ok:
        log.warning("initial compensated error outside the invariant set (level ratio %.4g)", pre.initial_ratio)

    raw = kernels.closed_loop(loop, sim, y0, backend=backend)
    if raw["status"] != 0:
        raise NonFinite(f"simulation aborted: non-finite state at t={raw['fail_t']:.6g}")
    t_steps = np.arange(len(raw["region"])) * sim.h
    events = extract_events(t_steps, raw["region"], raw["sat"], raw["clamp"], raw["floor"])
    meta = {
        "backend": raw["backend"],
        "h": sim.h,
        "T": sim.T,
        "integrator": sim.integrator,
        "record_every": sim.record_every,
        "delta_bar": loop.perf.delta_bar,
        "delta_underbar": loop.perf.delta_underbar,
        "preconditions": pre,
        "unsound": loop.kind != "cfb" and not loop.cert.feasible,
    }
    trace = SimulationTrace(
        kind=loop.kind, n=loop.n, data=raw["rows"], step_region=raw["region"], step_sat=raw["sat"],
        step_clamp=raw["clamp"], step_floor=raw["floor"], e=raw["e"], meta=meta,
    )
    return trace, events


# --- comparison ---------------------------------------------------------------------


def _rmse(v):
    return float(math.sqrt(np.mean(np.square(v)))) if len(v) else 0.0


def trace_metrics(tr):
    s1 = tr.col("s1")
    z1 = tr.col("z1")
    return {
        "rmse_s1": _rmse(s1),
        "max_abs_s1": float(np.max(np.abs(s1))),
        "max_abs_s1_minus_z1": float(np.max(np.abs(s1 - z1))),
        "saturation_duty": tr.saturation_duty(),
        "violations": tr.violations(),
    }


COMPARED_SIGNALS = ("x1", "s1", "z1", "eta1", "u_raw", "u_applied")


@dataclass
class ComparisonReport:
    labels: tuple
    metrics_a: dict
    metrics_b: dict
    signal_rmse: dict

    @property
    def deltas(self):
        return {k: self.metrics_b[k] - self.metrics_a[k] for k in self.metrics_a}

    def to_text(self):
        a, b = self.labels
        w = max(len(k) for k in self.metrics_a) + 2
        c = max(16, len(a) + 2, len(b) + 2)
        lines = [f"{'metric':<{w}}{a:>{c}}{b:>{c}}{'delta':>{c}}"]
        for k in self.metrics_a:
            lines.append(f"{k:<{w}}{self.metrics_a[k]:>{c}.6g}{self.metrics_b[k]:>{c}.6g}{self.deltas[k]:>{c}.6g}")
        lines.append("")
        lines.append(f"{'signal':<{w}}{'rmse(a-b)':>{c}}")
        for k, v in self.signal_rmse.items():
            lines.append(f"{k:<{w}}{v:>{c}.6g}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", self.labels[0], self.labels[1], "delta"])
        for k in self.metrics_a:
            w.writerow([k, f"{self.metrics_a[k]:.9g}", f"{self.metrics_b[k]:.9g}", f"{self.deltas[k]:.9g}"])
        for k, v in self.signal_rmse.items():
            w.writerow([f"rmse_diff_{k}", "", "", f"{v:.9g}"])
        return buf.getvalue()


def compare_runs(a, b, labels=("a", "b")):
    if len(a) != len(b) or a.n != b.n or np.max(np.abs(a.t - b.t)) > 1e-12:
        raise GridMismatch("traces do not share a time grid")
    diffs = {name: _rmse(a.col(name) - b.col(name)) for name in COMPARED_SIGNALS}
    return ComparisonReport(labels=tuple(labels), metrics_a=trace_metrics(a), metrics_b=trace_metrics(b),
                            signal_rmse=diffs)

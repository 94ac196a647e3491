"""Scenario files: INI sections ``plant``, ``controller``, ``performance``,
``disturbance``, ``sim`` and ``output``.

Lists are comma separated and may be wrapped in brackets.  Unknown sections
or keys are rejected so that typos surface before a run starts.  See
``presets/case-a.cfg`` for a fully commented example.
"""

import configparser
import io
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .controllers import ControllerConfig
from .errors import ConfigError
from .invariant import atomic_write
from .perf import PerformanceSpec
from .plant import DISTURBANCE_BASES, PRESETS, DisturbanceSchedule, zero_disturbance
from .sim import REFERENCES, ClosedLoop, SimConfig

SCHEMA = {
    "plant": ("preset", "u_min", "u_max", "x0", "reference"),
    "controller": ("kind", "k", "tau", "nu", "force_safe"),
    "performance": ("rho0", "rho_inf", "kappa", "k_rho", "delta_bar", "delta_underbar", "sigma", "phi0",
                    "epsilon_dz"),
    "disturbance": ("base", "pulse_amp", "pulse_times", "pulse_decay"),
    "sim": ("h", "T", "integrator", "record_every", "seed"),
    "output": ("csv", "events", "cert"),
}
REQUIRED = {"plant": ("preset", "x0"), "controller": ("kind", "k", "tau")}


def _floats(text):
    text = text.strip()
    if text.startswith("[") and text.endswith("]"):
        text = text[1:-1]
    if not text.strip():
        return ()
    return tuple(float(v) for v in text.split(","))


def _fmt(v):
    return repr(float(v))


def _fmt_list(vals):
    return ", ".join(_fmt(v) for v in vals)


@dataclass(frozen=True)
class Scenario:
    plant_preset: str
    x0: tuple
    controller: ControllerConfig
    perf: PerformanceSpec = PerformanceSpec()
    sim: SimConfig = SimConfig()
    u_min: float = None
    u_max: float = None
    reference: str = "sin"
    disturbance_base: str = "none"
    pulse_amp: float = 0.0
    pulse_times: tuple = ()
    pulse_decay: float = 0.1
    out_csv: str = ""
    out_events: str = ""
    cert_path: str = ""
    source_dir: str = field(default="", compare=False)

    def __post_init__(self):
        if self.plant_preset not in PRESETS:
            raise ConfigError(f"unknown plant preset {self.plant_preset!r}; known: {sorted(PRESETS)}")
        if self.disturbance_base != "none" and self.disturbance_base not in DISTURBANCE_BASES:
            raise ConfigError(f"unknown disturbance base {self.disturbance_base!r}")
        if self.reference not in REFERENCES:
            raise ConfigError(f"unknown reference {self.reference!r}")
        object.__setattr__(self, "x0", tuple(float(v) for v in self.x0))
        object.__setattr__(self, "pulse_times", tuple(float(v) for v in self.pulse_times))
        plant = self.build_plant()
        if len(self.x0) != plant.n or self.controller.n != plant.n:
            raise ConfigError(f"plant has {plant.n} stages; x0 and gains must match")

    def build_plant(self):
        kw = {}
        if self.u_max is not None:
            kw["u_max"] = self.u_max
        if self.u_min is not None:
            kw["u_min"] = self.u_min
        try:
            return PRESETS[self.plant_preset](**kw)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def build_disturbance(self):
        n = len(self.x0)
        if self.disturbance_base == "none":
            if not self.pulse_times:
                return zero_disturbance(n)
            zero = zero_disturbance(n).base
            return DisturbanceSchedule(zero, self.pulse_times, self.pulse_amp, self.pulse_decay, name="none")
        return DisturbanceSchedule(DISTURBANCE_BASES[self.disturbance_base], self.pulse_times, self.pulse_amp,
                                   self.pulse_decay, name=self.disturbance_base)

    def build_loop(self, cert):
        return ClosedLoop(self.build_plant(), self.controller, self.perf, cert, self.build_disturbance(),
                          self.x0, self.reference)

    def resolve(self, path):
        """Relative output or certificate paths are taken from the scenario file's directory."""
        if not path or os.path.isabs(path):
            return path
        return os.path.join(self.source_dir, path) if self.source_dir else path

    def variant(self, seed):
        """Same scenario with seeded random pulse times (within the horizon) and amplitude."""
        rng = np.random.default_rng(seed)
        count = max(1, len(self.pulse_times))
        T = self.sim.T
        times = np.sort(rng.uniform(0.1 * T, 0.9 * T, size=count))
        base_amp = self.pulse_amp if self.pulse_amp else 0.1
        amp = float(base_amp * rng.uniform(0.5, 1.5))
        return replace(self, pulse_times=tuple(float(t) for t in times), pulse_amp=amp)

    # --- text form ----------------------------------------------------------------

    def to_text(self):
        c, p, s = self.controller, self.perf, self.sim
        cp = configparser.ConfigParser()
        cp.optionxform = str
        plant = {"preset": self.plant_preset, "x0": _fmt_list(self.x0), "reference": self.reference}
        if self.u_min is not None:
            plant["u_min"] = _fmt(self.u_min)
        if self.u_max is not None:
            plant["u_max"] = _fmt(self.u_max)
        cp["plant"] = plant
        cp["controller"] = {"kind": c.kind, "k": _fmt_list(c.k), "tau": _fmt_list(c.tau), "nu": _fmt(c.nu),
                            "force_safe": str(c.force_safe).lower()}
        cp["performance"] = {
            "rho0": _fmt(p.rho0), "rho_inf": _fmt(p.rho_inf), "kappa": _fmt(p.kappa), "k_rho": _fmt(p.k_rho),
            "delta_bar": _fmt(p.delta_bar), "delta_underbar": _fmt(p.delta_underbar), "sigma": _fmt(p.sigma),
            "phi0": _fmt(p.phi0), "epsilon_dz": _fmt(p.epsilon),
        }
        cp["disturbance"] = {"base": self.disturbance_base, "pulse_amp": _fmt(self.pulse_amp),
                             "pulse_times": _fmt_list(self.pulse_times), "pulse_decay": _fmt(self.pulse_decay)}
        cp["sim"] = {"h": _fmt(s.h), "T": _fmt(s.T), "integrator": s.integrator,
                     "record_every": str(s.record_every), "seed": str(s.rng_seed)}
        cp["output"] = {"csv": self.out_csv, "events": self.out_events, "cert": self.cert_path}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def save(self, path):
        atomic_write(path, self.to_text())


def _get(sec, key, conv, default):
    if key not in sec:
        return default
    raw = sec[key]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec.name}] {key} = {raw!r}: {exc}") from exc


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ValueError("expected true/false")


def loads(text, source_dir=""):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable scenario: {exc}") from exc
    for name in cp.sections():
        if name not in SCHEMA:
            raise ConfigError(f"unknown section [{name}]")
        for key in cp[name]:
            if key not in SCHEMA[name]:
                raise ConfigError(f"unknown key {key!r} in [{name}]")
    for name, keys in REQUIRED.items():
        if name not in cp:
            raise ConfigError(f"missing section [{name}]")
        for key in keys:
            if key not in cp[name]:
                raise ConfigError(f"missing key {key!r} in [{name}]")
    empty = {}
    pl = cp["plant"]
    ct = cp["controller"]
    pf = cp["performance"] if "performance" in cp else empty
    ds = cp["disturbance"] if "disturbance" in cp else empty
    sm = cp["sim"] if "sim" in cp else empty
    out = cp["output"] if "output" in cp else empty
    d = PerformanceSpec()
    s = SimConfig()
    try:
        controller = ControllerConfig(
            kind=ct["kind"].strip(), k=_get(ct, "k", _floats, ()), tau=_get(ct, "tau", _floats, ()),
            nu=_get(ct, "nu", float, 0.0), force_safe=_get(ct, "force_safe", _bool, False),
        )
        perf = PerformanceSpec(
            rho0=_get(pf, "rho0", float, d.rho0), rho_inf=_get(pf, "rho_inf", float, d.rho_inf),
            kappa=_get(pf, "kappa", float, d.kappa), k_rho=_get(pf, "k_rho", float, d.k_rho),
            delta_bar=_get(pf, "delta_bar", float, d.delta_bar),
            delta_underbar=_get(pf, "delta_underbar", float, d.delta_underbar),
            sigma=_get(pf, "sigma", float, d.sigma), phi0=_get(pf, "phi0", float, d.phi0),
            epsilon=_get(pf, "epsilon_dz", float, d.epsilon),
        )
        sim = SimConfig(
            h=_get(sm, "h", float, s.h), T=_get(sm, "T", float, s.T),
            integrator=sm.get("integrator", s.integrator).strip(),
            record_every=_get(sm, "record_every", int, s.record_every), rng_seed=_get(sm, "seed", int, s.rng_seed),
        )
        return Scenario(
            plant_preset=pl["preset"].strip(), x0=_get(pl, "x0", _floats, ()), controller=controller, perf=perf,
            sim=sim, u_min=_get(pl, "u_min", float, None), u_max=_get(pl, "u_max", float, None),
            reference=pl.get("reference", "sin").strip(), disturbance_base=ds.get("base", "none").strip(),
            pulse_amp=_get(ds, "pulse_amp", float, 0.0), pulse_times=_get(ds, "pulse_times", _floats, ()),
            pulse_decay=_get(ds, "pulse_decay", float, 0.1), out_csv=out.get("csv", "").strip(),
            out_events=out.get("events", "").strip(), cert_path=out.get("cert", "").strip(), source_dir=source_dir,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc}") from exc
    return loads(text, source_dir=os.path.dirname(os.path.abspath(path)))


def preset_path(name):
    """Filesystem path of a shipped preset such as ``case-a.cfg``."""
    return str(resources.files("bcl") / "presets" / name)


def load_preset(name):
    return load(preset_path(name))

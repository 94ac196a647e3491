"""Command-line front end.

Subcommands: ``check-lmi``, ``simulate``, ``compare``, ``verify-invariance``
and ``emit-plots``.  Exit codes: 0 success, 1 bad input, 2 infeasible or
failed certification, 3 performance violation, 4 non-finite abort.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import kernels, scenario
from .errors import BclError, ConfigError, GridMismatch, NonFinite, PreconditionViolated
from .invariant import (
    DEFAULT_FORM,
    FORMS,
    InvariantCertificate,
    atomic_write,
    corner_a_builder,
    monte_carlo_invariance,
    search_trivial_solution,
)
from .linalg import build_A0
from .perf import PerformanceSpec, mu_bounds, ppf
from .sim import SimulationTrace, compare_runs, labelling_certificate, run_simulation

log = logging.getLogger("bcl")

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INFEASIBLE = 2
EXIT_VIOLATION = 3
EXIT_NONFINITE = 4


class UsageError(Exception):
    pass


def _floats(text, name):
    try:
        vals = tuple(float(v) for v in text.strip("[] ").split(","))
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}") from None
    if not vals:
        raise UsageError(f"--{name} is empty")
    return vals


# --- check-lmi ----------------------------------------------------------------------


def cmd_check_lmi(args):
    gains = _floats(args.gains, "gains")
    if any(k <= 0 for k in gains):
        raise UsageError("gains must be positive")
    if not (args.kappa > 0):
        raise UsageError("kappa must be positive")
    if args.kappa > min(gains):
        raise UsageError(f"kappa = {args.kappa} exceeds min gain {min(gains)}; the envelope cannot be tracked")
    if not (args.w_scale > 0):
        raise UsageError("--w-scale must be positive")
    n = len(gains)
    lo, hi = _floats(args.g_bounds, "g-bounds") if args.g_bounds else (0.5, 1.5)
    if not (0 < lo <= hi):
        raise UsageError("--g-bounds must satisfy 0 < lo <= hi")
    g_bounds = ((lo, hi),) * n
    A0 = build_A0(gains)
    W = args.w_scale * np.eye(n)
    mu_range = None
    if args.prop == 2:
        spec = PerformanceSpec(rho0=args.rho0, rho_inf=args.rho_inf, delta_bar=args.delta_bar,
                               delta_underbar=args.delta_underbar)
        mu_range = mu_bounds(spec.etf(), 0.5 * args.rho_inf, args.rho0)
    cert = search_trivial_solution(A0, args.kappa, W, g_bounds, rho_inf=args.rho_inf, rho0=args.rho0,
                                   form=args.lmi_form, prop=args.prop, nu=args.nu, mu_range=mu_range)
    print(cert.report())
    if args.out:
        cert.save(args.out)
        print(f"certificate written to {args.out}")
    return EXIT_OK if cert.feasible else EXIT_INFEASIBLE


# --- simulate -----------------------------------------------------------------------


def _load_cert(path, scn, force):
    path = path or scn.resolve(scn.cert_path)
    if path and os.path.exists(path):
        return InvariantCertificate.load(path)
    if scn.controller.kind == "cfb":
        return None
    if force:
        log.warning("no certificate; running %s with an identity matrix (safety evaluation unsound)",
                    scn.controller.kind)
        return labelling_certificate(len(scn.x0), scn.perf)
    where = f" (looked for {path})" if path else ""
    raise UsageError(f"{scn.controller.kind} needs a certificate: pass --cert or use --force{where}")


def _summary(label, trace, events):
    s1 = trace.col("s1")
    return (f"{label}: max|s1| = {np.max(np.abs(s1)):.6g}, violations = {trace.violations()}, "
            f"saturation duty = {trace.saturation_duty():.4f}, events = {len(events)}, "
            f"backend = {trace.meta.get('backend')}")


def cmd_simulate(args):
    scn = scenario.load(args.scenario)
    if args.seed is not None:
        scn = replace(scn, sim=replace(scn.sim, rng_seed=args.seed))
    cert = _load_cert(args.cert, scn, args.force)

    if args.sweep:
        return _sweep(scn, cert, args)

    trace, events = run_simulation(scn.build_loop(cert), scn.sim, force=args.force)
    out_csv = args.out_csv or scn.out_csv
    out_events = args.out_events or scn.out_events
    if out_csv:
        trace.to_csv(out_csv)
    if out_events:
        events.write(out_events)
    print(trace.meta["preconditions"].describe())
    print(_summary(os.path.basename(args.scenario), trace, events))
    return EXIT_VIOLATION if trace.violations() else EXIT_OK


def _sweep(scn, cert, args):
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(scn.sim.rng_seed).spawn(args.sweep)]
    variants = [scn.variant(s) for s in seeds]

    def run(v):
        return run_simulation(v.build_loop(cert), v.sim, force=args.force)

    with ThreadPoolExecutor(max_workers=kernels.worker_count()) as pool:
        results = list(pool.map(run, variants))
    worst = EXIT_OK
    for seed, v, (trace, events) in zip(seeds, variants, results):
        print(_summary(f"variant seed={seed} pulses={[round(t, 3) for t in v.pulse_times]} amp={v.pulse_amp:.4g}",
                       trace, events))
        if trace.violations():
            worst = EXIT_VIOLATION
    return worst


# --- compare ------------------------------------------------------------------------


def cmd_compare(args):
    a = scenario.load(args.scenario_a)
    b = scenario.load(args.scenario_b)
    if a.sim != b.sim:
        raise GridMismatch(f"sim settings differ: {a.sim} vs {b.sim}")
    if (a.plant_preset, a.u_min, a.u_max, a.x0) != (b.plant_preset, b.u_min, b.u_max, b.x0):
        raise UsageError("compared scenarios must share the plant and initial state")
    runs = []
    for scn, path in ((a, args.cert_a), (b, args.cert_b)):
        cert = _load_cert(path, scn, args.force)
        runs.append(run_simulation(scn.build_loop(cert), scn.sim, force=args.force)[0])
    labels = (f"{os.path.basename(args.scenario_a)}[{a.controller.kind}]",
              f"{os.path.basename(args.scenario_b)}[{b.controller.kind}]")
    report = compare_runs(runs[0], runs[1], labels)
    print(report.to_text(), end="")
    if args.out_report:
        atomic_write(args.out_report, report.to_csv())
    return EXIT_OK


# --- verify-invariance --------------------------------------------------------------


def cmd_verify(args):
    if args.trials < 0:
        raise UsageError("--trials must be non-negative")
    if not (args.horizon > 0):
        raise UsageError("--horizon must be positive")
    cert = InvariantCertificate.load(args.cert)
    if cert.prop != 1:
        raise UsageError("Monte Carlo verification covers the tracking-envelope certificate only")
    if not cert.feasible:
        print("certificate is infeasible; nothing to verify")
        return EXIT_INFEASIBLE
    spec = PerformanceSpec(rho0=cert.rho0, rho_inf=cert.rho_inf, kappa=cert.kappa)
    A0 = build_A0(cert.gains)
    report = monte_carlo_invariance(corner_a_builder(A0, cert.g_bounds), cert, lambda t: ppf(spec, t), args.trials,
                                    args.horizon, args.seed, h=args.h, omega_scale=args.omega_scale,
                                    workers=kernels.worker_count())
    print(report.summary())
    if args.trials == 0:
        print("warning: zero trials, the check is vacuous")
    return EXIT_OK if report.passed else EXIT_INFEASIBLE


# --- emit-plots ---------------------------------------------------------------------

_PLOT_HEADER = '''"""Plots for {source}.  Generated by bcl emit-plots; needs numpy and matplotlib."""

import csv

import matplotlib.pyplot as plt
import numpy as np

CSV_PATH = {path!r}
KIND = {kind!r}
DELTA_BAR, DELTA_UNDERBAR = {db!r}, {du!r}
REGIONS = {{"Safe": 0, "Transition": 1, "Outside": 2, "DeadZone": 3}}

with open(CSV_PATH) as fh:
    rows = list(csv.reader(fh))
header, body = rows[0], rows[1:]
col = {{}}
for j, name in enumerate(header):
    if name == "region":
        col[name] = np.array([REGIONS[r[j]] for r in body], dtype=float)
    else:
        col[name] = np.array([float(r[j]) for r in body])
t = col["t"]
if KIND == "bpc":
    z = col["z1"]
    q = np.exp(-2.0 * np.abs(z))
    ratio = np.where(z >= 0, (DELTA_BAR - DELTA_UNDERBAR * q) / (1 + q), (DELTA_BAR * q - DELTA_UNDERBAR) / (q + 1))
    e = col["rho"] * ratio
else:
    e = col["s1"]
y_ref = col["x1"] - e

fig, axes = plt.subplots({panels}, 1, sharex=True, figsize=(9, {height}))
'''

_PLOT_PANELS = '''
ax = axes[0]
ax.plot(t, col["x1"], label="y = x1")
ax.plot(t, y_ref, "--", label="reference")
ax.set_ylabel("output")
ax.legend(loc="upper right")

ax = axes[1]
ax.plot(t, col["s1"], label="s1")
ax.plot(t, col["z1"], "--", label="z1")
if KIND == "bpc":
    ax.plot(t, e, ":", label="e")
    ax.plot(t, DELTA_BAR * col["rho"], "k-", lw=0.8, label="band")
    ax.plot(t, -DELTA_UNDERBAR * col["rho"], "k-", lw=0.8)
else:
    ax.plot(t, col["rho"], "k-", lw=0.8, label="+/- rho")
    ax.plot(t, -col["rho"], "k-", lw=0.8)
ax.set_ylabel("tracking error")
ax.legend(loc="upper right")

ax = axes[2]
ax.plot(t, col["u_raw"], label="u (commanded)")
ax.plot(t, col["u_applied"], label="sat(u)")
ax.set_ylabel("input")
ax.legend(loc="upper right")

ax = axes[3]
ax.plot(t, col["f_p"], label="f_p")
ax.plot(t, col["f_t"], label="f_t")
ax.step(t, col["region"] / 3.0, where="post", label="region (0 safe .. 1 dead zone)")
ax.plot(t, col["lyap"] / col["gamma"], label={lyap_label!r})
ax.set_ylabel("balance")
ax.legend(loc="upper right")
'''

_PLOT_RHO = '''
ax = axes[4]
ax.plot(t, col["rho"], label="rho")
ax.plot(t, np.gradient(col["rho"], t), label="d rho / dt")
ax.set_ylabel("performance function")
ax.legend(loc="upper right")
'''

_PLOT_FOOTER = '''
axes[-1].set_xlabel("t [s]")
fig.tight_layout()
plt.show()
'''


def plot_script(csv_path, trace, delta_bar=1.0, delta_underbar=1.0):
    bpc = trace.kind == "bpc"
    panels = 5 if bpc else 4
    text = _PLOT_HEADER.format(source=os.path.basename(csv_path), path=os.path.abspath(csv_path), kind=trace.kind,
                               db=float(delta_bar), du=float(delta_underbar), panels=panels, height=2.2 * panels)
    text += _PLOT_PANELS.format(lyap_label="Phi" if bpc else "V / Gamma")
    if bpc:
        text += _PLOT_RHO
    return text + _PLOT_FOOTER


def cmd_emit_plots(args):
    try:
        trace = SimulationTrace.from_csv(args.trace)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read trace {args.trace}: {exc}") from exc
    script = plot_script(args.trace, trace, args.delta_bar, args.delta_underbar)
    out = args.out or os.path.splitext(args.trace)[0] + "_plots.py"
    atomic_write(out, script)
    print(f"plot script written to {out} ({5 if trace.kind == 'bpc' else 4} panels)")
    return EXIT_OK


# --- wiring -------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="bcl", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check-lmi", help="search X = V_h I and write a certificate")
    c.add_argument("--gains", required=True, help="comma-separated k_1..k_n")
    c.add_argument("--kappa", type=float, default=0.5)
    c.add_argument("--w-scale", type=float, default=1.0, help="W = scale * I")
    c.add_argument("--lmi-form", choices=FORMS, default=DEFAULT_FORM)
    c.add_argument("--g-bounds", default=None, help="lo,hi bounds on every input gain (default 0.5,1.5)")
    c.add_argument("--rho0", type=float, default=1.0)
    c.add_argument("--rho-inf", type=float, default=0.1)
    c.add_argument("--prop", type=int, choices=(1, 2), default=1,
                   help="1: tracking envelope set, 2: transformed-error set")
    c.add_argument("--nu", type=float, default=0.0)
    c.add_argument("--delta-bar", type=float, default=1.0)
    c.add_argument("--delta-underbar", type=float, default=1.0)
    c.add_argument("--out", default=None, help="certificate file (JSON)")
    c.set_defaults(func=cmd_check_lmi)

    s = sub.add_parser("simulate", help="run a scenario")
    s.add_argument("scenario")
    s.add_argument("--cert", default=None)
    s.add_argument("--out-csv", default=None)
    s.add_argument("--out-events", default=None)
    s.add_argument("--force", action="store_true", help="run without a feasible certificate")
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--sweep", type=int, default=0, metavar="N",
                   help="run N seeded pulse variants concurrently instead of the scenario itself")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("compare", help="run two scenarios on the same grid and compare")
    m.add_argument("scenario_a")
    m.add_argument("scenario_b")
    m.add_argument("--cert-a", default=None)
    m.add_argument("--cert-b", default=None)
    m.add_argument("--force", action="store_true")
    m.add_argument("--out-report", default=None, help="CSV report path")
    m.set_defaults(func=cmd_compare)

    v = sub.add_parser("verify-invariance", help="Monte Carlo check of a certificate")
    v.add_argument("--cert", required=True)
    v.add_argument("--trials", type=int, default=200)
    v.add_argument("--horizon", type=float, default=10.0)
    v.add_argument("--seed", type=int, default=7)
    v.add_argument("--h", type=float, default=0.01)
    v.add_argument("--omega-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("emit-plots", help="write a matplotlib script for a trace CSV")
    e.add_argument("trace")
    e.add_argument("--out", default=None)
    e.add_argument("--delta-bar", type=float, default=1.0)
    e.add_argument("--delta-underbar", type=float, default=1.0)
    e.set_defaults(func=cmd_emit_plots)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NonFinite as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except (UsageError, ConfigError, GridMismatch, PreconditionViolated, BclError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

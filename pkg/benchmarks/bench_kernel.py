"""Compiled vs pure-Python kernels.

Times the closed-loop integration (Case A and Case B presets, shortened
horizon) and the Monte Carlo linear trials on both backends, checks that
the results agree and prints the speed-up.

    python benchmarks/bench_kernel.py [--T 2.0] [--trials 200] [--repeat 3]
"""

import argparse
import sys
import time
from dataclasses import replace

import numpy as np

from bcl import kernels, scenario
from bcl.invariant import InvariantCertificate, corner_a_builder
from bcl.linalg import build_A0
from bcl.perf import PerformanceSpec, ppf
from bcl.sim import run_simulation


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_closed_loop(name, cert_name, T, repeat):
    sc = scenario.load_preset(name)
    sc = replace(sc, sim=replace(sc.sim, T=T))
    cert = InvariantCertificate.load(scenario.preset_path(cert_name))
    loop = sc.build_loop(cert)
    rows = {}
    for backend in ("python", "compiled"):
        secs, (trace, _) = best_of(lambda: run_simulation(loop, sc.sim, backend=backend), repeat)
        rows[backend] = (secs, trace)
    diff = float(np.max(np.abs(rows["python"][1].data - rows["compiled"][1].data)))
    return sc.sim.n_steps, rows["python"][0], rows["compiled"][0], diff


def bench_trials(n_trials, horizon, repeat):
    cert = InvariantCertificate.load(scenario.preset_path("case-a.cert.json"))
    A0 = build_A0(cert.gains)
    spec = PerformanceSpec(rho0=cert.rho0, rho_inf=cert.rho_inf, kappa=cert.kappa)
    build = corner_a_builder(A0, cert.g_bounds)
    rng = np.random.default_rng(0)
    h, steps = 0.01, 10
    n_seg = int(horizon / (h * steps))
    A = np.array([build(rng) for _ in range(n_trials)])
    z0 = rng.normal(size=(n_trials, 3)) * 0.01
    omega = rng.normal(size=(n_trials, n_seg, 3)) * 0.05
    t = np.arange(n_seg * steps + 1) * h
    rho = np.array([ppf(spec, v) for v in t])
    gamma = rho**2 / cert.X[0, 0]
    res = {}
    for backend, workers in (("python", 1), ("compiled", 1), ("compiled", None)):
        label = backend if workers == 1 else f"{backend} x{kernels.worker_count()}"
        res[label] = best_of(lambda: kernels.linear_trials(A, cert.P, z0, omega, steps, h, rho, gamma,
                                                           backend=backend, workers=workers), repeat)
    ref = res["python"][1]
    diff = max(float(np.max(np.abs(res[k][1][0] - ref[0]))) for k in res)
    return {k: v[0] for k, v in res.items()}, diff


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--T", type=float, default=2.0, help="closed-loop horizon in seconds")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--horizon", type=float, default=10.0, help="linear-trial horizon in seconds")
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if not kernels.COMPILED_AVAILABLE:
        print("compiled kernels are not built; nothing to compare")
        return 1

    print(f"{'closed loop':<16}{'steps':>9}{'python s':>12}{'compiled s':>12}{'speed-up':>10}{'max diff':>11}")
    for name, cert in (("case-a.cfg", "case-a.cert.json"), ("case-b.cfg", "case-b.cert.json")):
        steps, py, cy, diff = bench_closed_loop(name, cert, args.T, args.repeat)
        print(f"{name:<16}{steps:>9}{py:>12.3f}{cy:>12.4f}{py / cy:>10.1f}{diff:>11.2e}")

    times, diff = bench_trials(args.trials, args.horizon, args.repeat)
    print(f"\nlinear trials: {args.trials} x {args.horizon:g} s (max diff {diff:.2e})")
    base = times["python"]
    for label, secs in times.items():
        print(f"  {label:<14}{secs:>10.4f} s{base / secs:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())

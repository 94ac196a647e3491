"""Backend selection for the hot loops.

The compiled extension is used when it imported cleanly and covers the
problem at hand; everything else runs on the pure-Python reference
kernels.  Set ``BCL_BACKEND=python`` to force the fallback.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _pykernel
from .errors import NonFinite

log = logging.getLogger(__name__)

try:
    from . import _ckernel
except ImportError:  # pragma: no cover - depends on the build
    _ckernel = None

COMPILED_AVAILABLE = _ckernel is not None
BACKEND = "compiled" if COMPILED_AVAILABLE and os.environ.get("BCL_BACKEND", "").lower() != "python" else "python"


def _resolve(backend):
    choice = (backend or BACKEND).lower()
    if choice not in ("compiled", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    if choice == "compiled" and not COMPILED_AVAILABLE:
        raise RuntimeError("compiled kernels are not built")
    return choice


def closed_loop(loop, sim, y0, backend=None):
    choice = _resolve(backend)
    if choice == "compiled" and loop.compiled_ok():
        rows, e, region, sat, clamp, floor, status, fail_t = _ckernel.closed_loop_paper(
            loop.kernel_params(), np.ascontiguousarray(y0, dtype=float), sim.h, sim.n_steps,
            int(sim.record_every), int(sim.integrator == "euler"),
        )
        return {
            "rows": rows, "e": e, "region": region, "sat": sat, "clamp": clamp, "floor": floor,
            "status": status, "fail_t": fail_t, "backend": "compiled",
        }
    if choice == "compiled":
        log.debug("compiled kernel does not cover plant %r; using the Python loop", loop.plant.name)
    return _pykernel.closed_loop(loop, sim, y0)


def worker_count():
    """Thread cap from ``BCL_THREADS`` (default: logical cores)."""
    raw = os.environ.get("BCL_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"BCL_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ValueError(f"BCL_THREADS must be a positive integer, got {raw!r}")
    return value


def linear_trials(A, P, z0, omega, steps_per_seg, h, rho, gamma, backend=None, workers=None):
    """Per-trial maxima of V/Gamma and |z1|/rho; trials are split across threads."""
    A, P, z0, omega = (np.ascontiguousarray(a, dtype=float) for a in (A, P, z0, omega))
    rho = np.ascontiguousarray(rho, dtype=float)
    gamma = np.ascontiguousarray(gamma, dtype=float)
    if _resolve(backend) == "compiled" and A.shape[1] <= 16:
        def run(sl):
            return _ckernel.linear_trials(A[sl], P, z0[sl], omega[sl], int(steps_per_seg), float(h), rho, gamma)
    else:
        def run(sl):
            return _pykernel.linear_trials(A[sl], P, z0[sl], omega[sl], steps_per_seg, h, rho, gamma)
    K = A.shape[0]
    workers = min(workers or worker_count(), max(K, 1))
    if workers <= 1:
        v, z = run(slice(None))
    else:
        edges = np.linspace(0, K, workers + 1).astype(int)
        parts = [slice(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, parts))
        v = np.concatenate([r[0] for r in results])
        z = np.concatenate([r[1] for r in results])
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(z))):
        raise NonFinite("linear trial diverged to a non-finite state")
    return v, z

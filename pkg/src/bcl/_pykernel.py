"""Pure-Python kernels: generic closed loop and vectorised linear trials.

These are the reference implementations; the compiled module must agree
with them to rounding.
"""

import numpy as np

from .errors import NonFinite


def record_indices(n_steps, record_every):
    idx = list(range(0, n_steps + 1, record_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return idx


def closed_loop(loop, sim, y0):
    """Fixed-step integration of ``loop`` from ``y0``.

    Returns decimated trace rows and full-resolution int8 flags
    (region, saturation, clamp, rho floor) for every step.
    """
    n_steps = sim.n_steps
    h = sim.h
    bpc = loop.kind == "bpc"
    ridx = 2 * loop.n - 1
    floor = loop.rho_floor
    keep = set(record_indices(n_steps, sim.record_every))

    region = np.zeros(n_steps + 1, dtype=np.int8)
    sat = np.zeros(n_steps + 1, dtype=np.int8)
    clamp = np.zeros(n_steps + 1, dtype=np.int8)
    floor_flag = np.zeros(n_steps + 1, dtype=np.int8)
    rows, es = [], []
    status, fail_t = 0, float("nan")

    y = np.array(y0, dtype=float)
    post_floor = False
    last = 0
    for i in range(n_steps + 1):
        t = i * h
        k1, out, _, hit = loop.evaluate(t, y)
        region[i] = int(out.region)
        sat[i] = out.u_applied != out.u_raw
        clamp[i] = out.clamped
        floor_flag[i] = hit or post_floor
        if i in keep:
            rows.append(loop.record_row(t, y, out))
            es.append(out.e)
        last = i
        if i == n_steps:
            break
        if sim.integrator == "euler":
            y_next = y + h * k1
        else:
            k2 = loop.derivative(t + 0.5 * h, y + 0.5 * h * k1)
            k3 = loop.derivative(t + 0.5 * h, y + 0.5 * h * k2)
            k4 = loop.derivative(t + h, y + h * k3)
            y_next = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(y_next)):
            status, fail_t = 1, t + h
            break
        post_floor = False
        if bpc and y_next[ridx] < floor:
            y_next[ridx] = floor
            post_floor = True
        y = y_next

    if status:
        n_kept = last + 1
        region, sat, clamp, floor_flag = (a[:n_kept] for a in (region, sat, clamp, floor_flag))
    return {
        "rows": np.array(rows),
        "e": np.array(es),
        "region": region,
        "sat": sat,
        "clamp": clamp,
        "floor": floor_flag,
        "status": status,
        "fail_t": fail_t,
        "backend": "python",
    }


def linear_trials(A, P, z0, omega, steps_per_seg, h, rho, gamma):
    """RK4 on z' = A_k z + w_k for all trials at once.

    ``omega[k, j]`` is held over segment j.  Returns per-trial maxima of
    V/Gamma and |z1|/rho over the grid, both including t = 0.
    """
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    z = np.array(z0, dtype=float)
    n_seg = omega.shape[1]

    def ratios(z, i):
        v = np.einsum("ki,ij,kj->k", z, P, z)
        return v / gamma[i], np.abs(z[:, 0]) / rho[i]

    v_max, z_max = ratios(z, 0)
    i = 0
    for j in range(n_seg):
        w = omega[:, j, :]
        for _ in range(steps_per_seg):
            f = lambda q: np.einsum("kij,kj->ki", A, q) + w  # noqa: E731
            k1 = f(z)
            k2 = f(z + 0.5 * h * k1)
            k3 = f(z + 0.5 * h * k2)
            k4 = f(z + h * k3)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            i += 1
            vr, zr = ratios(z, i)
            np.maximum(v_max, vr, out=v_max)
            np.maximum(z_max, zr, out=z_max)
    if not (np.all(np.isfinite(v_max)) and np.all(np.isfinite(z_max))):
        raise NonFinite("linear trial diverged to a non-finite state")
    return v_max, z_max

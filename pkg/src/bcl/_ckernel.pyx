# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels.

``closed_loop_paper`` integrates the three-stage preset plant under any of
the three control laws; ``linear_trials`` runs the boundary-started linear
trials.  Both mirror ``bcl._pykernel`` operation for operation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sin, cos, tanh, exp, log, pow, fabs, isfinite

cnp.import_array()

DEF NS = 8          # state bundle size for n = 3
DEF NCOL = 24       # 5 n + 9 trace columns
DEF MAXPULSE = 64


cdef struct Params:
    int kind            # 0 bcfb, 1 cfb, 2 bpc
    double k[3]
    double tau[2]
    double nu
    int force_safe
    double u_min
    double u_max
    double rho0
    double rho_inf
    double kappa
    double k_rho
    double delta_bar
    double delta_underbar
    double sigma
    double phi0
    double epsilon
    double lo
    double hi
    double P[9]
    double cxc
    double rho_floor
    int base
    double amp
    double decay
    int n_pulse
    double pulses[MAXPULSE]
    int reference


cdef struct Out:
    double s[3]
    double z[3]
    double xe[2]
    double u_raw
    double u_applied
    double f_p
    double f_t
    double lyap
    double level
    double rho
    double e
    int region
    int sat
    int clamped
    int floor_hit
    int bad


cdef inline double quad3(const double* P, const double* v) noexcept nogil:
    cdef double acc = 0.0
    cdef int i, j
    for i in range(3):
        for j in range(3):
            acc += v[i] * P[3 * i + j] * v[j]
    return acc


cdef inline double saturate(double u, double lo, double hi) noexcept nogil:
    if u >= hi:
        return hi
    if u <= lo:
        return lo
    return u


cdef void evaluate(const Params* p, double t, const double* y, double* dy, Out* o) noexcept nogil:
    cdef double x1 = y[0], x2 = y[1], x3 = y[2]
    cdef double xc0 = y[3], xc1 = y[4]
    cdef double yr, yrd, pulse, w1, w2, w3
    cdef double f1, f2, f3, q
    cdef double first, v1, c2, virt, xd0, xd1, xcd0, xcd1, u, ua, du
    cdef double rho, r, lam, mu, eta1, eta2, eta3, wv[3], rho_dot, gam, ratio
    cdef int j

    o.bad = 0
    o.floor_hit = 0
    o.clamped = 0
    if p.reference == 0:
        yr = sin(t)
        yrd = cos(t)
    else:
        yr = 0.0
        yrd = 0.0

    pulse = 0.0
    for j in range(p.n_pulse):
        if t >= p.pulses[j]:
            pulse += p.amp * exp(-p.decay * (t - p.pulses[j]))
    if p.base:
        w1 = 0.1 * sin(x1) * cos(t) + pulse
        w2 = 0.15 * sin(x1 * x2) + pulse
        w3 = 0.1 * cos(x3) * sin(t) + pulse
    else:
        w1 = pulse
        w2 = pulse
        w3 = pulse

    f1 = sin(x1) / (1.0 + x1 * x1)
    q = x1 * x2
    f2 = tanh(x2) * exp(-(q * q * q * q))
    f3 = x1 * x2
    # input gains are all one for this plant

    if p.kind == 2:
        rho = y[5]
        if not (rho > 0.0):
            o.bad = 1
            return
        eta1 = 0.0
        eta2 = y[6]
        eta3 = y[7]
        o.e = x1 - yr
        r = o.e / rho
        if r < p.lo:
            r = p.lo
            o.clamped = 1
        elif r > p.hi:
            r = p.hi
            o.clamped = 1
        o.s[0] = 0.5 * log((r + p.delta_underbar) / (p.delta_bar - r))
        lam = 0.5 * (1.0 / (r + p.delta_underbar) + 1.0 / (p.delta_bar - r))
        mu = lam / rho
        first = o.s[0]
        v1 = -p.k[0] * pow(mu, p.nu - 1.0) * first - f1 + yrd
        c2 = mu
    else:
        rho = (p.rho0 - p.rho_inf) * exp(-p.kappa * t) + p.rho_inf
        eta1 = y[5]
        eta2 = y[6]
        eta3 = y[7]
        o.e = x1 - yr
        o.s[0] = o.e
        mu = 1.0
        c2 = 1.0
    o.s[1] = x2 - xc0
    o.s[2] = x3 - xc1
    o.z[0] = o.s[0] - eta1
    o.z[1] = o.s[1] - eta2
    o.z[2] = o.s[2] - eta3
    if p.kind != 2:
        first = o.s[0] if p.kind == 1 else o.z[0]
        v1 = -p.k[0] * first - f1 + yrd
    c2 = c2 * o.z[0]

    virt = v1
    xd0 = virt
    xcd0 = (virt - xc0) / p.tau[0]
    virt = -p.k[1] * o.s[1] - f2 - c2 + xcd0
    xd1 = virt
    xcd1 = (virt - xc1) / p.tau[1]
    u = -p.k[2] * o.s[2] - f3 - o.z[1] + xcd1
    ua = saturate(u, p.u_min, p.u_max)
    du = ua - u
    o.u_raw = u
    o.u_applied = ua
    o.sat = ua != u
    o.xe[0] = xc0 - xd0
    o.xe[1] = xc1 - xd1
    o.rho = rho

    if p.kind == 2:
        wv[0] = o.z[0] * pow(mu, p.nu / 2.0)
        wv[1] = o.z[1]
        wv[2] = o.z[2]
        o.lyap = quad3(p.P, wv)
        o.level = 1.0
        if p.force_safe or o.lyap <= p.phi0:
            o.f_p = 1.0
        elif o.lyap >= 1.0:
            o.f_p = 0.0
        else:
            o.f_p = (1.0 - o.lyap) / (1.0 - p.phi0)
        ratio = fabs(o.e) / rho
        if ratio <= 0.5 * p.epsilon:
            o.f_t = 0.0
        elif ratio >= p.epsilon:
            o.f_t = 1.0
        else:
            o.f_t = 2.0 * ratio / p.epsilon - 1.0
        if o.lyap <= p.phi0:
            o.region = 0
        elif ratio <= p.epsilon:
            o.region = 3
        elif o.lyap < 1.0:
            o.region = 1
        else:
            o.region = 2
        rho_dot = -o.f_p * p.k_rho * (rho - p.rho_inf)
        if o.f_t > 0.0 and o.f_p < 1.0:
            rho_dot += (1.0 - o.f_p) * o.f_t * (rho / o.e) * (eta2 + o.xe[0])
        if rho <= p.rho_floor and rho_dot < 0.0:
            rho_dot = 0.0
            o.floor_hit = 1
        dy[5] = rho_dot
        dy[6] = -p.k[1] * eta2 + (eta3 + o.xe[1])
        dy[7] = -p.k[2] * eta3 + du
    else:
        o.lyap = quad3(p.P, o.z)
        gam = rho * rho / p.cxc
        o.level = gam
        o.f_t = 1.0
        if o.lyap >= gam:
            o.f_p = 0.0
        elif o.lyap <= p.sigma * gam:
            o.f_p = 1.0
        else:
            o.f_p = (gam - o.lyap) / (gam - p.sigma * gam)
        if o.lyap <= p.sigma * gam:
            o.region = 0
        elif o.lyap < gam:
            o.region = 1
        else:
            o.region = 2
        if p.kind == 0:
            dy[5] = -o.f_p * p.k[0] * eta1 + (1.0 - o.f_p) * (eta2 + o.xe[0])
        else:
            dy[5] = -p.k[0] * eta1 + (eta2 + o.xe[0])
        dy[6] = -p.k[1] * eta2 + (eta3 + o.xe[1])
        dy[7] = -p.k[2] * eta3 + du

    dy[0] = f1 + x2 + w1
    dy[1] = f2 + x3 + w2
    dy[2] = f3 + ua + w3
    dy[3] = xcd0
    dy[4] = xcd1


cdef void record(const Params* p, double t, const double* y, const Out* o, double* row) noexcept nogil:
    cdef int j
    row[0] = t
    for j in range(3):
        row[1 + j] = y[j]
        row[4 + j] = o.s[j]
        row[7 + j] = o.z[j]
    if p.kind == 2:
        row[10] = 0.0
    else:
        row[10] = y[5]
    row[11] = y[6]
    row[12] = y[7]
    row[13] = o.rho
    row[14] = o.level
    row[15] = o.lyap
    row[16] = o.f_p
    row[17] = o.f_t
    row[18] = o.u_raw
    row[19] = o.u_applied
    row[20] = o.u_applied - o.u_raw
    row[21] = o.region
    row[22] = o.xe[0]
    row[23] = o.xe[1]


cdef Params unpack(dict d) except *:
    cdef Params p
    cdef int j
    p.kind = d["kind"]
    for j in range(3):
        p.k[j] = d["k"][j]
    for j in range(2):
        p.tau[j] = d["tau"][j]
    p.nu = d["nu"]
    p.force_safe = d["force_safe"]
    p.u_min = d["u_min"]
    p.u_max = d["u_max"]
    p.rho0 = d["rho0"]
    p.rho_inf = d["rho_inf"]
    p.kappa = d["kappa"]
    p.k_rho = d["k_rho"]
    p.delta_bar = d["delta_bar"]
    p.delta_underbar = d["delta_underbar"]
    p.sigma = d["sigma"]
    p.phi0 = d["phi0"]
    p.epsilon = d["epsilon"]
    p.lo = -p.delta_underbar + d["margin"]
    p.hi = p.delta_bar - d["margin"]
    for j in range(9):
        p.P[j] = d["P"][j]
    p.cxc = d["cxc"]
    p.rho_floor = d["rho_floor"]
    p.base = d["base_disturbance"]
    p.amp = d["pulse_amp"]
    p.decay = d["pulse_decay"]
    if len(d["pulse_times"]) > MAXPULSE:
        raise ValueError(f"at most {MAXPULSE} pulses supported by the compiled kernel")
    p.n_pulse = len(d["pulse_times"])
    for j in range(p.n_pulse):
        p.pulses[j] = d["pulse_times"][j]
    p.reference = d["reference"]
    return p


def closed_loop_paper(dict params, double[::1] y0, double h, long n_steps, long record_every, int euler):
    """Integrate from ``y0``; returns (rows, e, region, sat, clamp, floor, status, fail_t)."""
    cdef Params p = unpack(params)
    cdef long n_rec = (n_steps + record_every - 1) // record_every + 1
    rows_np = np.zeros((n_rec, NCOL))
    e_np = np.zeros(n_rec)
    flags_np = np.zeros((4, n_steps + 1), dtype=np.int8)
    cdef double[:, ::1] rows = rows_np
    cdef double[::1] ev = e_np
    cdef cnp.int8_t[:, ::1] flags = flags_np
    cdef double y[NS]
    cdef double yt[NS]
    cdef double k1[NS]
    cdef double k2[NS]
    cdef double k3[NS]
    cdef double k4[NS]
    cdef Out o, scratch
    cdef long i, kept = 0, last = 0
    cdef int j, status = 0, post_floor = 0
    cdef double t, fail_t = float("nan")

    for j in range(NS):
        y[j] = y0[j]
    with nogil:
        for i in range(n_steps + 1):
            t = i * h
            evaluate(&p, t, y, k1, &o)
            if o.bad:
                status = 1
                fail_t = t
                break
            flags[0, i] = o.region
            flags[1, i] = o.sat
            flags[2, i] = o.clamped
            flags[3, i] = o.floor_hit or post_floor
            last = i
            if i % record_every == 0 or i == n_steps:
                record(&p, t, y, &o, &rows[kept, 0])
                ev[kept] = o.e
                kept += 1
            if i == n_steps:
                break
            if euler:
                for j in range(NS):
                    y[j] = y[j] + h * k1[j]
            else:
                for j in range(NS):
                    yt[j] = y[j] + 0.5 * h * k1[j]
                evaluate(&p, t + 0.5 * h, yt, k2, &scratch)
                for j in range(NS):
                    yt[j] = y[j] + 0.5 * h * k2[j]
                evaluate(&p, t + 0.5 * h, yt, k3, &scratch)
                for j in range(NS):
                    yt[j] = y[j] + h * k3[j]
                evaluate(&p, t + h, yt, k4, &scratch)
                for j in range(NS):
                    y[j] = y[j] + (h / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])
            for j in range(NS):
                if not isfinite(y[j]):
                    status = 1
            if status:
                fail_t = t + h
                break
            post_floor = 0
            if p.kind == 2 and y[5] < p.rho_floor:
                y[5] = p.rho_floor
                post_floor = 1
    n_flags = last + 1 if status else n_steps + 1
    return (rows_np[:kept], e_np[:kept], flags_np[0, :n_flags].copy(), flags_np[1, :n_flags].copy(),
            flags_np[2, :n_flags].copy(), flags_np[3, :n_flags].copy(), status, fail_t)


cdef inline void lin_rhs(const double* A, const double* z, const double* w, double* out, int n) noexcept nogil:
    cdef int i, j
    cdef double acc
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += A[n * i + j] * z[j]
        out[i] = acc + w[i]


def linear_trials(double[:, :, ::1] A, double[:, ::1] P, double[:, ::1] z0, double[:, :, ::1] omega,
                  long steps_per_seg, double h, double[::1] rho, double[::1] gamma):
    """Per-trial maxima of V/Gamma and |z1|/rho for z' = A z + w with held w."""
    cdef Py_ssize_t K = A.shape[0]
    cdef int n = A.shape[1]
    cdef Py_ssize_t n_seg = omega.shape[1]
    if n > 16:
        raise ValueError("linear_trials supports n <= 16")
    v_np = np.zeros(K)
    z_np = np.zeros(K)
    cdef double[::1] vmax = v_np
    cdef double[::1] zmax = z_np
    cdef double Pf[256]
    cdef double z[16]
    cdef double zt[16]
    cdef double a1[16]
    cdef double a2[16]
    cdef double a3[16]
    cdef double a4[16]
    cdef Py_ssize_t k, seg, st
    cdef long i
    cdef int a, b
    cdef double v, zr, acc
    for a in range(n):
        for b in range(n):
            Pf[n * a + b] = P[a, b]
    with nogil:
        for k in range(K):
            for a in range(n):
                z[a] = z0[k, a]
            i = 0
            acc = 0.0
            for a in range(n):
                for b in range(n):
                    acc += z[a] * Pf[n * a + b] * z[b]
            vmax[k] = acc / gamma[0]
            zmax[k] = fabs(z[0]) / rho[0]
            for seg in range(n_seg):
                for st in range(steps_per_seg):
                    lin_rhs(&A[k, 0, 0], z, &omega[k, seg, 0], a1, n)
                    for a in range(n):
                        zt[a] = z[a] + 0.5 * h * a1[a]
                    lin_rhs(&A[k, 0, 0], zt, &omega[k, seg, 0], a2, n)
                    for a in range(n):
                        zt[a] = z[a] + 0.5 * h * a2[a]
                    lin_rhs(&A[k, 0, 0], zt, &omega[k, seg, 0], a3, n)
                    for a in range(n):
                        zt[a] = z[a] + h * a3[a]
                    lin_rhs(&A[k, 0, 0], zt, &omega[k, seg, 0], a4, n)
                    for a in range(n):
                        z[a] = z[a] + (h / 6.0) * (a1[a] + 2.0 * a2[a] + 2.0 * a3[a] + a4[a])
                    i += 1
                    acc = 0.0
                    for a in range(n):
                        for b in range(n):
                            acc += z[a] * Pf[n * a + b] * z[b]
                    v = acc / gamma[i]
                    zr = fabs(z[0]) / rho[i]
                    if v > vmax[k] or v != v:
                        vmax[k] = v
                    if zr > zmax[k] or zr != zr:
                        zmax[k] = zr
    return v_np, z_np

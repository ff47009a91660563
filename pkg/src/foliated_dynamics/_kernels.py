"""Compiled inner loops.

Everything here works on plain arrays so that numba can compile it; the
public modules wrap these with the typed objects.  All loops are pure
functions of their inputs and release the GIL, so orbit ensembles can be
spread over threads.

Domain tables (see ``surface_group.DomainTables``):

    kinds   int64[n]      0 = half-circle side, 1 = vertical-line side
    ms      float64[n]    circle centre / line abscissa
    rs      float64[n]    circle radius (unused for lines)
    sgns    float64[n]    orientation, the domain centre is on the negative side
    partner int64[n]      side pairing
    moves   float64[n,2,2] matrix applied when a point lies beyond side k
    words   int64[n]      signed 1-based generator index of that move
    centre  complex128

Status codes returned by the loops: 0 ok, 1 reduction budget exceeded,
2 curvature outside its certified range.
"""

import math

import numpy as np
from numba import njit

OK = 0
BUDGET_EXCEEDED = 1
OUT_OF_PINCH = 2

BOUNDARY_TOL = 1e-12
DET_TOL = 1e-12


@njit(cache=True, nogil=True)
def side_value(kind, m, r, sgn, x, y):
    """Signed sinh of the hyperbolic distance to a side, positive outside."""
    if kind == 0:
        dx = x - m
        return sgn * (dx * dx + y * y - r * r) / (2.0 * r * y)
    return sgn * (x - m) / y


@njit(cache=True, nogil=True)
def pick_move(x, y, kinds, ms, rs, sgns, partner, moves, centre):
    """Index of the side to cross back over, or -1 if (x, y) is in the domain.

    Among the sides the point lies beyond, the one whose move brings it
    closest to the domain centre wins; ties go to the lower index.  A point
    within BOUNDARY_TOL of side k counts as beyond it only when k is the
    larger index of its pair (half-open domain).
    """
    best = -1
    bestval = np.inf
    cx = centre.real
    cy = centre.imag
    for k in range(kinds.shape[0]):
        s = side_value(kinds[k], ms[k], rs[k], sgns[k], x, y)
        if s > BOUNDARY_TOL or (s >= -BOUNDARY_TOL and partner[k] < k):
            a = moves[k, 0, 0]
            b = moves[k, 0, 1]
            c = moves[k, 1, 0]
            d = moves[k, 1, 1]
            # image point, real Moebius action
            den_re = c * x + d
            den_im = c * y
            num_re = a * x + b
            num_im = a * y
            dd = den_re * den_re + den_im * den_im
            xi = (num_re * den_re + num_im * den_im) / dd
            yi = (num_im * den_re - num_re * den_im) / dd
            val = ((xi - cx) ** 2 + (yi - cy) ** 2) / (yi * cy)
            if val < bestval:
                bestval = val
                best = k
    return best


@njit(cache=True, nogil=True)
def apply_fiber(k, v, rep_moves, iso):
    """Apply the holonomy of move k to the fiber vector v (in place).

    Returns the log of the spherical derivative; isometric moves add an
    exact zero.
    """
    a = rep_moves[k, 0, 0]
    b = rep_moves[k, 0, 1]
    c = rep_moves[k, 1, 0]
    d = rep_moves[k, 1, 1]
    v0 = a * v[0] + b * v[1]
    v1 = c * v[0] + d * v[1]
    n2 = v0.real * v0.real + v0.imag * v0.imag + v1.real * v1.real + v1.imag * v1.imag
    n = math.sqrt(n2)
    v[0] = v0 / n
    v[1] = v1 / n
    if iso[k]:
        return 0.0
    return -math.log(n2)


@njit(cache=True, nogil=True)
def frame_base(g):
    a = g[0, 0]
    b = g[0, 1]
    c = g[1, 0]
    d = g[1, 1]
    den = c * c + d * d
    x = (a * c + b * d) / den
    y = (a * d - b * c) / den
    return x, y


@njit(cache=True, nogil=True)
def left_multiply(mv, g):
    a = mv[0, 0] * g[0, 0] + mv[0, 1] * g[1, 0]
    b = mv[0, 0] * g[0, 1] + mv[0, 1] * g[1, 1]
    c = mv[1, 0] * g[0, 0] + mv[1, 1] * g[1, 0]
    d = mv[1, 0] * g[0, 1] + mv[1, 1] * g[1, 1]
    g[0, 0] = a
    g[0, 1] = b
    g[1, 0] = c
    g[1, 1] = d


@njit(cache=True, nogil=True)
def renorm_if_needed(g):
    det = g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    if abs(det - 1.0) > DET_TOL:
        s = math.sqrt(abs(det))
        g[0, 0] /= s
        g[0, 1] /= s
        g[1, 0] /= s
        g[1, 1] /= s


@njit(cache=True, nogil=True)
def reduce_frame(g, v, kinds, ms, rs, sgns, partner, moves, words, centre,
                 rep_moves, iso, budget, word_buf):
    """Bring frame g into the domain in place, transporting fiber v.

    Returns (status, number of moves, log-derivative increment).  The first
    ``len(word_buf)`` moves are written to word_buf.
    """
    count = 0
    logd = 0.0
    while True:
        x, y = frame_base(g)
        k = pick_move(x, y, kinds, ms, rs, sgns, partner, moves, centre)
        if k < 0:
            return OK, count, logd
        if count >= budget:
            return BUDGET_EXCEEDED, count, logd
        left_multiply(moves[k], g)
        logd += apply_fiber(k, v, rep_moves, iso)
        if count < word_buf.shape[0]:
            word_buf[count] = words[k]
        count += 1


@njit(cache=True, nogil=True)
def reduce_point(x, y, v, kinds, ms, rs, sgns, partner, moves, centre,
                 rep_moves, iso, budget):
    """Point version of reduce_frame; returns (status, x, y, count, logd)."""
    count = 0
    logd = 0.0
    while True:
        k = pick_move(x, y, kinds, ms, rs, sgns, partner, moves, centre)
        if k < 0:
            return OK, x, y, count, logd
        if count >= budget:
            return BUDGET_EXCEEDED, x, y, count, logd
        a = moves[k, 0, 0]
        b = moves[k, 0, 1]
        c = moves[k, 1, 0]
        d = moves[k, 1, 1]
        z = complex(x, y)
        z = (a * z + b) / (c * z + d)
        x = z.real
        y = z.imag
        logd += apply_fiber(k, v, rep_moves, iso)
        count += 1


# ---------------------------------------------------------------------------
# chart coordinates of a sample: [area fraction, angle fraction, direction,
# fiber u, fiber v, backward-endpoint u, v, forward-endpoint u, v], all in [0, 1)


@njit(cache=True, nogil=True)
def octahedral(x, y, z):
    """Equal-area octahedral map of the unit sphere onto the unit square."""
    az = abs(z)
    if az > 1.0:
        az = 1.0
    r = math.sqrt(1.0 - az)
    phi = math.atan2(abs(y), abs(x)) / (0.5 * math.pi)
    v = r * phi
    u = r - v
    if z < 0.0:
        u, v = 1.0 - v, 1.0 - u
    if x < 0.0:
        u = -u
    if y < 0.0:
        v = -v
    return 0.5 * (u + 1.0), 0.5 * (v + 1.0)


@njit(cache=True, nogil=True)
def sphere_chart(p, q, fiber_rot):
    """Octahedral chart coordinates of the sphere point [p : q] after rotation."""
    a = fiber_rot[0, 0] * p + fiber_rot[0, 1] * q
    b = fiber_rot[1, 0] * p + fiber_rot[1, 1] * q
    n2 = a.real * a.real + a.imag * a.imag + b.real * b.real + b.imag * b.imag
    w = 2.0 * a * b.conjugate() / n2
    zc = (a.real * a.real + a.imag * a.imag - b.real * b.real - b.imag * b.imag) / n2
    return octahedral(w.real, w.imag, zc)


@njit(cache=True, nogil=True)
def _frac(t):
    f = t - math.floor(t)
    if f >= 1.0:
        f = 0.0
    return f


@njit(cache=True, nogil=True)
def boundary_t(alpha, disk_m, t_cap):
    """tanh(rho_b/2) of the domain boundary along the ray at angle alpha."""
    ca = math.cos(alpha)
    sa = math.sin(alpha)
    t = t_cap
    for k in range(disk_m.shape[0]):
        p = disk_m[k].real * ca + disk_m[k].imag * sa
        if p > 1.0:
            tk = p - math.sqrt(p * p - 1.0)
            if tk < t:
                t = tk
    return t


@njit(cache=True, nogil=True)
def base_chart(x, y, centre, disk_m, t_cap, cdf):
    """(area fraction, angular area fraction) of a point of the domain."""
    z = complex(x, y)
    w = (z - centre) / (z - centre.conjugate())
    alpha = math.atan2(w.imag, w.real)
    if alpha < 0.0:
        alpha += 2.0 * math.pi
    rw2 = w.real * w.real + w.imag * w.imag
    t = boundary_t(alpha, disk_m, t_cap)
    t2 = t * t
    s = rw2 * (1.0 - t2) / (t2 * (1.0 - rw2))
    if s >= 1.0:
        s = 1.0 - 1e-15
    # piecewise linear lookup of the cumulative angular area
    ntab = cdf.shape[0] - 1
    pos = alpha / (2.0 * math.pi) * ntab
    i = int(pos)
    if i >= ntab:
        i = ntab - 1
    f = pos - i
    a = cdf[i] * (1.0 - f) + cdf[i + 1] * f
    return s, _frac(a)


@njit(cache=True, nogil=True)
def record_sample(g, v, centre, disk_m, t_cap, cdf, fiber_rot, out):
    x, y = frame_base(g)
    s, a = base_chart(x, y, centre, disk_m, t_cap, cdf)
    out[0] = s
    out[1] = a
    theta_half = 0.5 * math.pi - 2.0 * math.atan2(g[1, 0], g[1, 1])
    zc = complex(x, y) - centre.conjugate()
    theta_disk = theta_half + 0.5 * math.pi - 2.0 * math.atan2(zc.imag, zc.real)
    out[2] = _frac(theta_disk / (2.0 * math.pi))
    fu, fv = sphere_chart(v[0], v[1], fiber_rot)
    out[3] = fu
    out[4] = fv
    bu, bv = sphere_chart(complex(g[0, 1], 0.0), complex(g[1, 1], 0.0), fiber_rot)
    out[5] = bu
    out[6] = bv
    eu, ev = sphere_chart(complex(g[0, 0], 0.0), complex(g[1, 0], 0.0), fiber_rot)
    out[7] = eu
    out[8] = ev


@njit(cache=True, nogil=True)
def geodesic_run(g, v, logd, time, n_steps, dt, kinds, ms, rs, sgns, partner, moves,
                 words, centre, rep_moves, iso, budget, rec, flip_record,
                 disk_m, t_cap, cdf, fiber_rot):
    """Advance the foliated geodesic flow n_steps times in place.

    logd and time are the running accumulators; adding increments one by one
    keeps split runs bit-identical to a single run.  When rec has rows, the state before step j is
    written to rec[j]; with flip_record the recorded frame is turned by pi
    (used when running the reversed flow but recording in forward terms).

    Returns (status, log derivative, time, number of crossings).
    """
    half_step = math.exp(0.5 * dt)
    crossings = 0
    word_buf = np.empty(0, dtype=np.int64)
    inv = 1.0 / half_step
    recording = rec.shape[0] > 0
    gf = np.empty((2, 2))
    for j in range(n_steps):
        if recording:
            if flip_record:
                # g @ [[0, 1], [-1, 0]]
                gf[0, 0] = -g[0, 1]
                gf[0, 1] = g[0, 0]
                gf[1, 0] = -g[1, 1]
                gf[1, 1] = g[1, 0]
                record_sample(gf, v, centre, disk_m, t_cap, cdf, fiber_rot, rec[j])
            else:
                record_sample(g, v, centre, disk_m, t_cap, cdf, fiber_rot, rec[j])
        g[0, 0] *= half_step
        g[1, 0] *= half_step
        g[0, 1] *= inv
        g[1, 1] *= inv
        status, count, dl = reduce_frame(g, v, kinds, ms, rs, sgns, partner, moves,
                                         words, centre, rep_moves, iso, budget, word_buf)
        time += dt
        if count > 0:
            logd += dl
        crossings += count
        if status != OK:
            return status, logd, time, crossings
        renorm_if_needed(g)
    return OK, logd, time, crossings


@njit(cache=True, nogil=True)
def brownian_run(state, v, dt, normals, kinds, ms, rs, sgns, partner, moves,
                 centre, rep_moves, iso, budget, reduce):
    """Brownian motion for the Laplacian (generator y^2 (dxx + dyy)).

    state = [x, y, logd] is updated in place.  normals has shape (n, 2) of
    standard normal draws.  y uses the exact log-normal step, x an Euler
    step with the current y.
    """
    x = state[0]
    y = state[1]
    logd = state[2]
    sq = math.sqrt(2.0 * dt)
    for j in range(normals.shape[0]):
        x = x + sq * y * normals[j, 0]
        y = y * math.exp(sq * normals[j, 1] - dt)
        if reduce:
            status, x, y, count, dl = reduce_point(x, y, v, kinds, ms, rs, sgns, partner,
                                                   moves, centre, rep_moves, iso, budget)
            if status != OK:
                state[0] = x
                state[1] = y
                state[2] = logd
                return status
            logd += dl
    state[0] = x
    state[1] = y
    state[2] = logd
    return OK


# ---------------------------------------------------------------------------
# conformally perturbed metric  e^{2 phi} |dz|^2 / y^2,  phi = eps * sum_c B(q_c)
# with q_c = cosh d(z, c) and B a compactly supported radial profile.
#
# vc state rows: [x, y, theta, u, J, time]; u is the Riccati variable
# (u' = -u^2 - K) and J accumulates the integral of u.

PROFILE_WENDLAND_C4 = 0
PROFILE_WENDLAND_C2 = 1


@njit(cache=True, nogil=True)
def bump_profile(s, profile):
    """Profile B(s) on [0, 1) with B(0) = 1, and its first two derivatives."""
    if s >= 1.0:
        return 0.0, 0.0, 0.0
    t = 1.0 - s
    if profile == PROFILE_WENDLAND_C4:
        t4 = t * t * t * t
        b = t4 * t * t * (35.0 * s * s + 18.0 * s + 3.0) / 3.0
        bs = -(56.0 / 3.0) * s * (5.0 * s + 1.0) * t4 * t
        bss = (56.0 / 3.0) * t4 * (35.0 * s * s - 4.0 * s - 1.0)
        return b, bs, bss
    t2 = t * t
    return t2 * t2 * (1.0 + 4.0 * s), -20.0 * s * t2 * t, 20.0 * t2 * (4.0 * s - 1.0)


@njit(cache=True, nogil=True)
def conformal_fields(x, y, cx, cy, eps, qs1, profile):
    """(phi, phi_x, phi_y, hyperbolic Laplacian of phi) at (x, y).

    qs1 = cosh(support radius) - 1.
    """
    phi = 0.0
    px = 0.0
    py = 0.0
    lap = 0.0
    if eps == 0.0:
        return phi, px, py, lap
    for j in range(cx.shape[0]):
        dx = x - cx[j]
        dy = y - cy[j]
        yb = y * cy[j]
        q1 = (dx * dx + dy * dy) / (2.0 * yb)
        if q1 >= qs1:
            continue
        b, bs, bss = bump_profile(q1 / qs1, profile)
        bq = bs / qs1
        bqq = bss / (qs1 * qs1)
        q = 1.0 + q1
        phi += b
        px += bq * dx / yb
        py += bq * (dy / yb - q1 / y)
        lap += (q * q - 1.0) * bqq + 2.0 * q * bq
    return eps * phi, eps * px, eps * py, eps * lap


@njit(cache=True, nogil=True)
def conformal_fields_many(xs, ys, cx, cy, eps, qs1, profile, out):
    """Vectorised conformal_fields; out has shape (n, 4)."""
    for i in range(xs.shape[0]):
        a, b, c, d = conformal_fields(xs[i], ys[i], cx, cy, eps, qs1, profile)
        out[i, 0] = a
        out[i, 1] = b
        out[i, 2] = c
        out[i, 3] = d


@njit(cache=True, nogil=True)
def vc_deriv(x, y, th, u, cx, cy, eps, qs1, profile, k_override):
    """Right-hand side of the unit-speed geodesic and Riccati equations.

    Returns (dx, dy, dtheta, du, K).  NaN k_override means use the metric's
    own curvature in the Riccati equation.
    """
    phi, px, py, lap = conformal_fields(x, y, cx, cy, eps, qs1, profile)
    sy = py - 1.0 / y
    es = y * math.exp(-phi)
    c = math.cos(th)
    s = math.sin(th)
    if k_override == k_override:
        kk = k_override
    else:
        kk = math.exp(-2.0 * phi) * (-1.0 - lap)
    return es * c, es * s, es * (-px * s + sy * c), -u * u - kk, kk


@njit(cache=True, nogil=True)
def vc_run(states, n_steps, dt, cx, cy, eps, qs1, profile, k_override, k_lo, k_hi,
           reduce, kinds, ms, rs, sgns, partner, moves, centre, budget):
    """Classical RK4 on every row of ``states`` in lockstep.

    With ``reduce`` the first row is brought back to the domain after every
    step and the same move is applied to all rows, so a family of nearby
    orbits stays in one chart.  Returns a status code; states are updated in
    place up to the failing step.
    """
    m = states.shape[0]
    h2 = 0.5 * dt
    for _ in range(n_steps):
        for i in range(m):
            x = states[i, 0]
            y = states[i, 1]
            th = states[i, 2]
            u = states[i, 3]
            a1, b1, c1, d1, k1 = vc_deriv(x, y, th, u, cx, cy, eps, qs1, profile, k_override)
            a2, b2, c2, d2, k2 = vc_deriv(x + h2 * a1, y + h2 * b1, th + h2 * c1, u + h2 * d1,
                                          cx, cy, eps, qs1, profile, k_override)
            a3, b3, c3, d3, k3 = vc_deriv(x + h2 * a2, y + h2 * b2, th + h2 * c2, u + h2 * d2,
                                          cx, cy, eps, qs1, profile, k_override)
            a4, b4, c4, d4, k4 = vc_deriv(x + dt * a3, y + dt * b3, th + dt * c3, u + dt * d3,
                                          cx, cy, eps, qs1, profile, k_override)
            if min(k1, k4) < k_lo or max(k1, k4) > k_hi:
                return OUT_OF_PINCH
            w = dt / 6.0
            states[i, 0] = x + w * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
            states[i, 1] = y + w * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
            th = th + w * (c1 + 2.0 * c2 + 2.0 * c3 + c4)
            states[i, 2] = th - 2.0 * math.pi * math.floor((th + math.pi) / (2.0 * math.pi))
            states[i, 3] = u + w * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
            # J' = u, integrated with the same stages
            states[i, 4] += w * (u + 2.0 * (u + h2 * d1) + 2.0 * (u + h2 * d2) + (u + dt * d3))
            states[i, 5] += dt
        if reduce:
            count = 0
            while True:
                k = pick_move(states[0, 0], states[0, 1], kinds, ms, rs, sgns, partner, moves, centre)
                if k < 0:
                    break
                if count >= budget:
                    return BUDGET_EXCEEDED
                a = moves[k, 0, 0]
                b = moves[k, 0, 1]
                c = moves[k, 1, 0]
                d = moves[k, 1, 1]
                for i in range(m):
                    z = complex(states[i, 0], states[i, 1])
                    den = c * z + d
                    z = (a * z + b) / den
                    states[i, 0] = z.real
                    states[i, 1] = z.imag
                    th = states[i, 2] - 2.0 * math.atan2(den.imag, den.real)
                    states[i, 2] = th - 2.0 * math.pi * math.floor((th + math.pi) / (2.0 * math.pi))
                count += 1
    return OK

"""Hot numerical loops, jitted with numba when available.

The tracer follows a level line of a 2-d trig polynomial

    f(x, y) = c0 + sum_j amp_j cos(kx_j x + ky_j y + ph_j)

by an RK2 tangent predictor plus Newton corrector along the gradient.  Steps
adapt to curvature and are kept inside [h_min, h_max].  Near-critical regions
trigger a Newton search for the critical point; a converged on-level saddle
is recorded as an event and, when it lies ahead within a step, terminates the
trace (continuation through a saddle is ill-posed; separatrix complexes are
assembled elsewhere).
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency in practice

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


# termination codes
CLOSED = 0
MAX_LENGTH = 1
SADDLE_PROXIMITY = 2
LEFT_WINDOW = 3
STAGNANT = 4
SEED_FAIL = 5

# opts vector layout
OPT_H_MIN = 0
OPT_H_MAX = 1
OPT_TOL_LEVEL = 2
OPT_TOL_CLOSE = 3
OPT_G_MIN = 4
OPT_G_PROBE = 5
OPT_TOL_SAD = 6
OPT_L_MAX = 7
OPT_R_MAX = 8
OPT_THETA_MAX = 9
N_OPTS = 10

MAX_EVENTS = 64


@njit(cache=True, fastmath=True)
def field_value(kx, ky, amp, ph, c0, x, y):
    f = c0
    for j in range(kx.size):
        f += amp[j] * math.cos(kx[j] * x + ky[j] * y + ph[j])
    return f


@njit(cache=True, fastmath=True)
def field_grad(kx, ky, amp, ph, c0, x, y):
    f = c0
    fx = 0.0
    fy = 0.0
    for j in range(kx.size):
        th = kx[j] * x + ky[j] * y + ph[j]
        cv = amp[j] * math.cos(th)
        sv = amp[j] * math.sin(th)
        f += cv
        fx -= kx[j] * sv
        fy -= ky[j] * sv
    return f, fx, fy


@njit(cache=True, fastmath=True)
def field_hess(kx, ky, amp, ph, c0, x, y):
    f = c0
    fx = 0.0
    fy = 0.0
    fxx = 0.0
    fxy = 0.0
    fyy = 0.0
    for j in range(kx.size):
        th = kx[j] * x + ky[j] * y + ph[j]
        cv = amp[j] * math.cos(th)
        sv = amp[j] * math.sin(th)
        f += cv
        fx -= kx[j] * sv
        fy -= ky[j] * sv
        fxx -= kx[j] * kx[j] * cv
        fxy -= kx[j] * ky[j] * cv
        fyy -= ky[j] * ky[j] * cv
    return f, fx, fy, fxx, fxy, fyy


@njit(cache=True)
def project_to_level(kx, ky, amp, ph, c0, c, x, y, tol, maxit):
    """Newton steps along the gradient until |f - c| <= tol."""
    for _ in range(maxit):
        f, fx, fy = field_grad(kx, ky, amp, ph, c0, x, y)
        r = f - c
        if abs(r) <= tol:
            return x, y, True
        g2 = fx * fx + fy * fy
        if g2 < 1e-28:
            return x, y, False
        x -= r * fx / g2
        y -= r * fy / g2
    f, fx, fy = field_grad(kx, ky, amp, ph, c0, x, y)
    return x, y, abs(f - c) <= tol


@njit(cache=True)
def critical_newton(kx, ky, amp, ph, c0, x, y, g_min, maxit):
    """Newton search for grad f = 0.  Returns (x, y, f, |grad|, det H, ok)."""
    f = 0.0
    g = 1e300
    det = 0.0
    for _ in range(maxit):
        f, fx, fy, fxx, fxy, fyy = field_hess(kx, ky, amp, ph, c0, x, y)
        g = math.hypot(fx, fy)
        det = fxx * fyy - fxy * fxy
        if g <= 0.1 * g_min:
            return x, y, f, g, det, True
        if abs(det) < 1e-18:
            return x, y, f, g, det, False
        dx = -(fyy * fx - fxy * fy) / det
        dy = -(-fxy * fx + fxx * fy) / det
        step = math.hypot(dx, dy)
        if step > 0.5:
            dx *= 0.5 / step
            dy *= 0.5 / step
        x += dx
        y += dy
    f, fx, fy, fxx, fxy, fyy = field_hess(kx, ky, amp, ph, c0, x, y)
    g = math.hypot(fx, fy)
    det = fxx * fyy - fxy * fxy
    return x, y, f, g, det, g < g_min


@njit(cache=True)
def trace_level(kx, ky, amp, ph, c0, c, seed_x, seed_y, orient, opts, max_verts):
    """Trace the level line f = c from a seed with the given orientation.

    Returns (verts, n_verts, status, arc_length, closure_residual,
    events, n_events); ``verts`` is a (max_verts, 2) buffer filled up to
    n_verts, ``events`` a (MAX_EVENTS, 3) buffer of (x, y, f) critical points.
    """
    h_min = opts[OPT_H_MIN]
    h_max = opts[OPT_H_MAX]
    tol_level = opts[OPT_TOL_LEVEL]
    tol_close = opts[OPT_TOL_CLOSE]
    g_min = opts[OPT_G_MIN]
    g_probe = opts[OPT_G_PROBE]
    tol_sad = opts[OPT_TOL_SAD]
    l_max = opts[OPT_L_MAX]
    r_max = opts[OPT_R_MAX]
    theta_max = opts[OPT_THETA_MAX]
    min_closure_arc = 2.0 * math.pi * h_min

    verts = np.empty((max_verts, 2))
    events = np.empty((MAX_EVENTS, 3))
    nev = 0
    closure_res = np.inf

    x, y, ok = project_to_level(kx, ky, amp, ph, c0, c, seed_x, seed_y, tol_level, 20)
    if not ok:
        return verts, 0, SEED_FAIL, 0.0, closure_res, events, nev
    verts[0, 0] = x
    verts[0, 1] = y
    nv = 1
    arc = 0.0
    x0 = x
    y0 = y

    f, fx, fy = field_grad(kx, ky, amp, ph, c0, x, y)
    g = math.hypot(fx, fy)
    if g < g_probe:
        cx, cy, cf, cg, cdet, okc = critical_newton(kx, ky, amp, ph, c0, x, y, g_min, 40)
        if okc and cg < g_min and abs(cf - c) <= tol_sad:
            if nev < MAX_EVENTS:
                events[nev, 0] = cx
                events[nev, 1] = cy
                events[nev, 2] = cf
                nev += 1
            return verts, nv, SADDLE_PROXIMITY, arc, closure_res, events, nev
        if g < 1e-14:
            return verts, nv, STAGNANT, arc, closure_res, events, nev
    t0x = orient * fy / g
    t0y = -orient * fx / g

    h = 0.25 * h_max
    h_cap = h_max / 1.25
    # corrector pullback shortens steps slightly; an inflated floor keeps the
    # accepted spacing at or above the public h_min
    h_floor = 1.12 * h_min
    armed = False
    last_px = 1e300
    last_py = 1e300
    status = MAX_LENGTH

    while True:
        if nv >= max_verts:
            status = MAX_LENGTH
            break
        f, fx, fy, fxx, fxy, fyy = field_hess(kx, ky, amp, ph, c0, x, y)
        g = math.hypot(fx, fy)
        if g < 1e-14:
            status = STAGNANT
            break
        if g < g_probe and math.hypot(x - last_px, y - last_py) > 2.0 * h_min:
            last_px = x
            last_py = y
            cx, cy, cf, cg, cdet, okc = critical_newton(kx, ky, amp, ph, c0, x, y, g_min, 40)
            if okc and cg < g_min and abs(cf - c) <= tol_sad:
                if nev < MAX_EVENTS:
                    events[nev, 0] = cx
                    events[nev, 1] = cy
                    events[nev, 2] = cf
                    nev += 1
                if math.hypot(cx - x, cy - y) <= max(2.0 * h, 10.0 * h_min):
                    status = SADDLE_PROXIMITY
                    break
        tx = orient * fy / g
        ty = -orient * fx / g
        kappa = abs(fxx * fy * fy - 2.0 * fxy * fx * fy + fyy * fx * fx) / (g * g * g)
        h_curv = theta_max / kappa if kappa > 1e-30 else h_cap
        h_try = min(h, h_curv, h_cap)
        if h_try < h_floor:
            h_try = h_floor

        accepted = False
        hit_saddle = False
        qx = x
        qy = y
        ntx = tx
        nty = ty
        d = 0.0
        for _attempt in range(60):
            mx = x + 0.5 * h_try * tx
            my = y + 0.5 * h_try * ty
            fm, fmx, fmy = field_grad(kx, ky, amp, ph, c0, mx, my)
            gm = math.hypot(fmx, fmy)
            if gm < 1e-14:
                tmx = tx
                tmy = ty
            else:
                tmx = orient * fmy / gm
                tmy = -orient * fmx / gm
                if tmx * tx + tmy * ty < 0.0:
                    tmx = tx
                    tmy = ty
            px = x + h_try * tmx
            py = y + h_try * tmy
            qx, qy, okc = project_to_level(kx, ky, amp, ph, c0, c, px, py, tol_level, 8)
            if okc:
                d = math.hypot(qx - x, qy - y)
                if h_min <= d <= h_max and d >= 0.8 * h_try:
                    fq, fqx, fqy = field_grad(kx, ky, amp, ph, c0, qx, qy)
                    gq = math.hypot(fqx, fqy)
                    if gq > 1e-14:
                        ntx = orient * fqy / gq
                        nty = -orient * fqx / gq
                        turn = ntx * tx + nty * ty
                        if turn < 0.0:
                            # gradient reversed between vertices: critical point crossed
                            bx = 0.5 * (x + qx)
                            by = 0.5 * (y + qy)
                            cx, cy, cf, cg, cdet, okc2 = critical_newton(kx, ky, amp, ph, c0, bx, by, g_min, 40)
                            if okc2 and cg < g_min and abs(cf - c) <= tol_sad:
                                if nev < MAX_EVENTS:
                                    events[nev, 0] = cx
                                    events[nev, 1] = cy
                                    events[nev, 2] = cf
                                    nev += 1
                                hit_saddle = True
                                break
                        if turn >= 0.5:
                            accepted = True
                            break
                        if h_try <= h_floor * 1.0000001:
                            accepted = True  # sharp regular corner at floor step
                            break
                elif d < h_min and h_try <= h_floor * 1.0000001:
                    # corrector pullback collapsed the step at the floor
                    break
            if h_try <= h_floor * 1.0000001:
                break
            h_try = max(0.5 * h_try, h_floor)

        if hit_saddle:
            status = SADDLE_PROXIMITY
            break
        if not accepted:
            # stuck at floor step: check for an on-level saddle just ahead
            bx = x + h_min * tx
            by = y + h_min * ty
            cx, cy, cf, cg, cdet, okc2 = critical_newton(kx, ky, amp, ph, c0, bx, by, g_min, 40)
            if okc2 and cg < g_min and abs(cf - c) <= tol_sad and math.hypot(cx - x, cy - y) <= 6.0 * h_min:
                if nev < MAX_EVENTS:
                    events[nev, 0] = cx
                    events[nev, 1] = cy
                    events[nev, 2] = cf
                    nev += 1
                status = SADDLE_PROXIMITY
            else:
                status = STAGNANT
            break

        arc += d
        x = qx
        y = qy
        tx = ntx
        ty = nty
        verts[nv, 0] = x
        verts[nv, 1] = y
        nv += 1
        h = min(1.3 * h_try, h_cap)

        dist0 = math.hypot(x - x0, y - y0)
        if dist0 > r_max:
            status = LEFT_WINDOW
            break
        if arc >= l_max:
            status = MAX_LENGTH
            break

        trigger = 2.0 * h_try if 2.0 * h_try > 4.0 * tol_close else 4.0 * tol_close
        if not armed:
            if dist0 > 2.0 * trigger and arc > min_closure_arc:
                armed = True
        elif dist0 <= trigger:
            # fine walk: shrink steps while approaching the start point
            best = dist0
            fq, fqx, fqy = field_grad(kx, ky, amp, ph, c0, x, y)
            gq = math.hypot(fqx, fqy)
            best_dot = (orient * fqy / gq) * t0x + (-orient * fqx / gq) * t0y if gq > 0 else -1.0
            best_idx = nv - 1
            walked = 0.0
            wlimit = 10.0 * trigger
            streak = 0
            failed = False
            while walked < wlimit and nv < max_verts and arc < l_max:
                dd0 = math.hypot(x - x0, y - y0)
                hf = 0.3 * dd0
                if hf < h_floor:
                    hf = h_floor
                if hf > h_try:
                    hf = h_try
                f2, f2x, f2y = field_grad(kx, ky, amp, ph, c0, x, y)
                g2 = math.hypot(f2x, f2y)
                if g2 < 1e-14:
                    failed = True
                    break
                ttx = orient * f2y / g2
                tty = -orient * f2x / g2
                px = x + hf * ttx
                py = y + hf * tty
                qx, qy, okc = project_to_level(kx, ky, amp, ph, c0, c, px, py, tol_level, 8)
                if not okc:
                    failed = True
                    break
                d = math.hypot(qx - x, qy - y)
                if d < h_min:
                    failed = True
                    break
                arc += d
                walked += d
                x = qx
                y = qy
                verts[nv, 0] = x
                verts[nv, 1] = y
                nv += 1
                dd = math.hypot(x - x0, y - y0)
                if dd < best:
                    best = dd
                    f3, f3x, f3y = field_grad(kx, ky, amp, ph, c0, x, y)
                    g3 = math.hypot(f3x, f3y)
                    best_dot = (orient * f3y / g3) * t0x + (-orient * f3x / g3) * t0y if g3 > 0 else -1.0
                    best_idx = nv - 1
                    streak = 0
                else:
                    streak += 1
                    if streak >= 8 and dd > trigger:
                        break
            if best <= tol_close and best_dot >= 0.7:
                nv = best_idx + 1
                closure_res = best
                status = CLOSED
                break
            if failed:
                status = STAGNANT
                break
            armed = False  # re-arms after leaving the neighborhood again

    return verts, nv, status, arc, closure_res, events, nev

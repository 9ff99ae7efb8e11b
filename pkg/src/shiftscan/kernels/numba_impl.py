"""Numba builds of the hot kernels.

Same contracts as numpy_impl (see its module docstring for the ring-slot
and scratch-row conventions).  Inner reductions use compensated (Kahan)
summation so long streams at large d stay reproducible; block splits
cannot change results because every recursion is per-sample.

All entry points are cached njit functions; first call per signature pays
the compile.
"""

import numpy as np
from numba import njit

NAME = "numba"

SCHED_INVERSE_COUNT = 0
SCHED_CONSTANT = 1
SCHED_INVERSE_SQRT = 2

_PROJECT_REPAIR_ROUNDS = 64


@njit(cache=True, nogil=True)
def _step_size(kind, scale, count):
    if kind == SCHED_INVERSE_COUNT:
        eta = scale / count
    elif kind == SCHED_CONSTANT:
        eta = scale
    else:
        eta = scale / np.sqrt(count)
    if kind != SCHED_CONSTANT and eta > 1.0:
        eta = 1.0
    return eta


@njit(cache=True, nogil=True)
def _l1_norm(v):
    s = 0.0
    c = 0.0
    for i in range(v.shape[0]):
        y = abs(v[i]) - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


@njit(cache=True, nogil=True)
def project_l1(v, radius):
    out = v.copy()
    if _l1_norm(v) <= radius:
        return out
    d = v.shape[0]
    u = np.abs(v)
    us = np.sort(u)[::-1]
    css = np.cumsum(us)
    rho = 0
    for j in range(d):
        if us[j] > (css[j] - radius) / (j + 1.0):
            rho = j
    tau = (css[rho] - radius) / (rho + 1.0)
    for _ in range(_PROJECT_REPAIR_ROUNDS):
        n1 = 0.0
        comp = 0.0
        nnz = 0
        for l in range(d):
            r = u[l] - tau
            if r > 0.0:
                nnz += 1
                y = r - comp
                t = n1 + y
                comp = (t - n1) - y
                n1 = t
        if n1 <= radius:
            break
        cand = tau + (n1 - radius) / nnz
        bump = np.nextafter(tau, np.inf)
        tau = cand if cand > bump else bump
    for l in range(d):
        r = u[l] - tau
        if r > 0.0:
            out[l] = r if v[l] > 0.0 else -r
        else:
            out[l] = 0.0
    return out


@njit(cache=True, nogil=True)
def adaptive_run(
    X,
    theta,
    loglam,
    birth,
    t0,
    window,
    use_sum,
    sched_kind,
    sched_scale,
    radius,
    threshold,
    stats_out,
    khat_out,
):
    n, d = X.shape
    W = window + 1
    consumed = 0
    for i in range(n):
        t = t0 + i + 1
        x = X[i]
        slot = (t - 1) % W
        for l in range(d):
            theta[slot, l] = 0.0
        loglam[slot] = 0.0
        birth[slot] = t
        for j in range(W):
            if birth[j] <= 0:
                continue
            eta = _step_size(sched_kind, sched_scale, float(t + 1 - birth[j]))
            # fused pass: LR factor from the pre-update row, then the
            # mirror-descent step, tracking the new l1 norm
            dot = 0.0
            cd = 0.0
            sq = 0.0
            cs = 0.0
            l1 = 0.0
            for l in range(d):
                told = theta[j, l]
                xv = x[l]
                y = told * xv - cd
                tt = dot + y
                cd = (tt - dot) - y
                dot = tt
                y2 = told * told - cs
                t2 = sq + y2
                cs = (t2 - sq) - y2
                sq = t2
                tnew = told - eta * (told - xv)
                theta[j, l] = tnew
                l1 += abs(tnew)
            loglam[j] += dot - 0.5 * sq
            if radius > 0.0 and l1 > radius:
                theta[j, :] = project_l1(theta[j], radius)
        mx = -np.inf
        khat = 0
        for j in range(W):
            if birth[j] <= 0:
                continue
            lj = loglam[j]
            if lj > mx or (lj == mx and birth[j] < khat):
                mx = lj
                khat = birth[j]
        if use_sum:
            acc = 0.0
            for j in range(W):
                if birth[j] > 0:
                    acc += np.exp(loglam[j] - mx)
            stat = mx + np.log(acc)
        else:
            stat = mx
        stats_out[i] = stat
        khat_out[i] = khat
        consumed += 1
        if stat > threshold:
            break
    return consumed


@njit(cache=True, nogil=True)
def mcusum_run(X, reference_mean, s0, threshold, stats_out):
    n, d = X.shape
    half = 0.0
    ch = 0.0
    for l in range(d):
        y = reference_mean[l] * reference_mean[l] - ch
        t = half + y
        ch = (t - half) - y
        half = t
    half *= 0.5
    s = s0
    consumed = 0
    for i in range(n):
        dot = 0.0
        c = 0.0
        for l in range(d):
            y = reference_mean[l] * X[i, l] - c
            t = dot + y
            c = (t - dot) - y
            dot = t
        s = s + (dot - half)
        if s < 0.0:
            s = 0.0
        stats_out[i] = s
        consumed += 1
        if s > threshold:
            break
    return consumed, s


@njit(cache=True, nogil=True)
def glr_run(X, ring, t0, window, threshold, stats_out, khat_out):
    n, d = X.shape
    W = window + 1
    S = np.empty(d, dtype=np.float64)
    consumed = 0
    for i in range(n):
        t = t0 + i + 1
        ring[(t - 1) % W] = X[i]
        n_act = min(t, W)
        for l in range(d):
            S[l] = 0.0
        best = -np.inf
        m_best = 0
        for m in range(n_act):
            row = ring[(t - m - 1) % W]
            for l in range(d):
                S[l] += row[l]
            sq = 0.0
            c = 0.0
            for l in range(d):
                y = S[l] * S[l] - c
                tt = sq + y
                c = (tt - sq) - y
                sq = tt
            term = 0.5 * sq / (m + 1.0)
            if term >= best:  # >= keeps the largest m, i.e. the smallest k
                best = term
                m_best = m
        stats_out[i] = best
        khat_out[i] = t - m_best
        consumed += 1
        if best > threshold:
            break
    return consumed


@njit(cache=True, nogil=True)
def hough_vote(ys, xs, height, width, radii):
    npix = ys.shape[0]
    best_votes = -1
    best_r = 0
    best_cy = 0
    best_cx = 0
    acc = np.zeros((height, width), dtype=np.int64)
    for ridx in range(radii.shape[0]):
        r = radii[ridx]
        n_ang = int(np.ceil(4.0 * np.pi * r))
        if n_ang < 64:
            n_ang = 64
        side = 2 * r + 3
        seen = np.zeros((side, side), dtype=np.uint8)
        n_off = 0
        offy = np.empty(n_ang, dtype=np.int64)
        offx = np.empty(n_ang, dtype=np.int64)
        for a in range(n_ang):
            ang = a * (2.0 * np.pi / n_ang)
            dx = int(np.floor(r * np.cos(ang) + 0.5))
            dy = int(np.floor(r * np.sin(ang) + 0.5))
            iy = dy + r + 1
            ix = dx + r + 1
            if seen[iy, ix] == 0:
                seen[iy, ix] = 1
                offy[n_off] = dy
                offx[n_off] = dx
                n_off += 1
        acc[:, :] = 0
        for p in range(npix):
            yp = ys[p]
            xp = xs[p]
            for o in range(n_off):
                cy = yp + offy[o]
                cx = xp + offx[o]
                if 0 <= cy < height and 0 <= cx < width:
                    acc[cy, cx] += 1
        for cy in range(height):
            for cx in range(width):
                if acc[cy, cx] > best_votes:
                    best_votes = acc[cy, cx]
                    best_r = r
                    best_cy = cy
                    best_cx = cx
    return best_votes, best_r, best_cy, best_cx

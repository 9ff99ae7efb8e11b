"""Pure-numpy build of the hot kernels.

Semantics are shared with the numba build and pinned by the cross-backend
tests: identical inputs give identical results up to floating-point
summation order (agreement well inside 1e-9 relative).

State conventions for the adaptive (window-limited) detectors: hypothesis
k lives in ring slot ``(k - 1) % (w + 1)``.  A spawn at time t overwrites
exactly the slot of the hypothesis k = t - w - 1 that leaves the window at
the same step, so eviction is implicit.  Rows whose ``birth`` entry is 0
have never been spawned and are scratch; they are excluded from every
statistic and reset on spawn.
"""

import numpy as np

NAME = "numpy"

# schedule codes shared with the numba build
SCHED_INVERSE_COUNT = 0
SCHED_CONSTANT = 1
SCHED_INVERSE_SQRT = 2

_PROJECT_REPAIR_ROUNDS = 64


def _step_sizes(kind: int, scale: float, counts: np.ndarray) -> np.ndarray:
    if kind == SCHED_INVERSE_COUNT:
        return np.minimum(1.0, scale / counts)
    if kind == SCHED_CONSTANT:
        return np.full_like(counts, scale)
    return np.minimum(1.0, scale / np.sqrt(counts))


def project_l1(v: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean projection of v onto {u : ||u||_1 <= radius}.

    Sort-based threshold search, plus a bounded repair loop that nudges the
    threshold up by ulps until the returned point is feasible in the same
    arithmetic used to test it, which makes the projection exactly
    idempotent.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.abs(v).sum() <= radius:
        return v.copy()
    u = np.abs(v)
    us = np.sort(u)[::-1]
    css = np.cumsum(us)
    ranks = np.arange(1.0, us.size + 1.0)
    support = np.nonzero(us > (css - radius) / ranks)[0]
    rho = support[-1]
    tau = (css[rho] - radius) / (rho + 1.0)
    out = np.sign(v) * np.maximum(u - tau, 0.0)
    for _ in range(_PROJECT_REPAIR_ROUNDS):
        n1 = np.abs(out).sum()
        if n1 <= radius:
            break
        nnz = np.count_nonzero(out)
        tau = max(tau + (n1 - radius) / nnz, np.nextafter(tau, np.inf))
        out = np.sign(v) * np.maximum(u - tau, 0.0)
    return out


def adaptive_run(
    X: np.ndarray,
    theta: np.ndarray,
    loglam: np.ndarray,
    birth: np.ndarray,
    t0: int,
    window: int,
    use_sum: bool,
    sched_kind: int,
    sched_scale: float,
    radius: float,
    threshold: float,
    stats_out: np.ndarray,
    khat_out: np.ndarray,
) -> int:
    """Advance an adaptive max/sum detector over a block of observations.

    Mutates (theta, loglam, birth) in place; fills stats_out/khat_out for
    each consumed row.  Returns the number of rows consumed, which is less
    than len(X) only if the statistic crossed the threshold.
    """
    n, d = X.shape
    W = window + 1
    scratch = np.empty_like(theta)
    consumed = 0
    for i in range(n):
        t = t0 + i + 1
        x = X[i]
        slot = (t - 1) % W
        theta[slot, :] = 0.0
        loglam[slot] = 0.0
        birth[slot] = t
        # likelihood-ratio factor with the pre-update estimates
        incr = theta @ x - 0.5 * np.einsum("ij,ij->i", theta, theta)
        loglam += incr
        # per-hypothesis sample count for this step (scratch rows harmless)
        counts = (t + 1 - birth).astype(np.float64)
        eta = _step_sizes(sched_kind, sched_scale, counts)
        np.subtract(theta, x[None, :], out=scratch)
        scratch *= eta[:, None]
        theta -= scratch
        if radius > 0.0:
            np.abs(theta, out=scratch)
            l1 = scratch.sum(axis=1)
            for j in np.nonzero(l1 > radius)[0]:
                theta[j] = project_l1(theta[j], radius)
        active = birth > 0
        ll = loglam[active]
        mx = ll.max()
        if use_sum:
            stat = mx + np.log(np.exp(ll - mx).sum())
        else:
            stat = mx
        ties = np.nonzero(ll == mx)[0]
        khat = int(birth[active][ties].min())
        stats_out[i] = stat
        khat_out[i] = khat
        consumed += 1
        if stat > threshold:
            break
    return consumed


def mcusum_run(
    X: np.ndarray,
    reference_mean: np.ndarray,
    s0: float,
    threshold: float,
    stats_out: np.ndarray,
):
    """Reflected CUSUM recursion against a fixed post-change mean."""
    n = X.shape[0]
    incs = X @ reference_mean - 0.5 * np.dot(reference_mean, reference_mean)
    s = s0
    consumed = 0
    for i in range(n):
        s = s + incs[i]
        if s < 0.0:
            s = 0.0
        stats_out[i] = s
        consumed += 1
        if s > threshold:
            break
    return consumed, s


def glr_run(
    X: np.ndarray,
    ring: np.ndarray,
    t0: int,
    window: int,
    threshold: float,
    stats_out: np.ndarray,
    khat_out: np.ndarray,
) -> int:
    """Window-limited GLR with exact within-window sample-mean MLEs.

    ring holds the last min(t, w+1) raw observations, slot (t-1) % (w+1).
    Per step the window suffix sums are rebuilt by a reversed cumulative
    sum, so each statistic is O(w d) with only within-window rounding.
    """
    n, d = X.shape
    W = window + 1
    consumed = 0
    for i in range(n):
        t = t0 + i + 1
        ring[(t - 1) % W] = X[i]
        n_act = min(t, W)
        times = np.arange(t, t - n_act, -1)  # t, t-1, ..., t-n_act+1
        wnd = ring[(times - 1) % W]
        css = np.cumsum(wnd, axis=0)
        sq = np.einsum("ij,ij->i", css, css)
        terms = 0.5 * sq / np.arange(1.0, n_act + 1.0)
        mx = terms.max()
        m_best = np.nonzero(terms == mx)[0].max()  # largest m = smallest k
        stats_out[i] = mx
        khat_out[i] = t - m_best
        consumed += 1
        if mx > threshold:
            break
    return consumed


def hough_vote(
    ys: np.ndarray,
    xs: np.ndarray,
    height: int,
    width: int,
    radii: np.ndarray,
):
    """Circle Hough voting over an integer (cx, cy, r) grid.

    Every foreground pixel votes once per candidate radius for each center
    cell on the circle around it.  Returns (votes, r, cy, cx) of the
    accumulator maximum; ties broken toward smaller (r, cy, cx).
    """
    best_votes = -1
    best = (0, 0, 0)
    for r in radii:
        n_ang = max(64, int(np.ceil(4.0 * np.pi * r)))
        ang = np.arange(n_ang) * (2.0 * np.pi / n_ang)
        dx = np.floor(r * np.cos(ang) + 0.5).astype(np.int64)
        dy = np.floor(r * np.sin(ang) + 0.5).astype(np.int64)
        offs = np.unique(np.stack([dy, dx], axis=1), axis=0)
        cy = ys[:, None] + offs[None, :, 0]
        cx = xs[:, None] + offs[None, :, 1]
        ok = (cy >= 0) & (cy < height) & (cx >= 0) & (cx < width)
        acc = np.zeros((height, width), dtype=np.int64)
        np.add.at(acc, (cy[ok], cx[ok]), 1)
        flat = int(np.argmax(acc))  # first occurrence = smallest (cy, cx)
        votes = int(acc.flat[flat])
        if votes > best_votes:
            best_votes = votes
            best = (int(r), flat // width, flat % width)
    return best_votes, best[0], best[1], best[2]

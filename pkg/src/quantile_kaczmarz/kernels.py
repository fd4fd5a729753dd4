"""Hot solver loop, in two interchangeable implementations.

``solve_loop_numba`` is compiled with numba; ``solve_loop_numpy`` is the
reference path built from numpy array operations. Both consume the same
pre-drawn uniforms in the same order, so for a given random stream they
make the same picks (up to floating-point ties in the residuals).

``solve_loop`` is whichever one ``QRK_DISABLE_NUMBA`` selects.

Arguments shared by both:

    A, b            row-normalized matrix (C-contiguous) and observed rhs
    x               iterate, updated in place
    x_true          ground truth, or a length-0 array when unknown
    strategy        one of the STRATEGY_* codes
    k_sel           quantile set size: floor(q m), or floor(q t) when sampling
    t               sample size for the sampled-quantile strategy
    p               exponent for residual-powered selection
    u_pick          (iters,) uniforms, one per iteration
    u_sample        (iters, t) uniforms for the without-replacement draw
    stop_tol_sq     stop once ||x - x_true||^2 <= this; negative disables
    out_err, out_Q, out_idx
                    per-iteration records
    out_x           (iters, n) iterate history, or shape (0, n) to skip
    perm            (m,) int64 permutation state for sampling; persists

Return ``(iterations_done, code)`` with code CODE_RUNNING (chunk consumed),
CODE_CONVERGED or CODE_ALL_ZERO (powered selection saw all-zero residuals).
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit
from .linalg import quantile_mask

STRATEGY_UNIFORM = 0
STRATEGY_QUANTILE = 1
STRATEGY_SAMPLED = 2
STRATEGY_MOTZKIN = 3
STRATEGY_POWERED = 4

CODE_RUNNING = 0
CODE_CONVERGED = 1
CODE_ALL_ZERO = 2


@njit(cache=True)
def _kth_pick(r, k, u):
    """Row index of the floor(u k)-th element (by row index) of the k-smallest set."""
    Q = np.partition(r, k - 1)[k - 1]
    n_less = 0
    for i in range(r.shape[0]):
        if r[i] < Q:
            n_less += 1
    need_eq = k - n_less
    target = int(u * k)
    if target >= k:
        target = k - 1
    seen = 0
    eq_taken = 0
    for i in range(r.shape[0]):
        take = False
        if r[i] < Q:
            take = True
        elif r[i] == Q and eq_taken < need_eq:
            eq_taken += 1
            take = True
        if take:
            if seen == target:
                return i, Q
            seen += 1
    return -1, Q


@njit(cache=True)
def solve_loop_numba(A, b, x, x_true, strategy, k_sel, t, p, u_pick, u_sample,
                     stop_tol_sq, out_err, out_Q, out_idx, out_x, perm):
    m, n = A.shape
    iters = u_pick.shape[0]
    track = x_true.shape[0] == n
    rec_x = out_x.shape[0] > 0
    r = np.empty(m)
    rs = np.empty(max(t, 1))
    rows = np.empty(max(t, 1), dtype=np.int64)
    for it in range(iters):
        Q = np.nan
        i = 0
        if strategy == 0:
            i = int(u_pick[it] * m)
            if i >= m:
                i = m - 1
        elif strategy == 2:
            for j in range(t):
                s = j + int(u_sample[it, j] * (m - j))
                if s >= m:
                    s = m - 1
                tmp = perm[j]
                perm[j] = perm[s]
                perm[s] = tmp
            for j in range(t):
                rows[j] = perm[j]
            rows[:t].sort()
            for j in range(t):
                row = rows[j]
                acc = 0.0
                for c in range(n):
                    acc += A[row, c] * x[c]
                rs[j] = abs(acc - b[row])
            local, Q = _kth_pick(rs[:t], k_sel, u_pick[it])
            i = rows[local]
        else:
            for row in range(m):
                acc = 0.0
                for c in range(n):
                    acc += A[row, c] * x[c]
                r[row] = abs(acc - b[row])
            if strategy == 1:
                i, Q = _kth_pick(r, k_sel, u_pick[it])
            elif strategy == 3:
                i = 0
                best = r[0]
                for row in range(1, m):
                    if r[row] > best:
                        best = r[row]
                        i = row
            else:
                total = 0.0
                for row in range(m):
                    total += r[row] ** p
                if not total > 0.0:
                    return it, 2
                target = u_pick[it] * total
                acc = 0.0
                i = -1
                last_pos = 0
                for row in range(m):
                    w = r[row] ** p
                    if w > 0.0:
                        last_pos = row
                    acc += w
                    if acc > target and w > 0.0:
                        i = row
                        break
                if i < 0:
                    i = last_pos
        acc = 0.0
        for c in range(n):
            acc += A[i, c] * x[c]
        delta = b[i] - acc
        for c in range(n):
            x[c] += delta * A[i, c]
        err = np.nan
        if track:
            err = 0.0
            for c in range(n):
                d = x[c] - x_true[c]
                err += d * d
        out_err[it] = err
        out_Q[it] = Q
        out_idx[it] = i
        if rec_x:
            for c in range(n):
                out_x[it, c] = x[c]
        if stop_tol_sq >= 0.0 and track and err <= stop_tol_sq:
            return it + 1, 1
    return iters, 0


def _pick_in_quantile(r, k, u):
    Q, mask = quantile_mask(r, k)
    target = min(int(u * k), k - 1)
    return int(np.flatnonzero(mask)[target]), float(Q)


def solve_loop_numpy(A, b, x, x_true, strategy, k_sel, t, p, u_pick, u_sample,
                     stop_tol_sq, out_err, out_Q, out_idx, out_x, perm):
    m, n = A.shape
    iters = u_pick.shape[0]
    track = x_true.shape[0] == n
    rec_x = out_x.shape[0] > 0
    for it in range(iters):
        Q = math.nan
        if strategy == STRATEGY_UNIFORM:
            i = min(int(u_pick[it] * m), m - 1)
        elif strategy == STRATEGY_SAMPLED:
            for j in range(t):
                s = min(j + int(u_sample[it, j] * (m - j)), m - 1)
                perm[j], perm[s] = perm[s], perm[j]
            rows = np.sort(perm[:t])
            rs = np.abs(A[rows] @ x - b[rows])
            local, Q = _pick_in_quantile(rs, k_sel, u_pick[it])
            i = int(rows[local])
        else:
            r = np.abs(A @ x - b)
            if strategy == STRATEGY_QUANTILE:
                i, Q = _pick_in_quantile(r, k_sel, u_pick[it])
            elif strategy == STRATEGY_MOTZKIN:
                i = int(np.argmax(r))
            else:
                w = r ** p
                cum = np.cumsum(w)
                total = cum[-1]
                if not total > 0.0:
                    return it, CODE_ALL_ZERO
                i = int(np.searchsorted(cum, u_pick[it] * total, side="right"))
                positive = np.flatnonzero(w > 0.0)
                if i >= m or w[i] <= 0.0:
                    later = positive[positive >= min(i, m - 1)]
                    i = int(later[0]) if later.size else int(positive[-1])
        a = A[i]
        x += (b[i] - a @ x) * a
        err = float(np.sum((x - x_true) ** 2)) if track else math.nan
        out_err[it] = err
        out_Q[it] = Q
        out_idx[it] = i
        if rec_x:
            out_x[it] = x
        if stop_tol_sq >= 0.0 and track and err <= stop_tol_sq:
            return it + 1, CODE_CONVERGED
    return iters, CODE_RUNNING


solve_loop = solve_loop_numba if USE_NUMBA else solve_loop_numpy

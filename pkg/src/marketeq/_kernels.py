"""Compiled PL/CPL loops for problems with affine costs and dis-utilities.

These mirror the generic loops in :mod:`marketeq.solvers` operation for
operation (direction, gap, Armijo rule, flow refresh, skip/restart logic
and trace rows); only the interpreter overhead is gone.  The loops run in
chunks: when the trace buffer fills they return, the caller flushes the
rows and calls again with the same state arrays.

Problems are described as paths over arcs: a path's price is the sum of
its arc costs ``c0 + c1 f + tau * max(f - alpha, 0)``, each block holds a
range of paths and a range of buyers with dis-utility ``h0 + h1 y``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

# return codes
DONE_CONVERGED, DONE_BUDGET, BUFFER_FULL, LINE_SEARCH_FAILED = 0, 1, 2, 3

# integer state slots
I_ITERS, I_STEPS, I_BLOCK, I_SKIPPED, I_LEVEL = range(5)
# float state slots
F_OBJECTIVE, F_FAILED_GAP = range(2)

ITERATE, STEP, RESTART = 0.0, 1.0, 2.0
NAN = np.nan


@njit(cache=True)
def _refresh_flows(aptr, aidx, x, flows):
    flows[:] = 0.0
    for p in range(x.shape[0]):
        for k in range(aptr[p], aptr[p + 1]):
            flows[aidx[k]] += x[p]


@njit(cache=True)
def _arc_cost(a, c0, c1, alpha, tau, flows):
    v = c0[a] + c1[a] * flows[a]
    if tau > 0.0 and flows[a] > alpha[a]:
        v += tau * (flows[a] - alpha[a])
    return v


@njit(cache=True)
def _block_direction(s, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps, x, y,
                     flows, xbar, ybar, g):
    """Fill ``xbar``/``ybar`` for block ``s`` (global indexing); return its gap."""
    p0, p1 = pptr[s], pptr[s + 1]
    q = p0
    for p in range(p0, p1):
        v = 0.0
        for k in range(aptr[p], aptr[p + 1]):
            v += _arc_cost(aidx[k], c0, c1, alpha, tau, flows)
        g[p] = v
        if v < g[q]:
            q = p
    price = g[q]
    total = 0.0
    gap = 0.0
    for j in range(bptr[s], bptr[s + 1]):
        cap = caps[j]
        if h0[j] <= price:
            yj = 0.0
        elif h0[j] + h1[j] * cap >= price:
            yj = cap
        else:
            yj = min(max((price - h0[j]) / h1[j], 0.0), cap)
        ybar[j] = yj
        total += yj
        gap += (yj - y[j]) * (h0[j] + 0.5 * h1[j] * (y[j] + yj))
    lin = 0.0
    for p in range(p0, p1):
        xbar[p] = 0.0
    xbar[q] = total
    for p in range(p0, p1):
        lin += g[p] * (x[p] - xbar[p])
    return max(lin + gap, 0.0)


@njit(cache=True)
def _armijo(lin, quad, phi, beta, theta, max_trials, tau, pf, pd, pa, m):
    """Backtrack on ``t (lin + t quad)`` plus the penalty change on arcs ``pf``/``pd``/``pa``."""
    step = 1.0
    for _ in range(max_trials):
        change = step * (lin + step * quad)
        for i in range(m):
            e0 = max(pf[i] - pa[i], 0.0)
            e1 = max(pf[i] + step * pd[i] - pa[i], 0.0)
            change += 0.5 * tau * (e1 - e0) * (e1 + e0)
        if change <= -beta * step * phi:
            return step, change
        step *= theta
    return -1.0, 0.0


@njit(cache=True)
def _row(buf, r, kind, iters, block, gap, step, obj, acc, level, tol):
    buf[r, 0] = kind
    buf[r, 1] = iters
    buf[r, 2] = block
    buf[r, 3] = gap
    buf[r, 4] = step
    buf[r, 5] = obj
    buf[r, 6] = acc
    buf[r, 7] = level
    buf[r, 8] = tol


@njit(cache=True)
def _total_gap(n, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps, x, y, flows,
               xbar, ybar, g):
    total = 0.0
    for s in range(n):
        total += _block_direction(s, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps,
                                  x, y, flows, xbar, ybar, g)
    return total


@njit(cache=True)
def pl_loop(pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps, x, y, flows, istate,
            fstate,
            beta, theta, max_armijo, accuracy, max_iters, refresh, buf):
    n = pptr.shape[0] - 1
    xbar = np.empty_like(x)
    ybar = np.empty_like(y)
    g = np.empty_like(x)
    df = np.zeros_like(flows)
    pf = np.empty_like(flows)
    pd = np.empty_like(flows)
    pa = np.empty_like(flows)
    rows = 0
    while True:
        if rows == buf.shape[0]:
            return BUFFER_FULL, rows
        iters = istate[I_ITERS]
        f = fstate[F_OBJECTIVE]
        gap = _total_gap(n, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps, x, y,
                         flows, xbar, ybar, g)
        if gap <= accuracy:
            _row(buf, rows, ITERATE, iters, -1, gap, NAN, f, gap, 0, NAN)
            return DONE_CONVERGED, rows + 1
        if iters + n > max_iters:
            _row(buf, rows, ITERATE, iters, -1, gap, NAN, f, gap, 0, NAN)
            return DONE_BUDGET, rows + 1
        df[:] = 0.0
        for p in range(x.shape[0]):
            d = xbar[p] - x[p]
            if d != 0.0:
                for k in range(aptr[p], aptr[p + 1]):
                    df[aidx[k]] += d
        lin = 0.0
        quad = 0.0
        m = 0
        for a in range(flows.shape[0]):
            if df[a] != 0.0:
                lin += df[a] * (c0[a] + c1[a] * flows[a])
                quad += c1[a] * df[a] * df[a]
                if tau > 0.0 and alpha[a] < np.inf:
                    pf[m] = flows[a]
                    pd[m] = df[a]
                    pa[m] = alpha[a]
                    m += 1
        dlin = 0.0
        dquad = 0.0
        for j in range(y.shape[0]):
            d = ybar[j] - y[j]
            dlin += d * (h0[j] + h1[j] * y[j])
            dquad += h1[j] * d * d
        step, change = _armijo(lin - dlin, 0.5 * quad - 0.5 * dquad, gap, beta, theta,
                               max_armijo, tau, pf, pd, pa, m)
        if step < 0.0:
            fstate[F_FAILED_GAP] = gap
            return LINE_SEARCH_FAILED, rows
        _row(buf, rows, ITERATE, iters, -1, gap, step, f, gap, 0, NAN)
        rows += 1
        for p in range(x.shape[0]):
            x[p] += step * (xbar[p] - x[p])
        for j in range(y.shape[0]):
            y[j] += step * (ybar[j] - y[j])
        istate[I_STEPS] += 1
        if istate[I_STEPS] % refresh == 0:
            _refresh_flows(aptr, aidx, x, flows)
        else:
            for a in range(flows.shape[0]):
                flows[a] = flows[a] + step * df[a]
        fstate[F_OBJECTIVE] = f + change
        istate[I_ITERS] = iters + n


@njit(cache=True)
def cpl_loop(pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps, x, y, flows, istate,
            fstate,
             skip_gaps, beta, theta, max_armijo, accuracy, max_iters, refresh, delta0,
             halve, buf):
    n = pptr.shape[0] - 1
    xbar = np.empty_like(x)
    ybar = np.empty_like(y)
    g = np.empty_like(x)
    df = np.zeros_like(flows)
    pf = np.empty_like(flows)
    pd = np.empty_like(flows)
    pa = np.empty_like(flows)
    seen = np.zeros(flows.shape[0], dtype=np.bool_)
    touched = np.empty(flows.shape[0], dtype=np.int64)
    rows = 0
    while True:
        if rows == buf.shape[0]:
            return BUFFER_FULL, rows
        s = istate[I_BLOCK]
        level = istate[I_LEVEL]
        delta = delta0 * 0.5 ** (level - 1) if halve else delta0 / level
        gap = _block_direction(s, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps,
                               x, y, flows, xbar, ybar, g)
        if gap >= delta and gap > 0:
            iters = istate[I_ITERS]
            if iters >= max_iters:
                total = _total_gap(n, pptr, bptr, aptr, aidx, c0, c1, alpha, tau, h0, h1, caps,
                                   x, y, flows, xbar, ybar, g)
                _row(buf, rows, RESTART, iters, -1, NAN, NAN, fstate[F_OBJECTIVE], total,
                     level, delta)
                return DONE_BUDGET, rows + 1
            p0, p1 = pptr[s], pptr[s + 1]
            m = 0
            for p in range(p0, p1):
                d = xbar[p] - x[p]
                for k in range(aptr[p], aptr[p + 1]):
                    a = aidx[k]
                    if not seen[a]:
                        seen[a] = True
                        touched[m] = a
                        m += 1
                    df[a] += d
            lin = 0.0
            quad = 0.0
            mp = 0
            for i in range(m):
                a = touched[i]
                if df[a] != 0.0:
                    lin += df[a] * (c0[a] + c1[a] * flows[a])
                    quad += c1[a] * df[a] * df[a]
                    if tau > 0.0 and alpha[a] < np.inf:
                        pf[mp] = flows[a]
                        pd[mp] = df[a]
                        pa[mp] = alpha[a]
                        mp += 1
            dlin = 0.0
            dquad = 0.0
            for j in range(bptr[s], bptr[s + 1]):
                d = ybar[j] - y[j]
                dlin += d * (h0[j] + h1[j] * y[j])
                dquad += h1[j] * d * d
            step, change = _armijo(lin - dlin, 0.5 * quad - 0.5 * dquad, gap, beta, theta,
                                   max_armijo, tau, pf, pd, pa, mp)
            if step < 0.0:
                fstate[F_FAILED_GAP] = gap
                return LINE_SEARCH_FAILED, rows
            for p in range(p0, p1):
                x[p] += step * (xbar[p] - x[p])
            for j in range(bptr[s], bptr[s + 1]):
                y[j] += step * (ybar[j] - y[j])
            istate[I_STEPS] += 1
            refreshing = istate[I_STEPS] % refresh == 0
            for i in range(m):
                a = touched[i]
                if not refreshing:
                    flows[a] = flows[a] + step * df[a]
                df[a] = 0.0
                seen[a] = False
            if refreshing:
                _refresh_flows(aptr, aidx, x, flows)
            f = fstate[F_OBJECTIVE] + change
            fstate[F_OBJECTIVE] = f
            istate[I_ITERS] = iters + 1
            istate[I_SKIPPED] = 0
            _row(buf, rows, STEP, iters + 1, s, gap, step, f, NAN, level, delta)
            rows += 1
        else:
            skip_gaps[s] = gap
            istate[I_SKIPPED] += 1
            if istate[I_SKIPPED] == n:
                total = 0.0
                for k in range(n):
                    total += skip_gaps[k]
                _row(buf, rows, RESTART, istate[I_ITERS], -1, NAN, NAN, fstate[F_OBJECTIVE],
                     total, level, delta)
                rows += 1
                if total <= accuracy:
                    return DONE_CONVERGED, rows
                istate[I_LEVEL] = level + 1
                istate[I_SKIPPED] = 0
                istate[I_BLOCK] = 0
                continue
        istate[I_BLOCK] = (s + 1) % n

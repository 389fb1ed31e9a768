# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twin of simplex_py.solve_kernel.

Same computational form, pivot rules, and tie-breaks as the numpy kernel;
scalar C loops instead of vectorized passes, and the whole iteration runs
without the GIL so callers can parallelize batches of solves with threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, fabs, isfinite

ST_OPTIMAL = 0
ST_INFEASIBLE = 1
ST_UNBOUNDED = 2
ST_NUMERICAL = 3

cdef int C_ST_OPTIMAL = 0
cdef int C_ST_INFEASIBLE = 1
cdef int C_ST_UNBOUNDED = 2
cdef int C_ST_NUMERICAL = 3

NB_LOWER, NB_UPPER, NB_FREE, BASIC = 0, 1, 2, 3

cdef double PIVOT_TOL = 1e-9
cdef int REFACTOR_EVERY = 64
cdef int STALL_LIMIT = 120

cdef signed char C_NB_LOWER = 0
cdef signed char C_NB_UPPER = 1
cdef signed char C_NB_FREE = 2
cdef signed char C_BASIC = 3


def solve_kernel(A, b, c, xl, xu, double feas_tol=1e-7, double opt_tol=1e-6, int max_iter=0,
                 warm_basis=None, warm_vstat=None):
    """Drop-in replacement for simplex_py.solve_kernel."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] A_ = np.ascontiguousarray(A, dtype=np.float64)
    cdef int m = A_.shape[0]
    cdef int n = A_.shape[1]
    cdef int N = n + m
    if max_iter <= 0:
        max_iter = 2000 + 40 * (m + n)

    b_ = np.ascontiguousarray(b, dtype=np.float64)
    c_ = np.ascontiguousarray(c, dtype=np.float64)
    xl_ = np.ascontiguousarray(xl, dtype=np.float64)
    xu_ = np.ascontiguousarray(xu, dtype=np.float64)

    x = np.zeros(N)
    vstat = np.empty(N, dtype=np.int8)
    basis = np.arange(n, N, dtype=np.int64)
    B_inv = np.eye(m)
    y = np.zeros(m)
    r = np.zeros(N)
    g = np.zeros(m)
    w = np.zeros(m)
    aq = np.zeros(m)
    t_row = np.zeros(m)
    to_upper = np.zeros(m, dtype=np.int8)
    Bmat = np.zeros((m, m))
    resid = np.zeros(m)
    iters = np.zeros(1, dtype=np.int64)

    cdef double[::1] xv = x
    cdef signed char[::1] sv = vstat
    cdef long long[::1] bv = basis
    cdef double[:, ::1] binv = B_inv
    cdef double[:, ::1] av = A_
    cdef double[::1] bb = b_
    cdef double[::1] cc = c_
    cdef double[::1] lo = xl_
    cdef double[::1] hi = xu_
    cdef double[::1] yv = y
    cdef double[::1] rv = r
    cdef double[::1] gv = g
    cdef double[::1] wv = w
    cdef double[::1] aqv = aq
    cdef double[::1] tv = t_row
    cdef signed char[::1] upv = to_upper
    cdef double[:, ::1] bm = Bmat
    cdef double[::1] resv = resid
    cdef long long[::1] itv = iters

    cdef int warm = 0
    if warm_basis is not None and warm_vstat is not None and len(warm_basis) == m:
        basis[:] = np.asarray(warm_basis, dtype=np.int64)
        vstat[:] = np.asarray(warm_vstat, dtype=np.int8)
        warm = 1

    cdef int status
    with nogil:
        status = _run(av, bb, cc, lo, hi, xv, sv, bv, binv, yv, rv, gv, wv, aqv,
                      tv, upv, bm, resv, itv, m, n, feas_tol, opt_tol, max_iter, warm)

    # final duals/reduced costs from the terminal basis, phase-2 costs
    cdef int i, j, k
    cdef double yi
    with nogil:
        for k in range(m):
            yv[k] = 0.0
        for i in range(m):
            if bv[i] < n and cc[bv[i]] != 0.0:
                yi = cc[bv[i]]
                for k in range(m):
                    yv[k] += binv[i, k] * yi
        for j in range(n):
            rv[j] = cc[j]
        for i in range(m):
            yi = yv[i]
            if yi != 0.0:
                for j in range(n):
                    rv[j] -= yi * av[i, j]
        for i in range(m):
            rv[n + i] = -yv[i]

    if status == ST_OPTIMAL and m > 0:
        act = A_ @ x[:n] + x[n:]
        scale = 1.0 + float(np.max(np.abs(b_)))
        if float(np.max(np.abs(act - b_))) > 1e-5 * scale:
            status = ST_NUMERICAL

    return status, x, y, r, vstat, int(iters[0]), basis


cdef int _refactor(double[:, ::1] av, double[::1] bb, double[::1] xv,
                   signed char[::1] sv, long long[::1] bv, double[:, ::1] binv,
                   double[:, ::1] bm, double[::1] resv, int m, int n) noexcept nogil:
    """Rebuild B_inv by Gauss-Jordan with partial pivoting; resync basic values."""
    cdef int i, j, k, col, prow
    cdef double piv, f, tmp
    for i in range(m):
        for k in range(m):
            bm[i, k] = 0.0
            binv[i, k] = 0.0
        binv[i, i] = 1.0
    for k in range(m):
        j = <int> bv[k]
        if j < n:
            for i in range(m):
                bm[i, k] = av[i, j]
        else:
            bm[j - n, k] = 1.0
    for col in range(m):
        piv = 0.0
        prow = -1
        for i in range(col, m):
            if fabs(bm[i, col]) > piv:
                piv = fabs(bm[i, col])
                prow = i
        if prow < 0 or piv < 1e-12:
            return 0
        if prow != col:
            for k in range(m):
                tmp = bm[col, k]; bm[col, k] = bm[prow, k]; bm[prow, k] = tmp
                tmp = binv[col, k]; binv[col, k] = binv[prow, k]; binv[prow, k] = tmp
        f = 1.0 / bm[col, col]
        for k in range(m):
            bm[col, k] *= f
            binv[col, k] *= f
        for i in range(m):
            if i != col and bm[i, col] != 0.0:
                f = bm[i, col]
                for k in range(m):
                    bm[i, k] -= f * bm[col, k]
                    binv[i, k] -= f * binv[col, k]
    for i in range(m):
        resv[i] = bb[i]
    for j in range(n):
        if sv[j] != C_BASIC and xv[j] != 0.0:
            f = xv[j]
            for i in range(m):
                if av[i, j] != 0.0:
                    resv[i] -= av[i, j] * f
    for i in range(m):
        if sv[n + i] != C_BASIC and xv[n + i] != 0.0:
            resv[i] -= xv[n + i]
    for i in range(m):
        f = 0.0
        for k in range(m):
            f += binv[i, k] * resv[k]
        xv[bv[i]] = f
    return 1


cdef int _run(double[:, ::1] av, double[::1] bb, double[::1] cc, double[::1] lo,
              double[::1] hi, double[::1] xv, signed char[::1] sv, long long[::1] bv,
              double[:, ::1] binv, double[::1] yv, double[::1] rv, double[::1] gv,
              double[::1] wv, double[::1] aqv, double[::1] tv, signed char[::1] upv,
              double[:, ::1] bm, double[::1] resv, long long[::1] itv,
              int m, int n, double feas_tol, double opt_tol, int max_iter,
              int warm) noexcept nogil:
    cdef int N = n + m
    cdef int i, j, k, q, p_row, lv, it, phase1, bland, fresh, stall, pivots, to_up
    cdef int last_phase
    cdef signed char st
    cdef double v, l, h, tl, th, merit, best_merit, yi, tol_d, rate, best_rate
    cdef double sigma, wi, d, t, t_min, t_flip, span, piv, f, rq, near_cut, aw_top

    if warm:
        # restart from the provided basis; values of nonbasic columns are
        # pinned to their recorded bound, basics resynced by refactorization
        for j in range(N):
            st = sv[j]
            if st == C_NB_LOWER:
                if isfinite(lo[j]):
                    xv[j] = lo[j]
                else:
                    xv[j] = 0.0
                    sv[j] = C_NB_FREE
            elif st == C_NB_UPPER:
                if isfinite(hi[j]):
                    xv[j] = hi[j]
                else:
                    xv[j] = 0.0
                    sv[j] = C_NB_FREE
            elif st == C_NB_FREE:
                xv[j] = 0.0
        if not _refactor(av, bb, xv, sv, bv, binv, bm, resv, m, n):
            warm = 0
    if not warm:
        # cold start: structural columns at a finite bound (lower preferred),
        # slacks basic, B_inv exactly the identity
        for j in range(n):
            if isfinite(lo[j]):
                xv[j] = lo[j]
                sv[j] = C_NB_LOWER
            elif isfinite(hi[j]):
                xv[j] = hi[j]
                sv[j] = C_NB_UPPER
            else:
                xv[j] = 0.0
                sv[j] = C_NB_FREE
        for i in range(m):
            bv[i] = n + i
            sv[n + i] = C_BASIC
            v = bb[i]
            for j in range(n):
                if av[i, j] != 0.0 and xv[j] != 0.0:
                    v -= av[i, j] * xv[j]
            xv[n + i] = v
            for k in range(m):
                binv[i, k] = 0.0
            binv[i, i] = 1.0

    bland = 0
    fresh = 1
    stall = 0
    pivots = 0
    best_merit = INFINITY
    last_phase = -1
    it = 0

    while it < max_iter:
        it += 1

        # phase detection and phase-1 gradient
        phase1 = 0
        merit = 0.0
        for i in range(m):
            j = <int> bv[i]
            v = xv[j]
            l = lo[j]
            h = hi[j]
            tl = feas_tol * (1.0 + (fabs(l) if isfinite(l) else 0.0))
            th = feas_tol * (1.0 + (fabs(h) if isfinite(h) else 0.0))
            if v < l - tl:
                gv[i] = -1.0
                merit += l - v
                phase1 = 1
            elif v > h + th:
                gv[i] = 1.0
                merit += v - h
                phase1 = 1
            else:
                gv[i] = 0.0

        # pricing vector y
        for k in range(m):
            yv[k] = 0.0
        if phase1:
            tol_d = 1e-9
            for i in range(m):
                if gv[i] != 0.0:
                    yi = gv[i]
                    for k in range(m):
                        yv[k] += binv[i, k] * yi
        else:
            tol_d = opt_tol
            merit = 0.0
            for j in range(n):
                if cc[j] != 0.0 and xv[j] != 0.0:
                    merit += cc[j] * xv[j]
            for i in range(m):
                j = <int> bv[i]
                if j < n and cc[j] != 0.0:
                    yi = cc[j]
                    for k in range(m):
                        yv[k] += binv[i, k] * yi

        if phase1 != last_phase:
            last_phase = phase1
            best_merit = INFINITY
            stall = 0
        if merit < best_merit - 1e-10 * (1.0 + fabs(best_merit)):
            best_merit = merit
            stall = 0
        else:
            stall += 1
            if stall > STALL_LIMIT:
                bland = 1

        # reduced costs
        for j in range(n):
            rv[j] = cc[j] if phase1 == 0 else 0.0
        for i in range(m):
            yi = yv[i]
            if yi != 0.0:
                for j in range(n):
                    rv[j] -= yi * av[i, j]
        for i in range(m):
            rv[n + i] = -yv[i]

        # entering column
        q = -1
        best_rate = -tol_d
        for j in range(N):
            st = sv[j]
            if st == C_BASIC:
                continue
            if st == C_NB_LOWER:
                rate = rv[j]
            elif st == C_NB_UPPER:
                rate = -rv[j]
            else:
                rate = -fabs(rv[j])
            if bland:
                if rate < -tol_d:
                    q = j
                    break
            else:
                if rate < best_rate:
                    best_rate = rate
                    q = j

        if q < 0:
            if not fresh:
                if not _refactor(av, bb, xv, sv, bv, binv, bm, resv, m, n):
                    itv[0] = it
                    return C_ST_NUMERICAL
                fresh = 1
                continue
            itv[0] = it
            return C_ST_INFEASIBLE if phase1 else C_ST_OPTIMAL

        if sv[q] == C_NB_LOWER:
            sigma = 1.0
        elif sv[q] == C_NB_UPPER:
            sigma = -1.0
        else:
            sigma = 1.0 if rv[q] < 0.0 else -1.0

        # w = B_inv @ A_q
        if q < n:
            for k in range(m):
                aqv[k] = av[k, q]
            for i in range(m):
                f = 0.0
                for k in range(m):
                    f += binv[i, k] * aqv[k]
                wv[i] = f
        else:
            for i in range(m):
                wv[i] = binv[i, q - n]

        # ratio test, pass 1: blocking steps per basic row
        t_min = INFINITY
        for i in range(m):
            tv[i] = INFINITY
            upv[i] = 0
            wi = wv[i]
            if fabs(wi) <= PIVOT_TOL:
                continue
            d = -sigma * wi
            j = <int> bv[i]
            v = xv[j]
            l = lo[j]
            h = hi[j]
            t = INFINITY
            to_up = 0
            if phase1 and gv[i] == -1.0:
                if d > 0.0:
                    t = (l - v) / d
            elif phase1 and gv[i] == 1.0:
                if d < 0.0:
                    t = (h - v) / d
                    to_up = 1
            else:
                if d > 0.0:
                    if isfinite(h):
                        t = (h - v) / d
                        to_up = 1
                else:
                    if isfinite(l):
                        t = (l - v) / d
            if t == INFINITY:
                continue
            if t < 0.0:
                t = 0.0
            tv[i] = t
            upv[i] = <signed char> to_up
            if t < t_min:
                t_min = t

        span = hi[q] - lo[q]
        t_flip = span if (isfinite(span) and sv[q] != C_NB_FREE) else INFINITY

        if t_min == INFINITY and t_flip == INFINITY:
            itv[0] = it
            return C_ST_UNBOUNDED if phase1 == 0 else C_ST_NUMERICAL

        if t_flip <= t_min:
            xv[q] = hi[q] if sigma > 0.0 else lo[q]
            sv[q] = C_NB_UPPER if sigma > 0.0 else C_NB_LOWER
            for i in range(m):
                if wv[i] != 0.0:
                    xv[bv[i]] -= sigma * t_flip * wv[i]
            fresh = 0
            continue

        # ratio test, pass 2: among near-minimal steps prefer the largest
        # pivot magnitude, then the smallest variable index; in Bland mode
        # the smallest variable index alone (anti-cycling guarantee)
        near_cut = t_min + 1e-9 * (1.0 + t_min)
        p_row = -1
        aw_top = 0.0
        if bland:
            for i in range(m):
                if tv[i] <= near_cut and (p_row < 0 or bv[i] < bv[p_row]):
                    p_row = i
        else:
            for i in range(m):
                if tv[i] <= near_cut:
                    if fabs(wv[i]) > aw_top * (1.0 + 1e-12):
                        aw_top = fabs(wv[i])
                        p_row = i
                    elif fabs(wv[i]) >= aw_top * (1.0 - 1e-12) and p_row >= 0:
                        if bv[i] < bv[p_row]:
                            p_row = i

        t = tv[p_row]
        if t > 1e-12:
            # real progress escapes the degenerate vertex; resume Dantzig
            bland = 0
            stall = 0
        lv = <int> bv[p_row]
        rq = xv[q] + sigma * t
        for i in range(m):
            if wv[i] != 0.0:
                xv[bv[i]] -= sigma * t * wv[i]
        if upv[p_row]:
            xv[lv] = hi[lv]
            sv[lv] = C_NB_UPPER
        else:
            xv[lv] = lo[lv]
            sv[lv] = C_NB_LOWER
        xv[q] = rq
        sv[q] = C_BASIC
        bv[p_row] = q

        piv = wv[p_row]
        f = 1.0 / piv
        for k in range(m):
            binv[p_row, k] *= f
        for i in range(m):
            if i != p_row and wv[i] != 0.0:
                wi = wv[i]
                for k in range(m):
                    binv[i, k] -= wi * binv[p_row, k]
        fresh = 0

        pivots += 1
        if pivots % REFACTOR_EVERY == 0:
            if not _refactor(av, bb, xv, sv, bv, binv, bm, resv, m, n):
                itv[0] = it
                return C_ST_NUMERICAL
            fresh = 1

    itv[0] = it
    return C_ST_NUMERICAL

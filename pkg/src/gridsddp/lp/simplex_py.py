"""Bounded-variable revised primal simplex, dense numpy implementation.

Computational form: min c'x over structural columns x plus one logical
(slack) column per row, A x + s = b. Row senses are encoded entirely in the
slack bounds (<= : [0, inf), >= : (-inf, 0], = : [0, 0]). Phase 1 drives
bound violations of basic variables to zero by pricing a +/-1 infeasibility
gradient; phase 2 prices the true costs. All tie-breaks are index-based so
identical input yields an identical pivot path.
"""

import numpy as np

ST_OPTIMAL = 0
ST_INFEASIBLE = 1
ST_UNBOUNDED = 2
ST_NUMERICAL = 3

NB_LOWER, NB_UPPER, NB_FREE, BASIC = 0, 1, 2, 3

_REFACTOR_EVERY = 64
_STALL_LIMIT = 120
_PIVOT_TOL = 1e-9


def solve_kernel(A, b, c, xl, xu, feas_tol=1e-7, opt_tol=1e-6, max_iter=0,
                 warm_basis=None, warm_vstat=None):
    """Solve min c'x, rows encoded as [A | I][x; s] = b with bounds xl/xu
    covering the n structural columns followed by the m slacks.

    warm_basis/warm_vstat restart from a previous solve's basis (falls back
    to the all-slack start if that basis is singular). Returns
    (status, x, y, rc, vstat, iterations, basis); y are row duals under the
    rhs-perturbation convention, rc reduced costs for all n+m columns.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    m, n = A.shape
    N = n + m
    if max_iter <= 0:
        max_iter = 2000 + 40 * (m + n)

    x = np.zeros(N)
    vstat = np.empty(N, dtype=np.int8)

    def cold_start():
        lo_fin = np.isfinite(xl[:n])
        up_fin = np.isfinite(xu[:n])
        x[:n] = np.where(lo_fin, xl[:n], np.where(up_fin, xu[:n], 0.0))
        vstat[:n] = np.where(lo_fin, NB_LOWER, np.where(up_fin, NB_UPPER, NB_FREE))
        vstat[n:] = BASIC
        x[n:] = b - A @ x[:n]
        return np.arange(n, N), np.eye(m)

    warm_ok = False
    if warm_basis is not None and warm_vstat is not None and warm_basis.shape[0] == m:
        vstat[:] = warm_vstat
        basis = warm_basis.copy()
        nonb = vstat != BASIC
        at_lo = nonb & (vstat == NB_LOWER)
        at_up = nonb & (vstat == NB_UPPER)
        x[:] = 0.0
        x[at_lo] = xl[at_lo]
        x[at_up] = xu[at_up]
        bad = nonb & ~np.isfinite(x)
        x[bad] = 0.0
        vstat[bad] = NB_FREE
        B = np.zeros((m, m))
        struct = basis < n
        B[:, struct] = A[:, basis[struct]]
        slack_cols = np.nonzero(~struct)[0]
        B[basis[slack_cols] - n, slack_cols] = 1.0
        try:
            B_inv = np.linalg.inv(B)
            xn = x.copy()
            xn[basis] = 0.0
            x[basis] = B_inv @ (b - A @ xn[:n] - xn[n:])
            warm_ok = True
        except np.linalg.LinAlgError:
            warm_ok = False
    if not warm_ok:
        basis, B_inv = cold_start()

    tol_lo = feas_tol * (1.0 + np.where(np.isfinite(xl), np.abs(xl), 0.0))
    tol_hi = feas_tol * (1.0 + np.where(np.isfinite(xu), np.abs(xu), 0.0))

    def refactorize():
        nonlocal B_inv
        B = np.zeros((m, m))
        struct = basis < n
        B[:, struct] = A[:, basis[struct]]
        slack_cols = np.nonzero(~struct)[0]
        B[basis[slack_cols] - n, slack_cols] = 1.0
        try:
            B_inv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            return False
        xn = x.copy()
        xn[basis] = 0.0
        resid = b - A @ xn[:n] - xn[n:]
        x[basis] = B_inv @ resid
        return True

    bland = False
    stall = 0
    best_merit = np.inf
    last_phase = -1
    pivots = 0
    fresh = True  # cold slack basis is exact; warm start just refactorized
    status = ST_NUMERICAL
    it = 0

    while it < max_iter:
        it += 1
        xB = x[basis]
        lB, uB = xl[basis], xu[basis]
        below = xB < lB - tol_lo[basis]
        above = xB > uB + tol_hi[basis]
        phase1 = bool(below.any() or above.any())
        if int(phase1) != last_phase:
            last_phase = int(phase1)
            best_merit = np.inf
            stall = 0

        if phase1:
            g = above.astype(np.float64) - below.astype(np.float64)
            y = B_inv.T @ g
            r_struct = -(A.T @ y)
            tol_d = 1e-9
            merit = float(np.sum(np.where(below, lB - xB, 0.0))
                          + np.sum(np.where(above, xB - uB, 0.0)))
        else:
            y = B_inv.T @ _basic_costs(c, basis, n)
            r_struct = c - A.T @ y
            tol_d = opt_tol
            merit = float(c @ x[:n])

        if merit < best_merit - 1e-10 * (1.0 + abs(best_merit)):
            best_merit = merit
            stall = 0
        else:
            stall += 1
            if stall > _STALL_LIMIT:
                bland = True

        r_full = np.empty(N)
        r_full[:n] = r_struct
        r_full[n:] = -y

        rate = np.full(N, np.inf)
        ml = vstat == NB_LOWER
        mu_ = vstat == NB_UPPER
        mf = vstat == NB_FREE
        rate[ml] = r_full[ml]
        rate[mu_] = -r_full[mu_]
        rate[mf] = -np.abs(r_full[mf])
        cand = rate < -tol_d

        if not cand.any():
            # confirm against a fresh factorization before declaring
            if not fresh:
                if not refactorize():
                    status = ST_NUMERICAL
                    break
                fresh = True
                continue
            status = ST_INFEASIBLE if phase1 else ST_OPTIMAL
            break

        if bland:
            q = int(np.argmax(cand))
        else:
            q = int(np.argmin(np.where(cand, rate, np.inf)))

        if vstat[q] == NB_LOWER:
            sigma = 1.0
        elif vstat[q] == NB_UPPER:
            sigma = -1.0
        else:
            sigma = 1.0 if r_full[q] < 0.0 else -1.0

        if q < n:
            w = B_inv @ A[:, q]
        else:
            w = B_inv[:, q - n].copy()

        delta = -sigma * w
        use = np.abs(w) > _PIVOT_TOL
        t_arr = np.full(m, np.inf)
        to_upper = np.zeros(m, dtype=bool)
        if phase1:
            mb = below & use & (delta > 0)
            t_arr[mb] = (lB[mb] - xB[mb]) / delta[mb]
            ma = above & use & (delta < 0)
            t_arr[ma] = (uB[ma] - xB[ma]) / delta[ma]
            to_upper[ma] = True
            feas = ~(below | above)
        else:
            feas = np.ones(m, dtype=bool)
        fu = feas & use & (delta > 0) & np.isfinite(uB)
        t_arr[fu] = (uB[fu] - xB[fu]) / delta[fu]
        to_upper[fu] = True
        fl = feas & use & (delta < 0) & np.isfinite(lB)
        t_arr[fl] = (lB[fl] - xB[fl]) / delta[fl]
        np.maximum(t_arr, 0.0, out=t_arr)

        t_min = float(t_arr.min()) if m else np.inf
        span = xu[q] - xl[q]
        t_flip = float(span) if np.isfinite(span) and vstat[q] != NB_FREE else np.inf

        if not np.isfinite(t_min) and not np.isfinite(t_flip):
            status = ST_UNBOUNDED if not phase1 else ST_NUMERICAL
            break

        if t_flip <= t_min:
            x[q] = xu[q] if sigma > 0 else xl[q]
            vstat[q] = NB_UPPER if sigma > 0 else NB_LOWER
            x[basis] = xB - sigma * t_flip * w
            fresh = False
            continue

        near = np.isfinite(t_arr) & (t_arr <= t_min + 1e-9 * (1.0 + t_min))
        rows = np.nonzero(near)[0]
        if bland:
            # Bland-compliant leaving choice: smallest variable index
            p_row = int(rows[np.argmin(basis[rows])])
        else:
            aw = np.abs(w[rows])
            top = aw.max()
            sel = rows[aw >= top * (1.0 - 1e-12)]
            p_row = int(sel[np.argmin(basis[sel])]) if sel.size > 1 else int(sel[0])

        t = t_arr[p_row]
        if t > 1e-12:
            # real progress escapes the degenerate vertex; resume Dantzig
            bland = False
            stall = 0
        lv = int(basis[p_row])
        x[basis] = xB - sigma * t * w
        if to_upper[p_row]:
            x[lv] = xu[lv]
            vstat[lv] = NB_UPPER
        else:
            x[lv] = xl[lv]
            vstat[lv] = NB_LOWER
        x[q] = x[q] + sigma * t
        vstat[q] = BASIC
        basis[p_row] = q

        piv = w[p_row]
        Brow = B_inv[p_row] / piv
        B_inv -= np.outer(w, Brow)
        B_inv[p_row] = Brow
        fresh = False

        pivots += 1
        if pivots % _REFACTOR_EVERY == 0:
            if not refactorize():
                status = ST_NUMERICAL
                break
            fresh = True
    else:
        status = ST_NUMERICAL

    y = B_inv.T @ _basic_costs(c, basis, n)
    rc = np.empty(N)
    rc[:n] = c - A.T @ y
    rc[n:] = -y

    if status == ST_OPTIMAL:
        resid = float(np.max(np.abs(A @ x[:n] + x[n:] - b))) if m else 0.0
        scale = 1.0 + float(np.max(np.abs(b))) if m else 1.0
        if resid > 1e-5 * scale:
            status = ST_NUMERICAL

    return status, x, y, rc, vstat, it, basis


def _basic_costs(c, basis, n):
    cB = np.zeros(basis.shape[0])
    struct = basis < n
    cB[struct] = c[basis[struct]]
    return cB

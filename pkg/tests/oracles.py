"""Independent reference implementations used only to cross-check results.

Nothing here shares code paths with the package solvers: the WMMSE loop, the
projected-gradient solver, and the coordinate phase sweep are deliberately
separate algorithms.
"""

import numpy as np


def wmmse_sum_rate(h, power, noise, iters=300, seed=0):
    """Classic MISO downlink WMMSE for sum-rate maximization (natural log).

    h: (M_t, K) channel columns.  Returns (rate_nats, W).
    """
    m_t, k = h.shape
    rng = np.random.default_rng(seed)
    w = h / np.linalg.norm(h, axis=0, keepdims=True) * np.sqrt(power / k)
    for _ in range(iters):
        # receiver MMSE scalars and weights
        gains = h.conj().T @ w                    # (K, K): row k, col j = h_k^H w_j
        p = np.abs(gains) ** 2
        total = p.sum(axis=1) + noise
        u = np.diag(gains) / total
        e = 1.0 - np.real(np.conj(u) * np.diag(gains))
        omega = 1.0 / np.maximum(e, 1e-300)
        # transmit update with power bisection
        a = np.zeros((m_t, m_t), dtype=complex)
        for j in range(k):
            a += omega[j] * abs(u[j]) ** 2 * np.outer(h[:, j], h[:, j].conj())
        rhs = h * (omega * np.conj(u))[None, :]

        def w_of(mu):
            return np.linalg.solve(a + mu * np.eye(m_t), rhs)

        lo, hi = 0.0, 1.0
        while np.linalg.norm(w_of(hi)) ** 2 > power:
            hi *= 4.0
            if hi > 1e18:
                break
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if np.linalg.norm(w_of(mid)) ** 2 > power:
                lo = mid
            else:
                hi = mid
        w_unc = w_of(0.0)
        w = w_unc if np.linalg.norm(w_unc) ** 2 <= power else w_of(hi)
    gains = np.abs(h.conj().T @ w) ** 2
    sig = np.diag(gains)
    total = gains.sum(axis=1) + noise
    rate = float(np.sum(np.log(total / (total - sig))))
    return rate, w


def projected_gradient_max(problem, x0, steps=100000, seed=0, tol_stall=1e-12):
    """Projected gradient ascent on a ConicProblem with POCS restoration.

    Independent oracle: works on the same problem data but uses plain
    first-order ascent with cyclic projections onto each violated constraint
    and eigenvalue clipping for the PSD cone.  Returns the best feasible
    objective found.
    """
    from isac_secbf.conic import _Model

    model = _Model(problem)
    y = model.pack(x0)
    y = _pocs(model, y)
    best = model.objective_value(y) if _feasible(model, y) else -np.inf

    # Lipschitz-ish step from the quadratic data
    lip = 1e-300
    for qr in model.obj_quad_r.values():
        lip = max(lip, 2.0 * np.linalg.norm(qr, 2))
    step = 1.0 / lip if np.isfinite(lip) else 1e-2
    stall = 0
    for it in range(steps):
        g = model.obj_scale * model.f_grad_scaled(y)
        y_new = y + step / model.obj_scale * g
        y_new = _pocs(model, y_new)
        val = model.objective_value(y_new)
        if val > best + tol_stall:
            best = val
            stall = 0
        else:
            stall += 1
            if stall > 2000:
                break
        y = y_new
    return best


def _feasible(model, y, tol=1e-9):
    for m, con in enumerate(model.problem.constraints):
        raw = model.g_scaled(y, m) * model.con_scale[m]
        if con.sense == "<=" and raw > con.bound + tol * (1.0 + abs(con.bound)):
            return False
        if con.sense == ">=" and raw < con.bound - tol * (1.0 + abs(con.bound)):
            return False
        if con.sense == "==" and abs(raw - con.bound) > tol * (1.0 + abs(con.bound)):
            return False
    x = model.x_mat(y)
    if x is not None:
        if np.linalg.eigvalsh(0.5 * (x + x.conj().T))[0] < -1e-11 * max(np.trace(x).real, 1.0):
            return False
    return True


def _pocs(model, y, sweeps=60):
    """Cyclic projection onto each constraint set and the PSD cone."""
    from isac_secbf.conic import _herm_coords, _herm_from_coords

    for _ in range(sweeps):
        dirty = False
        if model.psd_slice is not None:
            lo, hi = model.psd_slice
            x = _herm_from_coords(y[lo:hi], model.psd_side)
            vals, vecs = np.linalg.eigh(0.5 * (x + x.conj().T))
            if vals[0] < 0.0:
                x = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
                y = y.copy()
                y[lo:hi] = _herm_coords(x)
                dirty = True
        for m, con in enumerate(model.problem.constraints):
            raw = model.g_scaled(y, m)
            b = model.bound_scaled(m)
            violated = (
                (con.sense == "<=" and raw > b + 1e-12)
                or (con.sense == ">=" and raw < b - 1e-12)
                or (con.sense == "==" and abs(raw - b) > 1e-12)
            )
            if violated:
                y = _project_one(model, y, m)
                dirty = True
        if not dirty:
            break
    return y


def _project_one(model, y, m, iters=80):
    """Euclidean projection onto one quadratic constraint via the scaled
    KKT secular equation (bisection on the multiplier)."""
    con = model.problem.constraints[m]
    b = model.bound_scaled(m)
    grad_lin = model.con_lin_vec[m]

    # assemble the (block-diagonal) quadratic of this row over the full vector
    def g_val(yv):
        return model.g_scaled(yv, m)

    sense = 1.0 if con.sense in ("<=", "==") else -1.0
    # treat >= rows by negating: minimize distance s.t. -g <= -b
    def h_val(yv):
        return sense * g_val(yv) - sense * b

    if h_val(y) <= 0.0:
        return y

    def y_of(lam):
        # solve (I + lam * sense * H_m) y' = y - lam * sense * a_m with H_m
        # block-diagonal; coordinates without quadratic stay closed-form.
        shift = lam * sense
        out = y - shift * grad_lin
        for name, pr in model.con_quad_r[m].items():
            lo, hi, _ = model.offsets[name]
            mat = np.eye(hi - lo) + shift * 2.0 * pr
            out[lo:hi] = np.linalg.solve(mat, out[lo:hi])
        return out

    lo_l, hi_l = 0.0, 1.0
    for _ in range(200):
        if h_val(y_of(hi_l)) <= 0.0:
            break
        hi_l *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo_l + hi_l)
        if h_val(y_of(mid)) > 0.0:
            lo_l = mid
        else:
            hi_l = mid
    return y_of(hi_l)


def phase_sweep_max(problem, f0, points=64, sweeps=60):
    """Exhaustive per-coordinate phase search for the penalized analog
    objective; independent of the gradient machinery."""
    from isac_secbf.had import penalty_value

    f = f0 / np.abs(f0)
    best = penalty_value(problem, f)
    phases = np.exp(2j * np.pi * np.arange(points) / points)
    for _ in range(sweeps):
        improved = False
        for i in range(len(f)):
            old = f[i]
            vals = []
            for p in phases:
                f[i] = p
                vals.append(penalty_value(problem, f))
            j = int(np.argmax(vals))
            if vals[j] > best + 1e-15:
                best = vals[j]
                f[i] = phases[j]
                improved = True
            else:
                f[i] = old
        if not improved:
            break
    return best, f

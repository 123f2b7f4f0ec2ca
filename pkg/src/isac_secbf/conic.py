"""Self-contained interior-point solver for the convex subproblems.

Canonical form (maximization):

    max   sum_i [ 2 Re(c_i^H v_i) - v_i^H Q_i v_i ] + Tr(S0 X) + const
    s.t.  sum_i [ v_i^H P_{m,i} v_i + 2 Re(q_{m,i}^H v_i) ] + Tr(S_m X)  <=/>=/==  b_m
          X >= 0                                     (optional PSD variable)

with Q_i PSD, P_{m,i} PSD for '<=' rows and NSD for '>=' rows ('==' rows must
be linear).  The solver is a primal log-barrier Newton method: quadratic
inequality rows contribute -log(slack) terms, the PSD cone contributes
-logdet(X), equality rows are kept exactly via an equality-constrained Newton
(KKT) system.  The barrier parameter grows by a factor of 10 per outer stage
until all KKT residuals pass the tolerance.

Residual conventions (reported in ConicSolution.kkt_residuals and by
kkt_residual):

    stationarity     ||grad f - sum_m lam_m sgn_m grad g_m - sum_e mu_e grad g_e
                       + lift(Z)||_2 / (1 + ||grad f||_2)
    primal           max_m violation_m / (1 + |b_m|), plus PSD violation
                     (-lambda_min(X))_+ / (1 + tr(X)/n)
    dual             max(0, -min lam, -lambda_min(Z)) / (1 + max |dual|)
    complementarity  (sum_m |lam_m * slack_m| + |Tr(Z X)|) / (1 + |objective|)

where sgn is +1 for '<=' rows and -1 for '>=' rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

__all__ = ["Objective", "Constraint", "ConicProblem", "ConicSolution", "solve", "kkt_residual"]

_EIG_CERT_DIM = 48  # sign-structure eigen checks run below this dimension


# ---------------------------------------------------------------------------
# problem description
# ---------------------------------------------------------------------------

@dataclass
class Objective:
    lin: dict = field(default_factory=dict)   # name -> c  (adds 2 Re(c^H v))
    quad: dict = field(default_factory=dict)  # name -> Q  (adds -v^H Q v, Q PSD)
    psd_lin: np.ndarray | None = None         # S0         (adds Tr(S0 X))
    const: float = 0.0


@dataclass
class Constraint:
    name: str
    sense: str                                # '<=', '>=', '=='
    bound: float
    quad: dict = field(default_factory=dict)  # name -> P  (adds v^H P v)
    lin: dict = field(default_factory=dict)   # name -> q  (adds 2 Re(q^H v))
    psd_lin: np.ndarray | None = None         # S          (adds Tr(S X))


@dataclass
class ConicProblem:
    vec_vars: list                            # [(name, complex dim), ...]
    psd_var: tuple | None                     # (name, side) or None
    objective: Objective
    constraints: list

    def __post_init__(self):
        names = [n for n, _ in self.vec_vars]
        if len(set(names)) != len(names):
            raise ValueError("duplicate vector variable names")
        for con in self.constraints:
            if con.sense not in ("<=", ">=", "=="):
                raise ValueError(f"constraint {con.name}: bad sense {con.sense!r}")
            if con.sense == "==" and con.quad:
                raise ValueError(f"constraint {con.name}: equality rows must be linear")
        self._certify_signs()

    def _certify_signs(self):
        dims = dict(self.vec_vars)
        for name, q in self.objective.quad.items():
            if dims[name] <= _EIG_CERT_DIM:
                lo = scipy.linalg.eigvalsh(q)[0]
                if lo < -1e-9 * max(1.0, np.linalg.norm(q)):
                    raise ValueError(f"objective curvature on '{name}' is not PSD (min eig {lo:.3e})")
        for con in self.constraints:
            for name, p in con.quad.items():
                if dims[name] > _EIG_CERT_DIM:
                    continue
                eigs = scipy.linalg.eigvalsh(p)
                scale = max(1.0, np.linalg.norm(p))
                if con.sense == "<=" and eigs[0] < -1e-9 * scale:
                    raise ValueError(f"constraint {con.name}: '<=' quadratic not convex")
                if con.sense == ">=" and eigs[-1] > 1e-9 * scale:
                    raise ValueError(f"constraint {con.name}: '>=' quadratic not concave")

    def dump(self, path) -> None:
        """Write the problem in a plain text format for cross-solver debugging.

        Matrices are emitted row-major as 're im' pairs, one row per line.
        """
        def emit(fh, tag, arr):
            arr = np.atleast_2d(arr)
            fh.write(f"{tag} {arr.shape[0]} {arr.shape[1]}\n")
            for row in arr:
                fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")

        with open(path, "w") as fh:
            fh.write(f"vec_vars {len(self.vec_vars)}\n")
            for name, dim in self.vec_vars:
                fh.write(f"var {name} {dim}\n")
            if self.psd_var is not None:
                fh.write(f"psd_var {self.psd_var[0]} {self.psd_var[1]}\n")
            fh.write(f"objective const {self.objective.const:.17g}\n")
            for name, c in self.objective.lin.items():
                emit(fh, f"obj_lin {name}", np.asarray(c, dtype=complex))
            for name, q in self.objective.quad.items():
                emit(fh, f"obj_quad {name}", np.asarray(q, dtype=complex))
            if self.objective.psd_lin is not None:
                emit(fh, "obj_psd_lin", self.objective.psd_lin)
            fh.write(f"constraints {len(self.constraints)}\n")
            for con in self.constraints:
                fh.write(f"con {con.name} {con.sense} {con.bound:.17g}\n")
                for name, p in con.quad.items():
                    emit(fh, f"con_quad {con.name} {name}", np.asarray(p, dtype=complex))
                for name, q in con.lin.items():
                    emit(fh, f"con_lin {con.name} {name}", np.asarray(q, dtype=complex))
                if con.psd_lin is not None:
                    emit(fh, f"con_psd_lin {con.name}", con.psd_lin)


@dataclass
class ConicSolution:
    values: dict
    objective: float
    duals: dict
    dual_psd: np.ndarray | None
    kkt_residuals: dict
    iterations: int
    status: str
    dual_bound: float = np.nan
    barrier_weight: float = np.nan  # final barrier parameter, for warm starts


# ---------------------------------------------------------------------------
# Hermitian <-> real coordinate helpers
# ---------------------------------------------------------------------------

_IU_CACHE: dict = {}


def _triu(n: int):
    if n not in _IU_CACHE:
        _IU_CACHE[n] = np.triu_indices(n, k=1)
    return _IU_CACHE[n]


def _herm_coords(x_mat: np.ndarray) -> np.ndarray:
    """Coordinates of a Hermitian matrix in the orthonormal Hermitian basis."""
    n = x_mat.shape[0]
    iu = _triu(n)
    return np.concatenate(
        [np.diag(x_mat).real, np.sqrt(2.0) * x_mat[iu].real, np.sqrt(2.0) * x_mat[iu].imag]
    )


def _herm_from_coords(x: np.ndarray, n: int) -> np.ndarray:
    iu = _triu(n)
    m = n * (n - 1) // 2
    upper = (x[n : n + m] + 1j * x[n + m :]) / np.sqrt(2.0)
    out = np.diag(x[:n].astype(complex))
    out[iu] = upper
    out[(iu[1], iu[0])] = upper.conj()
    return out


def _c2r(z: np.ndarray) -> np.ndarray:
    return np.concatenate([z.real, z.imag])


def _r2c(r: np.ndarray) -> np.ndarray:
    d = len(r) // 2
    return r[:d] + 1j * r[d:]


def _quad_real(p: np.ndarray) -> np.ndarray:
    """Real 2d x 2d representation of the Hermitian form v^H P v."""
    re, im = p.real, p.imag
    return np.block([[re, -im], [im, re]])


_E_CACHE: dict = {}


def _herm_basis(n: int) -> np.ndarray:
    """Dense (n^2, n, n) stack of the orthonormal Hermitian basis (cached)."""
    if n not in _E_CACHE:
        coords = np.eye(n * n)
        _E_CACHE[n] = np.stack([_herm_from_coords(coords[i], n) for i in range(n * n)])
    return _E_CACHE[n]


def _psd_barrier(x_mat: np.ndarray):
    """Gradient and Hessian of -logdet(X) in Hermitian coordinates."""
    n = x_mat.shape[0]
    xi = np.linalg.inv(x_mat)
    xi = 0.5 * (xi + xi.conj().T)
    grad = -_herm_coords(xi)
    if n <= 32:
        e = _herm_basis(n)
        b = np.matmul(np.matmul(xi[None, :, :], e), xi[None, :, :])
    else:
        b = np.empty((n * n, n, n), dtype=complex)
        idx = 0
        for d in range(n):
            b[idx] = np.outer(xi[:, d], xi[d, :])
            idx += 1
        iu = _triu(n)
        s2 = 1.0 / np.sqrt(2.0)
        for i, j in zip(*iu):
            b[idx] = s2 * (np.outer(xi[:, i], xi[j, :]) + np.outer(xi[:, j], xi[i, :]))
            idx += 1
        for i, j in zip(*iu):
            b[idx] = 1j * s2 * (np.outer(xi[:, i], xi[j, :]) - np.outer(xi[:, j], xi[i, :]))
            idx += 1
    iu = _triu(n)
    hess = np.concatenate(
        [
            np.diagonal(b, axis1=1, axis2=2).real,
            np.sqrt(2.0) * b[:, iu[0], iu[1]].real,
            np.sqrt(2.0) * b[:, iu[0], iu[1]].imag,
        ],
        axis=1,
    )
    return grad, 0.5 * (hess + hess.T)


# ---------------------------------------------------------------------------
# internal real-variable model
# ---------------------------------------------------------------------------

class _Model:
    """Scaled real-variable view of a ConicProblem."""

    def __init__(self, problem: ConicProblem):
        self.problem = problem
        self.offsets = {}
        off = 0
        for name, dim in problem.vec_vars:
            self.offsets[name] = (off, off + 2 * dim, dim)
            off += 2 * dim
        self.psd_slice = None
        self.psd_side = 0
        if problem.psd_var is not None:
            _, side = problem.psd_var
            self.psd_slice = (off, off + side * side)
            self.psd_side = side
            off += side * side
        self.nx = off

        # objective scale: largest data magnitude
        obj = problem.objective
        mags = [1e-300]
        mags += [np.abs(c).max() for c in obj.lin.values() if np.size(c)]
        mags += [np.abs(q).max() for q in obj.quad.values() if np.size(q)]
        if obj.psd_lin is not None:
            mags.append(np.abs(obj.psd_lin).max())
        self.obj_scale = max(mags)

        self.con_scale = []
        for con in problem.constraints:
            m = [1e-300, abs(con.bound)]
            m += [np.abs(p).max() for p in con.quad.values() if np.size(p)]
            m += [np.abs(q).max() for q in con.lin.values() if np.size(q)]
            if con.psd_lin is not None:
                m.append(np.abs(con.psd_lin).max())
            self.con_scale.append(max(m))

        # scaled static data (objective divided by obj_scale, row m by con_scale[m])
        self.obj_quad_r = {
            name: _quad_real(np.asarray(q) / self.obj_scale) for name, q in obj.quad.items()
        }
        self.obj_lin_vec = np.zeros(self.nx)
        for name, c in obj.lin.items():
            lo, hi, _ = self.offsets[name]
            self.obj_lin_vec[lo:hi] = 2.0 * _c2r(np.asarray(c) / self.obj_scale)
        if obj.psd_lin is not None:
            lo, hi = self.psd_slice
            self.obj_lin_vec[lo:hi] = _herm_coords(np.asarray(obj.psd_lin) / self.obj_scale)

        self.con_quad_r = []
        self.con_lin_vec = []
        self.ineq = []
        self.eq = []
        for m, con in enumerate(problem.constraints):
            scale = self.con_scale[m]
            self.con_quad_r.append(
                {name: _quad_real(np.asarray(p) / scale) for name, p in con.quad.items()}
            )
            vec = np.zeros(self.nx)
            for name, q in con.lin.items():
                lo, hi, _ = self.offsets[name]
                vec[lo:hi] = 2.0 * _c2r(np.asarray(q) / scale)
            if con.psd_lin is not None:
                lo, hi = self.psd_slice
                vec[lo:hi] = _herm_coords(np.asarray(con.psd_lin) / scale)
            self.con_lin_vec.append(vec)
            (self.eq if con.sense == "==" else self.ineq).append(m)

    # -- packing ------------------------------------------------------------

    def pack(self, values: dict) -> np.ndarray:
        y = np.zeros(self.nx)
        for name, _, in self.problem.vec_vars:
            lo, hi, _d = self.offsets[name]
            y[lo:hi] = _c2r(np.asarray(values[name], dtype=complex))
        if self.psd_slice is not None:
            lo, hi = self.psd_slice
            y[lo:hi] = _herm_coords(np.asarray(values[self.problem.psd_var[0]], dtype=complex))
        return y

    def unpack(self, y: np.ndarray) -> dict:
        out = {}
        for name, _dim in self.problem.vec_vars:
            lo, hi, _d = self.offsets[name]
            out[name] = _r2c(y[lo:hi])
        if self.psd_slice is not None:
            lo, hi = self.psd_slice
            out[self.problem.psd_var[0]] = _herm_from_coords(y[lo:hi], self.psd_side)
        return out

    def x_mat(self, y: np.ndarray) -> np.ndarray | None:
        if self.psd_slice is None:
            return None
        lo, hi = self.psd_slice
        return _herm_from_coords(y[lo:hi], self.psd_side)

    # -- scaled evaluations ---------------------------------------------------

    def f_scaled(self, y: np.ndarray) -> float:
        val = float(self.obj_lin_vec @ y)
        for name, qr in self.obj_quad_r.items():
            lo, hi, _ = self.offsets[name]
            r = y[lo:hi]
            val -= float(r @ qr @ r)
        return val

    def f_grad_scaled(self, y: np.ndarray) -> np.ndarray:
        g = self.obj_lin_vec.copy()
        for name, qr in self.obj_quad_r.items():
            lo, hi, _ = self.offsets[name]
            g[lo:hi] -= 2.0 * (qr @ y[lo:hi])
        return g

    def g_scaled(self, y: np.ndarray, m: int) -> float:
        val = float(self.con_lin_vec[m] @ y)
        for name, pr in self.con_quad_r[m].items():
            lo, hi, _ = self.offsets[name]
            r = y[lo:hi]
            val += float(r @ pr @ r)
        return val

    def g_grad_scaled(self, y: np.ndarray, m: int) -> np.ndarray:
        g = self.con_lin_vec[m].copy()
        for name, pr in self.con_quad_r[m].items():
            lo, hi, _ = self.offsets[name]
            g[lo:hi] += 2.0 * (pr @ y[lo:hi])
        return g

    def bound_scaled(self, m: int) -> float:
        return self.problem.constraints[m].bound / self.con_scale[m]

    def slack(self, y: np.ndarray, m: int) -> float:
        """Positive inside the region for inequality rows."""
        con = self.problem.constraints[m]
        v = self.g_scaled(y, m)
        b = self.bound_scaled(m)
        return b - v if con.sense == "<=" else v - b

    def objective_value(self, y: np.ndarray) -> float:
        return self.obj_scale * self.f_scaled(y) + self.problem.objective.const


# ---------------------------------------------------------------------------
# feasibility bootstrap
# ---------------------------------------------------------------------------

def _project_equalities(model: _Model, y: np.ndarray) -> np.ndarray:
    if not model.eq:
        return y
    a = np.stack([model.con_lin_vec[m] for m in model.eq])
    b = np.array([model.bound_scaled(m) for m in model.eq])
    resid = a @ y - b
    if np.max(np.abs(resid)) < 1e-14:
        return y
    correction = a.T @ np.linalg.lstsq(a @ a.T, resid, rcond=None)[0]
    return y - correction


def _max_violation(model: _Model, y: np.ndarray, margin: float):
    """Worst normalized inequality/PSD 'violation'; negative means interior."""
    worst, which = -np.inf, None
    for m in model.ineq:
        v = -model.slack(y, m) / (1.0 + abs(model.bound_scaled(m)))
        if v > worst:
            worst, which = v, ("ineq", m)
    x = model.x_mat(y)
    if x is not None:
        lo_eig = scipy.linalg.eigvalsh(x)[0]
        v = -lo_eig / (1.0 + abs(np.trace(x).real) / max(model.psd_side, 1))
        if v > worst:
            worst, which = v, ("psd", None)
    if worst == -np.inf:
        worst, which = -margin, None
    return worst, which


def _phase1(model: _Model, y: np.ndarray, margin: float):
    """Strict-feasibility restoration: barrier-solve the slack-relaxed system.

    Every inequality row m is relaxed to allow a violation of s * scale_m and
    -s is maximized; any point with s < 0 is strictly feasible for the
    original rows.  The PSD cone needs no relaxation because a small multiple
    of the identity is always available as an interior X.
    """
    problem = model.problem
    slack_var = "_phase1_s"
    cons = []
    worst = 0.0
    for m, con in enumerate(problem.constraints):
        if con.sense == "==":
            cons.append(con)
            continue
        scale = model.con_scale[m]
        viol = -model.slack(y, m)  # scaled units
        worst = max(worst, viol)
        lin = dict(con.lin)
        lin[slack_var] = np.array([-0.5 * scale if con.sense == "<=" else 0.5 * scale])
        cons.append(
            Constraint(
                name=con.name,
                sense=con.sense,
                bound=con.bound,
                quad=dict(con.quad),
                lin=lin,
                psd_lin=con.psd_lin,
            )
        )
    cons.append(
        Constraint(name="_phase1_cap", sense=">=", bound=-1.0, lin={slack_var: np.array([0.5])})
    )
    p1 = ConicProblem(
        vec_vars=list(problem.vec_vars) + [(slack_var, 1)],
        psd_var=problem.psd_var,
        objective=Objective(
            lin={slack_var: np.array([-0.5])}, quad={slack_var: np.array([[1e-12]])}
        ),
        constraints=cons,
    )
    x0 = model.unpack(y)
    if problem.psd_var is not None:
        name, side = problem.psd_var
        x = np.asarray(x0[name])
        lo_eig = scipy.linalg.eigvalsh(x)[0]
        bump = 1e-6 * (1.0 + abs(np.trace(x).real) / side)
        if lo_eig < bump:
            x0[name] = x + (bump - lo_eig) * np.eye(side)
    x0[slack_var] = np.array([1.5 * worst + 1e-4 + 2e-6], dtype=complex)
    res = _solve_impl(p1, 1e-2, 200, x0, 1e-9, allow_phase1=False)
    s_val = float(np.real(res.values[slack_var][0]))
    if s_val < -1e-9 and res.status != "infeasible":
        y_new = model.pack({k: v for k, v in res.values.items() if k != slack_var})
        return y_new, True
    return y, False


# ---------------------------------------------------------------------------
# barrier solve
# ---------------------------------------------------------------------------

def _barrier_value(model: _Model, y: np.ndarray, t: float):
    val = -t * model.f_scaled(y)
    for m in model.ineq:
        s = model.slack(y, m)
        if s <= 0.0:
            return np.inf
        val -= np.log(s)
    x = model.x_mat(y)
    if x is not None:
        try:
            chol = np.linalg.cholesky(x)
        except np.linalg.LinAlgError:
            return np.inf
        val -= 2.0 * float(np.sum(np.log(np.diag(chol).real)))
    return val


def _newton_system(model: _Model, y: np.ndarray, t: float):
    grad = -t * model.f_grad_scaled(y)
    hess = np.zeros((model.nx, model.nx))
    for name, qr in model.obj_quad_r.items():
        lo, hi, _ = model.offsets[name]
        hess[lo:hi, lo:hi] += t * 2.0 * qr
    if model.ineq:
        rows = np.empty((len(model.ineq), model.nx))
        weights = np.empty(len(model.ineq))
        for i, m in enumerate(model.ineq):
            s = model.slack(y, m)
            gm = model.g_grad_scaled(y, m)
            sgn = 1.0 if model.problem.constraints[m].sense == "<=" else -1.0
            grad += (sgn / s) * gm
            rows[i] = gm
            weights[i] = 1.0 / (s * s)
            for name, pr in model.con_quad_r[m].items():
                lo, hi, _ = model.offsets[name]
                hess[lo:hi, lo:hi] += (sgn / s) * 2.0 * pr
        hess += (rows * weights[:, None]).T @ rows
    x = model.x_mat(y)
    if x is not None:
        g_psd, h_psd = _psd_barrier(x)
        lo, hi = model.psd_slice
        grad[lo:hi] += g_psd
        hess[lo:hi, lo:hi] += h_psd
    return grad, hess


def _solve_kkt(hess, grad, a_eq):
    n = hess.shape[0]
    jitter = 1e-13 * (1.0 + abs(np.trace(hess)) / n)
    for _ in range(12):
        try:
            if a_eq is None:
                c, low = scipy.linalg.cho_factor(hess + jitter * np.eye(n))
                return scipy.linalg.cho_solve((c, low), -grad)
            # balance the equality rows against the Hessian magnitude
            alpha = np.sqrt(max(np.max(np.diag(hess)), 1.0))
            p = a_eq.shape[0]
            kkt = np.zeros((n + p, n + p))
            kkt[:n, :n] = hess + jitter * np.eye(n)
            kkt[:n, n:] = alpha * a_eq.T
            kkt[n:, :n] = alpha * a_eq
            rhs = np.concatenate([-grad, np.zeros(p)])
            sol = scipy.linalg.solve(kkt, rhs, assume_a="sym")
            return sol[:n]
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
            jitter = max(jitter * 100.0, 1e-10)
    raise np.linalg.LinAlgError("KKT system remained singular after regularization")


def _strictly_feasible(model: _Model, y: np.ndarray) -> bool:
    for m in model.ineq:
        if model.slack(y, m) <= 0.0:
            return False
    x = model.x_mat(y)
    if x is not None:
        try:
            np.linalg.cholesky(x)
        except np.linalg.LinAlgError:
            return False
    return True


def _center(model: _Model, y, t, newton_tol, iter_budget, grad_target=None):
    """Damped-Newton centering for a fixed barrier weight.

    Uses the self-concordant step rule (full step once the Newton decrement
    is below 1/4, else 1/(1+lambda)) so no noisy function-value comparisons
    are needed; steps are only ever shrunk to preserve strict feasibility.
    When grad_target is given, centering continues past the decrement
    tolerance until the barrier gradient norm reaches it (the gradient norm
    divided by t is what the reported stationarity residual measures).
    """
    a_eq = np.stack([model.con_lin_vec[m] for m in model.eq]) if model.eq else None
    used = 0
    while used < iter_budget:
        grad, hess = _newton_system(model, y, t)
        gnorm = float(np.linalg.norm(grad))
        if grad_target is not None and gnorm <= grad_target:
            break
        try:
            step = _solve_kkt(hess, grad, a_eq)
        except np.linalg.LinAlgError:
            break
        decrement = float(-grad @ step)
        used += 1
        dec_stop = 2.0 * newton_tol
        if grad_target is not None and gnorm > grad_target:
            # demand extra decrement in proportion to the remaining gap,
            # bounded away from the float64 noise floor
            dec_stop = max(dec_stop * min(1.0, (grad_target / gnorm) ** 2), 1e-17)
        if decrement <= dec_stop:
            break
        lam = np.sqrt(max(decrement, 0.0))
        accepted = False
        if lam <= 0.25:
            # quadratic-convergence zone: take full steps, feasibility-guarded
            # (function-value tests are float noise at large barrier weights)
            tau = 1.0
            for _ in range(60):
                cand = y + tau * step
                if _strictly_feasible(model, cand):
                    y, accepted = cand, True
                    break
                tau *= 0.5
        else:
            fval = _barrier_value(model, y, t)
            gdot = float(grad @ step)
            tau = 1.0
            for _ in range(60):
                cand = y + tau * step
                fcand = _barrier_value(model, cand, t)
                if np.isfinite(fcand) and fcand <= fval + 1e-4 * tau * gdot:
                    y, accepted = cand, True
                    break
                tau *= 0.5
            if not accepted:
                # fall back to the damped self-concordant step
                cand = y + step / (1.0 + lam)
                if _strictly_feasible(model, cand):
                    y, accepted = cand, True
        if not accepted:
            break
    return y, used


def _fit_equality_duals(model, y, lam, z):
    """Least-squares equality multipliers for the stationarity residual."""
    if not model.eq:
        return {}
    resid = _stationarity_vector(model, y, lam, {m: 0.0 for m in model.eq}, z)
    a = np.stack([model.con_lin_vec[m] * model.con_scale[m] for m in model.eq])
    coef, *_ = np.linalg.lstsq(a.T, resid, rcond=None)
    return {m: coef[i] for i, m in enumerate(model.eq)}


def _stationarity_vector(model, y, lam, mu, z):
    """grad f - sum lam sgn grad g - sum mu grad g_eq (+ Z lift), original units."""
    vec = model.obj_scale * model.f_grad_scaled(y)
    for m in model.ineq:
        sgn = 1.0 if model.problem.constraints[m].sense == "<=" else -1.0
        vec -= lam.get(m, 0.0) * sgn * model.g_grad_scaled(y, m) * model.con_scale[m]
    for m in model.eq:
        vec -= mu.get(m, 0.0) * model.con_lin_vec[m] * model.con_scale[m]
    if z is not None:
        lo, hi = model.psd_slice
        vec[lo:hi] += _herm_coords(z)
    return vec


def _residuals(model: _Model, y: np.ndarray, lam: dict, mu: dict, z):
    problem = model.problem
    fgrad_norm = np.linalg.norm(model.obj_scale * model.f_grad_scaled(y))
    stat = np.linalg.norm(_stationarity_vector(model, y, lam, mu, z)) / (1.0 + fgrad_norm)

    primal = 0.0
    comp = 0.0
    for m, con in enumerate(problem.constraints):
        raw = model.g_scaled(y, m) * model.con_scale[m]
        if con.sense == "<=":
            viol = max(0.0, raw - con.bound)
        elif con.sense == ">=":
            viol = max(0.0, con.bound - raw)
        else:
            viol = abs(raw - con.bound)
        primal = max(primal, viol / (1.0 + abs(con.bound)))
        if con.sense != "==":
            slack = (con.bound - raw) if con.sense == "<=" else (raw - con.bound)
            comp += abs(lam.get(m, 0.0) * slack)
    x = model.x_mat(y)
    dual = 0.0
    if lam:
        dual = max(dual, max(0.0, -min(lam.values())))
    if x is not None and z is not None:
        primal = max(
            primal,
            max(0.0, -scipy.linalg.eigvalsh(x)[0]) / (1.0 + abs(np.trace(x).real) / model.psd_side),
        )
        dual = max(dual, max(0.0, -scipy.linalg.eigvalsh(z)[0]))
        comp += abs(np.real(np.trace(z @ x)))
    primal_abs = 0.0
    for m, con in enumerate(problem.constraints):
        raw = model.g_scaled(y, m) * model.con_scale[m]
        if con.sense == "<=":
            primal_abs = max(primal_abs, raw - con.bound)
        elif con.sense == ">=":
            primal_abs = max(primal_abs, con.bound - raw)
        else:
            primal_abs = max(primal_abs, abs(raw - con.bound))
    primal_abs = max(primal_abs, 0.0)

    dual_scale = 1.0 + max([abs(v) for v in lam.values()] + [0.0])
    obj = abs(model.objective_value(y))
    return {
        "stationarity": float(stat),
        "primal": float(primal),
        "dual": float(dual / dual_scale),
        "complementarity": float(comp / (1.0 + obj)),
        "primal_abs": float(primal_abs),
    }


def _default_start(model: _Model) -> np.ndarray:
    y = np.zeros(model.nx)
    if model.psd_slice is not None:
        lo, hi = model.psd_slice
        y[lo:hi] = _herm_coords(np.eye(model.psd_side) / model.psd_side)
    return y


def solve(
    problem: ConicProblem,
    tol: float = 1e-7,
    max_iter: int = 600,
    x0: dict | None = None,
    newton_tol: float = 1e-9,
    t0: float | None = None,
) -> ConicSolution:
    """Barrier solve of a ConicProblem.

    x0 may carry warm-start values per variable name; infeasible or
    boundary warm starts are repaired by a phase-1 search.  t0 optionally
    seeds the barrier weight (useful when re-solving near-identical
    problems).  status is 'optimal' when every reported KKT residual
    is <= tol.
    """
    return _solve_impl(problem, tol, max_iter, x0, newton_tol, allow_phase1=True, t0=t0)


def _solve_impl(
    problem: ConicProblem,
    tol: float,
    max_iter: int,
    x0: dict | None,
    newton_tol: float,
    allow_phase1: bool,
    t0: float | None = None,
) -> ConicSolution:
    model = _Model(problem)
    margin = 1e-10

    if x0:
        y = model.pack({**model.unpack(_default_start(model)), **x0})
        x = model.x_mat(y)
        if x is not None:
            lo_eig = scipy.linalg.eigvalsh(x)[0]
            bump = 1e-11 * (1.0 + abs(np.trace(x).real) / model.psd_side)
            if lo_eig < bump:
                lo, hi = model.psd_slice
                y[lo:hi] += _herm_coords((bump - lo_eig) * np.eye(model.psd_side))
    else:
        y = _default_start(model)
    y = _project_equalities(model, y)
    worst0, _ = _max_violation(model, y, margin)
    ok = worst0 < 0.0
    if not ok and allow_phase1:
        y, ok = _phase1(model, y, margin)
        if not ok:
            worst1, _ = _max_violation(model, y, margin)
            ok = worst1 < 0.0
    if not ok:
        values = model.unpack(y)
        return ConicSolution(
            values=values,
            objective=model.objective_value(y),
            duals={},
            dual_psd=None,
            kkt_residuals=_residuals(model, y, {}, {}, None),
            iterations=0,
            status="infeasible",
        )

    n_barrier = len(model.ineq) + (model.psd_side if model.psd_slice is not None else 0)
    f0 = abs(model.f_scaled(y))
    t = float(np.clip(max(1.0, n_barrier) / (1.0 + f0), 1e-3, 1e6))
    if t0 is not None:
        t = float(np.clip(t0, t, 1e12))
    total_iters = 0
    status = "max_iter"
    gate = ("stationarity", "primal", "dual", "complementarity")
    best = None  # (score, y, lam, mu, z, res, t)

    fgrad_norm0 = np.linalg.norm(model.obj_scale * model.f_grad_scaled(y))

    def stage_duals(y_cur):
        lam_scaled = {m: 1.0 / (t * max(model.slack(y_cur, m), 1e-300)) for m in model.ineq}
        lam = {m: lam_scaled[m] * model.obj_scale / model.con_scale[m] for m in model.ineq}
        x = model.x_mat(y_cur)
        z = None
        if x is not None:
            xi = np.linalg.inv(x)
            z = model.obj_scale * 0.5 * (xi + xi.conj().T) / t
        mu = _fit_equality_duals(model, y_cur, lam, z)
        return lam, mu, z

    while total_iters < max_iter:
        y, used = _center(model, y, t, newton_tol, min(60, max_iter - total_iters))
        total_iters += max(used, 1)
        lam_orig, mu, z = stage_duals(y)
        res = _residuals(model, y, lam_orig, mu, z)
        # only the final stages need tight stationarity; re-center with a
        # gradient-norm target when stationarity is the lone blocker
        others = max(res["primal"], res["dual"], res["complementarity"])
        if others <= tol < res["stationarity"] and total_iters < max_iter:
            grad_target = 0.5 * tol * t * (1.0 + fgrad_norm0) / model.obj_scale
            y, used = _center(
                model, y, t, newton_tol, min(60, max_iter - total_iters), grad_target
            )
            total_iters += max(used, 1)
            lam_orig, mu, z = stage_duals(y)
            res = _residuals(model, y, lam_orig, mu, z)
        # barrier duals carry an O(1/slack) mismatch along active normals;
        # a least-squares refit certifies the same point much more tightly
        lam_f, mu_f, z_f = _fit_duals(model, y, act_tol=max(1e-6, 10.0 * res["complementarity"]))
        res_f = _residuals(model, y, lam_f, mu_f, z_f)
        if max(res_f[k] for k in gate) < max(res[k] for k in gate):
            lam_orig, mu, z, res = lam_f, mu_f, z_f, res_f
        score = max(res[k] for k in gate)
        if best is None or score < best[0]:
            best = (score, y.copy(), lam_orig, mu, z, res, t)
        if score <= tol:
            status = "optimal"
            break
        # extreme barrier weights only degrade conditioning; stop once the
        # residuals are clearly diverging from the best stage seen so far
        if t > 1e16 or (best is not None and score > 1e3 * best[0] and t > 1e8):
            break
        t *= 10.0

    _, y, lam_orig, mu, z, res, t = best if status != "optimal" else (
        0.0, y, lam_orig, mu, z, res, t
    )
    if status != "optimal" and max(res[k] for k in gate) <= tol:
        status = "optimal"
    values = model.unpack(y)
    duals = {
        problem.constraints[m].name: lam_orig.get(m, mu.get(m, 0.0))
        for m in range(len(problem.constraints))
    }
    fval = model.objective_value(y)
    gap = model.obj_scale * n_barrier / t if t > 0 else np.inf
    return ConicSolution(
        values=values,
        objective=fval,
        duals=duals,
        dual_psd=z,
        kkt_residuals=res,
        iterations=total_iters,
        status=status,
        dual_bound=fval + gap,
        barrier_weight=t,
    )


def _fit_duals(model: _Model, y: np.ndarray, act_tol: float = 1e-6):
    """Least-squares KKT multipliers at a candidate point.

    Inequality multipliers are fitted over the (near-)active set with the PSD
    complementarity rows (sum lam sgn S_m - S0) X = 0 appended; the PSD dual
    is then Z := sum lam sgn S_m - S0.
    """
    problem = model.problem
    x = model.x_mat(y)
    active = []
    for m in model.ineq:
        con = problem.constraints[m]
        raw = model.g_scaled(y, m) * model.con_scale[m]
        if abs(raw - con.bound) <= act_tol * (1.0 + abs(con.bound)):
            active.append(m)
    idx = active + model.eq
    cols = []
    for m in idx:
        sgn = 1.0 if problem.constraints[m].sense in ("<=", "==") else -1.0
        cols.append(sgn * model.g_grad_scaled(y, m) * model.con_scale[m])

    targets = [model.obj_scale * model.f_grad_scaled(y)]
    rows_a = [np.stack(cols, axis=1) if cols else np.zeros((model.nx, 0))]
    if x is not None:
        s0 = problem.objective.psd_lin
        s0 = np.zeros((model.psd_side,) * 2, dtype=complex) if s0 is None else np.asarray(s0)
        a_cols = []
        for m in idx:
            s_m = problem.constraints[m].psd_lin
            s_m = np.zeros_like(s0) if s_m is None else np.asarray(s_m)
            sgn = 1.0 if problem.constraints[m].sense in ("<=", "==") else -1.0
            a_cols.append(_c2r((sgn * s_m @ x).reshape(-1)))
        rows_a.append(np.stack(a_cols, axis=1) if a_cols else np.zeros((2 * x.size, 0)))
        targets.append(-_c2r(((-s0) @ x).reshape(-1)))

    a_full = np.concatenate(rows_a, axis=0)
    t_full = np.concatenate(targets)
    if a_full.shape[1]:
        coef, *_ = np.linalg.lstsq(a_full, t_full, rcond=None)
    else:
        coef = np.zeros(0)
    lam = {}
    mu = {}
    for i, m in enumerate(idx):
        if problem.constraints[m].sense == "==":
            mu[m] = float(coef[i])
        else:
            lam[m] = float(max(coef[i], 0.0))
    z = None
    if x is not None:
        s0 = problem.objective.psd_lin
        s0 = np.zeros((model.psd_side,) * 2, dtype=complex) if s0 is None else np.asarray(s0)
        z = -s0.astype(complex)
        for m, val in {**lam, **mu}.items():
            s_m = problem.constraints[m].psd_lin
            if s_m is None:
                continue
            sgn = 1.0 if problem.constraints[m].sense in ("<=", "==") else -1.0
            z = z + val * sgn * np.asarray(s_m)
        z = 0.5 * (z + z.conj().T)
    return lam, mu, z


def kkt_residual(problem: ConicProblem, values: dict, duals: dict | None = None, dual_psd=None) -> dict:
    """KKT residual record for any candidate point.

    When duals are omitted they are fitted by least squares: inequality
    multipliers over the active set (with complementary-slackness rows for the
    PSD block), equality multipliers unrestricted.  Residual normalizations
    match the module docstring.
    """
    model = _Model(problem)
    y = model.pack(values)

    if duals is not None:
        name_to_idx = {con.name: m for m, con in enumerate(problem.constraints)}
        lam = {}
        mu = {}
        for name, val in duals.items():
            m = name_to_idx[name]
            (mu if problem.constraints[m].sense == "==" else lam)[m] = float(val)
        return _residuals(model, y, lam, mu, dual_psd)

    lam, mu, z = _fit_duals(model, y)
    return _residuals(model, y, lam, mu, z)

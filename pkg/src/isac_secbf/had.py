"""Hybrid analog-digital beamforming: alternating digital subproblem,
penalty-based Riemannian ascent over the unit-modulus analog matrix, and
the phase-projection decomposition used for initialization and for the
decomposed-hybrid baseline.

Wirtinger convention throughout: gradients are 2 * d/d(conj f), so the
directional derivative of a real objective G along a complex direction d is
Re(grad^H d).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import conic, fp_digital, metrics
from .channel import ChannelSet
from .scenario import ScenarioConfig

__all__ = [
    "HybridState",
    "HybridSolution",
    "AnalogProblem",
    "update_aux_hybrid",
    "solve_digital_subproblem",
    "build_analog_problem",
    "init_lambdas",
    "penalty_value",
    "euclidean_grad",
    "riemannian_grad",
    "retract",
    "manifold_ascent",
    "run_hybrid",
    "init_hybrid",
    "decompose_fully_digital",
    "decompose_receive",
]

LAMBDA_FLOOR = 1e-3
LAMBDA_CAP_FACTOR = 1e8


@dataclass
class HybridState:
    f_a: np.ndarray                # (M_t, N_rf), unit-modulus entries
    f_c: np.ndarray                # (N_rf, K)
    f_s: np.ndarray                # (N_rf, N_s)
    u_a: np.ndarray | None         # (M_r, N_rf) analog receive
    u_d: np.ndarray | None         # (N_rf, T) digital receive
    nu: np.ndarray
    beta: np.ndarray
    lambdas: np.ndarray            # penalty weights, length M_c
    iteration: int = 0
    trace: list = field(default_factory=list)

    @property
    def w_eff(self) -> np.ndarray:
        return self.f_a @ self.f_c

    @property
    def v_eff(self) -> np.ndarray:
        return self.f_a @ self.f_s

    def receive_bank(self) -> list:
        if self.u_a is None or self.u_d is None:
            return []
        bank = []
        for t in range(self.u_d.shape[1]):
            u = self.u_a @ self.u_d[:, t]
            bank.append(u / np.linalg.norm(u))
        return bank


@dataclass
class HybridSolution:
    state: HybridState
    achieved: dict
    trace: list
    status: str                    # converged | max_iter | infeasible_init
    feasible_init: bool
    max_violation: float           # relative, at exit

    trace_columns = (
        "iteration",
        "r_had",
        "penalty_objective",
        "max_violation",
        "max_modulus_dev",
        "lambda_max",
    )

    @property
    def pair(self) -> metrics.BeamformerPair:
        return metrics.BeamformerPair(w_comm=self.state.w_eff, v_sense=self.state.v_eff)


@dataclass
class AnalogProblem:
    """Vectorized analog subproblem data: objective Re(a0^H f) - f^H A0 f,
    constraints f^H B_m f <= b_m, penalty weights lambdas."""

    a0: np.ndarray                 # (M_t * N_rf,)
    a_mat: np.ndarray              # PSD, (M_t*N_rf, M_t*N_rf)
    b_mats: list                   # M_c Hermitian matrices
    b_vals: np.ndarray             # M_c bounds
    lambdas: np.ndarray            # M_c weights > 0

    @property
    def m_c(self) -> int:
        return len(self.b_mats)


def _vec(mat: np.ndarray) -> np.ndarray:
    return np.reshape(mat, -1, order="F")


def _unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    return np.reshape(v, (rows, cols), order="F")


# ---------------------------------------------------------------------------
# auxiliaries and digital subproblem
# ---------------------------------------------------------------------------

def _effective_state(state: HybridState, config: ScenarioConfig) -> fp_digital.DigitalState:
    v = state.v_eff
    r_v = v @ v.conj().T if config.n_s > 0 else None
    return fp_digital.DigitalState(
        w=state.w_eff, r_v=r_v, u_bank=state.receive_bank(), nu=state.nu, beta=state.beta
    )


def update_aux_hybrid(state: HybridState, channels: ChannelSet, config: ScenarioConfig):
    """Closed-form (nu, beta) updates at the effective beams F_a F_c, F_a F_s."""
    eff = _effective_state(state, config)
    nu = fp_digital.update_nu(eff, channels, config)
    eff.nu = nu
    beta = fp_digital.update_beta(eff, channels, config)
    return nu, beta


def r_had(state: HybridState, channels: ChannelSet, config: ScenarioConfig) -> float:
    """Transformed hybrid sum-rate objective (natural log)."""
    v = state.v_eff
    r_v = v @ v.conj().T if config.n_s > 0 else None
    return fp_digital.surrogate_objective(
        state.nu, state.beta, state.w_eff, r_v, channels, config
    )


def solve_digital_subproblem(
    state: HybridState,
    channels: ChannelSet,
    config: ScenarioConfig,
    ae_constraints: bool = True,
    scnr_constraints: bool = True,
    solver_tol: float = 1e-7,
    t0: float | None = None,
):
    """Convex update of (F_c, F_s) with the analog matrix fixed.

    The eavesdropper rows linearize the jamming quadratic at the incumbent
    F_s; the SCNR rows linearize both digital quadratics, making them affine.
    """
    f_a = state.f_a
    h = channels.h_users
    k_users, n_s, n_rf = config.k_users, config.n_s, config.n_rf
    nu, beta = state.nu, state.beta

    c_mat = (h * (np.abs(beta) ** 2)) @ h.conj().T
    q_mat = f_a.conj().T @ c_mat @ f_a
    q_mat = 0.5 * (q_mat + q_mat.conj().T)
    gram = f_a.conj().T @ f_a
    gram = 0.5 * (gram + gram.conj().T)

    var_names = [f"fc{k}" for k in range(k_users)] + [f"fs{n}" for n in range(n_s)]
    lin = {
        f"fc{k}": np.sqrt(1.0 + nu[k]) * beta[k] * (f_a.conj().T @ h[:, k])
        for k in range(k_users)
    }
    const = float(np.sum(np.log(1.0 + nu) - nu) - np.sum(np.abs(beta) ** 2) * config.noise_comm)
    objective = conic.Objective(
        lin=lin, quad={name: q_mat for name in var_names}, const=const
    )

    cons = []
    if ae_constraints:
        for t in range(config.t_aes):
            h_e = channels.h_aes[t]
            g_e = f_a.conj().T @ h_e
            e_mat = np.outer(g_e, g_e.conj())
            offset = float(np.real(np.einsum("ij,jn,in->", e_mat, state.f_s, state.f_s.conj()))) if n_s else 0.0
            for k in range(k_users):
                cons.append(
                    conic.Constraint(
                        name=f"ae_t{t}_k{k}",
                        sense="<=",
                        bound=config.noise_eav - offset,
                        quad={f"fc{k}": e_mat / config.gamma_e},
                        lin={f"fs{n}": -(e_mat @ state.f_s[:, n]) for n in range(n_s)},
                    )
                )
    if scnr_constraints:
        streams = k_users + n_s
        bank = state.receive_bank()
        for t in range(config.t_aes):
            a_t, a_i = metrics.scnr_matrices(channels, bank[t], t)
            abar = f_a.conj().T @ (a_t - config.gamma_r * a_i) @ f_a
            abar = 0.5 * (abar + abar.conj().T)
            incumbent = float(
                np.real(
                    np.einsum("ij,jn,in->", abar, state.f_c, state.f_c.conj())
                    + (np.einsum("ij,jn,in->", abar, state.f_s, state.f_s.conj()) if n_s else 0.0)
                )
            )
            rhs = config.gamma_r * streams * config.noise_sense / config.frame_len_l + incumbent
            lin_terms = {f"fc{k}": abar @ state.f_c[:, k] for k in range(k_users)}
            lin_terms.update({f"fs{n}": abar @ state.f_s[:, n] for n in range(n_s)})
            cons.append(
                conic.Constraint(name=f"scnr_t{t}", sense=">=", bound=rhs, lin=lin_terms)
            )
    cons.append(
        conic.Constraint(
            name="power",
            sense="<=",
            bound=config.power_budget,
            quad={name: gram for name in var_names},
        )
    )
    problem = conic.ConicProblem(
        vec_vars=[(name, n_rf) for name in var_names],
        psd_var=None,
        objective=objective,
        constraints=cons,
    )
    x0 = {f"fc{k}": state.f_c[:, k] for k in range(k_users)}
    x0.update({f"fs{n}": state.f_s[:, n] for n in range(n_s)})
    sol = conic.solve(problem, tol=solver_tol, x0=x0, t0=t0)
    f_c = np.stack([sol.values[f"fc{k}"] for k in range(k_users)], axis=1)
    if n_s:
        f_s = np.stack([sol.values[f"fs{n}"] for n in range(n_s)], axis=1)
    else:
        f_s = np.zeros((n_rf, 0), dtype=complex)

    # the quadratic-transform surrogate under-uses power; scale jointly onto
    # the tightest of the power / eavesdropper caps, then over-relax along
    # the block step when that strictly improves the exact objective
    f_c, f_s = _scale_and_extrapolate(state, f_c, f_s, channels, config,
                                      ae_constraints, scnr_constraints)
    return f_c, f_s, sol


def _effective(f_a, f_c, f_s):
    w = f_a @ f_c
    if f_s.size:
        v = f_a @ f_s
        return w, v @ v.conj().T
    return w, None


def _scale_and_extrapolate(state, f_c, f_s, channels, config, ae_constraints, scnr_constraints):
    f_a = state.f_a

    def scaled(fc, fs):
        w, rv = _effective(f_a, fc, fs)
        c = fp_digital._max_feasible_scale(w, rv, channels, config, ae_constraints, scnr_constraints)
        return fc * c, fs * c

    f_c, f_s = scaled(f_c, f_s)
    w_base, rv_base = _effective(f_a, f_c, f_s)
    base_rate = fp_digital._true_rate(w_base, rv_base, channels, config)
    dc = f_c - state.f_c
    ds = f_s - state.f_s
    for alpha in (8.0, 4.0, 2.0):
        fc_c = state.f_c + alpha * dc
        fs_c = state.f_s + alpha * ds
        w_c, rv_c = _effective(f_a, fc_c, fs_c)
        power = float(np.real(np.trace(f_a.conj().T @ f_a @ (fc_c @ fc_c.conj().T + (fs_c @ fs_c.conj().T if fs_c.size else 0.0)))))
        if power > config.power_budget:
            shrink = math.sqrt(config.power_budget / power * (1.0 - 1e-7))
            fc_c, fs_c = fc_c * shrink, fs_c * shrink
            w_c, rv_c = _effective(f_a, fc_c, fs_c)
        if not fp_digital._feasible_point(w_c, rv_c, channels, config, ae_constraints, scnr_constraints):
            continue
        if fp_digital._true_rate(w_c, rv_c, channels, config) > base_rate + 1e-12:
            return fc_c, fs_c
    return f_c, f_s


# ---------------------------------------------------------------------------
# vectorized analog problem
# ---------------------------------------------------------------------------

def build_analog_problem(
    state: HybridState,
    channels: ChannelSet,
    config: ScenarioConfig,
    ae_constraints: bool = True,
    scnr_constraints: bool = True,
) -> AnalogProblem:
    """Kronecker-vectorized analog subproblem at the current digital matrices.

    Constraint order: eavesdropper rows m = (t-1)K + k, SCNR rows m = KT + t,
    power row last, so M_c = (K + 1)T + 1 when all rows are present.
    """
    h = channels.h_users
    k_users, n_s = config.k_users, config.n_s
    beta, nu = state.beta, state.nu
    h_tilde = h * beta[None, :]
    c_mat = h_tilde @ h_tilde.conj().T
    c_mat = 0.5 * (c_mat + c_mat.conj().T)
    q_dig = state.f_c @ state.f_c.conj().T
    if n_s:
        q_dig = q_dig + state.f_s @ state.f_s.conj().T
    q_dig = 0.5 * (q_dig + q_dig.conj().T)

    a_mat = np.kron(q_dig.T, c_mat)
    scal = np.diag(2.0 * np.sqrt(1.0 + nu))
    a0 = _vec(h_tilde @ scal @ state.f_c.conj().T)

    b_mats, b_vals = [], []
    if ae_constraints:
        for t in range(config.t_aes):
            h_e = channels.h_aes[t]
            outer_e = np.outer(h_e, h_e.conj())
            for k in range(k_users):
                fck = state.f_c[:, k]
                left = np.outer(fck, fck.conj()) / config.gamma_e
                if n_s:
                    left = left - state.f_s @ state.f_s.conj().T
                b_mats.append(np.kron(left.T, outer_e))
                b_vals.append(config.noise_eav)
    if scnr_constraints:
        streams = k_users + n_s
        bank = state.receive_bank()
        for t in range(config.t_aes):
            a_t, a_i = metrics.scnr_matrices(channels, bank[t], t)
            b_mats.append(-np.kron(q_dig.T, a_t - config.gamma_r * a_i))
            b_vals.append(-config.gamma_r * streams * config.noise_sense / config.frame_len_l)
    b_mats.append(np.kron(q_dig.T, np.eye(config.m_t)))
    b_vals.append(config.power_budget)

    lambdas = state.lambdas
    if lambdas is None or len(lambdas) != len(b_mats):
        lambdas = np.full(len(b_mats), LAMBDA_FLOOR)
    return AnalogProblem(
        a0=a0,
        a_mat=0.5 * (a_mat + a_mat.conj().T),
        b_mats=[0.5 * (b + b.conj().T) for b in b_mats],
        b_vals=np.array(b_vals),
        lambdas=np.asarray(lambdas, dtype=float),
    )


def init_lambdas(problem: AnalogProblem, f_a_vec: np.ndarray) -> np.ndarray:
    """Penalty weights balancing the objective against each violated term."""
    obj = abs(float(np.real(problem.a0.conj() @ f_a_vec) - np.real(f_a_vec.conj() @ problem.a_mat @ f_a_vec)))
    out = np.full(problem.m_c, LAMBDA_FLOOR)
    for m, (b, bound) in enumerate(zip(problem.b_mats, problem.b_vals)):
        viol = float(np.real(f_a_vec.conj() @ b @ f_a_vec)) - bound
        phi = max(viol, 0.0) ** 2
        if phi > 0.0:
            out[m] = max(obj / phi, LAMBDA_FLOOR)
    return out


def penalty_value(problem: AnalogProblem, f_a_vec: np.ndarray) -> float:
    """Penalized objective G(f) = Re(a0^H f) - f^H A0 f - sum lam * clamp^2."""
    val = float(np.real(problem.a0.conj() @ f_a_vec))
    val -= float(np.real(f_a_vec.conj() @ problem.a_mat @ f_a_vec))
    for lam, b, bound in zip(problem.lambdas, problem.b_mats, problem.b_vals):
        viol = float(np.real(f_a_vec.conj() @ b @ f_a_vec)) - bound
        if viol > 0.0:
            val -= lam * viol * viol
    return val


def constraint_violations(problem: AnalogProblem, f_a_vec: np.ndarray) -> np.ndarray:
    """Raw violations f^H B_m f - b_m (positive = violated)."""
    out = np.empty(problem.m_c)
    for m, (b, bound) in enumerate(zip(problem.b_mats, problem.b_vals)):
        out[m] = float(np.real(f_a_vec.conj() @ b @ f_a_vec)) - bound
    return out


def euclidean_grad(problem: AnalogProblem, f_a_vec: np.ndarray) -> np.ndarray:
    grad = problem.a0 - 2.0 * (problem.a_mat @ f_a_vec)
    for lam, b, bound in zip(problem.lambdas, problem.b_mats, problem.b_vals):
        viol = float(np.real(f_a_vec.conj() @ b @ f_a_vec)) - bound
        if viol > 0.0:
            grad = grad - lam * 4.0 * viol * (b @ f_a_vec)
    return grad


def riemannian_grad(f_a_vec: np.ndarray, egrad: np.ndarray) -> np.ndarray:
    """Projection onto the tangent space of the unit-modulus circle product."""
    return egrad - np.real(egrad * f_a_vec.conj()) * f_a_vec


def retract(f_a_vec: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Elementwise renormalization; zero entries keep their previous phase."""
    moved = f_a_vec + step
    mags = np.abs(moved)
    out = np.where(mags > 1e-300, moved / np.maximum(mags, 1e-300), f_a_vec)
    return out


def manifold_ascent(
    problem: AnalogProblem,
    f_a_vec: np.ndarray,
    max_iters: int = 500,
    rel_tol: float = 1e-6,
    armijo_shrink: float = 0.5,
    armijo_c1: float = 1e-4,
    max_backtracks: int = 30,
):
    """Riemannian gradient ascent with Armijo backtracking on the circle
    manifold.  Returns (f_a, info) where info records the trajectory of G and
    whether the step search ever hit the backtracking limit.
    """
    f = f_a_vec / np.abs(f_a_vec)
    g_val = penalty_value(problem, f)
    history = [g_val]
    hit_limit = False
    for _ in range(max_iters):
        grad = riemannian_grad(f, euclidean_grad(problem, f))
        gnorm2 = float(np.real(grad.conj() @ grad))
        if gnorm2 <= 1e-300:
            break
        step_size = 1.0
        accepted = False
        for _bt in range(max_backtracks):
            cand = retract(f, step_size * grad)
            g_new = penalty_value(problem, cand)
            if g_new >= g_val + armijo_c1 * step_size * gnorm2:
                f, g_val, accepted = cand, g_new, True
                break
            step_size *= armijo_shrink
        if not accepted:
            hit_limit = True
            break
        history.append(g_val)
        if len(history) > 1 and abs(history[-1] - history[-2]) < rel_tol * max(1.0, abs(history[-2])):
            break
    info = {"history": history, "hit_backtrack_limit": hit_limit, "iterations": len(history) - 1}
    return f, info


# ---------------------------------------------------------------------------
# phase-projection decompositions
# ---------------------------------------------------------------------------

def _phase_sweep(target: np.ndarray, f_a: np.ndarray, digital: np.ndarray) -> np.ndarray:
    """One Gauss-Seidel sweep of exact per-entry phase updates on F_a.

    Minimizes ||target - F_a digital||_F over each unit-modulus entry in turn;
    the per-entry optimum is the phase of the residual correlation.
    """
    f_a = f_a.copy()
    resid = target - f_a @ digital
    for i in range(f_a.shape[0]):
        for j in range(f_a.shape[1]):
            d_j = digital[j, :]
            r_without = resid[i, :] + f_a[i, j] * d_j
            g = r_without @ d_j.conj().T
            if abs(g) > 1e-300:
                new = g / abs(g)
            else:
                new = f_a[i, j]
            resid[i, :] = r_without - new * d_j
            f_a[i, j] = new
    return f_a


def _alternating_decomposition(target: np.ndarray, n_rf: int, iters: int = 20, stall: float = 1e-6):
    """Alternating least-squares / phase-projection factorization.

    target (m x c) ~= F_a (m x n_rf, unit modulus) @ D (n_rf x c); returns
    (F_a, D, residuals) with a non-increasing residual sequence.
    """
    m = target.shape[0]
    u_svd, _, _ = np.linalg.svd(target, full_matrices=True)
    seed = u_svd[:, :n_rf] if n_rf <= m else np.tile(u_svd, (1, n_rf))[:, :n_rf]
    f_a = np.exp(1j * np.angle(seed))
    f_a[np.abs(seed) < 1e-12] = 1.0
    residuals = []
    d = np.linalg.pinv(f_a) @ target
    prev = np.linalg.norm(target - f_a @ d)
    residuals.append(prev)
    for _ in range(iters):
        f_a = _phase_sweep(target, f_a, d)
        d = np.linalg.pinv(f_a) @ target
        cur = np.linalg.norm(target - f_a @ d)
        residuals.append(cur)
        if prev - cur < stall * max(1.0, prev):
            break
        prev = cur
    return f_a, d, residuals


def init_hybrid(w0: np.ndarray, v0: np.ndarray, config: ScenarioConfig):
    """Hybrid factors approximating the fully digital initialization.

    Alternates exact least squares for the digital matrices with per-entry
    phase updates for the analog matrix, then rescales the digital side onto
    the power budget.
    """
    return decompose_fully_digital(w0, v0, config.n_rf, config)


def decompose_fully_digital(w: np.ndarray, v: np.ndarray, n_rf: int, config: ScenarioConfig):
    """Phase-projection decomposition of a digital design into hybrid factors.

    Returns (F_a, F_c, F_s, residuals); the recomposed power is rescaled onto
    the budget when the factorization overshoots it.
    """
    k_users = w.shape[1]
    target = np.concatenate([w, v], axis=1) if v.size else w
    f_a, d, residuals = _alternating_decomposition(target, n_rf)
    f_c = d[:, :k_users]
    f_s = d[:, k_users:]
    power = float(np.real(np.trace(f_a.conj().T @ f_a @ (f_c @ f_c.conj().T + (f_s @ f_s.conj().T if f_s.size else 0.0)))))
    if power > config.power_budget:
        scale = math.sqrt(config.power_budget / power)
        f_c = f_c * scale
        f_s = f_s * scale
    return f_a, f_c, f_s, residuals


def decompose_receive(u_digital: np.ndarray, n_rf: int):
    """Hybrid receive factors; recomposed columns are re-normalized."""
    u_a, u_d, _res = _alternating_decomposition(u_digital, n_rf)
    recomposed = u_a @ u_d
    norms = np.linalg.norm(recomposed, axis=0)
    u_d = u_d / np.maximum(norms, 1e-300)[None, :]
    return u_a, u_d


# ---------------------------------------------------------------------------
# Algorithm 2 outer loop
# ---------------------------------------------------------------------------

def run_hybrid(
    channels: ChannelSet,
    config: ScenarioConfig,
    ae_constraints: bool = True,
    scnr_constraints: bool = True,
    max_outer: int = 30,
    rel_tol: float = 1e-4,
    solver_tol: float = 1e-7,
    violation_tol: float = 1e-4,
) -> HybridSolution:
    """Alternating hybrid design: auxiliaries, digital conic solve, penalty
    manifold ascent, penalty-weight doubling, receive decomposition."""
    t_aes = config.t_aes
    ae_constraints = ae_constraints and t_aes > 0
    scnr_constraints = scnr_constraints and t_aes > 0

    w0, v0, feasible, _mu = fp_digital.init_beamformers(
        channels, config, ae_constraints, scnr_constraints
    )
    f_a, f_c, f_s, _res = init_hybrid(w0, v0, config)
    state = HybridState(
        f_a=f_a, f_c=f_c, f_s=f_s, u_a=None, u_d=None,
        nu=np.zeros(config.k_users), beta=np.zeros(config.k_users, dtype=complex),
        lambdas=np.full((config.k_users + 1) * t_aes + 1 if t_aes else 1, LAMBDA_FLOOR),
    )
    if t_aes:
        _update_receive(state, channels, config)

    lam0 = None
    status = "max_iter"
    prev = None
    max_viol = float("nan")
    t_hint = None
    for it in range(1, max_outer + 1):
        state.nu, state.beta = update_aux_hybrid(state, channels, config)
        f_c, f_s, _sol = solve_digital_subproblem(
            state, channels, config, ae_constraints, scnr_constraints, solver_tol, t0=t_hint
        )
        if np.isfinite(_sol.barrier_weight):
            t_hint = _sol.barrier_weight * 1e-4
        state.f_c, state.f_s = f_c, f_s

        problem = build_analog_problem(state, channels, config, ae_constraints, scnr_constraints)
        f_vec = _vec(state.f_a)
        if lam0 is None:
            lam0 = init_lambdas(problem, f_vec)
            state.lambdas = lam0.copy()
            problem.lambdas = state.lambdas
        f_vec, info = manifold_ascent(problem, f_vec)
        state.f_a = _unvec(f_vec, config.m_t, config.n_rf)

        viols = constraint_violations(problem, f_vec)
        rel_viols = np.maximum(viols, 0.0) / (1.0 + np.abs(problem.b_vals))
        max_viol = float(rel_viols.max()) if rel_viols.size else 0.0
        doubled = rel_viols > violation_tol
        state.lambdas = np.where(
            doubled, np.minimum(state.lambdas * 2.0, lam0 * LAMBDA_CAP_FACTOR), state.lambdas
        )

        if t_aes:
            _update_receive(state, channels, config)

        state.iteration = it
        obj = r_had(state, channels, config)
        state.trace.append(
            {
                "iteration": it,
                "r_had": obj,
                "penalty_objective": info["history"][-1],
                "max_violation": max_viol,
                "max_modulus_dev": float(np.max(np.abs(np.abs(state.f_a) - 1.0))),
                "lambda_max": float(state.lambdas.max()),
            }
        )
        if prev is not None and abs(obj - prev) < rel_tol * max(1.0, abs(prev)) and max_viol <= violation_tol:
            status = "converged"
            break
        prev = obj

    pair = metrics.BeamformerPair(w_comm=state.w_eff, v_sense=state.v_eff)
    achieved = {
        "sum_rate": metrics.sum_rate(channels, pair, config.noise_comm),
        "secrecy_rate": metrics.sum_secrecy_rate(channels, pair, config.noise_comm, config.noise_eav),
        "ae_sinr": metrics.worst_ae_sinr(channels, pair, config.noise_eav),
        "scnr": np.array(
            [
                metrics.sensing_scnr(channels, pair, u, config, t)
                for t, u in enumerate(state.receive_bank())
            ]
        ),
        "power": float(
            np.real(
                np.trace(
                    state.f_a.conj().T
                    @ state.f_a
                    @ (state.f_c @ state.f_c.conj().T + (state.f_s @ state.f_s.conj().T if state.f_s.size else 0.0))
                )
            )
        ),
    }
    return HybridSolution(
        state=state,
        achieved=achieved,
        trace=state.trace,
        status=status,
        feasible_init=feasible,
        max_violation=max_viol,
    )


def _update_receive(state: HybridState, channels: ChannelSet, config: ScenarioConfig):
    """Digital combiners decomposed onto the hybrid receive structure."""
    v = state.v_eff
    r_v = v @ v.conj().T if v.size else None
    bank = fp_digital._receive_bank(channels, state.w_eff, r_v, config)
    u_mat = np.stack(bank, axis=1) if bank else np.zeros((config.m_r, 0), dtype=complex)
    if u_mat.shape[1]:
        state.u_a, state.u_d = decompose_receive(u_mat, config.n_rf)

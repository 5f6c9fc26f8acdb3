"""Energy-beamformer design by semidefinite relaxation and successive convex
approximation, with a one-dimensional search over the time split alpha.

For a fixed alpha the large-N_r problem is

    max  (1 - alpha) sum_k log2(1 + G_k / (a tr(A_k Z) + sigma^2))
    s.t. sum_k log2(1 + s_k tr(B_k Z)) >= R / (1 - alpha),  tr Z = K_u,  Z >= 0,

with ``Z = W_E W_E^H`` and ``a = eta P_A alpha / (1 - alpha)``.  In the
lifted variable ``W_bar = vec(W_E) vec(W_E)^H`` every constraint matrix is
of the form ``M kron I_{K_u}``, so only the partial trace ``Z`` of
``W_bar`` matters: the relaxation is solved exactly over the N_t x N_t
matrix ``Z`` and lifted back afterwards.  ``vec`` is row-major throughout
(``W_E.reshape(-1)``).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .beamforming import mrt_energy_beams
from .errors import ConfigurationError, DomainError, InfeasibleError, NumericalError
from .model import ChannelRealization, PathLossProfile, RngLike, RngStream, SystemParams, as_generator
from .sdp import LogSumConstraint, SdpProblem, smat, solve_sdp, svec

__all__ = [
    "SdrProblem",
    "ScaState",
    "AlphaPoint",
    "OptimizationResult",
    "build_sdr_problem",
    "initial_state",
    "sca_iterate",
    "lift",
    "recover_rank_one",
    "reduce_rank",
    "downlink_objective",
    "uplink_objective",
    "optimize",
    "default_alpha_grid",
    "RANK_ONE_THRESHOLD",
    "RANDOMIZATION_CANDIDATES",
]

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
RANK_ONE_THRESHOLD = 1e-6
RANDOMIZATION_CANDIDATES = 500


def default_alpha_grid(points: int = 99) -> np.ndarray:
    return np.linspace(0.01, 0.99, points)


@dataclass(frozen=True)
class SdrProblem:
    """Data of the relaxed problem for one realization and one alpha.

    ``a_blocks``/``b_blocks`` hold the N_t x N_t factors; the lifted
    matrices of size N_t K_u are ``block kron I_{K_u}``.
    """

    a_blocks: np.ndarray     # (K_d, N_t, N_t)
    b_blocks: np.ndarray     # (K_u, N_t, N_t)
    c_coeffs: np.ndarray     # (K_u,)
    gains: np.ndarray        # (K_d,) ||g_APd,k||^2
    alpha: float
    r_ul_min: float
    trace_budget: int
    sigma_n2: float
    eta: float
    p_ap: float
    mrt_beam: np.ndarray     # (N_t, K_u) baseline energy beam
    kappa_consistent: bool = False

    @property
    def n_tx(self) -> int:
        return self.b_blocks.shape[-1] if len(self.b_blocks) else self.a_blocks.shape[-1]

    @property
    def k_ul(self) -> int:
        return self.trace_budget

    @property
    def a_mats(self) -> np.ndarray:
        eye = np.eye(self.k_ul)
        return np.stack([np.kron(a, eye) for a in self.a_blocks]) if len(self.a_blocks) else self.a_blocks

    @property
    def b_mats(self) -> np.ndarray:
        eye = np.eye(self.k_ul)
        return np.stack([np.kron(b, eye) for b in self.b_blocks]) if len(self.b_blocks) else self.b_blocks

    @property
    def interference_scale(self) -> float:
        """``eta P_A alpha / (1 - alpha)`` multiplying tr(A_k Z)."""
        return self.eta * self.p_ap * self.alpha / (1.0 - self.alpha)

    @property
    def uplink_scales(self) -> np.ndarray:
        """Coefficients ``s_k`` of tr(B_k Z) inside the uplink logarithms."""
        if self.kappa_consistent:
            return self.c_coeffs
        return self.c_coeffs * self.alpha / (1.0 - self.alpha)

    def interference(self, z: np.ndarray) -> np.ndarray:
        return self.interference_scale * np.real(np.einsum("kij,ji->k", self.a_blocks, z)) + self.sigma_n2

    def uplink_quadratics(self, z: np.ndarray) -> np.ndarray:
        return np.real(np.einsum("kij,ji->k", self.b_blocks, z))


def build_sdr_problem(channels: ChannelRealization, params: SystemParams, alpha: float,
                      losses: Optional[PathLossProfile] = None, estimate=None,
                      r_ul_min: Optional[float] = None, kappa_consistent: bool = False) -> SdrProblem:
    """Assemble the relaxation data for one (unbatched) realization.

    Row l of the stacked matrix for user k is ``sqrt(beta_l) |g_ud,k,l| h_l^T``
    with ``h_l = g_l / sqrt(beta_l)``, and ``B_k = conj(h_k) h_k^T`` so that
    ``tr(B_k W W^H) = h_k^T W W^H conj(h_k)``.  With ``estimate`` the user
    gains come from the estimated downlink channels.
    """
    if not 0.0 <= alpha < 1.0:
        raise DomainError(f"time split must satisfy 0 <= alpha < 1, got {alpha}", "alpha")
    if channels.batch_shape:
        raise ConfigurationError("build_sdr_problem expects a single realization")
    if losses is None:
        losses = PathLossProfile.uniform(params)
    losses.check(params)
    g_ul = channels.g_ap_ul                         # (N_t, K_u)
    beta = losses.beta_ap_ul
    h = g_ul / np.sqrt(beta)[None, :]
    # H_tilde_k rows: sqrt(beta_l) |g_ud,k,l| h_l^T  -> (K_d, K_u, N_t)
    mags = np.abs(channels.g_ul_dl).T              # [k, l] = |g_ud,k,l|
    h_tilde = (np.sqrt(beta)[None, :] * mags)[:, :, None] * h.T[None, :, :]
    a_blocks = np.einsum("kli,klj->kij", h_tilde.conj(), h_tilde)
    b_blocks = np.einsum("il,jl->lij", h.conj(), h)
    kap = params.eta * alpha / (1.0 - alpha)
    denom = params.p_ap * params.sigma_si2 + params.sigma_n2
    c = kap * params.p_ap * beta * np.sum(np.abs(g_ul) ** 2, axis=0) / denom
    g_dl = channels.g_ap_dl if estimate is None else estimate.g_ap_dl_hat
    gains = np.sum(np.abs(g_dl) ** 2, axis=0)
    mrt = mrt_energy_beams(g_ul) if params.k_ul else np.zeros((params.n_tx, 0))
    return SdrProblem(a_blocks, b_blocks, c, gains, float(alpha),
                      float(params.r_ul_min if r_ul_min is None else r_ul_min), params.k_ul,
                      params.sigma_n2, params.eta, params.p_ap, mrt, kappa_consistent)


def downlink_objective(problem: SdrProblem, z: np.ndarray) -> float:
    """Large-N_r downlink sum-rate (bits/s/Hz, with the (1 - alpha) factor)."""
    rates = np.log1p(problem.p_ap * problem.gains / problem.interference(z)) / LN2
    return float((1.0 - problem.alpha) * np.sum(rates))


def uplink_objective(problem: SdrProblem, z: np.ndarray) -> float:
    """Left side of the uplink constraint times (1 - alpha), in bits/s/Hz."""
    q = np.maximum(problem.uplink_quadratics(z), 0.0)
    return float((1.0 - problem.alpha) * np.sum(np.log1p(problem.uplink_scales * q)) / LN2)


def _uplink_target(problem: SdrProblem) -> float:
    """Required value of sum_k ln(1 + s_k tr(B_k Z))."""
    return problem.r_ul_min * LN2 / (1.0 - problem.alpha)


def _subproblem(problem: SdrProblem, tau0: np.ndarray) -> SdpProblem:
    n, kd = problem.n_tx, len(problem.gains)
    logsum = None
    if problem.r_ul_min > 0:
        logsum = LogSumConstraint(problem.b_blocks, problem.uplink_scales, _uplink_target(problem))
    return SdpProblem(
        n, kd,
        c_vec=1.0 / tau0,
        log_weights=np.ones(kd),
        log_offsets=problem.p_ap * problem.gains,
        ineq_mats=problem.interference_scale * problem.a_blocks,
        ineq_vecs=-np.eye(kd),
        ineq_rhs=np.full(kd, -problem.sigma_n2),
        eq_mats=np.eye(n)[None],
        eq_rhs=[float(problem.trace_budget)],
        logsum=logsum,
    )


@dataclass(frozen=True)
class ScaState:
    tau_bar: np.ndarray          # linearization points (interference levels)
    z: np.ndarray                # N_t x N_t reduced relaxation variable
    objective: float             # large-N_r downlink sum-rate at z
    iteration: int = 0
    trace: tuple = ()
    converged: bool = False
    newton_iterations: int = 0
    k_ul: int = 1

    @property
    def w_bar(self) -> np.ndarray:
        return lift(self.z, self.k_ul)


def initial_state(problem: SdrProblem) -> ScaState:
    """Linearize at the interference produced by the MRT energy beam."""
    z = problem.mrt_beam @ problem.mrt_beam.conj().T
    tau = problem.interference(z)
    return ScaState(tau, z, downlink_objective(problem, z), k_ul=problem.trace_budget)


def sca_iterate(problem: SdrProblem, state: ScaState, tol: float = 1e-4, max_iter: int = 50,
                sdp_tol: float = 1e-9) -> ScaState:
    """Run SCA iterations from ``state`` until the relative change of the
    objective drops below ``tol`` or ``max_iter`` iterations have run.

    The linearization point is updated to the interference achieved by each
    subproblem solution, so the recorded objective never decreases (up to
    the SDP tolerance).  Raises :class:`InfeasibleError` if the uplink
    constraint cannot be met.
    """
    n, ku = problem.n_tx, problem.trace_budget
    if ku == 0:
        z = np.zeros((n, n), dtype=complex)
        if problem.r_ul_min > 0:
            raise InfeasibleError("no sensors to carry the required uplink rate")
        obj = downlink_objective(problem, z)
        return ScaState(problem.interference(z), z, obj, state.iteration + 1, state.trace + (obj,), True, 0, 0)
    tau0 = np.array(state.tau_bar, dtype=float)
    trace = list(state.trace)
    prev = state.objective
    z_prev = None
    interior = None
    newton = state.newton_iterations
    converged = False
    iteration = state.iteration
    z = state.z
    for _ in range(max_iter):
        sub = _subproblem(problem, tau0)
        x0 = interior if interior is not None else np.eye(n, dtype=complex) * ku / n
        if interior is not None and z_prev is not None:
            x0 = 0.5 * (x0 + z_prev)
        y0 = 1.5 * problem.interference(x0) + 1.0
        sol = solve_sdp(sub, tol=sdp_tol, x0=x0, y0=y0)
        newton += sol.newton_iterations
        if sol.status != "optimal":
            raise NumericalError(f"SCA subproblem did not converge ({sol.status})")
        z = 0.5 * (sol.x + sol.x.conj().T)
        if interior is None:
            interior = _interior_point(problem, sub, z)
        iteration += 1
        obj = downlink_objective(problem, z)
        trace.append(obj)
        tau0 = problem.interference(z)
        z_prev = z
        if abs(obj - prev) <= tol * max(abs(prev), 1e-12):
            converged = True
            break
        prev = obj
    return ScaState(tau0, z, obj, iteration, tuple(trace), converged, newton, ku)


def _interior_point(problem: SdrProblem, sub: SdpProblem, z: np.ndarray):
    """A strictly feasible Z for warm starts: the scaled identity if it meets
    the uplink constraint, otherwise a blend of it with ``z``."""
    n = problem.n_tx
    center = np.eye(n, dtype=complex) * problem.trace_budget / n
    if sub.logsum is None:
        return center
    target = _uplink_target(problem)
    for theta in (0.0, 0.5, 0.9, 0.99):
        cand = theta * z + (1 - theta) * center
        q = problem.uplink_quadratics(cand)
        if np.sum(np.log1p(problem.uplink_scales * q)) > target:
            return cand
    return None


def lift(z: np.ndarray, k_ul: int) -> np.ndarray:
    """A lifted matrix ``W_bar`` (size N_t K_u) whose partial trace is ``z``.

    Eigenpairs of ``z`` (largest first) are grouped K_u at a time; each
    group becomes one row-major vectorized N_t x K_u matrix, so the rank of
    the result is ceil(rank(z) / K_u) and it is rank one when rank(z) <= K_u.
    """
    vecs = _lift_vectors(z, k_ul)
    return sum(np.outer(v, v.conj()) for v in vecs)


def _lift_vectors(z, k_ul):
    n = z.shape[0]
    lam, u = np.linalg.eigh(0.5 * (z + z.conj().T))
    order = np.argsort(lam)[::-1]
    lam, u = np.clip(lam[order], 0.0, None), u[:, order]
    mats = []
    for start in range(0, n, k_ul):
        w = np.zeros((n, k_ul), dtype=complex)
        cols = slice(start, min(start + k_ul, n))
        block = u[:, cols] * np.sqrt(lam[cols])
        w[:, :block.shape[1]] = block
        mats.append(w)
    return [m.reshape(-1) for m in mats]


def _devec(vec, n_tx, k_ul):
    return vec.reshape(n_tx, k_ul)


def reduce_rank(z: np.ndarray, problem: SdrProblem, tol: float = 1e-9) -> np.ndarray:
    """Move ``z`` inside the optimal face to a point of lower rank.

    Objective and constraints see ``z`` only through tr(A_k z), tr(B_k z)
    and tr z.  While rank r has r^2 above the number m of those functionals,
    some Hermitian direction D keeps them all fixed; stepping
    ``z <- V (I - D / lambda_max(D)) V^H`` (z = V V^H) drops the rank by one
    and leaves every objective and constraint value unchanged.  Stops at
    rank K_u, which already lifts to a rank-one W_bar.
    """
    mats = [m for m in problem.a_blocks] + [m for m in problem.b_blocks] + [np.eye(problem.n_tx)]
    m = len(mats)

    def factor(mat):
        lam, u = np.linalg.eigh(0.5 * (mat + mat.conj().T))
        keep = lam > tol * max(lam[-1], 0.0)
        return u[:, keep] * np.sqrt(lam[keep])

    v = factor(z)
    while v.shape[1] > max(problem.trace_budget, 1) and v.shape[1] ** 2 > m:
        r = v.shape[1]
        rows = np.stack([svec(v.conj().T @ mat @ v) for mat in mats])
        direction = smat(np.linalg.svd(rows)[2][-1], r)
        lam = np.linalg.eigvalsh(direction)
        scale = lam[-1] if abs(lam[-1]) >= abs(lam[0]) else lam[0]
        step = np.eye(r) - direction / scale
        v = factor(v @ step @ v.conj().T)
    return v @ v.conj().T


def recover_rank_one(w_bar_or_z: np.ndarray, problem: SdrProblem, rng: RngLike = None,
                     candidates: int = RANDOMIZATION_CANDIDATES,
                     threshold: float = RANK_ONE_THRESHOLD):
    """Extract an energy beamformer from a relaxed solution.

    Accepts either the reduced N_t x N_t matrix or the lifted matrix (which
    is reduced to its partial trace).  The solution is first moved to a
    low-rank point of the same optimal face (:func:`reduce_rank`).  Returns
    ``(w_e, status, rank_one_gap)``; status is ``"optimal"`` when the lifted
    solution is then rank one, ``"rank-approximated"`` after Gaussian
    randomization, or ``"recovery-failed"`` when no randomized candidate
    meets the uplink constraint (``w_e`` is then None).
    """
    n, ku = problem.n_tx, problem.trace_budget
    mat = np.asarray(w_bar_or_z)
    if mat.shape == (n * ku, n * ku) and ku > 1:
        mat = np.einsum("ikjk->ij", mat.reshape(n, ku, n, ku))
    vecs = _lift_vectors(reduce_rank(mat, problem), ku)
    energies = np.array([np.vdot(v, v).real for v in vecs])
    gap = float(energies[1] / energies[0]) if len(energies) > 1 and energies[0] > 0 else 0.0
    budget = float(ku)

    def rescale(vec):
        norm2 = np.vdot(vec, vec).real
        return vec * np.sqrt(budget / norm2) if norm2 > 0 else None

    if gap < threshold:
        return _devec(rescale(vecs[0]), n, ku), "optimal", gap
    gen = as_generator(rng if rng is not None else RngStream(0))
    basis = np.stack(vecs)                                   # rows span the lifted solution
    target = problem.r_ul_min
    best, best_val = None, -np.inf
    draws = (gen.standard_normal((candidates, len(vecs))) +
             1j * gen.standard_normal((candidates, len(vecs)))) / np.sqrt(2)
    pool = np.vstack([basis[:1], draws @ basis])           # principal direction first
    for vec in pool:
        vec = rescale(vec)
        if vec is None:
            continue
        w = _devec(vec, n, ku)
        z = w @ w.conj().T
        if target > 0 and uplink_objective(problem, z) < target * (1 - 1e-9):
            continue
        val = downlink_objective(problem, z)
        if val > best_val:
            best, best_val = w, val
    if best is None:
        return None, "recovery-failed", gap
    return best, "rank-approximated", gap


@dataclass
class AlphaPoint:
    alpha: float
    status: str                      # optimal, rank-approximated, recovery-failed, infeasible, failed
    sdr_dl_sum_rate: float = float("nan")
    sdr_ul_sum_rate: float = float("nan")
    dl_sum_rate: float = float("nan")
    ul_sum_rate: float = float("nan")
    mrt_dl_sum_rate: float = float("nan")
    mrt_ul_sum_rate: float = float("nan")
    rank_one_gap: float = float("nan")
    iterations: int = 0
    newton_iterations: int = 0
    converged: bool = False
    sca_trace: tuple = ()
    w_e: Optional[np.ndarray] = None


@dataclass
class OptimizationResult:
    w_e: Optional[np.ndarray]
    alpha_star: float
    dl_sum_rate: float
    ul_sum_rate: float
    sca_trace: List[float]
    rank_one_gap: float
    status: str                      # optimal, rank-approximated, infeasible
    sdr_dl_sum_rate: float = float("nan")
    sdr_alpha_star: float = float("nan")
    r_ul_min: float = 0.0
    points: List[AlphaPoint] = field(default_factory=list)


def _solve_alpha(channels, params, alpha, losses, estimate, r_ul_min, kappa_consistent, gen,
                 sca_tol, max_iter):
    problem = build_sdr_problem(channels, params, alpha, losses, estimate, r_ul_min, kappa_consistent)
    point = AlphaPoint(float(alpha), "infeasible")
    if params.k_ul:
        z_mrt = problem.mrt_beam @ problem.mrt_beam.conj().T
        point.mrt_dl_sum_rate = downlink_objective(problem, z_mrt)
        point.mrt_ul_sum_rate = uplink_objective(problem, z_mrt)
    try:
        state = sca_iterate(problem, initial_state(problem), sca_tol, max_iter)
    except InfeasibleError:
        return point
    except NumericalError as exc:
        log.warning("alpha=%.4f: %s", alpha, exc)
        point.status = "failed"
        return point
    point.sdr_dl_sum_rate = state.objective
    point.sdr_ul_sum_rate = uplink_objective(problem, state.z)
    point.iterations = state.iteration
    point.newton_iterations = state.newton_iterations
    point.converged = state.converged
    point.sca_trace = state.trace
    if problem.trace_budget == 0:
        point.status, point.rank_one_gap = "optimal", 0.0
        point.dl_sum_rate, point.ul_sum_rate = state.objective, 0.0
        point.w_e = np.zeros((problem.n_tx, 0), dtype=complex)
        return point
    w_e, status, gap = recover_rank_one(state.z, problem, gen)
    point.status, point.rank_one_gap = status, gap
    if w_e is not None:
        z = w_e @ w_e.conj().T
        point.w_e = w_e
        point.dl_sum_rate = downlink_objective(problem, z)
        point.ul_sum_rate = uplink_objective(problem, z)
    return point


def optimize(channels: ChannelRealization, params: SystemParams, alpha_grid: Sequence[float] = None,
             r_ul_min: Optional[float] = None, losses: Optional[PathLossProfile] = None, estimate=None,
             rng: RngLike = None, kappa_consistent: bool = False, sca_tol: float = 1e-4,
             max_iter: int = 50) -> OptimizationResult:
    """Grid search over alpha with an SCA/SDR energy-beam design at each point.

    The returned beamformer and alpha maximize the recovered downlink
    objective among grid points whose recovered beam meets the uplink
    constraint; ``sdr_dl_sum_rate`` is the best relaxation value.
    """
    grid = default_alpha_grid() if alpha_grid is None else np.asarray(alpha_grid, dtype=float).reshape(-1)
    if grid.size == 0:
        raise ConfigurationError("alpha grid is empty", "alpha_grid")
    if np.any(grid < 0) or np.any(grid >= 1):
        raise ConfigurationError("alpha grid values must lie in [0, 1)", "alpha_grid")
    r_req = float(params.r_ul_min if r_ul_min is None else r_ul_min)
    gen = as_generator(rng if rng is not None else RngStream(0))
    points = [_solve_alpha(channels, params, a, losses, estimate, r_req, kappa_consistent, gen,
                           sca_tol, max_iter) for a in grid]
    usable = [p for p in points if p.w_e is not None]
    sdr_ok = [p for p in points if np.isfinite(p.sdr_dl_sum_rate)]
    result = OptimizationResult(None, float("nan"), float("nan"), float("nan"), [], float("nan"),
                                "infeasible", r_ul_min=r_req, points=points)
    if sdr_ok:
        best_sdr = max(sdr_ok, key=lambda p: p.sdr_dl_sum_rate)
        result.sdr_dl_sum_rate, result.sdr_alpha_star = best_sdr.sdr_dl_sum_rate, best_sdr.alpha
    if not usable:
        return result
    best = max(usable, key=lambda p: p.dl_sum_rate)
    result.w_e = best.w_e
    result.alpha_star = best.alpha
    result.dl_sum_rate = best.dl_sum_rate
    result.ul_sum_rate = best.ul_sum_rate
    result.sca_trace = list(best.sca_trace)
    result.rank_one_gap = best.rank_one_gap
    result.status = best.status
    return result

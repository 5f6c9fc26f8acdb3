"""Small dense log-barrier interior-point solver for Hermitian SDPs.

Problem form (minimization, X Hermitian n x n, y real p-vector)::

    minimize   tr(C X) + c.y - sum_i w_i log(y_i + d_i)
    subject to tr(A_i X) + e_i.y <= b_i              (linear inequalities)
               sum_j log(1 + s_j tr(B_j X)) + h.y >= r  (optional log-sum)
               tr(F_i X) + f_i.y  = g_i              (linear equalities)
               X >= 0

Each Newton step is taken in coordinates scaled by the Cholesky factor of
the current iterate, ``X + L D L^H``, in which the log-det barrier has an
identity Hessian.  Hermitian matrices are handled through the orthonormal
real basis ``svec`` (diagonal, sqrt(2) Re and sqrt(2) Im of the strict
upper triangle), i.e. the standard real embedding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import ConfigurationError, InfeasibleError, NumericalError

__all__ = [
    "LogSumConstraint",
    "SdpProblem",
    "SdpSolution",
    "svec",
    "smat",
    "solve_sdp",
    "max_eigenvalue_sdp",
]


@lru_cache(maxsize=None)
def _upper(n):
    return np.triu_indices(n, 1)


def svec(m: np.ndarray) -> np.ndarray:
    """Coordinates of Hermitian matrices (batched over leading axes)."""
    n = m.shape[-1]
    iu = _upper(n)
    upper = m[..., iu[0], iu[1]]
    diag = np.real(np.diagonal(m, axis1=-2, axis2=-1))
    return np.concatenate([diag, np.sqrt(2) * upper.real, np.sqrt(2) * upper.imag], axis=-1)


def smat(v: np.ndarray, n: int) -> np.ndarray:
    iu = _upper(n)
    k = len(iu[0])
    out = np.zeros(v.shape[:-1] + (n, n), dtype=complex)
    out[..., np.arange(n), np.arange(n)] = v[..., :n]
    upper = (v[..., n:n + k] + 1j * v[..., n + k:]) / np.sqrt(2)
    out[..., iu[0], iu[1]] = upper
    out[..., iu[1], iu[0]] = upper.conj()
    return out


def _mats(value, n, name):
    if value is None:
        return np.zeros((0, n, n), dtype=complex)
    arr = np.asarray(value, dtype=complex)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.shape[1:] != (n, n):
        raise ConfigurationError(f"expected matrices of size {n}x{n}, got {arr.shape}", name)
    return 0.5 * (arr + np.swapaxes(arr.conj(), -1, -2))


def _vecs(value, rows, p, name):
    if value is None:
        return np.zeros((rows, p))
    arr = np.asarray(value, dtype=float).reshape(rows, p)
    return arr


def _vec(value, size, name, fill=0.0):
    if value is None:
        return np.full(size, fill, dtype=float)
    arr = np.asarray(value, dtype=float).reshape(-1)
    if arr.size != size:
        raise ConfigurationError(f"expected {size} entries, got {arr.size}", name)
    return arr


@dataclass
class LogSumConstraint:
    """``sum_j log(1 + s_j tr(B_j X)) + h.y >= rhs`` (natural logs)."""

    mats: np.ndarray
    scales: np.ndarray
    rhs: float
    vec: Optional[np.ndarray] = None


@dataclass
class SdpProblem:
    n: int
    p: int = 0
    c_mat: Optional[np.ndarray] = None
    c_vec: Optional[np.ndarray] = None
    log_weights: Optional[np.ndarray] = None
    log_offsets: Optional[np.ndarray] = None
    ineq_mats: Optional[np.ndarray] = None
    ineq_vecs: Optional[np.ndarray] = None
    ineq_rhs: Optional[np.ndarray] = None
    eq_mats: Optional[np.ndarray] = None
    eq_vecs: Optional[np.ndarray] = None
    eq_rhs: Optional[np.ndarray] = None
    logsum: Optional[LogSumConstraint] = None

    def __post_init__(self):
        n, p = self.n, self.p
        if n < 1 or p < 0:
            raise ConfigurationError("matrix size must be positive and p nonnegative")
        self.c_mat = _mats(self.c_mat if self.c_mat is not None else np.zeros((n, n)), n, "c_mat")[0]
        self.c_vec = _vec(self.c_vec, p, "c_vec")
        self.log_weights = _vec(self.log_weights, p, "log_weights")
        self.log_offsets = _vec(self.log_offsets, p, "log_offsets")
        if np.any(self.log_weights < 0):
            raise ConfigurationError("log weights must be nonnegative", "log_weights")
        self.ineq_mats = _mats(self.ineq_mats, n, "ineq_mats")
        m = len(self.ineq_mats)
        self.ineq_vecs = _vecs(self.ineq_vecs, m, p, "ineq_vecs")
        self.ineq_rhs = _vec(self.ineq_rhs, m, "ineq_rhs")
        self.eq_mats = _mats(self.eq_mats, n, "eq_mats")
        q = len(self.eq_mats)
        self.eq_vecs = _vecs(self.eq_vecs, q, p, "eq_vecs")
        self.eq_rhs = _vec(self.eq_rhs, q, "eq_rhs")
        if self.logsum is not None:
            ls = self.logsum
            mats = _mats(ls.mats, n, "logsum.mats")
            self.logsum = LogSumConstraint(mats, _vec(ls.scales, len(mats), "logsum.scales"),
                                           float(ls.rhs), _vec(ls.vec, p, "logsum.vec"))

    @property
    def n_barrier_terms(self) -> int:
        """Degree of the barrier, which bounds the duality gap as degree / t."""
        return self.n + len(self.ineq_mats) + (self.logsum is not None)


@dataclass
class SdpSolution:
    x: np.ndarray
    y: np.ndarray
    objective: float
    status: str                 # "optimal" or "nonconverged"
    gap: float                  # duality-gap bound at termination
    newton_iterations: int
    residuals: dict = field(default_factory=dict)
    ineq_duals: Optional[np.ndarray] = None
    eq_duals: Optional[np.ndarray] = None
    logsum_dual: float = 0.0


# ---------------------------------------------------------------------------
# evaluation helpers


def _objective(prob: SdpProblem, x, y):
    val = float(np.real(np.trace(prob.c_mat @ x))) + float(prob.c_vec @ y)
    w = prob.log_weights
    if np.any(w > 0):
        val -= float(np.sum(w[w > 0] * np.log(y[w > 0] + prob.log_offsets[w > 0])))
    return val


def _ineq_values(prob, x, y):
    lhs = np.real(np.einsum("mij,ji->m", prob.ineq_mats, x)) + prob.ineq_vecs @ y
    return prob.ineq_rhs - lhs


def _logsum_value(prob, x, y):
    ls = prob.logsum
    if ls is None:
        return np.inf, None
    u = 1.0 + ls.scales * np.real(np.einsum("mij,ji->m", ls.mats, x))
    if np.any(u <= 0):
        return -np.inf, u
    return float(np.sum(np.log(u)) + ls.vec @ y - ls.rhs), u


def _eq_residual(prob, x, y):
    return np.real(np.einsum("mij,ji->m", prob.eq_mats, x)) + prob.eq_vecs @ y - prob.eq_rhs


def _strictly_feasible(prob, x, y):
    try:
        np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        return False
    if np.any(_ineq_values(prob, x, y) <= 0):
        return False
    if _logsum_value(prob, x, y)[0] <= 0:
        return False
    w = prob.log_weights
    return not np.any((y + prob.log_offsets)[w > 0] <= 0)


def _max_violation(prob, x, y):
    parts = [0.0]
    if len(prob.ineq_mats):
        parts.append(float(np.max(-_ineq_values(prob, x, y))))
    if prob.logsum is not None:
        val, _ = _logsum_value(prob, x, y)
        parts.append(-val if np.isfinite(val) else 1e6)
    w = prob.log_weights
    if np.any(w > 0):
        parts.append(float(np.max(-(y + prob.log_offsets)[w > 0])))
    return max(parts)


# ---------------------------------------------------------------------------
# barrier method


def _newton_step(prob, x, y, t, eq_res):
    n, p = prob.n, prob.p
    nn = n * n
    chol = np.linalg.cholesky(x)
    ch = chol.conj().T
    scaled = lambda mats: svec(ch @ mats @ chol)  # noqa: E731

    grad = np.zeros(nn + p)
    hess = np.zeros((nn + p, nn + p))
    # log-det barrier: -logdet(I + D) has gradient -I and Hessian I at D = 0
    grad[:n] -= 1.0
    hess[np.arange(nn), np.arange(nn)] += 1.0
    # Objective, shifted by a combination of the equality functionals.  The
    # shift is constant on the feasible affine set but removes the large
    # component of t * C that the equality multipliers would otherwise have
    # to cancel, which keeps the step accurate when t is large.
    q = len(prob.eq_mats)
    c_full = np.concatenate([svec(ch @ prob.c_mat @ chol), prob.c_vec])
    nu_shift = np.zeros(q)
    if q:
        g_rows = np.hstack([scaled(prob.eq_mats), prob.eq_vecs])
        nu_shift = np.linalg.lstsq(g_rows.T, c_full, rcond=None)[0]
        c_full = c_full - g_rows.T @ nu_shift
    grad += t * c_full
    w = prob.log_weights
    active = w > 0
    if np.any(active):
        shifted = y + prob.log_offsets
        grad[nn:][active] -= t * w[active] / shifted[active]
        idx = nn + np.flatnonzero(active)
        hess[idx, idx] += t * w[active] / shifted[active] ** 2
    info = {"c_full": c_full}
    # linear inequalities
    if len(prob.ineq_mats):
        slack = _ineq_values(prob, x, y)
        rows = np.hstack([scaled(prob.ineq_mats), prob.ineq_vecs])
        grad += rows.T @ (1.0 / slack)
        scaled_rows = rows / slack[:, None]
        hess += scaled_rows.T @ scaled_rows
        info["ineq"] = (rows, slack)
    # concave log-sum constraint
    if prob.logsum is not None:
        ls = prob.logsum
        val, u = _logsum_value(prob, x, y)
        brows = scaled(ls.mats)                  # d tr(B_j X) / d coords
        coef = ls.scales / u
        dpsi = np.concatenate([brows.T @ coef, ls.vec])
        grad -= dpsi / val
        hess += np.outer(dpsi, dpsi) / val**2
        weighted = brows * (coef / np.sqrt(val))[:, None]
        hess[:nn, :nn] += weighted.T @ weighted
        info["logsum"] = (brows, u, val)
    # equality-constrained Newton system
    if q:
        kkt = np.zeros((nn + p + q, nn + p + q))
        kkt[:nn + p, :nn + p] = hess
        kkt[:nn + p, nn + p:] = g_rows.T
        kkt[nn + p:, :nn + p] = g_rows
        rhs = np.concatenate([-grad, -eq_res])
    else:
        kkt, rhs = hess, -grad
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if not np.all(np.isfinite(sol)):
        raise NumericalError("Newton system produced non-finite values")
    step = sol[:nn + p]
    # multipliers of the equalities for the unscaled objective
    nu = sol[nn + p:] / t - nu_shift
    return chol, step, hess, grad, nu, info


def _increment(prob, x, y, t, chol, step, info, s, eig_d):
    """Barrier value at ``s * step`` minus its value at the current point
    (inf outside the domain)."""
    n = prob.n
    nn = n * n
    dy = step[nn:]
    if np.any(1.0 + s * eig_d <= 0):
        return np.inf
    inc = -np.sum(np.log1p(s * eig_d))
    delta = step[:nn]
    inc += t * s * float(info["c_full"] @ step)
    w = prob.log_weights
    active = w > 0
    if np.any(active):
        shifted = (y + prob.log_offsets)[active]
        ratio = 1.0 + s * dy[active] / shifted
        if np.any(ratio <= 0):
            return np.inf
        inc -= t * float(np.sum(w[active] * np.log(ratio)))
    if "ineq" in info:
        rows, slack = info["ineq"]
        ratio = 1.0 - s * (rows @ step) / slack
        if np.any(ratio <= 0):
            return np.inf
        inc -= float(np.sum(np.log(ratio)))
    if "logsum" in info:
        brows, u, val = info["logsum"]
        ls = prob.logsum
        ratio_u = 1.0 + s * ls.scales * (brows @ delta) / u
        if np.any(ratio_u <= 0):
            return np.inf
        new_val = val + float(np.sum(np.log(ratio_u))) + s * float(ls.vec @ dy)
        if new_val <= 0:
            return np.inf
        inc -= np.log(new_val / val)
    return inc


def _barrier(prob: SdpProblem, x, y, tol, mu, t0, max_newton, stop=None):
    m = prob.n_barrier_terms
    t = t0
    total = 0
    n = prob.n
    nn = n * n
    while True:
        for _ in range(max_newton):
            eq_res = _eq_residual(prob, x, y)
            chol, step, hess, grad, nu, info = _newton_step(prob, x, y, t, eq_res)
            decrement = float(step @ hess @ step)
            total += 1
            if decrement / 2 <= 1e-10 and np.max(np.abs(eq_res), initial=0.0) <= 1e-12:
                break
            delta = smat(step[:nn], n)
            eig_d = np.linalg.eigvalsh(delta)
            s = 1.0
            slope = -decrement
            while s > 1e-14:
                inc = _increment(prob, x, y, t, chol, step, info, s, eig_d)
                if inc <= 0.25 * s * slope + 1e-14 * t * (1 + abs(slope)):
                    break
                s *= 0.5
            else:
                break
            x = x + s * (chol @ delta @ chol.conj().T)
            x = 0.5 * (x + x.conj().T)
            y = y + s * step[nn:]
            if total >= max_newton * 40:
                return x, y, t, total, "nonconverged", nu
        if stop is not None and stop(x, y):
            return x, y, t, total, "stopped", nu
        if m / t <= tol:
            return x, y, t, total, "optimal", nu
        t *= mu


def _project_equalities(prob: SdpProblem, x, y):
    q = len(prob.eq_mats)
    if not q:
        return x, y
    rows = np.hstack([svec(prob.eq_mats), prob.eq_vecs])
    point = np.concatenate([svec(x), y])
    res = rows @ point - prob.eq_rhs
    corr = np.linalg.lstsq(rows, res, rcond=None)[0]
    point = point - corr
    return smat(point[:prob.n * prob.n], prob.n), point[prob.n * prob.n:]


def _phase_one(prob: SdpProblem, x, y, mu, max_newton):
    """Minimize the largest constraint violation s (floored at -1).

    The auxiliary reals are boxed to a radius proportional to the initial
    violation so that directions along which every constraint keeps
    improving do not run away; the box is widened if it ends up binding.
    """
    n, p = prob.n, prob.p
    dom = np.flatnonzero(prob.log_weights > 0)
    m = len(prob.ineq_mats)
    violation = _max_violation(prob, x, y)
    radius = 10.0 * (1.0 + violation + np.max(np.abs(y), initial=0.0))
    for _ in range(4):
        rows, rhs = [], []
        for i in range(m):
            rows.append(np.append(prob.ineq_vecs[i], -1.0))
            rhs.append(prob.ineq_rhs[i])
        for j in dom:            # y_j + d_j > 0 wherever the objective takes its log
            r = np.zeros(p + 1)
            r[j], r[p] = -1.0, -1.0
            rows.append(r)
            rhs.append(prob.log_offsets[j])
        for j in range(p):       # |y_j - y0_j| <= radius
            for sign in (1.0, -1.0):
                r = np.zeros(p + 1)
                r[j] = sign
                rows.append(r)
                rhs.append(sign * y[j] + radius)
        floor = np.zeros(p + 1)
        floor[p] = -1.0
        rows.append(floor)
        rhs.append(1.0)
        n_extra = len(rows) - m
        logsum = None
        if prob.logsum is not None:
            ls = prob.logsum
            logsum = LogSumConstraint(ls.mats, ls.scales, ls.rhs, np.append(ls.vec, 1.0))
        aux = SdpProblem(n, p + 1, c_vec=np.append(np.zeros(p), 1.0),
                         ineq_mats=np.concatenate([prob.ineq_mats, np.zeros((n_extra, n, n))]),
                         ineq_vecs=np.array(rows), ineq_rhs=np.array(rhs), eq_mats=prob.eq_mats,
                         eq_vecs=np.hstack([prob.eq_vecs, np.zeros((len(prob.eq_mats), 1))]),
                         eq_rhs=prob.eq_rhs, logsum=logsum)
        ya = np.append(y, max(violation, 0.0) + 1.0)
        stop = lambda xx, yy: yy[-1] < -0.5  # noqa: E731
        xa, ya, t, iters, status, _ = _barrier(aux, x, ya, 1e-8, mu, 1.0, max_newton, stop)
        s_final = float(ya[-1])
        box_slack = radius - np.abs(ya[:p] - y)
        if s_final < 0 or p == 0 or np.min(box_slack) > 1e-3 * radius:
            break
        radius *= 100.0
    gap = aux.n_barrier_terms / t
    if s_final >= 0 or not _strictly_feasible(prob, xa, ya[:p]):
        raise InfeasibleError(
            f"no strictly feasible point: smallest achievable violation is {s_final:.3e}",
            certificate={"min_violation": s_final, "lower_bound": s_final - gap, "newton_iterations": iters})
    return xa, ya[:p], iters


def solve_sdp(prob: SdpProblem, tol: float = 1e-9, x0=None, y0=None, mu: float = 20.0,
              max_newton: int = 100) -> SdpSolution:
    """Solve ``prob`` to a duality-gap bound ``tol``.

    ``x0``/``y0`` are an optional starting point; when it is not strictly
    feasible a phase-one problem is solved first, which raises
    :class:`InfeasibleError` with a certificate when no interior exists.
    """
    n, p = prob.n, prob.p
    x = np.eye(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    y = np.zeros(p) if y0 is None else np.array(y0, dtype=float)
    x, y = _project_equalities(prob, x, y)
    try:
        np.linalg.cholesky(x)
    except np.linalg.LinAlgError:
        raise NumericalError("starting point is not positive definite after enforcing the equalities")
    phase_iters = 0
    if not _strictly_feasible(prob, x, y):
        x, y, phase_iters = _phase_one(prob, x, y, mu, max_newton)
    t0 = max(1.0, prob.n_barrier_terms / max(1.0, abs(_objective(prob, x, y))))
    x, y, t, iters, status, nu = _barrier(prob, x, y, tol, mu, t0, max_newton)
    gap = prob.n_barrier_terms / t
    eigs = np.linalg.eigvalsh(x)
    residuals = {
        "equality": float(np.max(np.abs(_eq_residual(prob, x, y)), initial=0.0)),
        "min_eigenvalue": float(eigs[0]),
        "max_ineq_violation": float(np.max(-_ineq_values(prob, x, y), initial=-np.inf)),
    }
    ineq_duals = 1.0 / (t * _ineq_values(prob, x, y)) if len(prob.ineq_mats) else np.zeros(0)
    logsum_dual = 0.0
    if prob.logsum is not None:
        val, _ = _logsum_value(prob, x, y)
        residuals["logsum_slack"] = val
        logsum_dual = 1.0 / (t * val)
    return SdpSolution(x, y, _objective(prob, x, y), status, gap, iters + phase_iters, residuals,
                       ineq_duals, nu if len(nu) else np.zeros(0), logsum_dual)


def max_eigenvalue_sdp(c: np.ndarray, tol: float = 1e-9) -> SdpSolution:
    """maximize tr(C X) s.t. tr X = 1, X >= 0; the optimum is lambda_max(C)."""
    c = np.asarray(c)
    n = c.shape[0]
    prob = SdpProblem(n, c_mat=-c, eq_mats=np.eye(n)[None], eq_rhs=[1.0])
    sol = solve_sdp(prob, tol=tol)
    sol.objective = -sol.objective
    return sol

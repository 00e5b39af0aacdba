"""Convex QPs with diagonal curvature: interior-point solve, KKT residuals, grid oracle.

Programs are in minimization form::

    minimize    0.5 * sum(curvature * z**2) + linear @ z + constant
    subject to  A_eq @ z == b_eq
                A_ineq @ z <= b_ineq
                lower <= z <= upper

Duals follow the Lagrangian ``obj + dual_eq @ (A_eq z - b_eq) + dual_ineq @ (A_ineq z - b_ineq)
- dual_lower @ (z - lower) + dual_upper @ (z - upper)`` with every inequality dual >= 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 200

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

_DIVERGED = 1e13
# an unconverged iterate this close is still worth an active-set polish
_POLISH_FROM = 1e-3
_STALL_ITERS = 25


class SolverError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


def _as_matrix(rows, ncols):
    if rows is None:
        return np.zeros((0, ncols))
    M = np.asarray(rows, dtype=float)
    if M.size == 0:
        return np.zeros((0, ncols))
    return M.reshape(-1, ncols)


@dataclass(eq=False)
class ConvexProgram:
    curvature: np.ndarray
    linear: np.ndarray
    constant: float = 0.0
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_ineq: np.ndarray | None = None
    b_ineq: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.curvature = np.asarray(self.curvature, dtype=float).reshape(-1)
        N = self.curvature.size
        self.linear = np.asarray(self.linear, dtype=float).reshape(-1)
        if self.linear.size != N:
            raise ValueError("linear term and curvature differ in length")
        if np.any(self.curvature < 0):
            raise ValueError("curvature must be entrywise >= 0 (convex minimization)")
        self.A_eq = _as_matrix(self.A_eq, N)
        self.b_eq = np.asarray([] if self.b_eq is None else self.b_eq, dtype=float).reshape(-1)
        self.A_ineq = _as_matrix(self.A_ineq, N)
        self.b_ineq = np.asarray([] if self.b_ineq is None else self.b_ineq, dtype=float).reshape(-1)
        if self.A_eq.shape[0] != self.b_eq.size or self.A_ineq.shape[0] != self.b_ineq.size:
            raise ValueError("constraint rows and right-hand sides differ in count")
        self.lower = np.full(N, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.full(N, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).reshape(-1)
        if self.lower.size != N or self.upper.size != N:
            raise ValueError("bound vectors must match the variable count")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @classmethod
    def from_rows(cls, curvature, linear, constant=0.0, eq=(), ineq=(), lower=None, upper=None):
        """Build from lists of ``(row, rhs)`` pairs."""
        N = len(curvature)
        A_eq = [r for r, _ in eq]
        A_in = [r for r, _ in ineq]
        return cls(curvature, linear, constant,
                   _as_matrix(A_eq, N), [b for _, b in eq],
                   _as_matrix(A_in, N), [b for _, b in ineq], lower, upper)

    @property
    def nvars(self) -> int:
        return self.curvature.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * np.sum(self.curvature * z * z) + self.linear @ z + self.constant)

    def scaled(self, c: float) -> "ConvexProgram":
        return ConvexProgram(c * self.curvature, c * self.linear, c * self.constant,
                             self.A_eq, self.b_eq, self.A_ineq, self.b_ineq, self.lower, self.upper)


@dataclass
class KKTResiduals:
    stationarity: float
    primal_eq: float
    primal_ineq: float
    complementarity: float
    min_dual: float

    @property
    def dual_infeasibility(self) -> float:
        return max(0.0, -self.min_dual)

    def worst(self) -> float:
        return max(self.stationarity, self.primal_eq, self.primal_ineq,
                   self.complementarity, self.dual_infeasibility)

    def ok(self, tol: float) -> bool:
        return self.worst() <= tol


@dataclass
class SolveReport:
    status: str
    primal: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    dual_lower: np.ndarray
    dual_upper: np.ndarray
    objective_value: float
    kkt: KKTResiduals
    iterations: int = 0
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


def _bound_duals_from_gradient(p: ConvexProgram, g):
    lo_f = np.isfinite(p.lower)
    up_f = np.isfinite(p.upper)
    w_lo = np.where(lo_f, np.maximum(g, 0.0), 0.0)
    w_up = np.where(up_f, np.maximum(-g, 0.0), 0.0)
    return w_lo, w_up


def kkt_residuals(p: ConvexProgram, primal, dual_eq, dual_ineq,
                  dual_lower=None, dual_upper=None) -> KKTResiduals:
    """Max-norm KKT residuals of a candidate primal-dual point.

    Bound multipliers left as ``None`` are fitted from the stationarity
    gradient (the best nonnegative choice), so callers that only track
    constraint-row duals still get a meaningful stationarity residual.
    """
    z = np.asarray(primal, dtype=float)
    nu = np.asarray(dual_eq, dtype=float).reshape(-1)
    w = np.asarray(dual_ineq, dtype=float).reshape(-1)
    if z.shape != (p.nvars,) or nu.size != p.A_eq.shape[0] or w.size != p.A_ineq.shape[0]:
        raise ValueError("dimension mismatch between program and primal/dual point")
    g = p.curvature * z + p.linear + p.A_eq.T @ nu + p.A_ineq.T @ w
    if dual_lower is None or dual_upper is None:
        fit_lo, fit_up = _bound_duals_from_gradient(p, g)
        w_lo = fit_lo if dual_lower is None else np.asarray(dual_lower, dtype=float)
        w_up = fit_up if dual_upper is None else np.asarray(dual_upper, dtype=float)
    else:
        w_lo = np.asarray(dual_lower, dtype=float)
        w_up = np.asarray(dual_upper, dtype=float)
    r = g - w_lo + w_up
    lo_f = np.isfinite(p.lower)
    up_f = np.isfinite(p.upper)

    def _mx(v):
        return float(np.max(v)) if np.size(v) else 0.0

    eq_res = _mx(np.abs(p.A_eq @ z - p.b_eq))
    ineq_slack = p.b_ineq - p.A_ineq @ z
    lo_slack = z[lo_f] - p.lower[lo_f]
    up_slack = p.upper[up_f] - z[up_f]
    viol = max(0.0, _mx(-ineq_slack), _mx(-lo_slack), _mx(-up_slack))
    comp = max(_mx(np.abs(w * ineq_slack)), _mx(np.abs(w_lo[lo_f] * lo_slack)),
               _mx(np.abs(w_up[up_f] * up_slack)))
    duals = np.concatenate([w, w_lo[lo_f], w_up[up_f]])
    min_dual = float(np.min(duals)) if duals.size else 0.0
    return KKTResiduals(_mx(np.abs(r)), eq_res, viol, comp, min_dual)


# ---------------------------------------------------------------------------
# interior-point core


def _independent_rows(A, b, tol=1e-10):
    """Indices of a maximal independent row subset, and whether dropped rows are consistent."""
    p = A.shape[0]
    if p == 0:
        return np.arange(0), True
    _, R, piv = scipy.linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(1.0, diag[0] if diag.size else 1.0)))
    keep = np.sort(piv[:rank])
    drop = np.setdiff1d(np.arange(p), keep)
    if drop.size == 0:
        return keep, True
    coef, *_ = np.linalg.lstsq(A[keep].T, A[drop].T, rcond=None)
    scale = 1.0 + np.max(np.abs(b))
    consistent = bool(np.all(np.abs(coef.T @ b[keep] - b[drop]) <= 1e-9 * scale))
    return keep, consistent


class _Stacked(NamedTuple):
    G: np.ndarray
    h: np.ndarray
    n_rows: int
    lo_idx: np.ndarray
    up_idx: np.ndarray


def _stack_bounds(p: ConvexProgram) -> _Stacked:
    N = p.nvars
    lo_idx = np.flatnonzero(np.isfinite(p.lower))
    up_idx = np.flatnonzero(np.isfinite(p.upper))
    I = np.eye(N)
    G = np.vstack([p.A_ineq, -I[lo_idx], I[up_idx]])
    h = np.concatenate([p.b_ineq, -p.lower[lo_idx], p.upper[up_idx]])
    return _Stacked(G, h, p.A_ineq.shape[0], lo_idx, up_idx)


def _kkt_solve(K, A, r1, r2):
    N = K.shape[0]
    pe = A.shape[0]
    # symmetric diagonal scaling keeps the solve usable when w/s spans 1e+-15
    d = 1.0 / np.sqrt(np.maximum(np.abs(np.diag(K)), 1e-8))
    M = np.zeros((N + pe, N + pe))
    M[:N, :N] = K * d[:, None] * d[None, :]
    M[:N, N:] = (A * d[None, :]).T
    M[N:, :N] = A * d[None, :]
    rhs = np.concatenate([r1 * d, r2])
    try:
        lu = scipy.linalg.lu_factor(M, check_finite=False)
        sol = scipy.linalg.lu_solve(lu, rhs, check_finite=False)
        # two rounds of iterative refinement against the scaled system
        for _ in range(2):
            sol = sol + scipy.linalg.lu_solve(lu, rhs - M @ sol, check_finite=False)
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except (np.linalg.LinAlgError, ValueError):
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return sol[:N] * d, sol[N:]


def _step_to_boundary(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _ipm(H, c, A, b, G, h, tol, max_iter, z0=None, rng=None):
    """Mehrotra predictor-corrector on min 0.5 z'Hz + c'z, Az=b, Gz<=h (H diagonal vector)."""
    N = c.size
    q = h.size
    z = np.zeros(N) if z0 is None else np.array(z0, dtype=float)
    if rng is not None:
        z = z + rng.normal(scale=1.0, size=N)
    if A.shape[0]:
        # nearest point satisfying the equalities
        z = z - np.linalg.lstsq(A, A @ z - b, rcond=None)[0]
    s = np.maximum(h - G @ z, 1.0)
    w = np.ones(q) if rng is None else rng.uniform(0.5, 2.0, size=q)
    nu = np.zeros(A.shape[0])
    status = MAX_ITER
    it = 0
    best = (np.inf, z, nu, w, s)
    best_it = 0
    for it in range(1, max_iter + 1):
        r_d = H * z + c + A.T @ nu + G.T @ w
        r_p = A @ z - b
        r_g = G @ z + s - h
        mu = float(s @ w / q) if q else 0.0
        comp = float(np.max(np.abs(s * w))) if q else 0.0
        worst = max(np.max(np.abs(r_d)) if N else 0.0,
                    np.max(np.abs(r_p)) if r_p.size else 0.0,
                    np.max(np.abs(r_g)) if q else 0.0, comp)
        if worst < best[0]:
            best = (worst, z.copy(), nu.copy(), w.copy(), s.copy())
            best_it = it
        elif it - best_it > _STALL_ITERS:
            break
        if worst <= 0.5 * tol:
            status = OPTIMAL
            break
        if worst > 1e6 * best[0] and best[0] <= tol:
            # numerical breakdown after reaching tolerance: fall back to the best iterate
            break
        if np.max(np.abs(z)) > _DIVERGED or (q and np.max(w) > _DIVERGED):
            status = "diverged"
            break
        ratio = w / s
        K = np.diag(H) + (G.T * ratio) @ G
        # fixed tiny shift for variables touched only by equalities
        K[np.diag_indices(N)] += 1e-14

        def direction(r_c):
            rhs1 = -r_d - G.T @ ((-r_c + w * r_g) / s)
            dz, dnu = _kkt_solve(K, A, rhs1, -r_p)
            ds = -r_g - G @ dz
            dw = (-r_c - w * ds) / s
            return dz, dnu, dw, ds

        if q == 0:
            dz, dnu, _, _ = direction(np.zeros(0))
            z, nu = z + dz, nu + dnu
            continue
        dz_a, dnu_a, dw_a, ds_a = direction(s * w)
        a_aff = min(_step_to_boundary(s, ds_a), _step_to_boundary(w, dw_a))
        mu_aff = float((s + a_aff * ds_a) @ (w + a_aff * dw_a) / q)
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        dz, dnu, dw, ds = direction(s * w + ds_a * dw_a - sigma * mu)
        alpha = min(1.0, 0.995 * min(_step_to_boundary(s, ds), _step_to_boundary(w, dw)))
        z = z + alpha * dz
        nu = nu + alpha * dnu
        w = w + alpha * dw
        s = s + alpha * ds
        s = np.maximum(s, 1e-300)
        w = np.maximum(w, 1e-300)
    if status != OPTIMAL:
        # hand back the best iterate; it still seeds the active-set polish
        if best[0] <= tol:
            status = OPTIMAL
        _, z, nu, w, s = best
    return status, z, nu, w, s, it


def _active_set_guesses(w, s, h):
    # at degenerate optima s and w shrink together, so also try slack thresholds
    guesses = [np.flatnonzero(w > s)]
    for thr in (1e-6, 1e-4):
        guesses.append(np.flatnonzero(s <= thr * (1.0 + np.abs(h))))
    out = []
    for g in guesses:
        if not any(np.array_equal(g, o) for o in out):
            out.append(g)
    return out


def _polish(H, c, A, b, G, h, act, z0):
    """Re-solve the KKT system with the inequalities ``act`` held at equality.

    The solve is a least-norm correction from ``z0`` so non-unique parts of
    the primal (e.g. circulating flow) stay near the interior iterate.
    Inequalities violated by the result join the active set and the solve is
    repeated. Returns ``(z, nu, w)`` or ``None`` when no sign-consistent
    feasible point is found.
    """
    N = c.size
    act = np.asarray(act, dtype=int)
    for _ in range(G.shape[0] + 1):
        Aa = np.vstack([A, G[act]])
        ba = np.concatenate([b, h[act]])
        pe = Aa.shape[0]
        M = np.zeros((N + pe, N + pe))
        M[:N, :N] = np.diag(H)
        M[:N, N:] = Aa.T
        M[N:, :N] = Aa
        rhs = np.concatenate([-c, ba])
        base = np.concatenate([z0, np.zeros(pe)])
        sol = base + np.linalg.lstsq(M, rhs - M @ base, rcond=None)[0]
        if not np.all(np.isfinite(sol)):
            return None
        z_p = sol[:N]
        viol = np.flatnonzero(G @ z_p - h > 1e-12 * (1.0 + np.abs(h)))
        viol = np.setdiff1d(viol, act)
        if viol.size == 0:
            break
        act = np.union1d(act, viol)
    else:
        return None
    lam = sol[N:]
    nu = lam[:A.shape[0]]
    w_p = np.zeros(G.shape[0])
    w_p[act] = lam[A.shape[0]:]
    # degenerate optima carry exactly-zero multipliers; allow round-off
    if np.any(w_p < -1e-12 * (1.0 + np.max(np.abs(w_p), initial=0.0))):
        return None
    return z_p, nu, np.maximum(w_p, 0.0)


def _phase_one_gap(p: ConvexProgram, st: _Stacked, A, b, tol) -> float:
    """Smallest uniform constraint violation t >= 0 achievable; > 0 means infeasible."""
    N = p.nvars
    big = 1e6 * (1.0 + max(np.max(np.abs(st.h), initial=0.0), np.max(np.abs(b), initial=0.0)))
    ones_e = np.ones((A.shape[0], 1))
    ones_g = np.ones((st.G.shape[0], 1))
    G1 = np.vstack([
        np.hstack([A, -ones_e]),
        np.hstack([-A, -ones_e]),
        np.hstack([st.G, -ones_g]),
        np.hstack([np.eye(N), np.zeros((N, 1))]),
        np.hstack([-np.eye(N), np.zeros((N, 1))]),
        np.hstack([np.zeros((1, N)), -np.ones((1, 1))]),
    ])
    h1 = np.concatenate([b, -b, st.h, np.full(2 * N, big), [0.0]])
    c1 = np.zeros(N + 1)
    c1[-1] = 1.0
    status, z, *_ = _ipm(np.zeros(N + 1), c1, np.zeros((0, N + 1)), np.zeros(0), G1, h1,
                         tol, 4 * DEFAULT_MAX_ITER)
    return float(z[-1])


def _recession_value(p: ConvexProgram, st: _Stacked, A, tol) -> float:
    """min c'd over bounded recession directions with zero curvature; < 0 means unbounded."""
    N = p.nvars
    flat = p.curvature <= 0
    Aeq = np.vstack([A, np.eye(N)[~flat]])
    G1 = np.vstack([st.G, np.eye(N), -np.eye(N)])
    h1 = np.concatenate([np.zeros(st.G.shape[0]), np.ones(2 * N)])
    keep, _ = _independent_rows(Aeq, np.zeros(Aeq.shape[0]))
    status, d, *_ = _ipm(np.zeros(N), p.linear, Aeq[keep], np.zeros(keep.size), G1, h1,
                         tol, 4 * DEFAULT_MAX_ITER)
    return float(p.linear @ d)


def solve(p: ConvexProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
          start=None, seed=None, polish: bool = True) -> SolveReport:
    """Primal-dual interior-point solve with dual recovery.

    ``start``/``seed`` pick the initial iterate (``seed`` adds a random
    perturbation), which is how independent restarts are produced. With
    ``polish`` the converged iterate is refined by an exact solve on its
    active set, kept only if it does not worsen the KKT residuals; this
    recovers full accuracy at degenerate optima where the IPM alone stalls
    near ``sqrt(tol)``.
    """
    N = p.nvars
    st = _stack_bounds(p)
    keep, consistent = _independent_rows(p.A_eq, p.b_eq)
    A, b = p.A_eq[keep], p.b_eq[keep]
    rng = None if seed is None else np.random.default_rng(seed)

    def _report(status, z, nu_full, w_all, it, msg=""):
        q0 = st.n_rows
        w_in = w_all[:q0]
        w_lo = np.zeros(N)
        w_up = np.zeros(N)
        w_lo[st.lo_idx] = w_all[q0:q0 + st.lo_idx.size]
        w_up[st.up_idx] = w_all[q0 + st.lo_idx.size:]
        kkt = kkt_residuals(p, z, nu_full, w_in, w_lo, w_up)
        return SolveReport(status, z, nu_full, w_in, w_lo, w_up, p.objective(z), kkt, it, msg)

    empty = np.zeros(st.h.size)
    if not consistent:
        return _report(INFEASIBLE, np.zeros(N), np.zeros(p.A_eq.shape[0]), empty, 0,
                       "inconsistent equality constraints")

    status, z, nu, w, s, it = _ipm(p.curvature, p.linear, A, b, st.G, st.h, tol, max_iter,
                                   z0=start, rng=rng)
    nu_full = np.zeros(p.A_eq.shape[0])
    nu_full[keep] = nu
    rep = _report(status, z, nu_full, w, it)
    if polish and (status == OPTIMAL or rep.kkt.worst() <= _POLISH_FROM):
        for act in _active_set_guesses(w, s, st.h):
            pol = _polish(p.curvature, p.linear, A, b, st.G, st.h, act, z)
            if pol is None:
                continue
            nu_p = np.zeros(p.A_eq.shape[0])
            nu_p[keep] = pol[1]
            rep_p = _report(OPTIMAL, pol[0], nu_p, pol[2], it)
            if rep_p.kkt.worst() <= rep.kkt.worst():
                rep = rep_p
    if rep.kkt.ok(tol):
        rep.status = OPTIMAL
        return rep
    # classify the failure with two auxiliary LPs
    gap = _phase_one_gap(p, st, A, b, tol)
    if gap > max(1e3 * tol, 1e-7):
        return _report(INFEASIBLE, z, nu_full, w, it, f"phase-one violation {gap:.3g}")
    if _recession_value(p, st, A, tol) < -1e-7:
        return _report(UNBOUNDED, z, nu_full, w, it, "descent recession direction found")
    return _report(MAX_ITER, z, nu_full, w, it, "no convergence within the iteration limit")


def solve_or_raise(p: ConvexProgram, tol: float = DEFAULT_TOL, **kw) -> SolveReport:
    rep = solve(p, tol=tol, **kw)
    if rep.status != OPTIMAL:
        raise SolverError(f"solver status {rep.status}: {rep.message}", rep)
    return rep


def lagrangian_dual_value(p: ConvexProgram, rep: SolveReport) -> float:
    """Dual function value at the reported multipliers (min over the box-free Lagrangian).

    Bound constraints are dualized as well, so the inner minimization is over all
    of R^N and separable. Returns -inf when the multipliers leave a linear
    direction unbounded below.
    """
    c_eff = (p.linear + p.A_eq.T @ rep.dual_eq + p.A_ineq.T @ rep.dual_ineq
             - rep.dual_lower + rep.dual_upper)
    const = (p.constant - rep.dual_eq @ p.b_eq - rep.dual_ineq @ p.b_ineq
             + np.sum(rep.dual_lower[np.isfinite(p.lower)] * p.lower[np.isfinite(p.lower)])
             - np.sum(rep.dual_upper[np.isfinite(p.upper)] * p.upper[np.isfinite(p.upper)]))
    val = const
    for d, cj in zip(p.curvature, c_eff):
        if d > 0:
            val -= 0.5 * cj * cj / d
        elif abs(cj) > 1e-7:
            return -np.inf
    return float(val)


# ---------------------------------------------------------------------------
# max-slack LP


class MaxSlack(NamedTuple):
    t: float
    y: np.ndarray
    feasible: bool


def max_slack_lp(A_eq, b_eq, upper, tol: float = DEFAULT_TOL) -> MaxSlack:
    """Maximize t subject to ``A_eq y = b_eq`` and ``t <= y_k <= upper_k - t``.

    ``t > 0`` certifies strictly interior flows; ``t < 0`` means no flow with
    ``0 <= y <= upper`` exists (``feasible`` is then False). Raises
    :class:`SolverError` when ``b_eq`` is outside the range of ``A_eq``.
    """
    A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.asarray(b_eq, dtype=float).reshape(-1)
    upper = np.asarray(upper, dtype=float).reshape(-1)
    m = upper.size
    if np.any(upper <= 0):
        raise ValueError("upper bounds must be positive")
    big = float(np.sum(np.abs(b_eq)) + np.max(upper) + 1.0)
    I = np.eye(m)
    one = np.ones((m, 1))
    prog = ConvexProgram(
        curvature=np.zeros(m + 1),
        linear=np.r_[np.zeros(m), -1.0],
        A_eq=np.hstack([A_eq, np.zeros((A_eq.shape[0], 1))]),
        b_eq=b_eq,
        A_ineq=np.vstack([np.hstack([-I, one]), np.hstack([I, one])]),
        b_ineq=np.r_[np.zeros(m), upper],
        lower=np.r_[np.full(m, -np.inf), -big],
    )
    rep = solve(prog, tol=tol)
    if rep.status != OPTIMAL:
        raise SolverError(f"max-slack LP {rep.status}: {rep.message}", rep)
    t = float(rep.primal[-1])
    return MaxSlack(t, rep.primal[:m], t >= -max(tol, 1e-9))


# ---------------------------------------------------------------------------
# grid oracle


@dataclass
class BruteForceResult:
    primal: np.ndarray
    objective_value: float
    evaluations: int
    exhaustive: bool
    free_vars: np.ndarray = field(repr=False, default=None)


class EmptyGridError(ValueError):
    pass


def _eliminate_equalities(p: ConvexProgram, tol=1e-10):
    """Split variables into free (gridded) and dependent ones: z_dep = base - M z_free."""
    N = p.nvars
    A = p.A_eq.copy()
    b = p.b_eq.copy()
    boxed = np.isfinite(p.lower) & np.isfinite(p.upper)
    order = list(np.flatnonzero(~boxed)) + list(np.flatnonzero(boxed))
    pivots = []
    row = 0
    for col in order:
        if row >= A.shape[0]:
            break
        r = row + int(np.argmax(np.abs(A[row:, col])))
        if abs(A[r, col]) <= tol:
            continue
        A[[row, r]] = A[[r, row]]
        b[[row, r]] = b[[r, row]]
        piv = A[row, col]
        A[row] /= piv
        b[row] /= piv
        for i in range(A.shape[0]):
            if i != row and A[i, col] != 0.0:
                f = A[i, col]
                A[i] -= f * A[row]
                b[i] -= f * b[row]
        pivots.append(col)
        row += 1
    if np.any(np.abs(b[row:]) > 1e-9 * (1.0 + np.max(np.abs(p.b_eq), initial=0.0))):
        raise EmptyGridError("equality constraints are inconsistent")
    dep = np.array(pivots, dtype=int)
    free = np.array([j for j in range(N) if j not in set(pivots)], dtype=int)
    M = A[:row][:, free]
    base = b[:row]
    return free, dep, M, base


def brute_force_qp(p: ConvexProgram, grid_step: float = 0.01, max_free: int = 6,
                   exhaustive_budget: int = 2_000_000, feas_tol: float = 1e-9) -> BruteForceResult:
    """Derivative-free grid search for the optimum of a small boxed program.

    Equalities are eliminated by pivoting on unboxed variables first; the
    remaining free variables (at most ``max_free``) must carry finite bounds.
    The grid is the lattice ``lower + k * grid_step`` plus each upper bound.
    When that lattice fits ``exhaustive_budget`` it is searched exhaustively;
    otherwise a coarse exhaustive pass is refined by full-neighbourhood pattern
    search down to ``grid_step``, which is sound for convex programs.
    """
    free, dep, M, base = _eliminate_equalities(p)
    d = free.size
    if d > max_free:
        raise ValueError(f"{d} free variables exceed the oracle limit of {max_free}")
    lo = p.lower[free]
    hi = p.upper[free]
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ValueError("every free variable needs a finite box")
    N = p.nvars
    G = p.A_ineq
    h = p.b_ineq
    scale = 1.0 + max(np.max(np.abs(h), initial=0.0), np.max(np.abs(base), initial=0.0))
    ftol = feas_tol * scale
    n_eval = 0

    def evaluate(Zf):
        nonlocal n_eval
        n_eval += Zf.shape[0]
        Z = np.zeros((Zf.shape[0], N))
        Z[:, free] = Zf
        if dep.size:
            Z[:, dep] = base - Zf @ M.T
        ok = np.ones(Z.shape[0], dtype=bool)
        if G.shape[0]:
            ok &= np.all(Z @ G.T <= h + ftol, axis=1)
        ok &= np.all(Z >= p.lower - ftol, axis=1) & np.all(Z <= p.upper + ftol, axis=1)
        obj = 0.5 * (Z * Z) @ p.curvature + Z @ p.linear + p.constant
        obj = np.where(ok, obj, np.inf)
        return Z, obj

    def axis_values(j, step, centre=None, radius=None):
        a, b_ = lo[j], hi[j]
        if centre is None:
            k_lo, k_hi = 0, int(np.floor((b_ - a) / step + 1e-9))
        else:
            kc = int(round((centre - a) / step))
            k_lo = max(0, kc - radius)
            k_hi = min(int(np.floor((b_ - a) / step + 1e-9)), kc + radius)
        vals = a + step * np.arange(k_lo, k_hi + 1)
        if centre is None or b_ <= (centre + (radius + 0.5) * step):
            if vals.size == 0 or b_ - vals[-1] > 1e-12 * (1 + abs(b_)):
                vals = np.append(vals, b_)
        return vals

    def search(axes, chunk=200_000):
        best_z, best_f = None, np.inf
        sizes = [len(v) for v in axes]
        total = int(np.prod(sizes)) if sizes else 1
        if d == 0:
            Z, obj = evaluate(np.zeros((1, 0)))
            return (Z[0], obj[0]) if np.isfinite(obj[0]) else (None, np.inf)
        mesh_iter = itertools.product(*axes)
        done = 0
        while done < total:
            block = np.array(list(itertools.islice(mesh_iter, chunk)), dtype=float)
            done += block.shape[0]
            Z, obj = evaluate(block)
            k = int(np.argmin(obj))
            if obj[k] < best_f:
                best_f, best_z = float(obj[k]), Z[k].copy()
        return best_z, best_f

    full_counts = [len(axis_values(j, grid_step)) for j in range(d)]
    if int(np.prod(full_counts, dtype=float)) <= exhaustive_budget:
        z, f = search([axis_values(j, grid_step) for j in range(d)])
        if z is None:
            raise EmptyGridError("no feasible grid point")
        return BruteForceResult(z, f, n_eval, True, free)

    # coarse exhaustive pass on a power-of-two multiple of the grid step
    per_axis = max(3, int(exhaustive_budget ** (1.0 / d)) // 4)
    step = grid_step
    while max(np.ceil((hi - lo) / step)) + 1 > per_axis:
        step *= 2
    z, f = None, np.inf
    while z is None:
        z, f = search([axis_values(j, step) for j in range(d)])
        if z is None:
            if step <= grid_step:
                raise EmptyGridError("no feasible grid point")
            step /= 2
    radius = 2
    while True:
        for _ in range(10_000):
            zf = z[free]
            cand, fc = search([axis_values(j, step, zf[j], radius) for j in range(d)])
            if cand is not None and fc < f - 1e-15 * (1 + abs(f)):
                z, f = cand, fc
            else:
                break
        if step <= grid_step * (1 + 1e-12):
            break
        step /= 2
    return BruteForceResult(z, f, n_eval, False, free)

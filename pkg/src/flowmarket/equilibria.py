"""Social-welfare and competitive equilibria of markets over flow networks.

The planner problem is assembled in minimization form over ``z = [x, e, y]``::

    min  -sum_i f_i(x_i)
    s.t. sum_i e_i = 0              (beta)
         e_i - (A y)_i = 0          (q_i)
         x_i + e_i <= a_i           (lambda_i >= 0)
         0 <= y_k <= u_k            (xi_k >= 0 on the upper bound)
         x_i >= 0

so stationarity in ``e`` reads ``beta + q_i + lambda_i = 0``. The balance row
is implied by the flow rows, which leaves (beta, q) determined only up to a
common shift; every returned solution is normalized to ``mean(q) = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .agents import (MarketInstance, QuadraticUtility, UnboundedPayoffError,
                     agent_optimal_payoff, concavity_check)
from .flownet import FlowNetwork, all_capacity_bounds, is_canonical_star, net_flow
from .qpcore import (DEFAULT_TOL, ConvexProgram, SolveReport, SolverError,
                     max_slack_lp, solve)

INTERIOR_SLACK = 1e-7


class NotConcaveError(ValueError):
    pass


class ConstructionError(ValueError):
    pass


@dataclass
class EquilibriumSolution:
    x: np.ndarray
    e: np.ndarray
    y: np.ndarray
    beta: float
    q: np.ndarray
    xi: np.ndarray
    lam: np.ndarray
    report: SolveReport | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "e": [float(v) for v in self.e],
            "y": [float(v) for v in self.y],
            "beta": float(self.beta),
            "q": [float(v) for v in self.q],
            "xi": [float(v) for v in self.xi],
            "lambda": [float(v) for v in self.lam],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EquilibriumSolution":
        arr = lambda k: np.asarray(d[k], dtype=float)  # noqa: E731
        return cls(arr("x"), arr("e"), arr("y"), float(d["beta"]), arr("q"), arr("xi"),
                   arr("lambda"))


@dataclass
class ConditionResult:
    passed: bool
    residual: float
    detail: str = ""


@dataclass
class CEVerificationReport:
    conditions: dict[str, ConditionResult]
    tol: float
    # |xi_k - (A^T q)_k| over all arcs, i.e. condition (vi) read as a plain equality
    literal_stationarity: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failed(self) -> list[str]:
        return [k for k, c in self.conditions.items() if not c.passed]

    def summary(self) -> str:
        rows = [f"({k:>3}) {'pass' if c.passed else 'FAIL'}  residual={c.residual:.3e}  {c.detail}"
                for k, c in self.conditions.items()]
        return "\n".join(rows)


class StandardEquilibrium(NamedTuple):
    x: np.ndarray
    e: np.ndarray
    lambda0: float


class InteriorCheck(NamedTuple):
    is_interior: bool
    y: np.ndarray | None
    t: float


class PriceCheck(NamedTuple):
    max_spread: float
    all_equal: bool
    all_positive: bool


# ---------------------------------------------------------------------------
# assembly


def _check_concave(inst: MarketInstance):
    grid = np.linspace(0.0, max(10.0, 2.0 * inst.capacity), 64)
    for i, ag in enumerate(inst.agents):
        if isinstance(ag.utility, QuadraticUtility):
            continue
        if not concavity_check(ag.utility, grid):
            raise NotConcaveError(f"utility of agent {i} fails the concavity check")


def _swe_program(inst: MarketInstance, curvature, linear, capacities=True) -> ConvexProgram:
    n, m = inst.n, inst.network.m
    A = inst.network.incidence.A
    N = 2 * n + m
    A_eq = np.zeros((1 + n, N))
    A_eq[0, n:2 * n] = 1.0
    A_eq[1:, n:2 * n] = np.eye(n)
    A_eq[1:, 2 * n:] = -A
    A_in = np.hstack([np.eye(n), np.eye(n), np.zeros((n, m))])
    lower = np.r_[np.zeros(n), np.full(n, -np.inf), np.zeros(m)]
    upper = np.r_[np.full(2 * n, np.inf), inst.network.u if capacities else np.full(m, np.inf)]
    return ConvexProgram(np.r_[curvature, np.zeros(n + m)], np.r_[linear, np.zeros(n + m)],
                         0.0, A_eq, np.zeros(1 + n), A_in, inst.a, lower, upper)


def swe_program(inst: MarketInstance, boxed: bool = False) -> ConvexProgram:
    """The quadratic planner program for an all-quadratic instance.

    ``boxed`` adds the implied bound ``x_i <= a_i + (in-capacity of i)`` so that
    grid oracles get a finite search box.
    """
    if not inst.is_lq:
        raise TypeError("planner program is quadratic only for quadratic utilities")
    p = _swe_program(inst, inst.theta1, -inst.theta2)
    if boxed:
        lo, _ = all_capacity_bounds(inst.network)
        p.upper[:inst.n] = inst.a - lo
    return p


def _unpack_swe(inst: MarketInstance, rep: SolveReport) -> EquilibriumSolution:
    n = inst.n
    z = rep.primal
    x = np.maximum(z[:n], 0.0)
    e = z[n:2 * n].copy()
    y = z[2 * n:].copy()
    beta = float(rep.dual_eq[0])
    q = rep.dual_eq[1:].copy()
    shift = float(q.mean())
    q -= shift
    beta += shift
    xi = rep.dual_upper[2 * n:].copy()
    lam = rep.dual_ineq.copy()
    return EquilibriumSolution(x, e, y, beta, q, xi, lam, rep)


def _lq_terms(inst: MarketInstance):
    return inst.theta1, -inst.theta2


def solve_swe(inst: MarketInstance, tol: float = DEFAULT_TOL, seed=None,
              capacities: bool = True) -> EquilibriumSolution:
    """Solve the planner problem and map its multipliers to market prices.

    ``seed`` perturbs the interior-point starting point (independent restarts).
    ``capacities=False`` drops the arc capacity bounds.
    """
    _check_concave(inst)
    if inst.is_lq:
        curv, lin = _lq_terms(inst)
        rep = solve(_swe_program(inst, curv, lin, capacities), tol=tol, seed=seed)
        if not rep.optimal:
            raise SolverError(f"social welfare problem: {rep.status} ({rep.message})", rep)
        return _unpack_swe(inst, rep)
    return _solve_swe_sqp(inst, tol, seed, capacities)


def _second_derivative(f, x):
    h = 1e-5 * (1.0 + abs(x))
    if x >= h:
        return (f.derivative(x + h) - f.derivative(x - h)) / (2 * h)
    return (f.derivative(x + h) - f.derivative(x)) / h


def _solve_swe_sqp(inst, tol, seed, capacities, max_outer=100):
    """Sequential quadratic models for non-quadratic concave utilities."""
    n = inst.n
    fs = [ag.utility for ag in inst.agents]
    xbar = np.maximum(inst.a, 1e-3)
    z = None
    total = lambda x: sum(f.evaluate(max(v, 0.0)) for f, v in zip(fs, x))  # noqa: E731
    for _ in range(max_outer):
        g = np.array([f.derivative(v) for f, v in zip(fs, xbar)])
        c = np.array([max(-_second_derivative(f, v), 1e-8) for f, v in zip(fs, xbar)])
        prog = _swe_program(inst, c, -g - c * xbar, capacities)
        rep = solve(prog, tol=tol, seed=seed)
        if not rep.optimal:
            raise SolverError(f"quadratic model subproblem: {rep.status}", rep)
        z_new = rep.primal
        if z is None:
            z = z_new
        else:
            # backtrack on the true welfare along the (feasible) segment
            alpha = 1.0
            base = total(z[:n])
            while alpha > 1e-6 and total(z[:n] + alpha * (z_new[:n] - z[:n])) < base - 1e-14:
                alpha *= 0.5
            z = z + alpha * (z_new - z)
        x_qp = z_new[:n]
        true_grad = np.array([f.derivative(max(v, 0.0)) for f, v in zip(fs, x_qp)])
        model_grad = g - c * (x_qp - xbar)
        xbar = np.maximum(z[:n], 0.0)
        if np.max(np.abs(true_grad - model_grad)) <= 0.1 * tol and np.allclose(z, z_new, atol=tol):
            return _unpack_swe(inst, rep)
    raise SolverError("sequential quadratic iterations did not converge")


# ---------------------------------------------------------------------------
# verification


def verify_ce(inst: MarketInstance, sol: EquilibriumSolution, tol: float = 1e-6) -> CEVerificationReport:
    """Check the six competitive-equilibrium conditions; failures are reported, not raised.

    Condition (vi) is checked as optimality of ``y`` in
    ``min_{y >= 0} sum_k (xi_k - (A^T q)_k) y_k``: every reduced cost is
    nonnegative and vanishes wherever ``y_k > 0``. The plain equality reading is
    returned separately as ``literal_stationarity``.
    """
    n, m = inst.n, inst.network.m
    A = inst.network.incidence.A
    u = inst.network.u
    x, e, y, q, xi, lam = (np.asarray(v, dtype=float) for v in
                           (sol.x, sol.e, sol.y, sol.q, sol.xi, sol.lam))
    if x.shape != (n,) or e.shape != (n,) or q.shape != (n,) or lam.shape != (n,) \
            or y.shape != (m,) or xi.shape != (m,):
        raise ValueError("solution dimensions do not match the instance")
    conds: dict[str, ConditionResult] = {}

    # (i) each agent's pair maximizes its payoff at the posted price
    worst, detail = 0.0, ""
    for i, ag in enumerate(inst.agents):
        feas = max(0.0, e[i] - (ag.a - x[i]), -x[i])
        if lam[i] < -tol:
            worst, detail = np.inf, f"agent {i + 1}: negative price {lam[i]:.3g}"
            break
        li = max(lam[i], 0.0)
        try:
            best = agent_optimal_payoff(ag.utility, ag.a, li, x_hint=max(x[i], 1.0))
        except UnboundedPayoffError as exc:
            worst, detail = np.inf, str(exc)
            break
        got = float(ag.utility.evaluate(max(x[i], 0.0)) + li * e[i])
        r = max(feas, best - got)
        if r > worst:
            worst, detail = r, f"agent {i + 1}"
    conds["i"] = ConditionResult(worst <= tol, float(worst), detail)

    r2 = float(np.max(np.abs(lam + sol.beta + q)))
    conds["ii"] = ConditionResult(r2 <= tol, r2)

    r3 = float(abs(e.sum()))
    conds["iii"] = ConditionResult(r3 <= tol, r3)

    r4 = max(float(np.max(np.abs(e - A @ y))), float(np.max(np.maximum(-y, 0.0), initial=0.0)),
             float(np.max(np.maximum(y - u, 0.0), initial=0.0)))
    conds["iv"] = ConditionResult(r4 <= tol, r4)

    r5 = max(float(np.max(np.abs(xi * (y - u)), initial=0.0)),
             float(np.max(np.maximum(-xi, 0.0), initial=0.0)))
    conds["v"] = ConditionResult(r5 <= tol, r5)

    reduced = xi - A.T @ q
    r6 = max(float(np.max(np.maximum(-reduced, 0.0), initial=0.0)),
             float(np.max(np.abs(reduced * y), initial=0.0)))
    conds["vi"] = ConditionResult(r6 <= tol, r6)

    literal = float(np.max(np.abs(reduced), initial=0.0))
    return CEVerificationReport(conds, tol, literal)


# ---------------------------------------------------------------------------
# standard (network-free) equilibria


def solve_standard_swe(inst: MarketInstance, tol: float = DEFAULT_TOL, seed=None) -> StandardEquilibrium:
    """Planner problem without flow constraints: only sum(e) = 0 and x + e <= a."""
    _check_concave(inst)
    if not inst.is_lq:
        sol = solve_swe(inst, tol=tol, seed=seed, capacities=False)
        return StandardEquilibrium(sol.x, sol.e, float(np.mean(sol.lam)))
    n = inst.n
    prog = ConvexProgram(
        np.r_[inst.theta1, np.zeros(n)], np.r_[-inst.theta2, np.zeros(n)], 0.0,
        np.r_[np.zeros(n), np.ones(n)][None, :], [0.0],
        np.hstack([np.eye(n), np.eye(n)]), inst.a,
        np.r_[np.zeros(n), np.full(n, -np.inf)], None)
    rep = solve(prog, tol=tol, seed=seed)
    if not rep.optimal:
        raise SolverError(f"standard social welfare problem: {rep.status}", rep)
    x = np.maximum(rep.primal[:n], 0.0)
    e = rep.primal[n:]
    return StandardEquilibrium(x, e, float(-rep.dual_eq[0]))


def standard_ce_closed_form(inst: MarketInstance) -> StandardEquilibrium:
    """Closed-form standard equilibrium for quadratic utilities.

    ``lambda0 = (sum theta2/theta1 - C) / sum 1/theta1``. The formula assumes
    every agent consumes a positive amount; only then does ``sum(e) = 0`` hold.
    """
    if not inst.is_lq:
        raise TypeError("closed form needs quadratic utilities")
    t1, t2, a = inst.theta1, inst.theta2, inst.a
    if np.any(t1 <= 0):
        raise ValueError("every theta1 must be positive")
    lam0 = float((np.sum(t2 / t1) - a.sum()) / np.sum(1.0 / t1))
    ratio = (t2 - lam0) / t1
    x = np.maximum(0.0, ratio)
    e = np.minimum(a - ratio, a)
    return StandardEquilibrium(x, e, lam0)


def solve_degenerate_swe(inst: MarketInstance, tol: float = DEFAULT_TOL, seed=None):
    """Planner problem with the budget binding and no capacities: sum x = C, x >= 0.

    Returns ``(x, e)`` with ``e = a - x``.
    """
    _check_concave(inst)
    if not inst.is_lq:
        sol = solve_swe(inst, tol=tol, seed=seed, capacities=False)
        return sol.x, inst.a - sol.x
    n = inst.n
    prog = ConvexProgram(inst.theta1, -inst.theta2, 0.0, np.ones((1, n)), [inst.capacity],
                         lower=np.zeros(n))
    rep = solve(prog, tol=tol, seed=seed)
    if not rep.optimal:
        raise SolverError(f"degenerate problem: {rep.status}", rep)
    x = np.maximum(rep.primal, 0.0)
    return x, inst.a - x


# ---------------------------------------------------------------------------
# interior implementation


def interior_check(net: FlowNetwork, e, tol: float = INTERIOR_SLACK) -> InteriorCheck:
    """Can ``e`` be realized by flows strictly inside (0, u)?  Uses the max-slack LP."""
    e = np.asarray(e, dtype=float)
    if e.shape != (net.n,):
        raise ValueError("trade vector length differs from node count")
    if abs(e.sum()) > max(tol, 1e-9) * (1.0 + np.abs(e).sum()):
        raise ValueError(f"trades are unbalanced: sum = {e.sum():.3g}")
    # project away rounding so the equality system is consistent
    e = e - e.mean()
    res = max_slack_lp(net.incidence.A, e, net.u)
    ok = res.t > tol
    return InteriorCheck(bool(ok), res.y if ok else None, res.t)


def star_flow_construct(net: FlowNetwork, e) -> np.ndarray:
    """Explicit interior flows on a canonical star.

    Each antiparallel pair (center->leaf k, leaf k->center) carries the net
    difference ``-e_leaf`` and is centred so both arcs keep the largest
    common slack to 0 and to their capacities.
    """
    if not is_canonical_star(net):
        raise ConstructionError("network is not a canonical star")
    e = np.asarray(e, dtype=float)
    n = net.n
    if e.shape != (n,):
        raise ConstructionError("trade vector length differs from node count")
    lo, hi = all_capacity_bounds(net)
    bad = np.flatnonzero(~((lo < e) & (e < hi)))
    if bad.size:
        raise ConstructionError(f"trades of nodes {(bad + 1).tolist()} are outside the open capacity interval")
    if abs(e.sum()) > 1e-9 * (1.0 + np.abs(e).sum()):
        raise ConstructionError("trades are unbalanced")
    u = net.u
    y = np.zeros(net.m)
    for k in range(n - 1):
        d = -e[k + 1]
        u_out, u_in = u[k], u[n - 1 + k]
        lo_c = abs(d) / 2.0
        hi_c = min(u_out - d / 2.0, u_in + d / 2.0)
        c = 0.5 * (lo_c + hi_c)
        y[k] = c + d / 2.0
        y[n - 1 + k] = c - d / 2.0
    return y


def equal_price_check(sol_or_prices, tol: float = 1e-6) -> PriceCheck:
    lam = np.asarray(getattr(sol_or_prices, "lam", sol_or_prices), dtype=float)
    spread = float(lam.max() - lam.min()) if lam.size else 0.0
    return PriceCheck(spread, spread <= tol, bool(lam.size and lam.min() > tol))


def price_spread(sol: EquilibriumSolution) -> float:
    return equal_price_check(sol).max_spread


__all__ = [
    "swe_program", "EquilibriumSolution", "CEVerificationReport", "ConditionResult", "StandardEquilibrium",
    "InteriorCheck", "PriceCheck", "NotConcaveError", "ConstructionError",
    "solve_swe", "verify_ce", "solve_standard_swe", "standard_ce_closed_form",
    "solve_degenerate_swe", "interior_check", "star_flow_construct", "equal_price_check",
    "price_spread",
]

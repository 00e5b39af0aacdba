"""Agent utilities, endowments and market instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .flownet import FlowNetwork


class DomainError(ValueError):
    pass


class UnboundedPayoffError(ValueError):
    """A negative price makes the agent's trading problem unbounded."""


@runtime_checkable
class UtilityFunction(Protocol):
    def evaluate(self, x: float) -> float: ...

    def derivative(self, x: float) -> float: ...


@dataclass(frozen=True)
class QuadraticUtility:
    """``f(x) = -0.5 * theta1 * x**2 + theta2 * x`` with theta1 > 0, theta2 >= 0."""

    theta1: float
    theta2: float

    def __post_init__(self):
        if not self.theta1 > 0:
            raise DomainError(f"theta1 must be > 0, got {self.theta1}")
        if not self.theta2 >= 0:
            raise DomainError(f"theta2 must be >= 0, got {self.theta2}")

    def evaluate(self, x):
        if np.any(np.asarray(x) < 0):
            raise DomainError("consumption must be nonnegative")
        return -0.5 * self.theta1 * x * x + self.theta2 * x

    def derivative(self, x):
        if np.any(np.asarray(x) < 0):
            raise DomainError("consumption must be nonnegative")
        return self.theta2 - self.theta1 * x


@dataclass(frozen=True)
class LogUtility:
    """``f(x) = w * log(1 + x)``; a non-quadratic concave utility."""

    w: float = 1.0

    def evaluate(self, x):
        if np.any(np.asarray(x) < 0):
            raise DomainError("consumption must be nonnegative")
        return self.w * np.log1p(x)

    def derivative(self, x):
        if np.any(np.asarray(x) < 0):
            raise DomainError("consumption must be nonnegative")
        return self.w / (1.0 + x)


@dataclass(frozen=True)
class AgentProfile:
    a: float
    utility: UtilityFunction

    def __post_init__(self):
        if not self.a >= 0:
            raise DomainError(f"endowment must be >= 0, got {self.a}")

    def to_dict(self) -> dict:
        if not isinstance(self.utility, QuadraticUtility):
            raise TypeError("only quadratic utilities have a JSON form")
        return {"a": float(self.a), "theta1": float(self.utility.theta1),
                "theta2": float(self.utility.theta2)}

    @classmethod
    def from_dict(cls, d: dict) -> "AgentProfile":
        return cls(float(d["a"]), QuadraticUtility(float(d["theta1"]), float(d["theta2"])))


@dataclass(frozen=True, eq=False)
class MarketInstance:
    network: FlowNetwork
    agents: tuple[AgentProfile, ...]

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) != self.network.n:
            raise DomainError(
                f"{len(self.agents)} agents for a network with {self.network.n} nodes")

    @property
    def n(self) -> int:
        return self.network.n

    @property
    def a(self) -> np.ndarray:
        return np.array([ag.a for ag in self.agents])

    @property
    def capacity(self) -> float:
        """System resource capacity C = sum of endowments."""
        return float(self.a.sum())

    @property
    def is_lq(self) -> bool:
        return all(isinstance(ag.utility, QuadraticUtility) for ag in self.agents)

    @property
    def theta1(self) -> np.ndarray:
        return np.array([ag.utility.theta1 for ag in self.agents])

    @property
    def theta2(self) -> np.ndarray:
        return np.array([ag.utility.theta2 for ag in self.agents])

    def with_network(self, network: FlowNetwork) -> "MarketInstance":
        return MarketInstance(network, self.agents)

    def to_dict(self) -> dict:
        return {"network": self.network.to_dict(),
                "agents": [ag.to_dict() for ag in self.agents]}

    @classmethod
    def from_dict(cls, d: dict) -> "MarketInstance":
        return cls(FlowNetwork.from_dict(d["network"]),
                   tuple(AgentProfile.from_dict(ag) for ag in d["agents"]))


def lq_instance(network: FlowNetwork, a, theta1, theta2) -> MarketInstance:
    """Build an all-quadratic instance from per-agent parameter arrays."""
    n = network.n
    a, theta1, theta2 = (np.broadcast_to(np.asarray(v, dtype=float), (n,)) for v in (a, theta1, theta2))
    agents = tuple(AgentProfile(float(ai), QuadraticUtility(float(t1), float(t2)))
                   for ai, t1, t2 in zip(a, theta1, theta2))
    return MarketInstance(network, agents)


def evaluate(u: QuadraticUtility, x: float) -> float:
    if x < 0:
        raise DomainError("consumption must be nonnegative")
    return u.evaluate(x)


def best_response(u: QuadraticUtility, a: float, lam: float) -> tuple[float, float]:
    """Maximize ``f(x) + lam * e`` subject to ``e <= a - x`` and ``x >= 0``.

    The budget is always taken binding, so at ``lam = 0`` this returns the
    unconstrained maximizer with ``e = a - x``.
    """
    if lam < 0:
        raise UnboundedPayoffError(f"price {lam} < 0: payoff unbounded as e -> -inf")
    x = max(0.0, (u.theta2 - lam) / u.theta1)
    return x, a - x


def agent_optimal_payoff(f: UtilityFunction, a: float, lam: float, x_hint: float = 1.0) -> float:
    """Optimal value of ``max f(x) + lam * e`` s.t. ``e <= a - x, x >= 0``.

    With ``lam >= 0`` the budget binds, so the value is ``lam * a + max_x (f(x) - lam * x)``.
    Quadratic utilities use the closed form; others a bounded 1-D search.
    """
    if lam < 0:
        raise UnboundedPayoffError(f"price {lam} < 0")
    if isinstance(f, QuadraticUtility):
        x, _ = best_response(f, a, lam)
        return float(f.evaluate(x) + lam * (a - x))
    from scipy.optimize import minimize_scalar

    hi = max(1.0, 2.0 * x_hint)
    # grow the bracket until the marginal value drops below the price
    while f.derivative(hi) > lam and hi < 1e12:
        hi *= 2.0
    res = minimize_scalar(lambda x: -(f.evaluate(x) - lam * x), bounds=(0.0, hi),
                          method="bounded", options={"xatol": 1e-12})
    best = -res.fun
    best = max(best, f.evaluate(0.0))
    return float(lam * a + best)


def concavity_check(f: UtilityFunction, grid: Sequence[float], tol: float = 1e-9) -> bool:
    """True iff no sampled second divided difference exceeds ``+tol``."""
    x = np.asarray(grid, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 grid points")
    if np.any(np.diff(x) <= 0) or x[0] < 0:
        raise ValueError("grid must be strictly increasing and nonnegative")
    fx = np.array([f.evaluate(v) for v in x], dtype=float)
    slopes = np.diff(fx) / np.diff(x)
    second = np.diff(slopes) / (0.5 * (x[2:] - x[:-2]))
    return bool(np.all(second <= tol))

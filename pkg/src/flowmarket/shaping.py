"""Socially admissible utility boxes and equal-price validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .agents import MarketInstance, lq_instance
from .equilibria import (equal_price_check, solve_standard_swe, solve_swe,
                         standard_ce_closed_form)
from .flownet import all_capacity_bounds, is_canonical_star
from .qpcore import max_slack_lp


class UnsupportedTopologyError(ValueError):
    pass


@dataclass(frozen=True)
class ParamBox:
    theta1_min: float
    theta1_max: float
    theta2_min: float
    theta2_max: float

    def __post_init__(self):
        if not self.theta1_min > 0:
            raise ValueError("theta1_min must be > 0")
        if not self.theta2_min >= 0:
            raise ValueError("theta2_min must be >= 0")
        if self.theta1_min > self.theta1_max or self.theta2_min > self.theta2_max:
            raise ValueError("box bounds are inverted")

    def to_dict(self) -> dict:
        return {k: float(v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "ParamBox":
        return cls(float(d["theta1_min"]), float(d["theta1_max"]),
                   float(d["theta2_min"]), float(d["theta2_max"]))

    def corners(self) -> list[tuple[float, float]]:
        return [(t1, t2) for t1 in (self.theta1_min, self.theta1_max)
                for t2 in (self.theta2_min, self.theta2_max)]


@dataclass
class SStarDiagnostics:
    cond1_lhs: float
    cond1_rhs: float
    cond2_margins: np.ndarray
    endowment_margins: np.ndarray
    in_sstar: bool
    failing: list[str]

    @property
    def hypothesis_holds(self) -> bool:
        """Limited local resources: a_i < (out-capacity of i) for every agent."""
        return bool(np.all(self.endowment_margins > 0))

    @property
    def verdict(self) -> str:
        return "in" if self.in_sstar else "out"

    def to_dict(self) -> dict:
        return {
            "cond1_lhs": self.cond1_lhs, "cond1_rhs": self.cond1_rhs,
            "cond2_margins": [float(v) for v in self.cond2_margins],
            "endowment_margins": [float(v) for v in self.endowment_margins],
            "verdict": self.verdict, "failing": list(self.failing),
            "hypothesis_holds": self.hypothesis_holds,
        }


def sstar_membership(box: ParamBox, inst: MarketInstance) -> SStarDiagnostics:
    """Test the two equal-price conditions for a quadratic market on a star.

    Condition 1 (strict): ``theta2_min / theta1_max > C / n``.
    Condition 2: ``a_i - theta2_max / theta1_min >= Aminus_i u`` for every agent.
    The endowment hypothesis ``a_i < Aplus_i u`` is reported through
    ``endowment_margins``/``hypothesis_holds`` but does not decide the verdict.
    """
    if not is_canonical_star(inst.network):
        raise UnsupportedTopologyError("membership test is defined for canonical stars only")
    lo, hi = all_capacity_bounds(inst.network)
    a = inst.a
    lhs = box.theta2_min / box.theta1_max
    rhs = inst.capacity / inst.n
    cond2 = a - box.theta2_max / box.theta1_min - lo
    endow = hi - a
    failing = []
    if not lhs > rhs:
        failing.append("condition 1")
    if np.any(cond2 < 0):
        failing.append("condition 2")
    return SStarDiagnostics(float(lhs), float(rhs), cond2, endow, not failing, failing)


def sample_admissible(box: ParamBox, n: int, seed) -> list[tuple[float, float]]:
    rng = np.random.default_rng(seed)
    t1 = rng.uniform(box.theta1_min, box.theta1_max, size=n)
    t2 = rng.uniform(box.theta2_min, box.theta2_max, size=n)
    return [(float(a), float(b)) for a, b in zip(t1, t2)]


def _with_thetas(template: MarketInstance, thetas) -> MarketInstance:
    t1 = [t[0] for t in thetas]
    t2 = [t[1] for t in thetas]
    return lq_instance(template.network, template.a, t1, t2)


@dataclass
class TrialRow:
    trial: int
    theta1: list[float]
    theta2: list[float]
    lam: list[float]
    max_spread: float
    min_price: float
    all_equal: bool
    all_positive: bool


@dataclass
class EqualPriceReport:
    trials: list[TrialRow]
    in_sstar: bool | None
    tol: float
    advisory: bool = False

    @property
    def n_trials(self) -> int:
        return len(self.trials)

    @property
    def n_pass(self) -> int:
        return sum(r.all_equal and r.all_positive for r in self.trials)

    @property
    def fraction_passing(self) -> float:
        return self.n_pass / self.n_trials if self.trials else float("nan")

    @property
    def worst_spread(self) -> float:
        return max((r.max_spread for r in self.trials), default=0.0)

    @property
    def min_price(self) -> float:
        return min((r.min_price for r in self.trials), default=float("nan"))

    def to_dict(self) -> dict:
        return {
            "in_sstar": self.in_sstar, "advisory": self.advisory, "tol": self.tol,
            "n_trials": self.n_trials, "n_pass": self.n_pass,
            "fraction_passing": self.fraction_passing,
            "worst_spread": self.worst_spread, "min_price": self.min_price,
            "trials": [asdict(r) for r in self.trials],
        }


def trial_seed(seed, trial: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(trial)])


def validate_equal_prices(box: ParamBox, template: MarketInstance, trials: int, seed,
                          tol: float = 1e-6) -> EqualPriceReport:
    """Sample admissible profiles, solve each market, and record price equality."""
    in_sstar = None
    if is_canonical_star(template.network):
        in_sstar = sstar_membership(box, template).in_sstar
    rows = []
    for k in range(trials):
        thetas = sample_admissible(box, template.n, trial_seed(seed, k))
        sol = solve_swe(_with_thetas(template, thetas))
        chk = equal_price_check(sol, tol)
        rows.append(TrialRow(k, [t[0] for t in thetas], [t[1] for t in thetas],
                             [float(v) for v in sol.lam], chk.max_spread,
                             float(sol.lam.min()), chk.all_equal, chk.all_positive))
    return EqualPriceReport(rows, in_sstar, tol, advisory=in_sstar is not True)


def _standard_trades(inst: MarketInstance) -> np.ndarray:
    cf = standard_ce_closed_form(inst)
    if np.all(cf.x > 0) and cf.lambda0 >= 0:
        return cf.e
    return solve_standard_swe(inst).e


def in_flow_image(inst: MarketInstance, e, tol: float = 1e-9) -> bool:
    """Is ``e = A y`` for some ``0 <= y <= u``?"""
    e = np.asarray(e, dtype=float)
    return max_slack_lp(inst.network.incidence.A, e - e.mean(), inst.network.u).t >= -tol


@dataclass
class BoxVerdict:
    box: ParamBox
    approved: bool
    samples: int
    violations: int
    in_sstar: bool | None = None


@dataclass
class Algorithm1Report:
    verdicts: list[BoxVerdict] = field(default_factory=list)
    caveat: str = ("set containment is approximated from finitely many sampled "
                   "parameter profiles; approval is evidence, not proof")

    @property
    def approved(self) -> list[ParamBox]:
        return [v.box for v in self.verdicts if v.approved]


def algorithm1_enumerate(template: MarketInstance, box_grid, theta_samples: int, seed,
                         tol: float = 1e-9) -> Algorithm1Report:
    """Sampling realization of the admissible-box search.

    For every candidate box, standard-equilibrium trades are computed for the
    four homogeneous corner profiles plus ``theta_samples`` random profiles; the
    box is approved iff every such trade vector is realizable by capacity-
    feasible flows.
    """
    report = Algorithm1Report()
    star = is_canonical_star(template.network)
    for b, box in enumerate(box_grid):
        profiles = [[c] * template.n for c in box.corners()]
        profiles += [sample_admissible(box, template.n, trial_seed(seed, 10_000 * b + k))
                     for k in range(theta_samples)]
        bad = 0
        for thetas in profiles:
            e = _standard_trades(_with_thetas(template, thetas))
            if not in_flow_image(template, e, tol):
                bad += 1
        report.verdicts.append(BoxVerdict(
            box, bad == 0, len(profiles), bad,
            sstar_membership(box, template).in_sstar if star else None))
    return report

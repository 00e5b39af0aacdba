import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowmarket.agents import (AgentProfile, DomainError, LogUtility, MarketInstance,
                               QuadraticUtility, UnboundedPayoffError, agent_optimal_payoff,
                               best_response, concavity_check, evaluate, lq_instance)
from flowmarket.flownet import star_graph


@pytest.mark.parametrize("t1,t2,x,val", [(1, 2, 0, 0), (1, 2, 2, 2), (0.5, 20, 10, 175)])
def test_quadratic_values(t1, t2, x, val):
    assert evaluate(QuadraticUtility(t1, t2), x) == pytest.approx(val)


def test_negative_consumption_rejected():
    with pytest.raises(DomainError):
        evaluate(QuadraticUtility(1, 2), -0.1)
    with pytest.raises(DomainError):
        QuadraticUtility(1, 2).derivative(-1)


@pytest.mark.parametrize("t1,t2", [(0, 1), (-1, 1), (1, -0.5)])
def test_invalid_parameters(t1, t2):
    with pytest.raises(DomainError):
        QuadraticUtility(t1, t2)


def _grid_best(u, a, lam):
    xs = np.linspace(0, 60, 600_001)
    vals = -0.5 * u.theta1 * xs**2 + u.theta2 * xs + lam * (a - xs)
    k = int(np.argmax(vals))
    return xs[k], a - xs[k]


@pytest.mark.parametrize("t1,t2,a,lam,x,e", [
    (1, 2, 1, 2, 0, 1),
    (1, 4, 1, 2, 2, -1),
    (0.5, 18, 25, 5.5, 25, 0),
])
def test_best_response_examples(t1, t2, a, lam, x, e):
    u = QuadraticUtility(t1, t2)
    got = best_response(u, a, lam)
    assert got == pytest.approx((x, e), abs=1e-12)
    assert _grid_best(u, a, lam) == pytest.approx((x, e), abs=1e-4)


def test_negative_price_is_unbounded():
    with pytest.raises(UnboundedPayoffError):
        best_response(QuadraticUtility(1, 1), 1, -0.1)


@given(st.floats(0.1, 3), st.floats(0, 20), st.floats(0, 10), st.floats(0, 25))
def test_best_response_matches_numeric_payoff(t1, t2, a, lam):
    u = QuadraticUtility(t1, t2)
    x, e = best_response(u, a, lam)
    closed = agent_optimal_payoff(u, a, lam)
    assert closed == pytest.approx(u.evaluate(x) + lam * e)
    # deviations never help
    for dx in (-0.3, 0.3):
        xx = max(0.0, x + dx)
        assert u.evaluate(xx) + lam * (a - xx) <= closed + 1e-9


def test_log_utility_payoff_matches_stationarity():
    f = LogUtility(3.0)
    # f'(x) = lam at x = 3/lam - 1
    lam, a = 0.5, 2.0
    x = 3 / lam - 1
    assert agent_optimal_payoff(f, a, lam) == pytest.approx(f.evaluate(x) + lam * (a - x), abs=1e-8)


class _Linear:
    def __init__(self, c):
        self.c = c

    def evaluate(self, x):
        return self.c * x

    def derivative(self, x):
        return self.c


class _Square:
    def evaluate(self, x):
        return x * x

    def derivative(self, x):
        return 2 * x


def test_concavity_check():
    assert concavity_check(QuadraticUtility(0.7, 3), np.linspace(0, 10, 20))
    assert not concavity_check(_Square(), [0, 1, 2])
    assert concavity_check(_Linear(2.0), np.linspace(0, 50, 30))
    with pytest.raises(ValueError):
        concavity_check(_Linear(1.0), [0, 1])


def test_instance_accessors_and_round_trip():
    inst = lq_instance(star_graph(3, 2.0), [1, 2, 3], 0.5, [18, 19, 20])
    assert inst.capacity == 6
    np.testing.assert_array_equal(inst.theta1, [0.5] * 3)
    back = MarketInstance.from_dict(inst.to_dict())
    np.testing.assert_array_equal(back.a, inst.a)
    np.testing.assert_array_equal(back.theta2, inst.theta2)
    assert back.network.arcs == inst.network.arcs


def test_instance_size_mismatch():
    with pytest.raises(DomainError):
        MarketInstance(star_graph(3, 1.0), (AgentProfile(1.0, QuadraticUtility(1, 1)),))
    with pytest.raises(DomainError):
        AgentProfile(-1.0, QuadraticUtility(1, 1))

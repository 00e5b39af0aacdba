import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from flowmarket.agents import lq_instance
from flowmarket.equilibria import solve_standard_swe
from flowmarket.flownet import all_capacity_bounds, generate_er, star_graph
from flowmarket.shaping import (ParamBox, UnsupportedTopologyError, algorithm1_enumerate,
                                in_flow_image, sample_admissible, sstar_membership,
                                validate_equal_prices)

BOX = ParamBox(0.5, 0.6, 18.0, 20.0)


def exp4(u=15.0):
    return lq_instance(star_graph(5, u), 25.0, 0.5, 18.0)


def test_experiment_box_is_member():
    d = sstar_membership(BOX, exp4())
    assert d.verdict == "in" and d.failing == []
    assert d.cond1_lhs == pytest.approx(30.0) and d.cond1_rhs == pytest.approx(25.0)
    assert d.cond2_margins[1:] == pytest.approx([0.0] * 4)
    assert d.cond2_margins[0] == pytest.approx(45.0)


def test_small_theta2_fails_condition_one():
    d = sstar_membership(ParamBox(0.5, 0.6, 14.0, 20.0), exp4())
    assert d.verdict == "out" and "condition 1" in d.failing
    assert d.cond1_lhs == pytest.approx(14 / 0.6)
    assert sstar_membership(ParamBox(0.5, 0.6, 10.0, 12.0), exp4()).verdict == "out"


def test_tiny_capacity_is_out():
    d = sstar_membership(BOX, exp4(u=1.0))
    assert d.verdict == "out"
    assert not d.hypothesis_holds
    assert np.all(d.endowment_margins[1:] == pytest.approx(1.0 - 25.0))


def test_membership_rejects_non_star():
    inst = lq_instance(generate_er(5, 6, 1, 2, seed=0), 25.0, 0.5, 18.0)
    with pytest.raises(UnsupportedTopologyError):
        sstar_membership(BOX, inst)


@pytest.mark.parametrize("vals", [(0.0, 1, 1, 2), (0.6, 0.5, 1, 2), (0.5, 0.6, 3, 2), (0.5, 0.6, -1, 2)])
def test_invalid_boxes(vals):
    with pytest.raises(ValueError):
        ParamBox(*vals)


def test_box_json_round_trip():
    assert ParamBox.from_dict(json.loads(json.dumps(BOX.to_dict()))) == BOX


@given(st.integers(0, 2**31))
def test_samples_inside_box_and_deterministic(seed):
    draws = sample_admissible(BOX, 5, seed)
    assert draws == sample_admissible(BOX, 5, seed)
    for t1, t2 in draws:
        assert 0.5 <= t1 <= 0.6 and 18 <= t2 <= 20


def test_degenerate_box_gives_identical_agents():
    assert len(set(sample_admissible(ParamBox(1, 1, 2, 2), 4, 0))) == 1


boxes = st.tuples(st.floats(0.1, 2), st.floats(0, 2), st.floats(0, 40), st.floats(0, 20)).map(
    lambda v: ParamBox(v[0], v[0] + v[1], v[2], v[2] + v[3]))


@given(boxes, st.floats(0, 0.09), st.floats(0, 5), st.floats(0, 5))
def test_membership_is_monotone(box, d1, d2lo, d2hi):
    inst = exp4()
    bigger = ParamBox(max(box.theta1_min - d1, 0.01), box.theta1_max + d1,
                      max(box.theta2_min - d2lo, 0.0), box.theta2_max + d2hi)
    if sstar_membership(bigger, inst).in_sstar:
        assert sstar_membership(box, inst).in_sstar


def test_validation_experiment_four():
    rep = validate_equal_prices(BOX, exp4(), 20, seed=1)
    assert rep.in_sstar and not rep.advisory
    assert rep.n_pass == 20 and rep.worst_spread <= 1e-6 and rep.min_price >= 1e-6


def test_validation_flags_bad_box():
    # theta2 well below C * theta1_max / n pushes the limit price to zero
    box = ParamBox(0.5, 0.6, 2.0, 4.0)
    rep = validate_equal_prices(box, exp4(), 10, seed=0)
    assert rep.advisory
    assert rep.n_pass < rep.n_trials


def test_validation_zero_trials():
    rep = validate_equal_prices(BOX, exp4(), 0, seed=0)
    assert rep.n_trials == 0 and rep.to_dict()["trials"] == []


def test_algorithm1_examples():
    rep = algorithm1_enumerate(exp4(), [BOX], 10, seed=0)
    assert rep.approved == [BOX] and rep.caveat
    tiny = lq_instance(star_graph(4, 0.05), 5.0, 0.5, 18.0)
    dump = ParamBox(0.1, 2.0, 0.0, 40.0)
    assert algorithm1_enumerate(tiny, [dump], 10, seed=0).approved == []
    assert algorithm1_enumerate(exp4(), [], 5, seed=0).verdicts == []


def test_approved_member_boxes_give_equal_prices():
    inst = exp4()
    grid = [BOX, ParamBox(0.5, 0.55, 19.0, 20.0), ParamBox(0.5, 0.6, 14.0, 20.0)]
    rep = algorithm1_enumerate(inst, grid, 8, seed=2)
    for v in rep.verdicts:
        if v.approved and v.in_sstar:
            val = validate_equal_prices(v.box, inst, 10, seed=3)
            assert val.n_pass == val.n_trials


@given(st.integers(0, 2**31))
def test_flow_image_agrees_with_star_bounds(seed):
    rng = np.random.default_rng(seed)
    net = star_graph(4, rng.uniform(0.5, 2.0, 6))
    lo, hi = all_capacity_bounds(net)
    leaves = rng.uniform(-2.5, 2.5, 3)
    e = np.r_[-leaves.sum(), leaves]
    inst = lq_instance(net, 1.0, 1.0, 1.0)
    inside = np.all((lo + 1e-7 < e) & (e < hi - 1e-7))
    outside = np.any((e < lo - 1e-7) | (e > hi + 1e-7))
    if inside:
        assert in_flow_image(inst, e)
    if outside:
        assert not in_flow_image(inst, e)

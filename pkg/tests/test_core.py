import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandgame.core import (
    Allocation,
    InstanceError,
    StrategyProfile,
    SystemInstance,
    align_to_units,
    budget_cap,
    check_constraints,
    edge_utility,
    fl_utility,
    instance_from_dict,
    instance_to_dict,
    is_competing_system,
    proportional_result,
    settle,
)


def pair(b=10, c=10, f=(1, 1), u=(1, 1)):
    return SystemInstance.build(list(f), [b], [[c], [c]], list(u))


# -- proportional result -----------------------------------------------------

@pytest.mark.parametrize(
    "req, cap, want",
    [
        ([[3], [4]], [10], [[3], [4]]),
        ([[6], [6]], [10], [[5], [5]]),
        ([[7], [6]], [10], [[5], [4]]),
    ],
)
def test_proportional_result_examples(req, cap, want):
    assert proportional_result(req, cap).to_list() == want


def test_proportional_result_zero_column_and_shape_error():
    assert proportional_result([[0, 2], [0, 3]], [4, 4]).to_list() == [[0, 1], [0, 2]]
    with pytest.raises(InstanceError):
        proportional_result([[1, 2]], [3])


columns = st.integers(1, 4).flatmap(
    lambda e: st.tuples(
        st.lists(st.lists(st.integers(0, 20), min_size=e, max_size=e), min_size=1, max_size=4),
        st.lists(st.integers(1, 15), min_size=e, max_size=e),
    )
)


@given(columns)
def test_proportional_result_never_exceeds_capacity_or_request(data):
    r, b = np.array(data[0]), np.array(data[1])
    x = proportional_result(r, b).granted
    assert (x.sum(axis=0) <= b).all()
    assert (x <= r).all()
    if (r.sum(axis=0) <= b).all():
        assert np.array_equal(x, r)


@given(columns, st.integers(2, 5))
def test_scaling_an_overloaded_column_keeps_the_result(data, k):
    r, b = np.array(data[0]), np.array(data[1])
    over = r.sum(axis=0) > b
    x = proportional_result(r, b).granted
    y = proportional_result(r * k, b).granted
    assert np.array_equal(x[:, over], y[:, over])


def test_align_and_budget_cap():
    assert align_to_units([[3, 5], [4, 4]], [2, 3]).tolist() == [[2, 4], [3, 3]]
    # dearest edge loses blocks first
    row = budget_cap([4, 4], [Fraction(1, 4), Fraction(1, 2)], Fraction(2), 2)
    assert row.tolist() == [4, 2]
    assert budget_cap([2, 2], [Fraction(1)] * 2, 10, 1).tolist() == [2, 2]


def test_settle_caps_demand_and_budget():
    inst = SystemInstance.build([Fraction(1, 2)], [10], [[3]], [2])
    assert settle(inst, [[9]]).tolist() == [[6]]
    assert settle(inst, [[9]], [Fraction(1, 8)]).tolist() == [[4]]


# -- constraints -------------------------------------------------------------

def test_zero_allocation_is_feasible():
    inst = pair()
    rep = check_constraints(inst, StrategyProfile.uniform(Fraction(1, 5), [[0], [0]]), Allocation([[0], [0]]))
    assert rep.satisfied and rep.violations == ()


def test_multiple_of_u_violation():
    inst = pair(u=(2, 1))
    rep = check_constraints(inst, StrategyProfile.uniform(Fraction(1, 100), [[3], [0]]), Allocation([[3], [0]]))
    assert ("multiple_of_u", 0, 0) in [(v.constraint, v.i, v.j) for v in rep.violations]
    assert not rep.satisfied


def test_budget_violation_spend_above_fund():
    inst = SystemInstance.build([1], [10], [[10]], [1])
    rep = check_constraints(inst, StrategyProfile.uniform(Fraction(1, 5), [[6]]), Allocation([[6]]))
    assert [(v.constraint, v.i) for v in rep.violations] == [("budget", 0)]
    assert "6/5" in rep.violations[0].detail


def test_capacity_and_demand_cap_violations():
    inst = SystemInstance.build([5, 5], [4], [[3], [3]])
    rep = check_constraints(inst, StrategyProfile.uniform(Fraction(1, 10), [[3], [3]]), Allocation([[3], [3]]))
    assert [v.constraint for v in rep.violations] == ["capacity"]
    rep = check_constraints(inst, StrategyProfile.uniform(Fraction(1, 10), [[4], [0]]), Allocation([[4], [0]]))
    assert [v.constraint for v in rep.violations] == ["demand_cap"]


def test_profile_rejects_non_positive_prices():
    with pytest.raises(InstanceError):
        StrategyProfile((Fraction(0),), [[1]])


# -- utilities ---------------------------------------------------------------

def test_edge_utility_examples():
    assert edge_utility(Fraction(1, 5), 0, 5) == 0
    assert edge_utility(Fraction(1, 2), 10, 5) == pytest.approx(math.log(2))
    assert edge_utility(0.2, 10, 5) == pytest.approx(math.log(1.4))


def test_fl_utility_examples():
    assert fl_utility(0, 1, 10) == 0
    assert fl_utility(20, 2, 10) == pytest.approx(math.log(2))
    assert fl_utility(5, 1, 10) == pytest.approx(math.log(1.5))
    with pytest.raises(InstanceError):
        fl_utility(1, 1, 0)


@given(st.integers(0, 50), st.integers(0, 50), st.integers(1, 5), st.integers(1, 10))
def test_fl_utility_monotone_and_bounded(a, b, u, c):
    lo, hi = sorted((a, b))
    assert 0 <= fl_utility(lo, u, c) <= fl_utility(hi, u, c)
    if hi <= u * c:
        assert fl_utility(hi, u, c) <= math.log(2) + 1e-12


# -- competing system --------------------------------------------------------

@pytest.mark.parametrize(
    "counts, want",
    [
        ([[5], [5]], True),
        ([[5, 0], [0, 5]], False),
        ([[5, 0], [5, 5], [0, 5]], True),
    ],
)
def test_competing_examples(counts, want):
    s, e = len(counts), len(counts[0])
    assert is_competing_system(SystemInstance.build([1] * s, [10] * e, counts)) is want


@settings(max_examples=60)
@given(st.integers(0, 10 ** 6))
def test_competing_invariant_under_permutation(seed):
    rng = np.random.default_rng(seed)
    s, e = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    c = rng.integers(0, 2, size=(s, e))
    inst = SystemInstance.build([1] * s, [5] * e, c)
    perm = SystemInstance.build([1] * s, [5] * e, c[rng.permutation(s)][:, rng.permutation(e)])
    assert is_competing_system(inst) == is_competing_system(perm)


# -- instances ---------------------------------------------------------------

def test_instance_validation_and_round_trip():
    with pytest.raises(InstanceError):
        SystemInstance.build([1, 1], [10], [[1, 2], [3, 4]])
    inst = SystemInstance.build([Fraction(5, 8), 1], [6, 3], [[1, 2], [0, 3]], [2, 1])
    back = instance_from_dict(instance_to_dict(inst))
    assert back.funds == inst.funds
    assert np.array_equal(back.counts, inst.counts)
    assert back.units.tolist() == [2, 1]
    assert inst.demand.tolist() == [[2, 4], [0, 3]]

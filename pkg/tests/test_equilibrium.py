from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandgame.core import NotCompetingError, StrategyProfile, SystemInstance, check_constraints
from bandgame.equilibrium import (
    EnumerationTooLarge,
    candidate_prices,
    check_followers_ne,
    check_game_ne,
    feasible_allocation,
    is_minimal,
    leader_grid,
    solve_min_price,
    theorem_property_suite,
)
from bandgame.scenarios import random_competing_instance

F = Fraction


@pytest.fixture
def two_on_one():
    return SystemInstance.build([1, 1], [10], [[10], [10]])


def test_followers_ne_holds_at_one_fifth(two_on_one):
    assert check_followers_ne(two_on_one, StrategyProfile.uniform(F(1, 5), [[5], [5]])) is None


def test_followers_can_deviate_when_price_is_low(two_on_one):
    w = check_followers_ne(two_on_one, StrategyProfile.uniform(F(1, 20), [[5], [5]]))
    assert w is not None and w.utility_gain > 0


def test_lone_server_asking_for_everything_has_no_deviation():
    inst = SystemInstance.build([1], [10], [[4]])
    assert check_followers_ne(inst, StrategyProfile.uniform(F(1, 10), [[4]])) is None


def test_solve_min_price_two_servers_one_edge(two_on_one):
    sol = solve_min_price(two_on_one)
    assert sol.feasible and sol.price == F(1, 5)
    assert sol.allocation.to_list() == [[5], [5]]
    # one sixth fails the strict affordability bound
    assert feasible_allocation(two_on_one, F(1, 6)) is None


def test_ample_supply_picks_largest_fully_serving_price():
    inst = SystemInstance.build([1, 1], [10], [[2], [2]])
    sol = solve_min_price(inst)
    assert sol.saturated and sol.price == F(1, 2)
    assert sol.allocation.to_list() == [[2], [2]]
    assert is_minimal(inst, sol)


def test_property_suite_passes_on_the_reference_instance(two_on_one):
    rep = theorem_property_suite(two_on_one)
    assert rep.constraints_ok
    assert rep.results == {"T1": True, "T2": True, "T3": True, "T4": True}
    assert rep.all_pass


def test_lowering_the_price_one_candidate_step_breaks_feasibility(two_on_one):
    sol = solve_min_price(two_on_one)
    cands = candidate_prices(two_on_one)
    lower = cands[cands.index(sol.price) - 1]
    assert feasible_allocation(two_on_one, lower) is None


def test_game_ne_accepts_the_solution_and_rejects_unequal_prices(two_on_one):
    sol = solve_min_price(two_on_one)
    assert check_game_ne(two_on_one, sol.profile()).is_ne is True
    inst = SystemInstance.build([1, 1], [4, 4], [[2, 2], [2, 2]])
    rep = check_game_ne(inst, StrategyProfile((F(1, 4), F(1, 2)), [[2, 2], [2, 2]]))
    assert rep.is_ne is False and rep.leader_witness is not None
    assert rep.leader_witness.revenue_after > rep.leader_witness.revenue_before


def test_non_competing_instance_is_refused():
    inst = SystemInstance.build([1, 1], [4, 4], [[2, 0], [0, 2]])
    with pytest.raises(NotCompetingError, match="not a competing system"):
        check_game_ne(inst, StrategyProfile.uniform(F(1, 4), [[2, 0], [0, 2]]))
    with pytest.raises(NotCompetingError):
        solve_min_price(inst)


def test_enumeration_budget_is_explicit(two_on_one):
    with pytest.raises(EnumerationTooLarge, match="too large"):
        solve_min_price(two_on_one, max_enum=5)


def test_leader_grid_surrounds_the_price(two_on_one):
    g = leader_grid(two_on_one, F(1, 5))
    assert F(1, 5) not in g
    assert F(1, 5) * F(21, 20) in g and F(1, 5) * F(4, 5) in g


def test_candidates_are_budget_boundaries(two_on_one):
    c = candidate_prices(two_on_one)
    assert c[0] == F(1, 10) and c[-1] == 1 and F(1, 5) in c


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_solution_is_feasible_minimal_and_deterministic(seed):
    inst = random_competing_instance(np.random.default_rng(seed))
    sol = solve_min_price(inst)
    if not sol.feasible:
        return
    assert check_constraints(inst, sol.profile(), sol.allocation).satisfied
    assert is_minimal(inst, sol)
    again = solve_min_price(inst)
    assert again.price == sol.price
    assert np.array_equal(again.allocation.granted, sol.allocation.granted)


def test_every_competing_instance_has_an_equilibrium():
    # A server whose client is bigger than the only edge, next to two unit
    # servers fighting over one unit: whoever goes without must be priced
    # out, which prices the winner out too.
    inst = SystemInstance.build([F(5, 8), 1, 1], [1], [[1], [3], [3]], [2, 1, 1])
    assert solve_min_price(inst).feasible

from fractions import Fraction

import numpy as np
import pytest

from bandgame.core import InstanceError, is_competing_system
from bandgame.scenarios import (
    ClientPopulation,
    ScenarioSpec,
    build_instance,
    gen_client_distribution,
    gen_funds,
    gen_units,
    random_competing_instance,
    round_count,
    select_clients,
)

F = Fraction


def test_round_count_is_half_up():
    assert [round_count(x) for x in (0.5, 1.5, 2.5, 2.4)] == [1, 2, 3, 2]


def test_uniform_when_alpha_zero_beta_one():
    counts = gen_client_distribution(ScenarioSpec(alpha=0, beta=1), np.random.default_rng(0)).counts()
    assert (counts > 0).all()
    assert counts.sum(axis=1).tolist() == [50] * 5
    # roughly even spread over a large population
    big = gen_client_distribution(ScenarioSpec(clients_per_fl=5000), np.random.default_rng(1)).counts()
    assert np.allclose(big / 1000, 1, atol=0.1)


def test_full_concentration_on_first_edge():
    counts = gen_client_distribution(ScenarioSpec(alpha=1, beta=0.2), np.random.default_rng(0)).counts()
    assert counts[:, 0].tolist() == [50] * 5
    assert counts[:, 1:].sum() == 0


def test_restricted_servers_use_leading_edges():
    counts = gen_client_distribution(ScenarioSpec(alpha=0.4, beta=0.6), np.random.default_rng(0)).counts()
    assert counts[:2, 3:].sum() == 0
    assert (counts[2:] > 0).all()


def test_alpha_needs_an_edge():
    with pytest.raises(InstanceError):
        gen_client_distribution(ScenarioSpec(alpha=0.4, beta=0.05))


@pytest.mark.parametrize(
    "spec, want",
    [
        (ScenarioSpec(gamma=0), (F(1, 2),) * 5),
        (ScenarioSpec(gamma=0.8), (F(1, 2), F(5, 8), F(3, 4), F(7, 8), F(1))),
        (ScenarioSpec(s=2, gamma=1), (F(3, 4), F(1))),
    ],
)
def test_gen_funds(spec, want):
    assert gen_funds(spec) == want


@pytest.mark.parametrize("g", [0.2, 0.4, 0.6, 0.8, 1.0])
def test_funds_non_decreasing_and_top_is_one(g):
    f = gen_funds(ScenarioSpec(s=7, gamma=g))
    assert list(f) == sorted(f) and f[-1] == 1


@pytest.mark.parametrize(
    "spec, want",
    [
        (ScenarioSpec(delta=0), (1,) * 5),
        (ScenarioSpec(delta=1), (2, 3, 3, 4, 5)),
        (ScenarioSpec(s=2, delta=1), (2, 2)),
    ],
)
def test_gen_units(spec, want):
    assert gen_units(spec) == want


def test_full_selection_keeps_everyone():
    pop = gen_client_distribution(ScenarioSpec(), np.random.default_rng(3))
    assert np.array_equal(select_clients(pop, 1.0).counts, pop.counts())


def test_equal_data_gives_uniform_weights():
    pop = gen_client_distribution(ScenarioSpec(equal_data=True), np.random.default_rng(0))
    assert np.allclose(pop.selection_weights(), 1 / 50)


def test_partial_selection_matches_expectation():
    spec = ScenarioSpec(rho=0.6)
    pop = gen_client_distribution(spec, np.random.default_rng(0))
    sizes = [select_clients(pop, 0.6, np.random.default_rng(k)).counts.sum(axis=1) for k in range(1000)]
    assert np.allclose(np.mean(sizes, axis=0), 0.6 * 50, rtol=0.02)


def test_selection_favours_big_datasets():
    # edge 0 hosts the heavy clients, edge 1 the light ones
    n = 100
    pop = ClientPopulation(
        np.zeros(2 * n, dtype=np.int64),
        np.repeat([0, 1], n),
        np.repeat([150, 50], n),
        1,
        2,
    )
    counts = np.mean([select_clients(pop, 0.3, np.random.default_rng(k)).counts[0] for k in range(200)], axis=0)
    assert counts.sum() == pytest.approx(60)
    assert counts[0] > 1.5 * counts[1]


def test_build_is_reproducible():
    spec = ScenarioSpec(alpha=0.4, beta=0.6, rho=0.7, gamma=0.6, delta=0.4, seed=11)
    a, b = build_instance(spec), build_instance(spec)
    assert np.array_equal(a.counts, b.counts)
    assert a.funds == b.funds and a.units.tolist() == b.units.tolist()
    assert not np.array_equal(a.counts, build_instance(ScenarioSpec(alpha=0.4, beta=0.6, rho=0.7, seed=12)).counts)


def test_spec_round_trip_and_validation():
    spec = ScenarioSpec(alpha=0.2, seed=4)
    assert ScenarioSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(InstanceError):
        ScenarioSpec.from_dict({"alpha": 0.2, "bogus": 1})
    with pytest.raises(InstanceError):
        ScenarioSpec(rho=0)


def test_random_competing_instance_within_ranges():
    rng = np.random.default_rng(5)
    for _ in range(50):
        inst = random_competing_instance(rng)
        assert is_competing_system(inst)
        assert 2 <= inst.s <= 3 and 1 <= inst.e <= 3
        assert inst.capacities.max() <= 6 and inst.units.max() <= 2

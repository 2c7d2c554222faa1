import json
import math

import numpy as np
import pytest

from bandgame.core import Allocation, SystemInstance
from bandgame.harness import (
    FIELDS,
    MetricsRow,
    figure_dat,
    jain_index,
    load_grid,
    mean_jain,
    outcome_to_dict,
    read_csv,
    run_scheme,
    sweep,
    utilization,
    weighted_fairness,
    write_csv,
)
from bandgame.scenarios import ScenarioSpec

SMALL = ScenarioSpec(clients_per_fl=10, capacity=4)
GRID = {"alpha": [0.2, 0.4, 0.6, 0.8], "beta": [0.2, 0.4, 0.6, 0.8]}


@pytest.mark.parametrize("v, want", [((5, 5, 5, 5, 5), 1.0), ((10, 0), 0.5), ((3, 1), 0.8), ((0, 0), 1.0)])
def test_jain(v, want):
    assert jain_index(v) == pytest.approx(want)


def test_jain_rejects_bad_input():
    with pytest.raises(ValueError):
        jain_index([])
    with pytest.raises(ValueError):
        jain_index([1, -1])


@pytest.mark.parametrize("v, f, want", [((5, 10), (0.5, 1.0), 1.0), ((5, 5), (0.5, 1.0), 0.9), ((3, 3), (1, 1), 1.0)])
def test_weighted_fairness(v, f, want):
    assert weighted_fairness(v, f) == pytest.approx(want)


def test_utilization_examples():
    assert utilization([[5], [5]], [10]) == 1.0
    assert utilization(Allocation([[0], [0]]), [10], demand=[12]) == 0.0
    assert utilization([[4, 5]], [5, 5]) == pytest.approx(0.9)
    # only what was asked for can be sold
    assert utilization([[3, 0]], [5, 5], demand=[3, 0]) == 1.0


def test_grid_sweep_row_count_order_and_header(tmp_path):
    rows = sweep(SMALL, GRID, seeds=range(5))
    assert len(rows) == 16 * 3 * 5 * 5
    assert FIELDS == tuple(MetricsRow.__dataclass_fields__)
    first = [(r.alpha, r.beta, r.scheme, r.seed, r.fl_server) for r in rows[:26]]
    assert first[0] == (0.2, 0.2, "centralized", 0, 0)
    assert first[5] == (0.2, 0.2, "centralized", 1, 0)
    assert first[25] == (0.2, 0.2, "distributed", 0, 0)
    text = write_csv(rows, tmp_path / "a.csv")
    assert text.splitlines()[0] == ",".join(FIELDS)
    assert "\r" not in text
    for r in rows:
        assert r.spend <= r.fund + 1e-9


def test_sweep_reproduces_byte_for_byte_and_in_parallel(tmp_path):
    grid = {"gamma": [0.0, 0.8]}
    a = write_csv(sweep(SMALL, grid, seeds=range(2)))
    b = write_csv(sweep(SMALL, grid, seeds=range(2)))
    c = write_csv(sweep(SMALL, grid, seeds=range(2), jobs=2))
    assert a == b == c
    write_csv(sweep(SMALL, grid, seeds=[0]), tmp_path / "x.csv")
    back = read_csv(tmp_path / "x.csv")
    assert back[0]["scheme"] == "centralized" and back[0]["fl_server"] == "0"


def test_a_failing_cell_becomes_nan_rows():
    rows = sweep(SMALL, {"alpha": [0.4], "beta": [0.05]}, schemes=("baseline",), seeds=[0])
    assert len(rows) == 5
    assert all(math.isnan(r.jain_index) and r.rounds == -1 for r in rows)


def test_unconverged_runs_are_marked():
    rows = sweep(SMALL, {}, schemes=("distributed",), seeds=[0], net={"max_rounds": 1})
    assert {r.rounds for r in rows} == {-1}


def test_figure_dat_blocks():
    rows = sweep(SMALL, {"gamma": [0.0, 0.8]}, schemes=("centralized",), seeds=range(2))
    dat = figure_dat(rows, ("gamma",))
    lines = dat.splitlines()
    assert lines[0].startswith("# scheme centralized")
    assert lines[1] == "# gamma S0 S1 S2 S3 S4"
    assert lines[2].split()[0] == "0.0" and len(lines[2].split()) == 6
    assert mean_jain(rows, "centralized", gamma=0.0) == pytest.approx(
        np.mean([r.jain_index for r in rows if r.gamma == 0.0]))


def test_load_grid_validates(tmp_path):
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"base": {"s": 3}, "grid": {"alpha": [0.2]}}))
    base, grid = load_grid(p)
    assert base.s == 3 and grid == {"alpha": [0.2]}
    p.write_text(json.dumps({"grid": {"nope": [1]}}))
    with pytest.raises(ValueError):
        load_grid(p)


def test_outcome_dict_is_json_ready():
    inst = SystemInstance.build([1, 1], [10], [[10], [10]])
    for scheme in ("centralized", "distributed", "baseline"):
        doc = outcome_to_dict(run_scheme(inst, scheme), inst)
        json.dumps(doc)
        assert doc["scheme"] == scheme and doc["jain_index"] == 1.0
    assert outcome_to_dict(run_scheme(inst, "centralized"))["prices"] == ["1/5"]

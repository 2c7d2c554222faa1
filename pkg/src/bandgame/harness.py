"""Experiment runner: schemes over scenario grids, metrics, CSV and gnuplot data."""
from __future__ import annotations

import csv
import io
import itertools
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields, replace
from fractions import Fraction

import numpy as np

from .baseline import run_baseline
from .centralized import run_centralized
from .core import InstanceError, SimOutcome, SystemInstance
from .distributed import AgentParams, SimNetConfig, run_distributed
from .scenarios import ScenarioSpec, build_instance

SCHEMES = ("centralized", "distributed", "baseline")


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def jain_index(v) -> float:
    """(sum v)^2 / (n * sum v^2); an all-zero vector counts as perfectly fair."""
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("empty vector")
    if (v < 0).any():
        raise ValueError("jain index needs non-negative values")
    sq = float((v * v).sum())
    if sq == 0:
        return 1.0
    return float(v.sum()) ** 2 / (v.size * sq)


def weighted_fairness(v, funds) -> float:
    f = np.asarray([float(x) for x in funds])
    if (f <= 0).any():
        raise ValueError("funds must be positive")
    return jain_index(np.asarray(v, dtype=float) / f)


def utilization(alloc, capacities, demand=None) -> float:
    """Bandwidth sold over the most that could have been sold.

    ``demand`` is the per-edge total demand; without it the full capacity is
    the reference.
    """
    x = np.asarray(getattr(alloc, "granted", alloc))
    b = np.asarray(capacities, dtype=np.int64)
    if b.sum() <= 0:
        raise ValueError("total capacity must be positive")
    reach = b if demand is None else np.minimum(b, np.asarray(demand, dtype=np.int64))
    if reach.sum() == 0:
        return 1.0
    return min(1.0, float(x.sum()) / float(reach.sum()))


def instance_utilization(outcome: SimOutcome, instance: SystemInstance) -> float:
    return utilization(outcome.allocation, instance.capacities, instance.demand.sum(axis=0))


# ---------------------------------------------------------------------------
# schemes
# ---------------------------------------------------------------------------


def _common_outcome(scheme, instance, alloc, price) -> SimOutcome:
    x = alloc.granted
    p = Fraction(0) if price is None else price
    return SimOutcome(
        scheme=scheme,
        allocation=alloc,
        prices=(p,) * instance.e,
        clients_acquired=x.sum(axis=1) // instance.units,
        spend=tuple(p * int(v) for v in x.sum(axis=1)),
    )


def run_scheme(
    instance: SystemInstance,
    scheme: str,
    seed: int = 0,
    stochastic: bool = False,
    net: SimNetConfig | None = None,
    params: AgentParams | None = None,
) -> SimOutcome:
    """Run one scheme and wrap the result as a :class:`SimOutcome`.

    The baseline ignores funds, so it reports zero prices and spend.
    """
    if scheme == "centralized":
        res = run_centralized(instance, stochastic=stochastic, seed=seed)
        out = _common_outcome(scheme, instance, res.allocation, res.price)
        out.diagnostics.update(steps=res.steps, trace=res.trace)
        return out
    if scheme == "distributed":
        net = net or SimNetConfig(seed=seed)
        return run_distributed(instance, net, params or AgentParams())
    if scheme == "baseline":
        return _common_outcome(scheme, instance, run_baseline(instance), None)
    raise InstanceError(f"unknown scheme {scheme!r}")


def outcome_to_dict(outcome: SimOutcome, instance: SystemInstance | None = None) -> dict:
    """JSON-ready view of an outcome; exact prices become "p/q" strings."""
    def num(v):
        if isinstance(v, Fraction):
            return str(v)
        return float(v)
    doc = {
        "scheme": outcome.scheme,
        "prices": [num(p) for p in outcome.prices],
        "allocation": outcome.allocation.to_list(),
        "clients_acquired": [int(c) for c in outcome.clients_acquired],
        "bandwidth_acquired": [int(v) for v in outcome.bandwidth_acquired],
        "spend": [num(v) for v in outcome.spend],
        "rounds": int(outcome.rounds),
        "converged": bool(outcome.converged),
    }
    if instance is not None:
        doc["jain_index"] = jain_index(outcome.clients_acquired)
        doc["utilization"] = instance_utilization(outcome, instance)
    diag = outcome.diagnostics
    if outcome.scheme == "distributed":
        doc["diagnostics"] = {
            k: diag[k] for k in ("price_ratio", "certified", "forced", "predictions",
                                 "messages_sent", "messages_dropped")
        }
        doc["diagnostics"]["quoted_prices"] = [str(p) for p in diag["quoted_prices"]]
    return doc


# ---------------------------------------------------------------------------
# rows, sweeps, output
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRow:
    scheme: str
    alpha: float
    beta: float
    gamma: float
    delta: float
    rho: float
    seed: int
    fl_server: int
    fund: float
    units: int
    clients_acquired: int
    bandwidth_acquired: int
    spend: float
    jain_index: float
    utilization: float
    rounds: int


FIELDS = tuple(f.name for f in fields(MetricsRow))


def metrics_rows(spec: ScenarioSpec, instance: SystemInstance, outcome: SimOutcome) -> list[MetricsRow]:
    jain = jain_index(outcome.clients_acquired)
    util = instance_utilization(outcome, instance)
    bw = outcome.bandwidth_acquired
    return [
        MetricsRow(
            outcome.scheme, spec.alpha, spec.beta, spec.gamma, spec.delta, spec.rho, spec.seed,
            i, float(instance.funds[i]), int(instance.units[i]), int(outcome.clients_acquired[i]),
            int(bw[i]), float(outcome.spend[i]), jain, util,
            int(outcome.rounds) if outcome.converged else -1,
        )
        for i in range(instance.s)
    ]


def _failed_rows(spec: ScenarioSpec, scheme: str) -> list[MetricsRow]:
    nan = float("nan")
    return [
        MetricsRow(scheme, spec.alpha, spec.beta, spec.gamma, spec.delta, spec.rho, spec.seed,
                   i, nan, 0, 0, 0, nan, nan, nan, -1)
        for i in range(spec.s)
    ]


def _run_cell(job) -> list[MetricsRow]:
    spec, scheme, net_kw, params = job
    try:
        inst = build_instance(spec)
        net = SimNetConfig(seed=spec.seed, **net_kw)
        out = run_scheme(inst, scheme, seed=spec.seed, net=net, params=params)
        return metrics_rows(spec, inst, out)
    except (InstanceError, ValueError, ArithmeticError):
        return _failed_rows(spec, scheme)


def grid_cells(base: ScenarioSpec, grid: dict) -> list[ScenarioSpec]:
    """Cartesian product of ``grid`` (name -> values) applied to ``base``, keys in given order."""
    names = list(grid)
    return [replace(base, **dict(zip(names, combo))) for combo in itertools.product(*(grid[n] for n in names))]


def sweep(
    base: ScenarioSpec,
    grid: dict,
    schemes=SCHEMES,
    seeds=range(5),
    net: dict | None = None,
    params: AgentParams | None = None,
    jobs: int = 1,
) -> list[MetricsRow]:
    """One row per (cell, scheme, seed, server), in exactly that order.

    A cell that fails turns into rows with NaN metrics and ``rounds = -1``;
    a distributed run that hits ``max_rounds`` is also reported with
    ``rounds = -1``.
    """
    tasks = [
        (replace(cell, seed=int(seed)), scheme, dict(net or {}), params)
        for cell in grid_cells(base, grid)
        for scheme in schemes
        for seed in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_cell, tasks))
    else:
        chunks = [_run_cell(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(rows, out=None) -> str:
    """Rows as comma-separated text with LF line endings; also written to ``out`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FIELDS)
    for r in rows:
        w.writerow([_fmt(v) for v in astuple(r)])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def figure_dat(rows, keys=("alpha", "beta"), value="clients_acquired") -> str:
    """Gnuplot block per scheme: one line per grid cell, one column per FL server (seed mean)."""
    acc: dict = {}
    servers = sorted({r.fl_server for r in rows})
    for r in rows:
        acc.setdefault(r.scheme, {}).setdefault(tuple(getattr(r, k) for k in keys), {}).setdefault(
            r.fl_server, []
        ).append(float(getattr(r, value)))
    lines = []
    for scheme, cells in acc.items():
        lines.append(f"# scheme {scheme}: {value}, mean over seeds")
        lines.append("# " + " ".join(list(keys) + [f"S{i}" for i in servers]))
        for cell, per in cells.items():
            vals = [repr(float(np.mean(per[i]))) if i in per else "nan" for i in servers]
            lines.append(" ".join([repr(float(c)) for c in cell] + vals))
        lines.append("")
        lines.append("")
    return "\n".join(lines)


def mean_jain(rows, scheme: str, **cell) -> float:
    """Mean over seeds of the per-run Jain index for one scheme in one grid cell."""
    seen = {}
    for r in rows:
        if r.scheme == scheme and all(getattr(r, k) == v for k, v in cell.items()):
            seen[r.seed] = r.jain_index
    return float(np.mean(list(seen.values()))) if seen else float("nan")


def load_grid(path) -> tuple[ScenarioSpec, dict]:
    """Grid file: {"base": {scenario keys...}, "grid": {"alpha": [...], ...}}."""
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"base", "grid"}
    if unknown:
        raise InstanceError(f"unknown grid keys: {sorted(unknown)}")
    base = ScenarioSpec.from_dict(doc.get("base", {}))
    grid = doc.get("grid", {})
    known = set(base.to_dict())
    bad = set(grid) - known
    if bad:
        raise InstanceError(f"grid names unknown scenario keys: {sorted(bad)}")
    return base, grid

"""Seeded generators for the heterogeneity settings used in the experiments.

Four knobs shape an instance:

``alpha``/``beta``
    the first ``round(alpha*s)`` FL servers keep their clients on the first
    ``round(beta*e)`` edges only;
``gamma``
    the last ``round(gamma*s)`` servers get funds spread evenly up to 1;
``delta``
    the last ``round(delta*s)`` servers need more than one unit per client;
``rho``
    the fraction of each server's clients selected for a round, drawn
    without replacement with probability proportional to data size.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

from .core import (
    ClientDistribution,
    EdgeServerSpec,
    FlServerSpec,
    InstanceError,
    SystemInstance,
    as_fraction,
    is_competing_system,
)

DATA_SIZE_RANGE = (50, 150)
EQUAL_DATA_SIZE = 100


def round_count(x: float) -> int:
    """Round a server/edge count half up."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class ScenarioSpec:
    s: int = 5
    e: int = 5
    clients_per_fl: int = 50
    capacity: int = 10
    alpha: float = 0.0
    beta: float = 1.0
    gamma: float = 0.0
    delta: float = 0.0
    rho: float = 1.0
    f0: float = 0.5
    seed: int = 0
    equal_data: bool = False

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "delta"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise InstanceError(f"{name} must lie in [0, 1], got {v}")
        if not 0 < self.rho <= 1:
            raise InstanceError(f"rho must lie in (0, 1], got {self.rho}")
        if self.s < 1 or self.e < 1 or self.clients_per_fl < 0 or self.capacity < 0:
            raise InstanceError("sizes must be positive")

    @classmethod
    def from_dict(cls, doc: dict) -> "ScenarioSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise InstanceError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def _streams(self):
        pop, sel = np.random.SeedSequence(self.seed).spawn(2)
        return np.random.default_rng(pop), np.random.default_rng(sel)


@dataclass(frozen=True)
class ClientPopulation:
    fl_id: np.ndarray
    edge_id: np.ndarray
    data_size: np.ndarray
    s: int
    e: int

    def counts(self) -> np.ndarray:
        out = np.zeros((self.s, self.e), dtype=np.int64)
        np.add.at(out, (self.fl_id, self.edge_id), 1)
        return out

    def total_data(self) -> np.ndarray:
        out = np.zeros(self.s, dtype=np.int64)
        np.add.at(out, self.fl_id, self.data_size)
        return out

    def selection_weights(self) -> np.ndarray:
        """Per-client data share within its own FL server."""
        return self.data_size / self.total_data()[self.fl_id]


def gen_client_distribution(spec: ScenarioSpec, rng=None) -> ClientPopulation:
    rng = spec._streams()[0] if rng is None else rng
    restricted = round_count(spec.alpha * spec.s)
    narrow = round_count(spec.beta * spec.e)
    if restricted > 0 and narrow == 0:
        raise InstanceError("alpha > 0 needs at least one edge in the restricted set")
    c = spec.clients_per_fl
    fl_id = np.repeat(np.arange(spec.s), c)
    edge_id = np.empty(spec.s * c, dtype=np.int64)
    for i in range(spec.s):
        span = narrow if i < restricted else spec.e
        edge_id[i * c:(i + 1) * c] = rng.integers(0, span, size=c)
    if spec.equal_data:
        data = np.full(spec.s * c, EQUAL_DATA_SIZE, dtype=np.int64)
    else:
        lo, hi = DATA_SIZE_RANGE
        data = rng.integers(lo, hi + 1, size=spec.s * c)
    return ClientPopulation(fl_id, edge_id, data, spec.s, spec.e)


def gen_funds(spec: ScenarioSpec) -> tuple[Fraction, ...]:
    f0 = as_fraction(spec.f0)
    g = round_count(spec.gamma * spec.s)
    funds = [f0] * spec.s
    for k in range(1, g + 1):
        funds[spec.s - g + k - 1] = f0 + k * (1 - f0) / g
    return tuple(funds)


def gen_units(spec: ScenarioSpec) -> tuple[int, ...]:
    g = round_count(spec.delta * spec.s)
    units = [1] * spec.s
    for k in range(1, g + 1):
        # round() on a Fraction is half-to-even
        units[spec.s - g + k - 1] = max(1, round(1 + Fraction(k * (spec.s - 1), g)))
    return tuple(units)


def select_clients(pop: ClientPopulation, rho: float, rng=None) -> ClientDistribution:
    """Draw ``round(rho * |C_i|)`` clients per server, weighted by data size."""
    rng = np.random.default_rng() if rng is None else rng
    weights = pop.selection_weights()
    keep = np.zeros(len(pop.fl_id), dtype=bool)
    for i in range(pop.s):
        idx = np.flatnonzero(pop.fl_id == i)
        k = round_count(rho * len(idx))
        if k >= len(idx):
            keep[idx] = True
        elif k > 0:
            w = weights[idx] / weights[idx].sum()
            keep[rng.choice(idx, size=k, replace=False, p=w)] = True
    counts = np.zeros((pop.s, pop.e), dtype=np.int64)
    np.add.at(counts, (pop.fl_id[keep], pop.edge_id[keep]), 1)
    return ClientDistribution(counts)


def build_instance(spec: ScenarioSpec) -> SystemInstance:
    pop_rng, sel_rng = spec._streams()
    pop = gen_client_distribution(spec, pop_rng)
    clients = select_clients(pop, spec.rho, sel_rng)
    fl = tuple(FlServerSpec(i, f, u) for i, (f, u) in enumerate(zip(gen_funds(spec), gen_units(spec))))
    edges = tuple(EdgeServerSpec(j, spec.capacity) for j in range(spec.e))
    return SystemInstance(fl, edges, clients)


SMALL_FUNDS = (Fraction(1, 2), Fraction(5, 8), Fraction(3, 4), Fraction(7, 8), Fraction(1))


def random_competing_instance(
    rng,
    servers=(2, 3),
    edges=(1, 3),
    capacity=(1, 6),
    units=(1, 2),
    clients=(0, 3),
    funds=SMALL_FUNDS,
    max_tries: int = 10_000,
) -> SystemInstance:
    """Small random instance, redrawn until it forms a competing system.

    Ranges are inclusive (lo, hi).  Sized so that brute-force equilibrium
    checks stay cheap.
    """
    def draw(lohi, size=None):
        return rng.integers(lohi[0], lohi[1] + 1, size=size)

    for _ in range(max_tries):
        s = int(draw(servers))
        e = int(draw(edges))
        b = draw(capacity, e)
        u = draw(units, s)
        f = [funds[k] for k in rng.integers(0, len(funds), size=s)]
        c = draw(clients, (s, e))
        inst = SystemInstance.build(f, b, c, u)
        if is_competing_system(inst):
            return inst
    raise InstanceError("no competing instance found; widen the ranges")

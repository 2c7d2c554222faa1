"""Domain types and the rules of the bandwidth game.

FL servers (followers) buy uplink bandwidth units from edge servers
(leaders).  Edges post unit prices, FL servers post integer requests and
every edge splits its capacity with the proportional result rule.

Funds and prices are kept as :class:`fractions.Fraction` wherever a budget
comparison ``p * x <= f`` has to be exact.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence

import numpy as np

__all__ = [
    "InstanceError",
    "NotCompetingError",
    "FlServerSpec",
    "EdgeServerSpec",
    "ClientDistribution",
    "SystemInstance",
    "StrategyProfile",
    "Allocation",
    "Violation",
    "ConstraintReport",
    "SimOutcome",
    "as_fraction",
    "proportional_result",
    "align_to_units",
    "budget_cap",
    "settle",
    "check_constraints",
    "edge_utility",
    "fl_utility",
    "is_competing_system",
    "instance_to_dict",
    "instance_from_dict",
    "load_instance",
    "dump_instance",
]


class InstanceError(ValueError):
    """Malformed or inconsistent game input."""


class NotCompetingError(InstanceError):
    """Raised by solvers that only apply to competing systems."""

    def __init__(self, msg: str = "not a competing system"):
        super().__init__(msg)


def as_fraction(value) -> Fraction:
    """Exact rational from int, Fraction, decimal string or float.

    Floats go through ``repr`` so ``0.2`` becomes ``1/5`` rather than the
    nearest binary fraction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {value!r} to a rational")


def _int_matrix(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.int64)
    if arr.ndim != 2:
        raise InstanceError(f"{name} must be a 2-d matrix, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlServerSpec:
    id: int
    fund: Fraction
    units_per_client: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fund", as_fraction(self.fund))
        if self.fund < 0:
            raise InstanceError(f"FL server {self.id}: negative fund {self.fund}")
        if int(self.units_per_client) != self.units_per_client or self.units_per_client < 1:
            raise InstanceError(
                f"FL server {self.id}: units_per_client must be a positive integer"
            )
        object.__setattr__(self, "units_per_client", int(self.units_per_client))


@dataclass(frozen=True)
class EdgeServerSpec:
    id: int
    capacity: int

    def __post_init__(self):
        # capacity 0 (a sold-out edge) is tolerated; negatives are not
        if int(self.capacity) != self.capacity or self.capacity < 0:
            raise InstanceError(f"edge server {self.id}: capacity must be a non-negative integer")
        object.__setattr__(self, "capacity", int(self.capacity))


@dataclass(frozen=True)
class ClientDistribution:
    """Selected clients of each FL server (rows) attached to each edge (columns)."""

    counts: np.ndarray

    def __post_init__(self):
        counts = _int_matrix(self.counts, "client counts")
        if (counts < 0).any():
            raise InstanceError("client counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def row_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def __eq__(self, other):
        return isinstance(other, ClientDistribution) and np.array_equal(self.counts, other.counts)

    def __hash__(self):
        return hash((self.counts.shape, self.counts.tobytes()))


@dataclass(frozen=True)
class SystemInstance:
    fl_servers: tuple[FlServerSpec, ...]
    edge_servers: tuple[EdgeServerSpec, ...]
    clients: ClientDistribution

    def __post_init__(self):
        object.__setattr__(self, "fl_servers", tuple(self.fl_servers))
        object.__setattr__(self, "edge_servers", tuple(self.edge_servers))
        if not isinstance(self.clients, ClientDistribution):
            object.__setattr__(self, "clients", ClientDistribution(self.clients))
        s, e = len(self.fl_servers), len(self.edge_servers)
        if s < 1 or e < 1:
            raise InstanceError("need at least one FL server and one edge server")
        if self.clients.shape != (s, e):
            raise InstanceError(
                f"client counts have shape {self.clients.shape}, expected {(s, e)}"
            )

    @classmethod
    def build(cls, funds: Sequence, capacities: Sequence[int], counts, units: Sequence[int] | None = None):
        """Shorthand constructor from plain vectors."""
        units = [1] * len(funds) if units is None else list(units)
        if len(units) != len(funds):
            raise InstanceError("funds and units differ in length")
        fl = [FlServerSpec(i, f, u) for i, (f, u) in enumerate(zip(funds, units))]
        edges = [EdgeServerSpec(j, b) for j, b in enumerate(capacities)]
        return cls(tuple(fl), tuple(edges), ClientDistribution(counts))

    @property
    def s(self) -> int:
        return len(self.fl_servers)

    @property
    def e(self) -> int:
        return len(self.edge_servers)

    @property
    def funds(self) -> tuple[Fraction, ...]:
        return tuple(fs.fund for fs in self.fl_servers)

    @property
    def units(self) -> np.ndarray:
        return np.array([fs.units_per_client for fs in self.fl_servers], dtype=np.int64)

    @property
    def capacities(self) -> np.ndarray:
        return np.array([es.capacity for es in self.edge_servers], dtype=np.int64)

    @property
    def counts(self) -> np.ndarray:
        return self.clients.counts

    @property
    def demand(self) -> np.ndarray:
        """Bandwidth units needed per (server, edge): ``u_i * c_ij``."""
        return self.counts * self.units[:, None]

    @property
    def total_funds(self) -> Fraction:
        return sum(self.funds, Fraction(0))


@dataclass(frozen=True)
class StrategyProfile:
    prices: tuple[Fraction, ...]
    requests: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(as_fraction(p) for p in self.prices))
        requests = _int_matrix(self.requests, "requests")
        if (requests < 0).any():
            raise InstanceError("requests must be non-negative")
        if requests.shape[1] != len(self.prices):
            raise InstanceError("requests and prices disagree on the number of edges")
        if any(p <= 0 for p in self.prices):
            raise InstanceError("prices must be positive")
        object.__setattr__(self, "requests", requests)

    @classmethod
    def uniform(cls, price, requests) -> "StrategyProfile":
        requests = np.asarray(requests)
        return cls(tuple([as_fraction(price)] * requests.shape[1]), requests)

    def validate_for(self, instance: SystemInstance) -> None:
        if self.requests.shape != (instance.s, instance.e):
            raise InstanceError(
                f"requests have shape {self.requests.shape}, expected {(instance.s, instance.e)}"
            )
        if (self.requests > instance.capacities[None, :]).any():
            raise InstanceError("a request exceeds the edge capacity")

    def __eq__(self, other):
        return (
            isinstance(other, StrategyProfile)
            and self.prices == other.prices
            and np.array_equal(self.requests, other.requests)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Allocation:
    granted: np.ndarray

    def __post_init__(self):
        granted = _int_matrix(self.granted, "allocation")
        if (granted < 0).any():
            raise InstanceError("allocation entries must be non-negative")
        object.__setattr__(self, "granted", granted)

    @property
    def row_sum(self) -> np.ndarray:
        return self.granted.sum(axis=1)

    @property
    def col_sum(self) -> np.ndarray:
        return self.granted.sum(axis=0)

    def to_list(self) -> list[list[int]]:
        return self.granted.tolist()

    def __eq__(self, other):
        return isinstance(other, Allocation) and np.array_equal(self.granted, other.granted)

    def __repr__(self):
        return f"Allocation({self.granted.tolist()})"


@dataclass(frozen=True)
class Violation:
    constraint: str  # multiple_of_u | demand_cap | capacity | budget
    i: int | None
    j: int | None
    detail: str


@dataclass(frozen=True)
class ConstraintReport:
    violations: tuple[Violation, ...] = ()

    @property
    def satisfied(self) -> bool:
        return not self.violations

    def ids(self) -> list[tuple[str, int | None, int | None]]:
        return [(v.constraint, v.i, v.j) for v in self.violations]


@dataclass
class SimOutcome:
    """Result of running one allocation scheme on one instance."""

    scheme: str
    allocation: Allocation
    prices: tuple                     # per edge; Fractions (exact schemes) or floats
    clients_acquired: np.ndarray
    spend: tuple
    rounds: int = 0
    converged: bool = True
    diagnostics: dict = field(default_factory=dict)

    @property
    def bandwidth_acquired(self) -> np.ndarray:
        return self.allocation.row_sum


# ---------------------------------------------------------------------------
# result rule and constraints
# ---------------------------------------------------------------------------


def proportional_result(requests, capacities) -> Allocation:
    """Grant requests in full where a column fits, else floor(r * b / sum r).

    A column with zero total request grants nothing.
    """
    r = np.asarray(requests, dtype=np.int64)
    b = np.asarray(capacities, dtype=np.int64)
    if r.ndim != 2 or b.ndim != 1 or r.shape[1] != b.shape[0]:
        raise InstanceError(f"requests {r.shape} do not match capacities {b.shape}")
    if (r < 0).any():
        raise InstanceError("requests must be non-negative")
    total = r.sum(axis=0)
    over = total > b
    safe = np.where(total == 0, 1, total)
    scaled = (r * b[None, :]) // safe[None, :]
    return Allocation(np.where(over[None, :], scaled, r))


def align_to_units(granted, units) -> np.ndarray:
    """Round every x_ij down to a multiple of u_i."""
    x = np.asarray(granted, dtype=np.int64)
    u = np.asarray(units, dtype=np.int64)[:, None]
    return x - x % u


def budget_cap(row, prices, fund, unit: int) -> np.ndarray:
    """Trim one server's granted units until it can pay for them.

    Whole ``unit``-sized blocks are released from the most expensive edge
    first (ties: highest edge index), which keeps the largest number of
    blocks that fit the fund.  ``row`` is assumed to be unit-aligned.
    """
    row = np.array(row, dtype=np.int64)
    prices = [as_fraction(p) for p in prices]
    fund = as_fraction(fund)
    spend = sum((p * int(x) for p, x in zip(prices, row)), Fraction(0))
    if spend <= fund:
        return row
    excess = spend - fund
    order = sorted(range(len(row)), key=lambda j: (prices[j], j), reverse=True)
    for j in order:
        if excess <= 0:
            break
        block_cost = prices[j] * unit
        if block_cost <= 0 or row[j] == 0:
            continue
        drop = min(int(row[j]) // unit, math.ceil(excess / block_cost))
        row[j] -= drop * unit
        excess -= drop * block_cost
    return row


def settle(instance: SystemInstance, granted, prices=None) -> np.ndarray:
    """Turn raw granted units into what each server can actually use and pay for.

    Applies, in order: the per-edge demand cap ``u_i * c_ij``, unit alignment
    and (when prices are given) the per-server budget cap.
    """
    x = np.minimum(np.asarray(granted, dtype=np.int64), instance.demand)
    x = align_to_units(x, instance.units)
    if prices is not None:
        x = np.array(
            [budget_cap(x[i], prices, instance.funds[i], int(instance.units[i])) for i in range(instance.s)],
            dtype=np.int64,
        ).reshape(x.shape)
    return x


def check_constraints(instance: SystemInstance, profile: StrategyProfile, alloc: Allocation) -> ConstraintReport:
    """List every violated feasibility constraint of a game result."""
    x = alloc.granted
    shape = (instance.s, instance.e)
    if x.shape != shape or len(profile.prices) != instance.e:
        raise InstanceError(f"allocation {x.shape} / prices do not match instance {shape}")
    units, demand, caps = instance.units, instance.demand, instance.capacities
    out: list[Violation] = []
    for i in range(instance.s):
        for j in range(instance.e):
            if x[i, j] % units[i]:
                out.append(Violation("multiple_of_u", i, j, f"{x[i, j]} is not a multiple of {units[i]}"))
            if x[i, j] > demand[i, j]:
                out.append(Violation("demand_cap", i, j, f"{x[i, j]} > {demand[i, j]}"))
    for j, sold in enumerate(alloc.col_sum):
        if sold > caps[j]:
            out.append(Violation("capacity", None, j, f"{sold} > {caps[j]}"))
    for i, fs in enumerate(instance.fl_servers):
        spend = sum((p * int(v) for p, v in zip(profile.prices, x[i])), Fraction(0))
        if spend > fs.fund:
            out.append(Violation("budget", i, None, f"spend {spend} > fund {fs.fund}"))
    return ConstraintReport(tuple(out))


# ---------------------------------------------------------------------------
# utilities
# ---------------------------------------------------------------------------


def edge_utility(price, sold: int, total_funds) -> float:
    total_funds = as_fraction(total_funds)
    if total_funds <= 0:
        raise InstanceError("total funds must be positive")
    return math.log1p(float(as_fraction(price) * sold / total_funds))


def fl_utility(acquired: int, units_per_client: int, total_clients: int) -> float:
    if total_clients <= 0:
        raise InstanceError("FL utility undefined for a server without selected clients")
    return math.log1p(acquired / (units_per_client * total_clients))


# ---------------------------------------------------------------------------
# competing system
# ---------------------------------------------------------------------------


def is_competing_system(instance: SystemInstance) -> bool:
    """Every edge has two contenders and the contention graph is connected."""
    present = instance.counts >= 1
    if (present.sum(axis=0) < 2).any():
        return False
    s = instance.s
    seen = {0}
    queue = deque([0])
    while queue:
        i = queue.popleft()
        edges = np.flatnonzero(present[i])
        rivals = np.flatnonzero(present[:, edges].any(axis=1))
        for k in rivals.tolist():
            if k not in seen:
                seen.add(k)
                queue.append(k)
    return len(seen) == s


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def _fraction_to_json(value: Fraction):
    value = as_fraction(value)
    if value.denominator == 1:
        return value.numerator
    as_float = float(value)
    if as_fraction(as_float) == value:
        return as_float
    return f"{value.numerator}/{value.denominator}"


def instance_to_dict(instance: SystemInstance) -> dict:
    return {
        "fl_servers": [
            {"id": fs.id, "fund": _fraction_to_json(fs.fund), "units_per_client": fs.units_per_client}
            for fs in instance.fl_servers
        ],
        "edge_servers": [{"id": es.id, "capacity": es.capacity} for es in instance.edge_servers],
        "client_counts": instance.counts.tolist(),
    }


def instance_from_dict(doc: dict) -> SystemInstance:
    try:
        fl = sorted(doc["fl_servers"], key=lambda d: d["id"])
        edges = sorted(doc["edge_servers"], key=lambda d: d["id"])
        counts = doc["client_counts"]
    except (KeyError, TypeError) as exc:
        raise InstanceError(f"malformed instance document: {exc}") from None
    if [d["id"] for d in fl] != list(range(len(fl))) or [d["id"] for d in edges] != list(range(len(edges))):
        raise InstanceError("server ids must be 0..n-1")
    return SystemInstance(
        tuple(FlServerSpec(d["id"], as_fraction(d["fund"]), d.get("units_per_client", 1)) for d in fl),
        tuple(EdgeServerSpec(d["id"], d["capacity"]) for d in edges),
        ClientDistribution(counts),
    )


def dump_instance(instance: SystemInstance, path) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(instance_to_dict(instance), fh, indent=2)
        fh.write("\n")


def load_instance(path) -> SystemInstance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


"""Message-driven distributed scheme.

Every FL server and every edge server is an isolated agent.  Each round the
FL agents post requests, the edges answer with a price (demand over supply)
and a proportional grant, and the FL agents shift requests from expensive to
cheap edges until the quoted prices are within a ratio ``delta`` of each
other.  Messages travel over a simulated network with fixed latency (in
rounds) and independent loss; an edge that misses a request extrapolates it
from that server's request history.

Quoted prices are demand/supply ratios, not money.  For the final budget
check they are scaled by the largest factor every server can still afford,
the same read-off the centralized scheme uses for its common price.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .core import Allocation, SimOutcome, SystemInstance, proportional_result, settle


@dataclass(frozen=True)
class SimNetConfig:
    latency_ticks: int = 0
    drop_probability: float = 0.0
    seed: int = 0
    max_rounds: int = 1000

    def __post_init__(self):
        if self.latency_ticks < 0:
            raise ValueError("latency must be non-negative")
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValueError("drop probability must lie in [0, 1]")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")


@dataclass(frozen=True)
class AgentParams:
    delta: float = 0.9
    tau: float = 0.1
    stall_rounds: int = 3
    stall_tol: float = 0.1               # net target movement (L1) over the window that counts as stuck
    split: str = "full"                  # "full" or "share" correction per server
    rounding: str = "stochastic"         # "stochastic" or "nearest" (half to even)
    conserve: str = "floor"              # "floor": total request never shrinks; "exact"; "none"

    def __post_init__(self):
        if self.split not in ("share", "full"):
            raise ValueError(f"unknown split rule {self.split!r}")
        if self.rounding not in ("stochastic", "nearest"):
            raise ValueError(f"unknown rounding rule {self.rounding!r}")
        if self.conserve not in ("floor", "exact", "none"):
            raise ValueError(f"unknown conservation rule {self.conserve!r}")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


@dataclass(frozen=True)
class PriceQuote:
    edge_id: int
    price: Fraction
    capacity: int
    granted: int


# ---------------------------------------------------------------------------
# FL server agent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlAgentState:
    server: int
    requests: tuple[int, ...]
    limits: tuple[int, ...]              # min(b_j, u_i * c_ij)
    target: tuple[float, ...]            # real-valued request before rounding
    last_response: tuple                 # PriceQuote or None per edge
    params: AgentParams = AgentParams()
    converged: bool = False
    forced: bool = False                 # converged by the stall guard
    recent: tuple = ()                   # targets of the last few updates
    seed: int = 0
    updates: int = 0

    @property
    def granted(self) -> tuple[int, ...]:
        return tuple(0 if q is None else q.granted for q in self.last_response)


def initial_fl_state(instance: SystemInstance, i: int, params: AgentParams = AgentParams(), seed: int = 0) -> FlAgentState:
    u = int(instance.units[i])
    fund = instance.funds[i]
    limits = tuple(int(v) for v in np.minimum(instance.capacities, instance.demand[i]))
    start = tuple(
        max(0, min(lim, int(Fraction(int(c) * u) * fund // 1)))
        for c, lim in zip(instance.counts[i], limits)
    )
    return FlAgentState(i, start, limits, tuple(float(v) for v in start), (None,) * instance.e, params, seed=seed)


def _project(v: np.ndarray, lim: np.ndarray, total: float) -> np.ndarray:
    """Clamp ``v`` into [0, lim] while keeping its sum at ``total`` where possible."""
    v = np.clip(v, 0.0, lim)
    for _ in range(len(v) + 1):
        diff = total - v.sum()
        if abs(diff) < 1e-9:
            break
        free = (v < lim) if diff > 0 else (v > 0)
        if not free.any():
            break
        v = np.clip(v + np.where(free, diff / free.sum(), 0.0), 0.0, lim)
    return v


def fl_agent_step(state: FlAgentState, quotes) -> tuple[FlAgentState, tuple[int, ...] | None]:
    """Absorb quotes; return the new state and the next requests (None once converged).

    Convergence is not sticky: a converged agent that later sees prices
    spread apart again resumes adjusting.  Only the stall guard is final.
    """
    resp = list(state.last_response)
    for q in quotes:
        resp[q.edge_id] = q
    state = replace(state, last_response=tuple(resp))
    if any(q is None for q in resp):
        return state, state.requests
    if state.forced:
        return state, None
    prm = state.params
    prices = np.array([float(q.price) for q in resp])
    caps = np.array([q.capacity for q in resp], dtype=float)
    top = prices.max()
    if top <= 0 or prices.min() / top > prm.delta:
        return replace(state, converged=True), None

    load = prices * caps
    gap = load.sum() / caps.sum() * caps - load
    if prm.split == "share":
        # only our part of each edge's imbalance, by share of its demand
        mine = np.asarray(state.target)
        gap = gap * np.where(load > 0, mine / np.where(load > 0, load, 1.0), 1.0)
    lim = np.asarray(state.limits, dtype=float)
    before = float(sum(state.target))
    moved = np.clip(np.asarray(state.target) + gap * prm.tau, 0.0, lim)
    if prm.conserve == "exact" or (prm.conserve == "floor" and moved.sum() < before):
        moved = _project(moved, lim, before)
    if prm.rounding == "stochastic":
        # unbiased, and independent across agents so their steps do not line up
        rng = np.random.default_rng([state.seed, state.server, state.updates])
        picked = np.floor(moved + rng.random(moved.shape))
    else:
        picked = np.round(moved)
    new = tuple(int(v) for v in np.clip(picked, 0, lim))
    target = tuple(float(v) for v in moved)

    recent = (state.recent + (target,))[-(prm.stall_rounds + 1):]
    # pinned against the bounds, or only jittering around a rounding edge
    stuck = len(recent) > prm.stall_rounds and float(np.abs(np.subtract(recent[-1], recent[0])).sum()) < prm.stall_tol
    state = replace(state, requests=new, target=target, recent=recent, updates=state.updates + 1)
    if stuck:
        return replace(state, converged=True, forced=True), None
    return replace(state, converged=False), new


# ---------------------------------------------------------------------------
# edge server agent
# ---------------------------------------------------------------------------


def predict_request(history) -> int:
    """Least-squares line through the history, extrapolated one round ahead."""
    n = len(history)
    if n == 0:
        return 0
    if n == 1:
        return max(0, int(history[0]))
    t = np.arange(n, dtype=float)
    slope, icpt = np.polyfit(t, np.asarray(history, dtype=float), 1)
    return max(0, int(np.round(slope * n + icpt)))


@dataclass
class EdgeAgentState:
    edge: int
    capacity: int
    latest: list                      # last known request per FL server
    history: list                     # received requests per FL server, append-only
    units: list                       # client size announced by each FL server
    fresh: set = field(default_factory=set)
    predictions: int = 0

    @classmethod
    def empty(cls, edge: int, capacity: int, s: int) -> "EdgeAgentState":
        return cls(edge, capacity, [0] * s, [[] for _ in range(s)], [1] * s)

    def record(self, i: int, request: int, unit: int = 1) -> None:
        self.latest[i] = int(request)
        self.history[i].append(int(request))
        self.units[i] = int(unit)
        self.fresh.add(i)


def edge_agent_tick(state: EdgeAgentState) -> tuple[Fraction, list[int]]:
    """Fill in missing requests, post the demand/supply price and grant pro rata.

    Clears the freshness marks, so the next period starts empty.  An edge
    without capacity quotes its raw demand as the price.
    """
    for i in range(len(state.latest)):
        if i not in state.fresh:
            if state.history[i]:
                state.predictions += 1
            state.latest[i] = min(predict_request(state.history[i]), state.capacity)
    state.fresh = set()
    demand = sum(state.latest)
    price = Fraction(demand, state.capacity) if state.capacity > 0 else Fraction(demand)
    col = proportional_result(np.array(state.latest, dtype=np.int64)[:, None], [state.capacity])
    return price, col.granted[:, 0].tolist()


# ---------------------------------------------------------------------------
# event loop
# ---------------------------------------------------------------------------


class _Network:
    """Deterministic delayed, lossy mailbox keyed by destination."""

    def __init__(self, cfg: SimNetConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.queue: list = []
        self.seq = itertools.count()
        self.sent = 0
        self.dropped = 0

    def send(self, now: int, dest, payload) -> None:
        self.sent += 1
        if self.cfg.drop_probability > 0 and self.rng.random() < self.cfg.drop_probability:
            self.dropped += 1
            return
        heapq.heappush(self.queue, (now + self.cfg.latency_ticks, next(self.seq), dest, payload))

    def deliver(self, now: int, kind: str) -> list:
        out, keep = [], []
        while self.queue and self.queue[0][0] <= now:
            item = heapq.heappop(self.queue)
            (out if item[2][0] == kind else keep).append(item)
        for item in keep:
            heapq.heappush(self.queue, item)
        return [(dest[1], payload) for _, _, dest, payload in out]


def fill_column(requests, units, capacity: int) -> np.ndarray:
    """Allocation an edge settles on at the convergence point.

    Starts from the proportional grants, aligned to whole clients, and hands
    out the leftover capacity one client's worth at a time to the server
    furthest below its exact proportional share (largest remainder, ties to
    the lowest index).  Nobody is granted more than it asked for.
    """
    rr = np.asarray(requests, dtype=np.int64)
    u = np.asarray(units, dtype=np.int64)
    x = proportional_result(rr[:, None], [capacity]).granted[:, 0]
    x = x - x % u
    total = int(rr.sum())
    if total == 0:
        return x
    # shortfalls against rr_i * b / total, kept exact as integers over total
    share = rr * min(int(capacity), total)
    left = int(capacity) - int(x.sum())
    while left > 0:
        ok = (rr - x >= u) & (u <= left)
        if not ok.any():
            break
        short = share - x * total
        k = int(np.argmax(np.where(ok, short, np.iinfo(np.int64).min)))
        x[k] += u[k]
        left -= int(u[k])
    return x


def monetary_prices(prices, granted, funds) -> list[Fraction]:
    """Turn demand/supply ratios into money prices for the final allocation.

    The ratios are scaled by the largest common factor at which every server
    can still pay for what it was granted, i.e. the smallest fund over
    ratio-weighted volume.  Nothing bought means zero prices.
    """
    ratios = [Fraction(p) for p in prices]
    scale = None
    for row, fund in zip(np.asarray(granted), funds):
        cost = sum((p * int(v) for p, v in zip(ratios, row)), Fraction(0))
        if cost > 0:
            f = Fraction(fund) / cost
            scale = f if scale is None else min(scale, f)
    if scale is None:
        return [Fraction(0)] * len(ratios)
    return [p * scale for p in ratios]


def run_distributed(
    instance: SystemInstance,
    net: SimNetConfig = SimNetConfig(),
    params: AgentParams = AgentParams(),
    fill: bool = True,
) -> SimOutcome:
    """Run the agents until they all report convergence on a certified quote.

    The run stops in the first round where every FL agent has accepted and
    the prices just posted by the edges pass the ratio test, when every
    agent gave up through the stall guard, or after ``max_rounds``.  With
    ``fill`` the final grants use :func:`fill_column` instead of the plain
    proportional floors.
    """
    s, e = instance.s, instance.e
    caps = instance.capacities
    agents = [initial_fl_state(instance, i, params, seed=net.seed) for i in range(s)]
    edges = [EdgeAgentState.empty(j, int(caps[j]), s) for j in range(e)]
    network = _Network(net)
    outgoing = [a.requests for a in agents]
    trace: list[tuple] = []
    prices = [Fraction(0)] * e
    grants = np.zeros((s, e), dtype=np.int64)
    rounds = 0
    done = False
    for t in range(net.max_rounds):
        rounds = t + 1
        for i, req in enumerate(outgoing):
            for j in range(e):
                network.send(t, ("edge", j), (i, req[j], int(instance.units[i])))
        for j, (i, req, unit) in network.deliver(t, "edge"):
            edges[j].record(i, req, unit)
        for j, edge in enumerate(edges):
            prices[j], col = edge_agent_tick(edge)
            grants[:, j] = col
            if grants[:, j].sum() > caps[j]:
                raise AssertionError(f"edge {j} over-allocated at round {t}")
            trace.append((t, j, prices[j], sum(edge.latest)))
            for i in range(s):
                network.send(t, ("fl", i), PriceQuote(j, prices[j], int(caps[j]), int(col[i])))
        inbox = [[] for _ in range(s)]
        for i, quote in network.deliver(t, "fl"):
            inbox[i].append(quote)
        for i in range(s):
            if inbox[i]:
                agents[i], nxt = fl_agent_step(agents[i], inbox[i])
                outgoing[i] = agents[i].requests if nxt is None else nxt
        top = max(prices)
        certified = top <= 0 or float(min(prices) / top) > params.delta
        if all(a.forced for a in agents) or (certified and all(a.converged for a in agents)):
            done = True
            break

    if fill:
        raw = np.stack(
            [fill_column(ed.latest, ed.units, ed.capacity) for ed in edges], axis=1
        )
    else:
        raw = grants.copy()
    usable = settle(instance, raw)
    money = monetary_prices(prices, usable, instance.funds)
    x = settle(instance, usable, money)
    spend = tuple(sum((p * int(v) for p, v in zip(money, row)), Fraction(0)) for row in x)
    ratio = float(min(prices) / max(prices)) if max(prices) > 0 else 1.0
    return SimOutcome(
        scheme="distributed",
        allocation=Allocation(x),
        prices=tuple(money),
        clients_acquired=x.sum(axis=1) // instance.units,
        spend=spend,
        rounds=rounds,
        converged=done,
        diagnostics={
            "quoted_prices": tuple(prices),
            "price_ratio": ratio,
            "certified": done and ratio > params.delta,
            "forced": sum(a.forced for a in agents),
            "predictions": sum(ed.predictions for ed in edges),
            "messages_sent": network.sent,
            "messages_dropped": network.dropped,
            "raw_allocation": raw,
            "price_trace": trace,
        },
    )

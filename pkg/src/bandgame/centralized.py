"""Rank-driven greedy allocation with a hypothetical central controller.

One client's worth of bandwidth is handed out per step to the FL server
with the lowest rank (granted units over fund), on the edge with the best
ratio of leftover capacity to estimated contention.  The common price is
read off the final allocation as the smallest fund-per-unit ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import Allocation, InstanceError, SystemInstance

INF = math.inf


@dataclass
class CentralizedState:
    remaining_capacity: np.ndarray          # rb_j
    rank: list                              # rk_i, Fraction or inf
    remaining_request: np.ndarray           # rr_ij
    granted: np.ndarray                     # x_ij

    @classmethod
    def initial(cls, instance: SystemInstance) -> "CentralizedState":
        rb = instance.capacities.copy()
        u = instance.units
        rr = np.minimum(rb[None, :] // u[:, None], instance.counts) * u[:, None]
        rank = [Fraction(0) if rr[i].sum() > 0 else INF for i in range(instance.s)]
        return cls(rb, rank, rr, np.zeros_like(rr))

    def active(self) -> list[int]:
        return [i for i, r in enumerate(self.rank) if r != INF]


@dataclass(frozen=True)
class Grant:
    step: int
    i: int
    j: int
    rb_after: int
    rank_after: object


@dataclass
class CentralizedResult:
    price: Fraction | None                  # None when nothing was allocated
    allocation: Allocation
    trace: list = field(default_factory=list)
    steps: int = 0


def score_edge(state: CentralizedState, i_star: int, j: int, funds, units) -> float | Fraction:
    """Leftover capacity after the grant over the fund-weighted request share on ``j``.

    A zero denominator (no active server still asks for ``j``) scores +inf.
    """
    active = state.active()
    fund_total = sum((funds[i] for i in active), Fraction(0))
    denom = Fraction(0)
    for i in active:
        row = int(state.remaining_request[i].sum())
        if row == 0 or fund_total == 0:
            continue
        denom += Fraction(int(state.remaining_request[i, j]), row) * (funds[i] / fund_total)
    numer = int(state.remaining_capacity[j]) - int(units[i_star])
    if denom == 0:
        return INF
    return Fraction(numer) / denom


def _pick(scores: dict, rng):
    if rng is None:
        best = max(scores.values())
        return min(j for j, v in scores.items() if v == best)
    eligible = sorted(scores)
    inf = [j for j in eligible if scores[j] == INF]
    if inf:
        return inf[int(rng.integers(len(inf)))]
    w = np.array([max(float(scores[j]), 0.0) for j in eligible])
    if w.sum() == 0:
        return eligible[int(rng.integers(len(eligible)))]
    return eligible[int(rng.choice(len(eligible), p=w / w.sum()))]


def run_centralized(instance: SystemInstance, stochastic: bool = False, seed: int | None = None) -> CentralizedResult:
    """Greedy allocation loop; deterministic unless ``stochastic`` is set.

    In stochastic mode the edge is drawn with probability proportional to
    its (non-negative) score instead of taking the argmax.
    """
    funds = instance.funds
    units = instance.units
    demand = instance.demand
    need = demand.sum(axis=1)
    for i, f in enumerate(funds):
        if f <= 0 and need[i] > 0:
            raise InstanceError(f"FL server {i} has clients but no fund")
    rng = np.random.default_rng(seed) if stochastic else None
    st = CentralizedState.initial(instance)
    trace: list[Grant] = []
    step = 0
    limit = int(instance.capacities.sum()) + instance.s + 1
    while st.active():
        step += 1
        if step > limit * 2:  # cannot happen; every pass grants or retires
            raise RuntimeError("centralized loop failed to terminate")
        i_star = min(st.active(), key=lambda i: (st.rank[i], i))
        u = int(units[i_star])
        if st.remaining_capacity.max() < u:
            st.rank[i_star] = INF
            continue
        eligible = [
            j for j in range(instance.e)
            if st.granted[i_star, j] < demand[i_star, j] and st.remaining_capacity[j] >= u
        ]
        if not eligible:
            st.rank[i_star] = INF
            continue
        scores = {j: score_edge(st, i_star, j, funds, units) for j in eligible}
        j_star = _pick(scores, rng)
        st.remaining_request[i_star, j_star] = max(0, st.remaining_request[i_star, j_star] - u)
        st.remaining_capacity[j_star] -= u
        st.granted[i_star, j_star] += u
        total = int(st.granted[i_star].sum())
        if total > need[i_star] - u:
            st.rank[i_star] = INF
        else:
            st.rank[i_star] = Fraction(total) / funds[i_star]
        trace.append(Grant(step, i_star, j_star, int(st.remaining_capacity[j_star]), st.rank[i_star]))
    bought = st.granted.sum(axis=1)
    ratios = [funds[i] / int(bought[i]) for i in range(instance.s) if bought[i] > 0]
    price = min(ratios) if ratios else None
    return CentralizedResult(price, Allocation(st.granted), trace, step)


def trace_rows(result: CentralizedResult) -> list[tuple]:
    """Grant log as (step, i, j, rb_after, rank_after) with ranks rendered as text."""
    def fmt(r):
        if r == INF:
            return "inf"
        return str(r) if isinstance(r, Fraction) and r.denominator != 1 else str(int(r))
    return [(g.step, g.i, g.j, g.rb_after, fmt(g.rank_after)) for g in result.trace]

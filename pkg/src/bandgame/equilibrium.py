"""Exact equilibrium oracle for small instances.

Two halves:

* verification - whether a strategy profile is a followers' Nash equilibrium
  and, with a finite grid of leader prices, a Nash equilibrium of the whole
  game;
* construction - the smallest common price for which an allocation obeying
  the game rules and the "cannot afford one more client" condition exists.

Everything here is enumeration over integer strategies, so it only scales
to a handful of servers with single-digit capacities.  Prices and funds are
scaled to a common integer denominator so every budget comparison is exact.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from itertools import product

import numpy as np

from .core import (
    Allocation,
    InstanceError,
    NotCompetingError,
    StrategyProfile,
    SystemInstance,
    as_fraction,
    check_constraints,
    fl_utility,
    is_competing_system,
    settle,
)

DEFAULT_MAX_ENUM = 10**7
DEFAULT_MAX_JOINT = 5 * 10**7
LEADER_STEPS = tuple(Fraction(k, 20) for k in range(1, 5))


class EnumerationTooLarge(InstanceError):
    """The instance is too large for exhaustive enumeration."""


def max_enum_default() -> int:
    raw = os.environ.get("BANDGAME_MAX_ENUM")
    return int(raw) if raw else DEFAULT_MAX_ENUM


@dataclass(frozen=True)
class EquilibriumSolution:
    price: Fraction | None
    allocation: Allocation | None
    feasible: bool
    saturated: bool = False  # every server fully served at the returned price

    def profile(self) -> StrategyProfile:
        """Uniform-price profile with requests equal to the allocation."""
        if not self.feasible:
            raise InstanceError("no feasible solution to build a profile from")
        return StrategyProfile.uniform(self.price, self.allocation.granted)


@dataclass(frozen=True)
class DeviationWitness:
    deviator: int
    alternative_requests: tuple[int, ...]
    utility_gain: float


@dataclass(frozen=True)
class LeaderWitness:
    edge: int
    price: Fraction
    requests: np.ndarray  # a followers' equilibrium under the deviated prices
    revenue_before: Fraction
    revenue_after: Fraction


@dataclass
class GameNEReport:
    is_ne: bool | None               # None: undecided (enumeration budget exceeded)
    follower_witness: DeviationWitness | None = None
    leader_witness: LeaderWitness | None = None
    undecided: list = field(default_factory=list)  # (edge, price) pairs left open
    note: str = ""

    def __bool__(self):
        return bool(self.is_ne)


@dataclass
class TheoremReport:
    solution: EquilibriumSolution
    constraints_ok: bool
    same_price: bool
    cannot_afford_more: bool
    minimal_price: bool
    is_ne: bool | None
    game: GameNEReport | None = None

    @property
    def results(self) -> dict:
        return {"T1": self.same_price, "T2": self.cannot_afford_more, "T3": self.minimal_price, "T4": self.is_ne}

    @property
    def all_pass(self) -> bool:
        return self.constraints_ok and all(v is True for v in self.results.values())


# ---------------------------------------------------------------------------
# exact integer scaling and vectorised settlement
# ---------------------------------------------------------------------------


class _Scale:
    """Prices and funds multiplied by a common denominator."""

    def __init__(self, prices, funds):
        prices = [as_fraction(p) for p in prices]
        funds = [as_fraction(f) for f in funds]
        den = 1
        for v in prices + funds:
            den = den * v.denominator // math.gcd(den, v.denominator)
        self.prices = prices
        self.price_int = [int(p * den) for p in prices]
        self.fund_int = [int(f * den) for f in funds]
        big = max(self.price_int + self.fund_int + [1])
        self.dtype = np.int64 if big < 2**40 else object
        # most expensive edge first, ties by highest index; matches core.budget_cap
        self.drop_order = sorted(range(len(prices)), key=lambda j: (prices[j], j), reverse=True)


def _settle_rows(pre, demand_row, unit: int, scale: _Scale, i: int):
    """Vectorised demand cap, unit alignment and budget cap for server ``i``.

    ``pre`` has shape (..., e).  Returns the settled array of the same shape.
    """
    x = np.minimum(pre, demand_row)
    x = x - x % unit
    if scale.dtype is object:
        x = x.astype(object)
    price = np.array(scale.price_int, dtype=scale.dtype)
    excess = (x * price).sum(axis=-1) - scale.fund_int[i]
    for j in scale.drop_order:
        block = scale.price_int[j] * unit
        if block <= 0:
            continue
        need = np.where(excess > 0, -(-excess // block), 0)
        drop = np.minimum(x[..., j] // unit, need)
        x[..., j] = x[..., j] - drop * unit
        excess = excess - drop * block
    return x.astype(np.int64)


def _granted(r, others, caps):
    """Proportional result for one server given the others' column totals."""
    total = r + others
    safe = np.where(total == 0, 1, total)
    return np.where(total > caps, (r * caps) // safe, r)


def _strategy_space(caps) -> np.ndarray:
    grids = np.indices(tuple(int(b) + 1 for b in caps)).reshape(len(caps), -1).T
    return np.ascontiguousarray(grids, dtype=np.int64)


def _guard(instance: SystemInstance, max_enum: int | None) -> int:
    max_enum = max_enum_default() if max_enum is None else max_enum
    size = int(np.prod(instance.capacities + 1))
    if size > max_enum:
        raise EnumerationTooLarge(
            f"too large: {size} request vectors per server exceeds enumeration budget {max_enum}"
        )
    return max_enum


def effective_allocation(instance: SystemInstance, profile: StrategyProfile) -> np.ndarray:
    """Units each server actually keeps: proportional result, then settled."""
    from .core import proportional_result

    raw = proportional_result(profile.requests, instance.capacities).granted
    return settle(instance, raw, profile.prices)


# ---------------------------------------------------------------------------
# followers' equilibrium
# ---------------------------------------------------------------------------


def check_followers_ne(instance: SystemInstance, profile: StrategyProfile, max_enum: int | None = None):
    """Return a profitable unilateral deviation of some FL server, or None.

    The deviator's result is recomputed with the others' requests held
    fixed, capped at its demand, aligned to its unit size and trimmed to
    its fund.  Servers without selected clients are skipped.
    """
    profile.validate_for(instance)
    _guard(instance, max_enum)
    caps = instance.capacities
    space = _strategy_space(caps)
    scale = _Scale(profile.prices, instance.funds)
    requests = profile.requests
    col_total = requests.sum(axis=0)
    totals = instance.counts.sum(axis=1)
    for i in range(instance.s):
        if totals[i] == 0:
            continue
        unit = int(instance.units[i])
        others = col_total - requests[i]
        rows = _settle_rows(_granted(space, others, caps), instance.demand[i], unit, scale, i)
        got = rows.sum(axis=1)
        current = _settle_rows(_granted(requests[i][None, :], others, caps), instance.demand[i], unit, scale, i)
        now = int(current.sum())
        best = int(np.argmax(got))
        if got[best] > now:
            gain = fl_utility(int(got[best]), unit, int(totals[i])) - fl_utility(now, unit, int(totals[i]))
            return DeviationWitness(i, tuple(int(v) for v in space[best]), gain)
    return None


class _FollowerGame:
    """Best-response tables of the followers' game under fixed prices.

    A server's result depends on the others only through the column totals
    of their requests, so each table is indexed by (own request, others'
    column totals).
    """

    def __init__(self, instance: SystemInstance, prices, watch_edge: int):
        self.instance = instance
        caps = instance.capacities
        s = instance.s
        self.space = _strategy_space(caps)
        dims = tuple(int((s - 1) * b) + 1 for b in caps)
        self.strides = np.array([int(np.prod(dims[j + 1:])) for j in range(len(dims))], dtype=np.int64)
        others = np.indices(dims).reshape(len(dims), -1).T.astype(np.int64)
        self.code = self.space @ self.strides
        sizes = [int(b) + 1 for b in caps]
        self.radix = np.array([int(np.prod(sizes[j + 1:])) for j in range(len(sizes))], dtype=np.int64)
        scale = _Scale(prices, instance.funds)
        self.best = []
        self.watch = []
        active = instance.counts.sum(axis=1) > 0
        for i in range(s):
            pre = _granted(self.space[:, None, :], others[None, :, :], caps)
            x = _settle_rows(pre, instance.demand[i], int(instance.units[i]), scale, i)
            got = x.sum(axis=-1)
            if active[i]:
                self.best.append(got == got.max(axis=0, keepdims=True))
            else:
                # no clients: only the null request is considered
                mask = np.zeros_like(got, dtype=bool)
                mask[0, :] = True
                self.best.append(mask)
            self.watch.append(x[..., watch_edge])

    @property
    def size(self) -> int:
        return len(self.space) ** self.instance.s

    def best_response(self, i: int, others_code: int) -> int:
        return int(np.argmax(self.best[i][:, others_code]))

    def max_watched(self):
        """Largest watched-edge sale over all followers' equilibria, with one witness."""
        s = self.instance.s
        K = len(self.space)
        best_val, best_profile = -1, None
        code = self.code
        a = np.repeat(np.arange(K), K)   # second-to-last server
        b = np.tile(np.arange(K), K)     # last server
        for head in product(range(K), repeat=s - 2):
            head_code = int(sum(code[h] for h in head))
            ok = np.ones(K * K, dtype=bool)
            val = np.zeros(K * K, dtype=np.int64)
            for pos, h in enumerate(head):
                oc = head_code - code[h] + code[a] + code[b]
                ok &= self.best[pos][h, oc]
                val += self.watch[pos][h, oc]
            oc_a = head_code + code[b]
            oc_b = head_code + code[a]
            ok &= self.best[s - 2][a, oc_a]
            ok &= self.best[s - 1][b, oc_b]
            if not ok.any():
                continue
            val += self.watch[s - 2][a, oc_a] + self.watch[s - 1][b, oc_b]
            val = np.where(ok, val, -1)
            k = int(np.argmax(val))
            if val[k] > best_val:
                best_val = int(val[k])
                best_profile = list(head) + [int(a[k]), int(b[k])]
        if best_profile is None:
            return -1, None
        return best_val, self.space[best_profile]

    def index_of(self, r) -> int:
        """Position of request vector ``r`` in the (lexicographic) strategy space."""
        return int(np.asarray(r) @ self.radix)

    def dynamics(self, start: np.ndarray, max_iter: int = 200):
        """Round-robin best-response dynamics; returns an equilibrium or None."""
        r = start.copy()
        for _ in range(max_iter):
            moved = False
            for i in range(self.instance.s):
                others = int((r.sum(axis=0) - r[i]) @ self.strides)
                if not self.best[i][self.index_of(r[i]), others]:
                    r[i] = self.space[self.best_response(i, others)]
                    moved = True
            if not moved:
                return r
        return None

    def watched_sale(self, r: np.ndarray) -> int:
        total = 0
        for i in range(self.instance.s):
            others = int((r.sum(axis=0) - r[i]) @ self.strides)
            total += int(self.watch[i][self.index_of(r[i]), others])
        return total


# ---------------------------------------------------------------------------
# game equilibrium
# ---------------------------------------------------------------------------


def candidate_prices(instance: SystemInstance) -> list[Fraction]:
    """Budget-boundary prices ``f_i / m`` plus the all-zero fallback ``max f_i / u_i``."""
    supply = int(instance.capacities.sum())
    cands = {f / m for f in instance.funds if f > 0 for m in range(1, supply + 1)}
    positive = [(f / int(u)) for f, u in zip(instance.funds, instance.units) if f > 0]
    if positive:
        cands.add(max(positive))
    return sorted(cands)


def leader_grid(instance: SystemInstance, price: Fraction) -> list[Fraction]:
    grid = set(candidate_prices(instance))
    for step in LEADER_STEPS:
        grid.add(price * (1 + step))
        grid.add(price * (1 - step))
    return sorted(p for p in grid if p > 0 and p != price)


def _revenue_bound(instance: SystemInstance, j: int, price: Fraction) -> Fraction:
    """Upper bound on what edge ``j`` can sell at ``price`` in any profile."""
    cap = int(instance.capacities[j])
    total = 0
    for i, fs in enumerate(instance.fl_servers):
        u = int(instance.units[i])
        affordable = u * int(fs.fund // (price * u))
        aligned_cap = cap - cap % u
        total += min(int(instance.demand[i, j]), affordable, aligned_cap)
    return price * min(cap, total)


def check_game_ne(
    instance: SystemInstance,
    profile: StrategyProfile,
    grid=None,
    max_enum: int | None = None,
    max_joint: int = DEFAULT_MAX_JOINT,
) -> GameNEReport:
    """Decide whether ``profile`` is an equilibrium of the whole game.

    Leader deviations are drawn from a finite grid (default: the candidate
    prices plus +-5..20% around each edge's own price).  For every deviation
    an improving followers' equilibrium is looked for exhaustively; when the
    joint strategy space exceeds ``max_joint`` only best-response dynamics
    are tried and the pair is reported as undecided.
    """
    if not is_competing_system(instance):
        raise NotCompetingError()
    profile.validate_for(instance)
    witness = check_followers_ne(instance, profile, max_enum)
    if witness is not None:
        return GameNEReport(False, follower_witness=witness, note="followers can deviate")
    current = effective_allocation(instance, profile)
    sold = current.sum(axis=0)
    undecided = []
    for j in range(instance.e):
        pj = profile.prices[j]
        before = pj * int(sold[j])
        prices_j = leader_grid(instance, pj) if grid is None else [as_fraction(p) for p in grid]
        for q in prices_j:
            if q == pj or q <= 0 or _revenue_bound(instance, j, q) <= before:
                continue
            prices = list(profile.prices)
            prices[j] = q
            game = _FollowerGame(instance, prices, j)
            if game.size <= max_joint:
                best, r = game.max_watched()
                if r is not None and q * best > before:
                    return GameNEReport(
                        False,
                        leader_witness=LeaderWitness(j, q, r, before, q * best),
                        note=f"edge {j} gains by moving its price to {q}",
                    )
                continue
            r = game.dynamics(profile.requests)
            if r is not None and q * game.watched_sale(r) > before:
                return GameNEReport(
                    False,
                    leader_witness=LeaderWitness(j, q, r, before, q * game.watched_sale(r)),
                    note=f"edge {j} gains by moving its price to {q}",
                )
            undecided.append((j, q))
    if undecided:
        return GameNEReport(None, undecided=undecided, note="joint search budget exceeded")
    return GameNEReport(True)


# ---------------------------------------------------------------------------
# minimum-price solver
# ---------------------------------------------------------------------------


def _row_bounds(instance: SystemInstance, price: Fraction, unit_aligned: bool):
    """Per-server granule size, cell caps and admissible row totals (in granules)."""
    out = []
    for i, fs in enumerate(instance.fl_servers):
        u = int(instance.units[i])
        g = u if unit_aligned else 1
        cell = tuple(int(v) for v in instance.demand[i] // g)
        full = int(instance.demand[i].sum()) // g
        budget = fs.fund / (price * g)
        hi = min(full, math.floor(budget))
        lo = max(0, min(full, math.floor(budget - Fraction(u, g)) + 1))
        out.append((g, cell, lo, hi))
    return out


def _lex_smallest(instance: SystemInstance, bounds):
    """Lexicographically smallest allocation meeting the row bounds, or None."""
    s, e = instance.s, instance.e
    caps = tuple(int(b) for b in instance.capacities)

    @lru_cache(maxsize=None)
    def fill(i: int, j: int, acc: int, rb: tuple):
        if i == s:
            return ()
        g, cell, lo, hi = bounds[i]
        if j == e:
            if lo <= acc <= hi:
                nxt = fill(i + 1, 0, 0, rb)
                return None if nxt is None else nxt
            return None
        room = sum(min(cell[k], rb[k] // g) for k in range(j, e))
        if acc + room < lo:
            return None
        top = min(cell[j], rb[j] // g, hi - acc)
        for v in range(0, top + 1):
            nb = rb if v == 0 else rb[:j] + (rb[j] - v * g,) + rb[j + 1:]
            rest = fill(i, j + 1, acc + v, nb)
            if rest is not None:
                return (v * g,) + rest
        return None

    flat = fill(0, 0, 0, caps)
    fill.cache_clear()
    if flat is None:
        return None
    return np.array(flat, dtype=np.int64).reshape(s, e)


def feasible_allocation(instance: SystemInstance, price, unit_aligned: bool = True):
    """An allocation satisfying every price-dependent condition at ``price``, or None."""
    price = as_fraction(price)
    if price <= 0:
        return None
    return _lex_smallest(instance, _row_bounds(instance, price, unit_aligned))


def _all_saturated(instance: SystemInstance, x: np.ndarray) -> bool:
    return bool((x.sum(axis=1) == instance.demand.sum(axis=1)).all())


def solve_min_price(instance: SystemInstance, max_enum: int | None = None, unit_aligned: bool = True) -> EquilibriumSolution:
    """Smallest candidate common price admitting a feasible allocation.

    When the smallest feasible candidate already serves everybody in full
    the minimum is an artefact of the candidate grid (every lower price
    works too); the highest candidate at which everyone is still fully
    served is returned instead and the solution is flagged ``saturated``.
    """
    if not is_competing_system(instance):
        raise NotCompetingError()
    _guard(instance, max_enum)
    cands = candidate_prices(instance)
    for k, p in enumerate(cands):
        x = feasible_allocation(instance, p, unit_aligned)
        if x is None:
            continue
        if not _all_saturated(instance, x):
            return EquilibriumSolution(p, Allocation(x), True)
        for q in reversed(cands[k:]):
            y = feasible_allocation(instance, q, unit_aligned)
            if y is not None and _all_saturated(instance, y):
                return EquilibriumSolution(q, Allocation(y), True, saturated=True)
    return EquilibriumSolution(None, None, False)


def is_minimal(instance: SystemInstance, sol: EquilibriumSolution, unit_aligned: bool = True) -> bool:
    """Re-check the extremality of ``sol.price`` against every other candidate."""
    if not sol.feasible:
        return False
    cands = candidate_prices(instance)
    if sol.saturated:
        higher = [q for q in cands if q > sol.price]
        return all(
            (y := feasible_allocation(instance, q, unit_aligned)) is None or not _all_saturated(instance, y)
            for q in higher
        )
    lower = [q for q in cands if q < sol.price]
    return all(feasible_allocation(instance, q, unit_aligned) is None for q in lower)


def theorem_property_suite(
    instance: SystemInstance,
    max_enum: int | None = None,
    max_joint: int = DEFAULT_MAX_JOINT,
    check_ne: bool = True,
) -> TheoremReport:
    """Solve the instance and check the structural claims about its equilibrium."""
    sol = solve_min_price(instance, max_enum)
    if not sol.feasible:
        return TheoremReport(sol, False, False, False, False, False)
    profile = sol.profile()
    x = sol.allocation.granted
    constraints_ok = check_constraints(instance, profile, sol.allocation).satisfied
    same = len(set(profile.prices)) == 1
    units = instance.units
    bought = x.sum(axis=1)
    need = instance.demand.sum(axis=1)
    t2 = all(
        (int(bought[i]) + int(units[i])) * sol.price > instance.funds[i]
        for i in range(instance.s)
        if bought[i] < need[i]
    )
    t3 = is_minimal(instance, sol)
    game = check_game_ne(instance, profile, max_enum=max_enum, max_joint=max_joint) if check_ne else None
    return TheoremReport(sol, constraints_ok, same, t2, t3, None if game is None else game.is_ne, game)

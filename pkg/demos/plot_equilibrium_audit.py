"""
Auditing the minimum-price equilibrium
======================================

The oracle picks the smallest common price at which every server buys as
much as it can afford. This script checks, on small random markets,
whether that price can be undercut by a single edge or a single FL server.
"""

from collections import Counter

import numpy as np

from bandgame.centralized import run_centralized
from bandgame.equilibrium import theorem_property_suite
from bandgame.scenarios import random_competing_instance

rng = np.random.default_rng(0)
tally = Counter()
example = None
for _ in range(40):
    inst = random_competing_instance(rng)
    rep = theorem_property_suite(inst)
    tally["feasible"] += rep.solution.feasible
    tally["common price, nobody can afford more, minimal"] += rep.results["T1"] and rep.results["T2"] and rep.results["T3"]
    tally["no profitable deviation"] += rep.is_ne is True
    tally["centralized price equals oracle"] += run_centralized(inst).price == rep.solution.price
    if rep.is_ne is False and example is None:
        example = (inst, rep)

for k, v in tally.items():
    print(f"{v:3d}/40  {k}")

###############################################################################
# A market where an edge gains by moving its price.  With only a handful of
# units, one price step changes who can afford what, and revenue follows.

if example is not None:
    inst, rep = example
    print("funds", [str(f) for f in inst.funds], "units", inst.units.tolist(),
          "capacities", inst.capacities.tolist())
    print("clients", inst.counts.tolist())
    print("oracle price", rep.solution.price, "allocation", rep.solution.allocation.to_list())
    print(rep.game.note)
    w = rep.game.leader_witness
    if w is not None:
        print("revenue", w.revenue_before, "->", w.revenue_after, "with requests", w.requests.tolist())

"""
Client, fund and bandwidth heterogeneity
========================================

Sweeps the three heterogeneity knobs over the default five-by-five system
and prints the mean number of clients each FL server ends up with.  CSV and
gnuplot files land in ``demo_out/``.

* alpha, beta: a fraction alpha of the FL servers only reaches the first
  beta share of the edges.
* gamma: the last gamma share of servers gets funds rising from 0.5 to 1.
* delta: the last delta share of servers needs more bandwidth per client.
"""

import os

import numpy as np

from bandgame.harness import figure_dat, mean_jain, sweep, write_csv
from bandgame.scenarios import ScenarioSpec

OUT = "demo_out"
os.makedirs(OUT, exist_ok=True)
SEEDS = range(5)


def table(rows, key):
    for scheme in ("centralized", "distributed", "baseline"):
        per = {}
        for r in rows:
            if r.scheme == scheme:
                per.setdefault(getattr(r, key), []).append(r)
        for v, rs in per.items():
            means = [np.mean([r.clients_acquired for r in rs if r.fl_server == i]) for i in range(5)]
            print(f"  {scheme:12s} {key}={v:<4} " + " ".join(f"{m:5.1f}" for m in means))


###############################################################################
# Client placement.  At alpha=0.4, beta=0.6 servers S0 and S1 crowd onto
# edges E0..E2.  The baseline grants in proportion to requests and leaves
# them short; both game schemes even things out.

g = [0.2, 0.4, 0.6, 0.8]
rows = sweep(ScenarioSpec(), {"alpha": g, "beta": g}, seeds=SEEDS)
write_csv(rows, f"{OUT}/alpha_beta.csv")
for scheme in ("centralized", "distributed", "baseline"):
    print(f"mean Jain at alpha=0.4 beta=0.6, {scheme}: {mean_jain(rows, scheme, alpha=0.4, beta=0.6):.3f}")

###############################################################################
# Funds.  Richer servers sit lower in the greedy rank (units over fund) and
# can pay more in the distributed market, so they end up with more clients.

rows = sweep(ScenarioSpec(), {"gamma": [0.0, 0.4, 0.6, 0.8]}, seeds=SEEDS)
write_csv(rows, f"{OUT}/gamma.csv")
with open(f"{OUT}/gamma.dat", "w") as fh:
    fh.write(figure_dat(rows, ("gamma",)))
print("clients per server by fund skew")
table(rows, "gamma")

###############################################################################
# Bandwidth per client.  Bandwidth is shared about evenly, so servers with
# bigger clients get fewer of them.

rows = sweep(ScenarioSpec(clients_per_fl=250, capacity=50), {"delta": [1.0]}, seeds=SEEDS)
write_csv(rows, f"{OUT}/delta.csv")
print("clients per server with units (2, 3, 3, 4, 5)")
table(rows, "delta")

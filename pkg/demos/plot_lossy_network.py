"""
Price talk over a lossy network
===============================

The distributed scheme needs nothing but request and price messages.  We
lose up to two in five of them and delay the rest by up to two rounds.
Edges fill the gaps with a straight-line forecast of each server's
requests.  At the heaviest loss the prices keep drifting and the run hits
its round limit; the allocation is still feasible, just not certified.
"""

from bandgame.distributed import AgentParams, SimNetConfig, run_distributed
from bandgame.harness import jain_index
from bandgame.scenarios import ScenarioSpec, build_instance

inst = build_instance(ScenarioSpec(seed=3))

for drop, latency in [(0.0, 0), (0.2, 1), (0.4, 2)]:
    net = SimNetConfig(latency_ticks=latency, drop_probability=drop, seed=3)
    out = run_distributed(inst, net, AgentParams())
    d = out.diagnostics
    print(f"drop={drop:.1f} latency={latency}: rounds={out.rounds:4d} certified={d['certified']!s:5s} "
          f"min/max price={d['price_ratio']:.3f} forecasts={d['predictions']:4d} "
          f"lost={d['messages_dropped']}/{d['messages_sent']} "
          f"clients={out.clients_acquired.tolist()} jain={jain_index(out.clients_acquired):.3f}")

###############################################################################
# How the quoted price of each edge settles, lossy case.  Each trace line is
# (round, edge, price, total demand); prices are demand over supply.

out = run_distributed(inst, SimNetConfig(latency_ticks=1, drop_probability=0.2, seed=3), AgentParams())
by_edge = {}
for t, j, p, _ in out.diagnostics["price_trace"]:
    by_edge.setdefault(j, []).append(float(p))
for j, ps in sorted(by_edge.items()):
    step = max(1, len(ps) // 8)
    print(f"E{j}: " + " ".join(f"{p:.2f}" for p in ps[::step]))

"""
Two FL servers, one edge server
===============================

The smallest contested market: ten units of bandwidth, two FL servers with
a fund of 1 each, ten clients each.  We solve it three ways and check that
they agree.
"""

from fractions import Fraction

from bandgame import SystemInstance, run_centralized, run_distributed, solve_min_price, theorem_property_suite
from bandgame.distributed import AgentParams, SimNetConfig

inst = SystemInstance.build(funds=[1, 1], capacities=[10], counts=[[10], [10]])

###############################################################################
# The exact answer.  Prices are searched on the grid f_i / m; at 1/6 a
# server that got five units could still afford a sixth, so 1/5 is the
# smallest price that holds.

sol = solve_min_price(inst)
print("oracle price", sol.price, "allocation", sol.allocation.to_list())

rep = theorem_property_suite(inst)
print("checks", rep.results, "constraints ok:", rep.constraints_ok)

###############################################################################
# The greedy controller grants one client at a time to whoever holds the
# fewest units per unit of fund, so the two servers simply alternate.

cen = run_centralized(inst)
print("centralized price", cen.price, "allocation", cen.allocation.to_list())
print("first grants", [(g.step, g.i, g.rb_after) for g in cen.trace[:4]])

###############################################################################
# Without a controller every server nudges its requests towards cheaper
# edges until the quoted prices are within 10% of each other.  With one edge
# there is nothing to balance, so it stops at once.

out = run_distributed(inst, SimNetConfig(), AgentParams())
print("distributed rounds", out.rounds, "allocation", out.allocation.to_list(),
      "prices", [str(p) for p in out.prices])

assert cen.price == sol.price == Fraction(1, 5)

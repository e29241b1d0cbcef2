"""Two parallel routes and one elastic buyer, solved and checked.

The network has arcs with costs ``1 + f`` and ``2 + f`` between the same
origin and destination, and a buyer whose dis-utility is ``10 - y`` with
demand capped at 10.  At equilibrium both routes cost the same, and that
common cost equals the buyer's dis-utility: x = (10/3, 7/3), y = 17/3,
price 13/3.

Run with ``python demos/two_routes.py``.
"""
import numpy as np

from marketeq import (Buyer, Network, NetworkProblem, OdPair, Point, SolverConfig, affine,
                      check_equilibrium, solve_cpl, solve_pl)

net = Network(("o", "d"), (("o", "d"), ("o", "d")), (affine(1, 1), affine(2, 1)))
problem = NetworkProblem(net, (OdPair("o", "d", ((0,), (1,)), (Buyer(affine(10, -1), 10.0),)),))
exact = Point([10 / 3, 7 / 3], [17 / 3])

print("gap target   method  block iters   max error   price")
for accuracy in (1e-2, 1e-4, 1e-6):
    for name, solve in (("pl", solve_pl), ("cpl", solve_cpl)):
        res = solve(problem, SolverConfig(accuracy=accuracy, max_block_iters=10**8))
        err = max(np.abs(res.point.x - exact.x).max(), np.abs(res.point.y - exact.y).max())
        print(f"{accuracy:10.0e}   {name:6s}  {res.block_iterations:11d}   {err:9.2e}   "
              f"{res.prices[0]:.5f}")

# The error shrinks only like the square root of the gap: near the solution
# the two routes almost tie, and each direction sends everything down one.
print()
print("exact point passes every form:",
      all(check_equilibrium(problem, exact, 1e-12, form).ok
          for form in ("kkt", "complementarity", "implication")))
report = check_equilibrium(problem, Point([17 / 3, 0.0], [17 / 3]), 1e-9)
print("all flow on route 0 fails:", report.violation.message)

"""One-dimensional pushing: optimize the offsets and compare with staying put.

The state starts at 0 inside {x >= -b}.  Moving the face costs
int bdot^2 / 2 and the terminal cost (x(1) - 1)^2 / 2 rewards pushing the
state towards 1.  Staying put costs 1/2; pushing at constant speed 1/2
costs 1/4.
"""

import numpy as np

from polysweep.discrete_ocp import DiscreteTriple, cost_Jk, solve_reduced
from polysweep.scenarios import lookup
from polysweep.sweeping import catch_up

k = 200
sc = lookup("ex7_3").build(k=k)

ctrl = sc.controls(k)
stay = DiscreteTriple.from_paths(catch_up(sc.x0, ctrl), ctrl)
print(f"stay put        cost {cost_Jk(stay, sc):.6f}")

res = solve_reduced(sc, k)
t = res.triple.mesh.nodes
print(f"optimized       cost {res.cost:.6f}  ({res.method}, {res.evaluations} cost evaluations)")
print(f"sup |x - t/2|   {np.abs(res.triple.x[:, 0] - t / 2).max():.2e}")
print(f"sup |b + t/2|   {np.abs(res.triple.b[:, 0] + t / 2).max():.2e}")
for j in range(0, k + 1, 50):
    print(f"  t={t[j]:.2f}  x={res.triple.x[j, 0]:+.4f}  b={res.triple.b[j, 0]:+.4f}")

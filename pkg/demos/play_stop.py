"""Play-and-stop hysteresis: a point dragged by a translated rectangle.

The rectangle [-0.2, 0.2] x [-0.1, 0.1] is translated by 0.3 (sin t, 0).
The state only moves when a face reaches it, which produces the classical
play loop between the input sin t and the output x_1.
"""

import numpy as np

from polysweep.scenarios import lookup
from polysweep.sweeping import catch_up, verify_feasible

k = 400
sc = lookup("play_stop").build(k=k)
ctrl = sc.controls(k)
path = catch_up(sc.x0, ctrl)
rep = verify_feasible(path, ctrl)
print(f"feasible {rep.verdict}, max residual {rep.max_residual:.1e}")

t = ctrl.mesh.nodes
w = 0.3 * np.sin(t)
print(f"{'t':>6}{'input':>10}{'x_1':>10}{'gap':>10}")
for j in range(0, k + 1, 25):
    print(f"{t[j]:>6.2f}{w[j]:>10.4f}{path.x_nodes[j, 0]:>10.4f}{w[j] - path.x_nodes[j, 0]:>10.4f}")
print(f"output range [{path.x_nodes[:, 0].min():.3f}, {path.x_nodes[:, 0].max():.3f}], "
      f"input amplitude 0.3, play half-width 0.2")

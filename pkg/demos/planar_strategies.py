"""Two orthogonal faces in the plane: three ways of pushing the corner.

The state starts at the corner (1, 1) of {x_1 <= b_1, x_2 <= b_2} and the
terminal cost is |x(1)|^2 / 2.  Pushing both faces together beats
alternating between them, which beats pushing only one.
"""

from polysweep.discrete_ocp import closed_form_strategy_cost, evaluate_strategy
from polysweep.scenarios import lookup

sc = lookup("ex7_6").build()
rows = [("simultaneous", 1.0, (-0.5, -0.5)),
        ("alternating", 0.5, (-0.5, -0.5)),
        ("single", 1.0, (-0.5, 0.0))]
print(f"{'strategy':<14}{'theta':>7}{'beta':>16}{'cost':>11}")
for name, theta, beta in rows:
    ev = evaluate_strategy(sc, name, theta, beta)
    print(f"{name:<14}{theta:>7.2f}{str(beta):>16}{ev.cost:>11.6f}")

# along the simultaneous family the cost is a quadratic in theta
print("\nsimultaneous, beta = (-1/2, -1/2):")
for theta in (0.25, 0.5, 0.75, 1.0):
    ev = evaluate_strategy(sc, "simultaneous", theta, (-0.5, -0.5))
    print(f"  theta={theta:.2f}  integrated {ev.cost:.6f}  "
          f"closed form {closed_form_strategy_cost(theta, (-0.5, -0.5)):.6f}")

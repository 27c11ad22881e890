"""Dual certificates: supporting one candidate, excluding another.

For the inactive-constraint problem the trivial control b = 1 admits a
certificate with lambda > 0.  For the tracking problem with an absolute
value rate penalty every certificate of the candidate has lambda = 0 and
a vanishing terminal adjoint, so the candidate cannot be optimal; fixing
lambda = 1 makes the linear system infeasible and the conflicting
conditions are reported.
"""

from polysweep.discrete_ocp import DiscreteTriple
from polysweep.optimality import residuals_thm52, solve_certificate
from polysweep.scenarios import lookup
from polysweep.sweeping import catch_up


def trajectory(entry_id, k, **params):
    entry = lookup(entry_id)
    sc = entry.build(k=k, **params)
    b = entry.reference.b
    ctrl = sc.controls(k, b_path=(lambda t: [float(b(t))]) if b is not None else None)
    return sc, DiscreteTriple.from_paths(catch_up(sc.x0, ctrl, jump_guard=None), ctrl)


sc, z = trajectory("ex7_4", 100)
cert = solve_certificate(z, sc)
rep = residuals_thm52(z, cert, sc)
print(f"b = 1:          verdict {cert.verdict!r}, lambda {cert.lam:.3f}, "
      f"max residual {rep.max_residual:.1e}")

for alpha in (0.1, 1.0):
    sc, z = trajectory("ex7_5", 100, alpha=alpha)
    cert = solve_certificate(z, sc)
    print(f"alpha = {alpha}:    verdict {cert.verdict!r}, "
          f"largest lambda {cert.stats['lambda_max'] + 0.0:.1f}, largest |p(T)| {cert.stats['pT_max']:.1f}")
    forced = solve_certificate(z, sc, 1.0)
    print(f"  lambda = 1 -> {forced.message}; conflict {sorted(forced.conflict)}")

sc, z = trajectory("ex7_3", 200)
cert = solve_certificate(z, sc, 1.0)
print(f"pushing optimum: p^b = {cert.p.b[0, 0]:+.3f}, h*gamma at the end = "
      f"{z.mesh.h * cert.gamma[-1, 0]:+.3f}")

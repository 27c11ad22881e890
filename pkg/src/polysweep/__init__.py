"""Optimal control of sweeping processes over controlled polyhedra.

Modules
-------
geometry      projections, active sets and normal cones of polyhedra
sweeping      catch-up discretization and feasibility checks
variational   coderivatives of the polyhedral normal-cone mapping
discrete_ocp  discrete costs, scenarios and the reduced-space solver
optimality    dual certificates for the discrete and continuous conditions
scenarios     registry of worked problems and configuration files
cli           the ``sweepctl`` command line front end
"""

from .errors import SweepError

__all__ = ["SweepError"]
__version__ = "0.1.0"

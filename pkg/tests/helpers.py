"""Shared constructors for the test suite."""

import numpy as np

from polysweep.discrete_ocp import DiscreteTriple
from polysweep.scenarios import lookup
from polysweep.sweeping import catch_up


def candidate(scenario_id, k, b=None, **params):
    """Scenario and the catch-up triple driven by ``b`` (default: its own offsets)."""
    sc = lookup(scenario_id).build(k=k, **params)
    ctrl = sc.controls(k, b_path=b) if b is not None else sc.controls(k)
    state = catch_up(sc.x0, ctrl, jump_guard=None)
    return sc, DiscreteTriple.from_paths(state, ctrl)


def pushing_candidate(k, **params):
    """Optimal one-dimensional pushing triple x = t/2, b = -t/2."""
    return candidate("ex7_3", k, b=lambda t: [-t / 2], **params)

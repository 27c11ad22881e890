import numpy as np
import pytest

from helpers import candidate, pushing_candidate
from polysweep.discrete_ocp import (CostSpec, CostTerm, DiscreteTriple, Scenario, SolverSettings,
                                    TerminalCost, build, closed_form_strategy_cost, cost_Jk,
                                    evaluate_strategy, localization_residuals, solve_reduced)
from polysweep.errors import ConfigError, InfeasibleInitial
from polysweep.scenarios import lookup
from polysweep.sweeping import verify_feasible


def _ex7_3(**kw):
    return lookup("ex7_3").build(**kw)


# --- build ----------------------------------------------------------------


def test_build_counts_for_pushing_problem():
    prob = build(_ex7_3(), 4)
    assert prob.count("dyn") == 4
    assert prob.count("endpoint") == 1
    assert prob.count("normalization") == 5
    assert prob.count("normalization_box") == 0


def test_build_tau_window():
    prob = build(_ex7_3(tau=0.25), 10)
    eq = [c.index[0] for c in prob.constraints if c.name == "normalization"]
    box = [c.index[0] for c in prob.constraints if c.name == "normalization_box"]
    assert eq == list(range(3, 8))
    assert box == [0, 1, 2, 8, 9, 10]


def test_build_fixed_normals_has_no_normalization():
    prob = build(lookup("ex7_6").build(), 6)
    assert prob.count("normalization") == prob.count("normalization_box") == 0
    assert "bv_u" not in prob.names()


def test_build_rejects_infeasible_start_and_short_mesh():
    sc = _ex7_3().with_params(x0=np.array([-1.0]))
    with pytest.raises(InfeasibleInitial):
        build(sc, 4)
    with pytest.raises(ConfigError):
        build(_ex7_3(), 1)


# --- cost -------------------------------------------------------------------


def test_cost_zero_at_center():
    sc = lookup("static_box").build()
    _, z = candidate("static_box", 10)
    assert cost_Jk(z, sc) == 0.0


def test_cost_of_pushing_candidate():
    sc, z = pushing_candidate(100)
    assert cost_Jk(z, sc) == pytest.approx(0.25, abs=5e-3)


def test_cost_of_stay_put_candidate_is_exactly_half():
    sc, z = candidate("ex7_3", 100)
    assert np.all(z.x == 0) and np.all(z.b == 0)
    assert cost_Jk(z, sc) == 0.5


def test_cost_mesh_consistency():
    # discretized analytic candidates against the analytic Bolza values
    errs = []
    hs = []
    for k in (10, 20, 40, 80):
        sc, z = pushing_candidate(k)
        errs.append(abs(cost_Jk(z, sc) - 0.25))
        ev = evaluate_strategy(lookup("ex7_6").build(), "simultaneous", 1.0, (-0.5, -0.5), k=k)
        errs.append(abs(ev.cost - 0.5))
        hs += [1.0 / k, 1.0 / k]
    C = max(e / h for e, h in zip(errs, hs))
    assert C <= 1.0


def test_reference_terms_vanish_at_reference():
    sc, z = pushing_candidate(20)
    assert cost_Jk(z, sc, reference=z) == pytest.approx(cost_Jk(z, sc), abs=1e-14)
    loc = localization_residuals(z, z, sc.epsilon)
    assert loc["uniform"] < 0 and loc["integral"] < 0


def test_reference_terms_penalize_distance():
    sc, z = pushing_candidate(20)
    _, z0 = candidate("ex7_3", 20)
    assert cost_Jk(z0, sc, reference=z) > cost_Jk(z0, sc)


# --- reduced solver --------------------------------------------------------------


def test_solve_reduced_pushing():
    res = solve_reduced(_ex7_3(), 200)
    assert res.cost <= 0.26
    t = res.triple.mesh.nodes
    assert np.abs(res.triple.x[:, 0] - t / 2).max() <= 0.05
    assert np.abs(res.triple.b[:, 0] + t / 2).max() <= 0.05
    assert verify_feasible(res.state, res.controls)
    assert np.allclose(np.linalg.norm(res.triple.u, axis=2), 1.0)


def test_solve_reduced_planar_box():
    res = solve_reduced(lookup("ex7_6").build(), 100)
    assert res.cost <= 0.52
    assert verify_feasible(res.state, res.controls)


def test_solve_reduced_stationary_start():
    x0 = [0.2, 0.1]
    sc = Scenario("still", 2, 2, 1.0, x0, CostSpec(TerminalCost("quadratic", x0)),
                  u_path=lambda t: np.eye(2), b_path=lambda t: [1.0, 1.0], k=10)
    res = solve_reduced(sc)
    assert res.cost == 0.0
    assert np.array_equal(res.triple.b, sc.controls().b_nodes)
    assert res.method == "lbfgs"


def test_solve_reduced_trace_monotone_and_deterministic():
    sc = lookup("ex7_5").build(alpha=1.0, k=20)
    a = solve_reduced(sc)
    b = solve_reduced(sc)
    costs = [c for _, c, _ in a.trace]
    assert all(c2 <= c1 + 1e-12 for c1, c2 in zip(costs, costs[1:]))
    assert a.trace == b.trace
    assert np.array_equal(a.triple.b, b.triple.b)
    assert "pattern" in a.method


def test_solve_reduced_free_normals_respect_tau_window():
    sc = _ex7_3(tau=0.25)
    res = solve_reduced(sc, 8, settings=SolverSettings(max_iter=30))
    norms = np.linalg.norm(res.triple.u, axis=2)[:, 0]
    assert np.allclose(norms[2:7], 1.0)
    assert np.all((norms >= 0.5 - 1e-12) & (norms <= 1.5 + 1e-12))


def test_solve_reduced_rejects_bad_init():
    sc = _ex7_3()
    with pytest.raises(ConfigError):
        solve_reduced(sc, 10, init=sc.controls(12))


# --- strategy families -------------------------------------------------------------


@pytest.mark.parametrize("strategy, theta, beta, value, tol", [
    ("simultaneous", 1.0, (-0.5, -0.5), 0.5, 1e-3),
    ("alternating", 0.5, (-0.5, -0.5), 11 / 16, 1e-2),
    ("single", 1.0, (-0.5, 0.0), 0.75, 1e-2),
])
def test_strategy_costs(strategy, theta, beta, value, tol):
    ev = evaluate_strategy(lookup("ex7_6").build(), strategy, theta, beta)
    assert ev.cost == pytest.approx(value, abs=tol)


def test_closed_form_strategy_cost():
    assert closed_form_strategy_cost(1.0, (-0.5, -0.5)) == 0.5
    assert closed_form_strategy_cost(0.0, (3.0, 4.0)) == 1.0


def test_unknown_strategy():
    with pytest.raises(ConfigError):
        evaluate_strategy(lookup("ex7_6").build(), "zigzag", 1.0, (0, 0))


def test_cost_term_validation():
    with pytest.raises(ConfigError):
        CostTerm("b", "cubic")
    with pytest.raises(ConfigError):
        CostTerm("y")
    with pytest.raises(ConfigError):
        TerminalCost("quartic", [0.0])


def test_triple_shape_validation():
    sc = _ex7_3()
    with pytest.raises(ConfigError):
        DiscreteTriple(sc.mesh(4), np.zeros(4), np.ones(5), np.zeros(5))

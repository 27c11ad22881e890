from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gen_instances import random_certificate_instance
from helpers import candidate, pushing_candidate
from polysweep.errors import ConfigError, ShapeMismatch
from polysweep.optimality import (Adjoint, ContinuousCertificate, DualCertificate, Infeasible,
                                  Measure, default_selections, degenerate_certificate,
                                  reconstruct_q, recover_eta, residuals_thm52, residuals_thm61,
                                  residuals_thm63, solve_certificate, to_continuous,
                                  zero_certificate)


def _zeros(k, n, m, with_u=True):
    N = k + 1
    return Adjoint(np.zeros((N, n)), np.zeros((N, m)), np.zeros((N, m, n)) if with_u else None)


# --- discrete conditions --------------------------------------------------------


def test_zero_certificate_is_trivial():
    sc, z = pushing_candidate(20)
    rep = residuals_thm52(z, zero_certificate(z, sc), sc)
    assert rep.max_residual == 0.0
    assert not rep.nontrivial and not rep.enhanced_nontrivial


def test_pushing_certificate_round_trip():
    sc, z = pushing_candidate(50)
    cert = solve_certificate(z, sc, 1.0)
    assert isinstance(cert, DualCertificate)
    rep = residuals_thm52(z, cert, sc)
    assert rep.max_residual <= 1e-8 and rep.enhanced_nontrivial


def test_perturbed_terminal_adjoint():
    sc, z = pushing_candidate(50)
    cert = solve_certificate(z, sc, 1.0)
    base = residuals_thm52(z, cert, sc).residuals
    px = cert.p.x.copy()
    px[-1] += 0.1
    bad = residuals_thm52(z, replace(cert, p=Adjoint(px, cert.p.b, cert.p.u)), sc).residuals
    assert bad["trans-x"] == pytest.approx(0.1, abs=1e-12)
    changed = {name for name in base if abs(base[name] - bad[name]) > 1e-12}
    # only the conditions in which p^x_k appears move
    assert changed == {"trans-x", "adjx", "orth", "trans-u"}
    assert bad["adjx"] == pytest.approx(0.1 / z.mesh.h)


def test_pushing_certificate_values():
    k = 200
    sc, z = pushing_candidate(k)
    cert = solve_certificate(z, sc, ("fixed", 1.0))
    assert cert.lam == 1.0
    assert np.allclose(cert.p.b, -0.5, atol=1e-8)
    assert cert.gamma[-1, 0] == pytest.approx(-k / 2)
    assert cert.xi[-1, 0] == pytest.approx(-0.125)


def test_free_lambda_supports_pushing_optimum():
    sc, z = pushing_candidate(40)
    cert = solve_certificate(z, sc)
    assert cert.verdict == "supported"
    assert cert.lam > 0
    assert cert.norm(z.mesh.h) == pytest.approx(1.0)


def test_explicit_side_is_infeasible_for_pushing():
    sc, z = pushing_candidate(40)
    res = solve_certificate(z, sc, 1.0, side="explicit")
    assert isinstance(res, Infeasible) and not res
    assert "lambda" in res.conflict


def test_trivial_solution_certified():
    sc, z = candidate("ex7_4", 50)
    cert = solve_certificate(z, sc)
    assert cert.verdict == "supported"
    assert cert.lam == pytest.approx(0.5)
    assert np.ptp(cert.p.x) < 1e-9


@pytest.mark.parametrize("alpha", [0.1, 1.0])
def test_excluded_candidate(alpha):
    sc, z = candidate("ex7_5", 50, alpha=alpha)
    cert = solve_certificate(z, sc)
    assert cert.verdict == "not optimal"
    assert cert.stats["pT_max"] == 0.0
    res = solve_certificate(z, sc, 1.0)
    assert isinstance(res, Infeasible)
    assert {"meas-supp", "trans-b"} <= set(res.conflict)


def test_certificate_table_round_trip():
    sc, z = pushing_candidate(30)
    cert = solve_certificate(z, sc, 1.0)
    names, data = cert.node_table(z.mesh)
    back = DualCertificate.from_table(names, data, sc.m, sc.n, cert.side)
    assert residuals_thm52(z, back, sc).max_residual <= 1e-12
    assert np.array_equal(back.gamma, cert.gamma)


def test_unknown_side_and_lambda_mode():
    sc, z = pushing_candidate(10)
    with pytest.raises(ConfigError):
        solve_certificate(z, sc, side="sideways")
    with pytest.raises(ConfigError):
        solve_certificate(z, sc, "sometimes")


# --- continuous conditions --------------------------------------------------------


def test_trivial_solution_with_stated_duals():
    k = 100
    sc, z = candidate("ex7_4", k)
    ones = Adjoint(np.ones((k + 1, 1)), np.zeros((k + 1, 1)), np.zeros((k + 1, 1, 1)))
    cert = ContinuousCertificate(1.0, z.mesh, ones, Measure.zero(k, 1), np.zeros((k, 1)),
                                 default_selections(z, sc), ones, Measure.zero(k, 1))
    rep = residuals_thm61(z, cert, sc)
    assert rep.max_residual <= 1e-8 and rep.enhanced_nontrivial


def _pushing_continuous(k):
    sc, z = pushing_candidate(k)
    N = k + 1
    p = Adjoint(np.full((N, 1), 0.5), np.zeros((N, 1)), np.zeros((N, 1, 1)))
    cert = ContinuousCertificate(1.0, z.mesh, p, Measure(np.zeros((k, 1)), ((1.0, [-0.5]),)),
                                 recover_eta(z), default_selections(z, sc), None,
                                 Measure(np.zeros((k, 1)), ((1.0, [-0.125]),)))
    return sc, z, cert


def test_pushing_continuous_certificate():
    sc, z, cert = _pushing_continuous(200)
    rep = residuals_thm61(z, cert, sc)
    assert rep.max_residual <= 1e-8
    q = reconstruct_q(z, cert, True)
    assert np.allclose(q.x, 0) and np.allclose(q.b[:-1], -0.5) and np.allclose(q.u, 0)


def test_interior_gamma_mass_breaks_q_identity():
    sc, z, cert = _pushing_continuous(200)
    q = reconstruct_q(z, cert, True)
    spread = replace(cert, q=q, gamma=Measure(np.full((200, 1), -0.25), ((1.0, [-0.25]),)))
    assert residuals_thm61(z, spread, sc).residuals["q-identity"] > 0.1


def test_discrete_to_continuous():
    sc, z = pushing_candidate(100)
    cc = to_continuous(solve_certificate(z, sc, 1.0), z)
    assert residuals_thm61(z, cc, sc).max_residual <= 1e-8


def test_degenerate_pattern_flagged():
    sc, z = pushing_candidate(50)
    rep = residuals_thm61(z, degenerate_certificate(z, sc), sc)
    assert rep.feasible and rep.degenerate
    assert rep.verdict()["degenerate"] is True
    assert not rep.enhanced_nontrivial


def test_thm61_requires_normal_adjoint():
    sc, z = candidate("ex7_4", 10)
    cert = ContinuousCertificate(1.0, z.mesh, _zeros(10, 1, 1, False), Measure.zero(10, 1),
                                 np.zeros((10, 1)), default_selections(z, sc))
    with pytest.raises(ShapeMismatch):
        residuals_thm61(z, cert, sc)


def test_fixed_normals_stay_put():
    k = 100
    sc, z = candidate("ex7_6", k)
    P = Adjoint(np.full((k + 1, 2), -1.0), np.zeros((k + 1, 2)))
    sel = default_selections(z, sc)
    cert = ContinuousCertificate(1.0, z.mesh, P, Measure.zero(k, 2), recover_eta(z), sel, P)
    assert residuals_thm63(z, cert, sc).verdict()["feasible"]
    zero = ContinuousCertificate(0.0, z.mesh, P.scaled(0.0), Measure.zero(k, 2), recover_eta(z), sel)
    assert not residuals_thm63(z, zero, sc).nontrivial


def test_fixed_normal_conditions_need_fixed_mode():
    sc, z, cert = _pushing_continuous(10)
    with pytest.raises(ConfigError):
        residuals_thm63(z, cert, sc)


def test_adjoint_cauchy_check():
    def adjoint(k):
        sc, z = pushing_candidate(k)
        c = solve_certificate(z, sc, 1.0)
        return z.mesh.nodes, c.p.x[:, 0], c.p.b[:, 0]

    levels = [adjoint(k) for k in (25, 50, 100)]

    def diff(a, b):
        t = a[0]
        return max(np.abs(np.interp(t, b[0], b[1]) - a[1]).max(),
                   np.abs(np.interp(t, b[0], b[2]) - a[2]).max())

    d1, d2 = diff(levels[0], levels[1]), diff(levels[1], levels[2])
    assert d2 <= 2 * d1 + 1e-12


# --- properties -------------------------------------------------------------------


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_round_trip_property(seed):
    sc, z = random_certificate_instance(np.random.default_rng(seed))
    cert = solve_certificate(z, sc)
    if isinstance(cert, Infeasible):
        return
    assert residuals_thm52(z, cert, sc).max_residual <= 1e-8


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10 ** 6), st.floats(0.01, 100.0))
def test_scaling_property(seed, c):
    sc, z = random_certificate_instance(np.random.default_rng(seed))
    cert = solve_certificate(z, sc)
    if isinstance(cert, Infeasible):
        return
    a = residuals_thm52(z, cert, sc)
    b = residuals_thm52(z, cert.scaled(c), sc)
    assert b.max_residual <= 1e-8 * max(1.0, c)
    assert (a.nontrivial, a.enhanced_nontrivial) == (b.nontrivial, b.enhanced_nontrivial)


def test_normalized_certificates_have_unit_norm():
    sc, z = candidate("ex7_4", 20)
    cert = solve_certificate(z, sc)
    assert cert.norm(z.mesh.h) == pytest.approx(1.0)
    assert cert.scaled(3.0).normalized(z.mesh.h).norm(z.mesh.h) == pytest.approx(1.0)

"""Dual certificates for the discrete and continuous optimality conditions.

Discrete certificates collect (lambda, p_j, eta_j, gamma_j, xi_j) and the
subgradient selections (w_j, v_j) on the k-step mesh.  Two placements of
the sweeping inclusion are supported:

* ``side="implicit"`` (default) places step j on the graph of F at node
  j + 1, matching the catch-up integrator x_{j+1} = proj_{C_{j+1}}(x_j).
  The adjoint equation at node j then carries the graph multiplier of
  step j - 1, the right endpoint inherits the last step and the initial
  node carries the constraint x_0 in C(u_0, b_0).
* ``side="explicit"`` places step j at node j and reproduces the discrete
  conditions with the inclusion evaluated at the left node verbatim.

Continuous certificates store the adjoint arc p and its bounded-variation
companion q on a grid, with the measures gamma and xi given as interval
densities plus finite atom lists.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import linprog, nnls
from scipy.sparse.linalg import lsqr

from .discrete_ocp import DiscreteTriple, Scenario
from .errors import ConfigError, MeasureFormat, MeshMismatch, ShapeMismatch
from .sweeping import Mesh, index_tau

log = logging.getLogger(__name__)

ACTIVE_TOL = 1e-8
RESIDUAL_TOL = 1e-8
NONTRIV_TOL = 1e-9
BRANCH_CAP = 64
SIDES = ("implicit", "explicit")

_LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10,
               "dual_feasibility_tolerance": 1e-10}


# ----------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class Selections:
    """Subgradient selections (w, v) of the running cost, one row per interval.

    w = (wx, wu, wb) is taken with respect to (x, u, b) and v = (vx, vu, vb)
    with respect to the velocities.  ``wu`` and ``vu`` are None for fixed
    normals.
    """

    wx: np.ndarray
    wb: np.ndarray
    vx: np.ndarray
    vb: np.ndarray
    wu: Optional[np.ndarray] = None
    vu: Optional[np.ndarray] = None


@dataclass(frozen=True)
class Adjoint:
    """Node values of an adjoint-type arc: x (N, n), u (N, m, n) or None, b (N, m)."""

    x: np.ndarray
    b: np.ndarray
    u: Optional[np.ndarray] = None

    def scaled(self, c: float) -> "Adjoint":
        return Adjoint(c * self.x, c * self.b, None if self.u is None else c * self.u)

    def at(self, j: int) -> np.ndarray:
        parts = [self.x[j].ravel()]
        if self.u is not None:
            parts.append(self.u[j].ravel())
        parts.append(self.b[j].ravel())
        return np.concatenate(parts)

    def max_abs(self) -> float:
        vals = [np.abs(self.x).max(initial=0.0), np.abs(self.b).max(initial=0.0)]
        if self.u is not None:
            vals.append(np.abs(self.u).max(initial=0.0))
        return float(max(vals))


@dataclass(frozen=True)
class DualCertificate:
    """Multipliers of the k-step conditions.

    ``p`` has k + 1 nodes; ``eta`` and ``gamma`` one row per step; ``xi``
    one row per node (None for fixed normals).  ``theta`` holds the
    velocity corrections against the reference path; they vanish when the
    candidate is its own reference.
    """

    lam: float
    p: Adjoint
    eta: np.ndarray
    gamma: np.ndarray
    sel: Selections
    xi: Optional[np.ndarray] = None
    theta: Optional[Adjoint] = None
    side: str = "implicit"
    verdict: str = ""
    stats: Dict = field(default_factory=dict)

    @property
    def alpha(self) -> np.ndarray:
        """Endpoint multiplier of the state constraint, p^b_k."""
        return self.p.b[-1]

    def scaled(self, c: float) -> "DualCertificate":
        if c <= 0:
            raise ValueError("scaling factor must be positive")
        return replace(self, lam=c * self.lam, p=self.p.scaled(c), gamma=c * self.gamma,
                       xi=None if self.xi is None else c * self.xi)

    def norm(self, h: float) -> float:
        """lambda + |p^u_0| + |p^b_0| + |p_k| + h sum |gamma_j| + sum |xi_j|."""
        tot = self.lam + np.linalg.norm(self.p.b[0]) + np.linalg.norm(self.p.at(-1))
        if self.p.u is not None:
            tot += np.linalg.norm(self.p.u[0])
        tot += h * np.linalg.norm(self.gamma, axis=1).sum()
        if self.xi is not None:
            tot += np.linalg.norm(self.xi, axis=1).sum()
        return float(tot)

    def normalized(self, h: float) -> "DualCertificate":
        s = self.norm(h)
        return self if s <= NONTRIV_TOL else self.scaled(1.0 / s)

    def node_table(self, mesh: Mesh) -> Tuple[List[str], np.ndarray]:
        """Per-node columns for CSV output; step quantities sit on their left node."""
        k = mesh.k
        cols = {"t": mesh.nodes, "lambda": np.full(k + 1, self.lam)}
        for c in range(self.p.x.shape[1]):
            cols[f"px{c}"] = self.p.x[:, c]
        if self.p.u is not None:
            flat = self.p.u.reshape(k + 1, -1)
            for c in range(flat.shape[1]):
                cols[f"pu{c}"] = flat[:, c]
        for i in range(self.p.b.shape[1]):
            cols[f"pb{i}"] = self.p.b[:, i]
        def padded(a):
            a = a.reshape(k, -1)
            return np.vstack([a, np.full((1, a.shape[1]), np.nan)])

        for name, arr in (("gamma", self.gamma), ("eta", self.eta)):
            for c, col in enumerate(padded(arr).T):
                cols[f"{name}{c}"] = col
        if self.xi is not None:
            for i in range(self.xi.shape[1]):
                cols[f"xi{i}"] = self.xi[:, i]
        for key in _SEL_KEYS:
            arr = getattr(self.sel, key)
            if arr is not None:
                for c, col in enumerate(padded(arr).T):
                    cols[f"{key}{c}"] = col
        names = list(cols)
        return names, np.column_stack([cols[c] for c in names])

    @classmethod
    def from_table(cls, names: Sequence[str], data: np.ndarray, m: int, n: int,
                   side: str = "implicit") -> "DualCertificate":
        """Inverse of :meth:`node_table`."""
        data = np.asarray(data, dtype=float)
        k = data.shape[0] - 1

        def block(prefix, rows=None):
            idx = [c for c, nm in enumerate(names)
                   if nm.startswith(prefix) and nm[len(prefix):].isdigit()]
            if not idx:
                return None
            out = data[:, idx]
            return out if rows is None else out[:rows]

        if "lambda" not in names:
            raise ShapeMismatch("certificate table has no lambda column")
        lam = float(data[0, list(names).index("lambda")])
        pu = block("pu")
        p = Adjoint(block("px"), block("pb"), None if pu is None else pu.reshape(k + 1, m, n))
        sel = {}
        for key in _SEL_KEYS:
            arr = block(key, k)
            if arr is not None and key in ("wu", "vu"):
                arr = arr.reshape(k, m, n)
            sel[key] = arr
        if any(sel[key] is None for key in ("wx", "wb", "vx", "vb")) \
                or p.x is None or p.b is None or block("gamma") is None:
            raise ShapeMismatch("certificate table is missing columns")
        return cls(lam, p, block("eta", k), block("gamma", k), Selections(**sel),
                   block("xi"), side=side)


@dataclass(frozen=True)
class Infeasible:
    """No certificate exists for the requested lambda.

    ``conflict`` lists condition names of an irreducible subset found by a
    deletion filter; ``rows`` refines it to (name, index) pairs.
    """

    conflict: Tuple[str, ...]
    rows: Tuple[Tuple[str, int], ...] = ()
    message: str = ""

    def __bool__(self) -> bool:
        return False

    def to_dict(self) -> dict:
        return {"feasible": False, "conflict": list(self.conflict),
                "rows": [list(r) for r in self.rows], "message": self.message}


@dataclass
class ResidualReport:
    """Named maximum residuals plus the nontriviality magnitudes."""

    residuals: Dict[str, float]
    nontriv: float
    enhanced: float
    degenerate: bool = False
    tol: float = RESIDUAL_TOL

    @property
    def max_residual(self) -> float:
        return float(max(self.residuals.values(), default=0.0))

    @property
    def feasible(self) -> bool:
        return self.max_residual <= self.tol

    @property
    def nontrivial(self) -> bool:
        return self.nontriv > NONTRIV_TOL

    @property
    def enhanced_nontrivial(self) -> bool:
        return self.enhanced > NONTRIV_TOL

    def verdict(self) -> dict:
        return {"feasible": self.feasible, "degenerate": self.degenerate,
                "nontrivial": self.nontrivial,
                "enhanced_nontrivial": self.enhanced_nontrivial,
                "max_residual": self.max_residual}

    def rows(self) -> List[Tuple[str, float]]:
        out = list(self.residuals.items())
        out += [("nontriv", self.nontriv), ("enhanced", self.enhanced)]
        return out


# ----------------------------------------------------------------------
# primal helpers


def _check_triple(z: DiscreteTriple, scenario: Scenario) -> None:
    if z.x.shape[1] != scenario.n or z.b.shape[1] != scenario.m \
            or z.u.shape[1:] != (scenario.m, scenario.n):
        raise ShapeMismatch("triple dimensions do not match the scenario")
    if abs(z.mesh.T - scenario.T) > 1e-12:
        raise MeshMismatch("triple horizon differs from the scenario horizon")


def slacks(z: DiscreteTriple) -> np.ndarray:
    """b_ji - <u_ji, x_j>, shape (k+1, m)."""
    return z.b - np.einsum("jmn,jn->jm", z.u, z.x)


def recover_eta(z: DiscreteTriple, side: str = "implicit",
                tol: float = ACTIVE_TOL) -> np.ndarray:
    """Velocity multipliers by nonnegative least squares on the active faces."""
    k = z.mesh.k
    vel = np.diff(z.x, axis=0) / z.mesh.h
    s = slacks(z)
    shift = 1 if side == "implicit" else 0
    eta = np.zeros((k, z.b.shape[1]))
    for j in range(k):
        act = np.flatnonzero(s[j + shift] <= 10 * tol)
        if act.size and np.linalg.norm(vel[j]) > 0:
            eta[j, act] = nnls(z.u[j + shift][act].T, -vel[j])[0]
    return eta


def _args(z: DiscreteTriple) -> Dict[str, np.ndarray]:
    h, k = z.mesh.h, z.mesh.k
    return {"x": z.x[:-1], "u": z.u[:-1].reshape(k, -1), "b": z.b[:-1],
            "xdot": np.diff(z.x, axis=0) / h,
            "udot": (np.diff(z.u, axis=0) / h).reshape(k, -1),
            "bdot": np.diff(z.b, axis=0) / h}


_SEL_KEYS = ("wx", "wb", "vx", "vb", "wu", "vu")
_SEL_OF = {"x": "wx", "u": "wu", "b": "wb", "xdot": "vx", "udot": "vu", "bdot": "vb"}


def subgradient_bounds(z: DiscreteTriple, scenario: Scenario
                       ) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """Componentwise intervals containing the convexified subdifferential.

    Every catalog term is separable across components, so the sum over
    terms is the Minkowski sum of the per-term intervals.  Running costs
    are evaluated at the left node of each interval.
    """
    args = _args(z)
    t = z.mesh.nodes[:-1]
    out = {name: (np.zeros_like(a), np.zeros_like(a)) for name, a in
           ((_SEL_OF[on], arr) for on, arr in args.items())}
    for term in scenario.cost.terms():
        lo, hi = term.subgradient_bounds(args[term.on], t)
        key = _SEL_OF[term.on]
        out[key] = (out[key][0] + lo, out[key][1] + hi)
    return out


def _shape_sel(name: str, arr: np.ndarray, m: int, n: int) -> np.ndarray:
    return arr.reshape(arr.shape[0], m, n) if name in ("wu", "vu") else arr


def default_selections(z: DiscreteTriple, scenario: Scenario) -> Selections:
    """Midpoints of the subgradient intervals (the gradient for smooth terms)."""
    bnd = subgradient_bounds(z, scenario)
    m, n = scenario.m, scenario.n
    mid = {k: _shape_sel(k, 0.5 * (lo + hi), m, n) for k, (lo, hi) in bnd.items()}
    free = scenario.mode == "free_u"
    return Selections(mid["wx"], mid["wb"], mid["vx"], mid["vb"],
                      mid["wu"] if free else None, mid["vu"] if free else None)


def _activity(z: DiscreteTriple, tol: float) -> np.ndarray:
    return slacks(z) <= tol


def _ksi_status(z: DiscreteTriple, scenario: Scenario) -> np.ndarray:
    """Per (node, face): 0 free, 1 must vanish, 2 nonpositive, 3 nonnegative."""
    k = z.mesh.k
    j_lo, j_hi = index_tau(z.mesh, scenario.tau)
    norms = np.linalg.norm(z.u, axis=2)
    st = np.zeros((k + 1, scenario.m), dtype=int)
    for j in range(k + 1):
        if j_lo <= j <= j_hi:
            continue
        for i in range(scenario.m):
            r = norms[j, i]
            st[j, i] = 2 if abs(r - 0.5) <= 1e-9 else (3 if abs(r - 1.5) <= 1e-9 else 1)
    return st


def _enhanced_applies(z: DiscreteTriple, scenario: Scenario, tol: float) -> bool:
    """Strict inactivity (and interior norms) at the initial node."""
    if np.any(slacks(z)[0] <= tol):
        return False
    if scenario.mode == "free_u":
        r = np.linalg.norm(z.u[0], axis=1)
        return bool(np.all((r > 0.5) & (r < 1.5)))
    return True


# ----------------------------------------------------------------------
# discrete residuals


def _check_cert(z: DiscreteTriple, cert: DualCertificate, scenario: Scenario) -> None:
    k, m, n = z.mesh.k, scenario.m, scenario.n
    free = scenario.mode == "free_u"
    want = {"p.x": (cert.p.x, (k + 1, n)), "p.b": (cert.p.b, (k + 1, m)),
            "eta": (cert.eta, (k, m)), "gamma": (cert.gamma, (k, m)),
            "sel.wx": (cert.sel.wx, (k, n)), "sel.wb": (cert.sel.wb, (k, m)),
            "sel.vx": (cert.sel.vx, (k, n)), "sel.vb": (cert.sel.vb, (k, m))}
    if free:
        want.update({"p.u": (cert.p.u, (k + 1, m, n)), "xi": (cert.xi, (k + 1, m)),
                     "sel.wu": (cert.sel.wu, (k, m, n)), "sel.vu": (cert.sel.vu, (k, m, n))})
    for name, (arr, shape) in want.items():
        if arr is None or np.shape(arr) != shape:
            raise ShapeMismatch(f"{name} has shape {None if arr is None else np.shape(arr)}, "
                                f"expected {shape}")
    if cert.side not in SIDES:
        raise ConfigError(f"side must be one of {SIDES}")


def _theta(cert: DualCertificate, k: int, m: int, n: int, free: bool) -> Adjoint:
    if cert.theta is not None:
        return cert.theta
    return Adjoint(np.zeros((k, n)), np.zeros((k, m)), np.zeros((k, m, n)) if free else None)


def residuals_thm52(z: DiscreteTriple, cert: DualCertificate, scenario: Scenario,
                    tol: float = ACTIVE_TOL) -> ResidualReport:
    """Named residuals of the discrete optimality conditions.

    Equations are evaluated in the form in which they are stated, i.e.
    adjoint differences divided by h.  Implications (complementarity,
    orthogonality, measure support) use the activity pattern of ``z`` at
    ``tol``.
    """
    _check_triple(z, scenario)
    _check_cert(z, cert, scenario)
    k, m, n, h = z.mesh.k, scenario.m, scenario.n, z.mesh.h
    free = scenario.mode == "free_u"
    implicit = cert.side == "implicit"
    lam, p, eta, gam, sel = cert.lam, cert.p, cert.eta, cert.gamma, cert.sel
    th = _theta(cert, k, m, n, free)
    act = _activity(z, tol)
    s = slacks(z)
    vel = np.diff(z.x, axis=0) / h
    nu = lam * (sel.vx + th.x / h) - p.x[1:]                       # (k, n)
    g_node = np.arange(k) + (1 if implicit else 0)                  # node of step j
    res: Dict[str, float] = {}

    def put(name, val):
        val = np.asarray(val, dtype=float)
        res[name] = max(res.get(name, 0.0), float(np.abs(val).max(initial=0.0)))

    # primal representation and complementarity
    put("dyn", vel + np.einsum("jm,jmn->jn", eta, z.u[g_node]))
    put("compl-eta", eta * np.maximum(s[g_node], 0.0) * (~act[g_node]))
    put("compl-eta", np.where(~act[g_node], eta, 0.0))
    put("sign", min(lam, 0.0))
    put("sign", np.minimum(eta, 0.0))

    # subgradient selections lie in the subdifferential intervals
    bnd = subgradient_bounds(z, scenario)
    for key in ("wx", "wb", "vx", "vb") + (("wu", "vu") if free else ()):
        lo, hi = bnd[key]
        val = getattr(sel, key).reshape(lo.shape)
        put("subgrad", np.maximum(lo - val, 0.0))
        put("subgrad", np.maximum(val - hi, 0.0))

    # rate equations
    put("psi-b", p.b[1:] - lam * (sel.vb + th.b / h))
    if free:
        put("psi-u", p.u[1:] - lam * (sel.vu + th.u / h))

    # adjoint equations at nodes 0..k-1; the graph term of node j is step
    # j - 1 (implicit) or step j (explicit)
    for j in range(k):
        g = j - 1 if implicit else j
        dpx = (p.x[j + 1] - p.x[j]) / h - lam * sel.wx[j]
        dpb = (p.b[j + 1] - p.b[j]) / h - lam * sel.wb[j]
        if g >= 0:
            dpx = dpx - z.u[j].T @ gam[g]
            dpb = dpb + gam[g]
        put("adjx", dpx)
        put("adjb", dpb)
        if free:
            dpu = (p.u[j + 1] - p.u[j]) / h - lam * sel.wu[j] \
                - (2.0 / h) * cert.xi[j][:, None] * z.u[j]
            if g >= 0:
                dpu = dpu - gam[g][:, None] * z.x[j][None, :] + eta[g][:, None] * nu[g][None, :]
            put("adju", dpu)

    # orthogonality and measure support per step
    for j in range(k):
        node = g_node[j]
        pos = np.flatnonzero(eta[j] > NONTRIV_TOL)
        put("orth", z.u[node][pos] @ nu[j])
        if implicit:
            put("meas-supp", np.where(~act[node], gam[j], 0.0))
        elif not act[node].any():
            put("meas-supp", gam[j])

    # normalization multipliers
    if free:
        st = _ksi_status(z, scenario)
        xi = cert.xi
        put("ksi", np.where(st == 1, xi, 0.0))
        put("ksi", np.where(st == 2, np.maximum(xi, 0.0), 0.0))
        put("ksi", np.where(st == 3, np.minimum(xi, 0.0), 0.0))

    # right endpoint
    grad_phi = scenario.cost.terminal.gradient(z.x[-1])
    put("trans-x", p.x[-1] + lam * grad_phi + z.u[-1].T @ p.b[-1])
    if implicit:
        put("trans-b", p.b[-1] - h * gam[-1])
    else:
        put("trans-b", np.minimum(p.b[-1], 0.0))
        put("trans-b", np.where(~act[-1], p.b[-1], 0.0))
    if free:
        tu = p.u[-1] + p.b[-1][:, None] * z.x[-1][None, :] \
            + 2.0 * cert.xi[-1][:, None] * z.u[-1]
        if implicit:
            tu = tu - h * eta[-1][:, None] * nu[-1][None, :]
        put("trans-u", tu)

    # left endpoint: the constraint x_0 in C(u_0, b_0)
    if implicit:
        put("init-b", np.maximum(p.b[0], 0.0))
        put("init-b", np.where(~act[0], p.b[0], 0.0))
        if free:
            put("init-u", p.u[0] + p.b[0][:, None] * z.x[0][None, :])

    nontriv = lam + np.linalg.norm(p.b[0]) + (np.linalg.norm(p.u[0]) if free else 0.0)
    enhanced = lam + np.linalg.norm(p.at(-1))
    return ResidualReport(res, float(nontriv), float(enhanced), False, RESIDUAL_TOL)


def zero_certificate(z: DiscreteTriple, scenario: Scenario,
                     side: str = "implicit") -> DualCertificate:
    """All dual quantities zero; eta and the selections taken from ``z``."""
    k, m, n = z.mesh.k, scenario.m, scenario.n
    free = scenario.mode == "free_u"
    p = Adjoint(np.zeros((k + 1, n)), np.zeros((k + 1, m)),
                np.zeros((k + 1, m, n)) if free else None)
    return DualCertificate(0.0, p, recover_eta(z, side), np.zeros((k, m)),
                           default_selections(z, scenario),
                           np.zeros((k + 1, m)) if free else None, side=side)


# ----------------------------------------------------------------------
# certificate LP


class _System:
    """Sparse linear rows over the certificate unknowns, grouped by condition."""

    def __init__(self):
        self.nvar = 0
        self.lb: List[float] = []
        self.ub: List[float] = []
        self.rows: List[Tuple[Dict[int, float], float, str, str, int]] = []

    def var(self, shape, lb=-np.inf, ub=np.inf) -> np.ndarray:
        size = int(np.prod(shape)) if shape else 1
        idx = np.arange(self.nvar, self.nvar + size).reshape(shape)
        self.nvar += size
        self.lb += [lb] * size
        self.ub += [ub] * size
        return idx

    def add(self, coef: Dict[int, float], sense: str, group: str, node: int,
            rhs: float = 0.0) -> None:
        coef = {v: c for v, c in coef.items() if c != 0.0}
        if coef or rhs != 0.0:
            self.rows.append((coef, rhs, sense, group, node))

    def groups(self) -> List[str]:
        seen: List[str] = []
        for r in self.rows:
            if r[3] not in seen:
                seen.append(r[3])
        return seen

    def matrices(self, keep: Optional[Sequence[int]] = None):
        idx = range(len(self.rows)) if keep is None else keep
        eq, ub = [], []
        for r in idx:
            (eq if self.rows[r][2] == "eq" else ub).append(r)

        def build(sel):
            if not sel:
                return None, None
            data, ri, ci = [], [], []
            for q, r in enumerate(sel):
                for v, c in self.rows[r][0].items():
                    data.append(c)
                    ri.append(q)
                    ci.append(v)
            A = sparse.csr_matrix((data, (ri, ci)), shape=(len(sel), self.nvar))
            return A, np.array([self.rows[r][1] for r in sel])

        Ae, be = build(eq)
        Au, bu = build(ub)
        return Ae, be, Au, bu, eq, ub


def _acc(d: Dict[int, float], v: int, c: float) -> None:
    if c != 0.0:
        d[int(v)] = d.get(int(v), 0.0) + float(c)


def _merge(*parts: Tuple[float, Dict[int, float]]) -> Dict[int, float]:
    out: Dict[int, float] = {}
    for scale, d in parts:
        for v, c in d.items():
            _acc(out, v, scale * c)
    return out


@dataclass
class _Layout:
    lam: int
    px: np.ndarray
    pb: np.ndarray
    gam: np.ndarray
    pu: Optional[np.ndarray]
    xi: Optional[np.ndarray]
    lw: Dict[str, List[List[Dict[int, float]]]]
    sigma: Dict[Tuple[str, int, int], int]


def _assemble(z: DiscreteTriple, scenario: Scenario, side: str, act: np.ndarray,
              eta: np.ndarray) -> Tuple[_System, _Layout]:
    k, m, n, h = z.mesh.k, scenario.m, scenario.n, z.mesh.h
    free = scenario.mode == "free_u"
    implicit = side == "implicit"
    S = _System()
    lam = int(S.var((), 0.0, np.inf))
    px = S.var((k + 1, n))
    pb = S.var((k + 1, m))
    gam = S.var((k, m))
    pu = S.var((k + 1, m, n)) if free else None
    xi = S.var((k + 1, m)) if free else None

    # lambda times the selections: fixed multiples of lambda where the
    # subdifferential is a singleton, otherwise sigma in lambda [lo, hi]
    bnd = subgradient_bounds(z, scenario)
    lw: Dict[str, List[List[Dict[int, float]]]] = {}
    sigma: Dict[Tuple[str, int, int], int] = {}
    for key, (lo, hi) in bnd.items():
        if key in ("wu", "vu") and not free:
            continue
        table = []
        for j in range(k):
            row = []
            for c in range(lo.shape[1]):
                if hi[j, c] - lo[j, c] <= 1e-14 * (1 + abs(lo[j, c])):
                    row.append({lam: float(lo[j, c])} if lo[j, c] != 0 else {})
                else:
                    v = int(S.var(()))
                    sigma[(key, j, c)] = v
                    S.add({v: 1.0, lam: -float(hi[j, c])}, "ub", "subgrad", j)
                    S.add({v: -1.0, lam: float(lo[j, c])}, "ub", "subgrad", j)
                    row.append({v: 1.0})
            table.append(row)
        lw[key] = table

    def nu(j, c) -> Dict[int, float]:
        """lambda v^x_jc - p^x_{j+1,c} (theta vanishes for a self reference)."""
        return _merge((1.0, lw["vx"][j][c]), (-1.0, {px[j + 1, c]: 1.0}))

    for j in range(k):
        for i in range(m):
            S.add(_merge((1.0, {pb[j + 1, i]: 1.0}), (-1.0, lw["vb"][j][i])), "eq", "psi-b", j)
        if free:
            for i in range(m):
                for c in range(n):
                    S.add(_merge((1.0, {pu[j + 1, i, c]: 1.0}), (-1.0, lw["vu"][j][i * n + c])),
                          "eq", "psi-u", j)

    for j in range(k):
        g = j - 1 if implicit else j
        for c in range(n):
            d = _merge((1.0 / h, {px[j + 1, c]: 1.0, px[j, c]: -1.0}), (-1.0, lw["wx"][j][c]))
            if g >= 0:
                for i in range(m):
                    _acc(d, gam[g, i], -z.u[j, i, c])
            S.add(d, "eq", "adjx", j)
        for i in range(m):
            d = _merge((1.0 / h, {pb[j + 1, i]: 1.0, pb[j, i]: -1.0}), (-1.0, lw["wb"][j][i]))
            if g >= 0:
                _acc(d, gam[g, i], 1.0)
            S.add(d, "eq", "adjb", j)
        if free:
            for i in range(m):
                for c in range(n):
                    d = _merge((1.0 / h, {pu[j + 1, i, c]: 1.0, pu[j, i, c]: -1.0}),
                               (-1.0, lw["wu"][j][i * n + c]))
                    _acc(d, xi[j, i], -2.0 / h * z.u[j, i, c])
                    if g >= 0:
                        _acc(d, gam[g, i], -z.x[j, c])
                        if eta[g, i] != 0.0:
                            d = _merge((1.0, d), (eta[g, i], nu(g, c)))
                    S.add(d, "eq", "adju", j)

    for j in range(k):
        node = j + 1 if implicit else j
        for i in np.flatnonzero(eta[j] > NONTRIV_TOL):
            d: Dict[int, float] = {}
            for c in range(n):
                d = _merge((1.0, d), (z.u[node, i, c], nu(j, c)))
            S.add(d, "eq", "orth", j)
        if implicit:
            for i in np.flatnonzero(~act[node]):
                S.add({gam[j, i]: 1.0}, "eq", "meas-supp", j)
        elif not act[node].any():
            for i in range(m):
                S.add({gam[j, i]: 1.0}, "eq", "meas-supp", j)

    if free:
        st = _ksi_status(z, scenario)
        for j, i in zip(*np.nonzero(st)):
            if st[j, i] == 1:
                S.add({xi[j, i]: 1.0}, "eq", "ksi", int(j))
            elif st[j, i] == 2:
                S.add({xi[j, i]: 1.0}, "ub", "ksi", int(j))
            else:
                S.add({xi[j, i]: -1.0}, "ub", "ksi", int(j))

    grad_phi = scenario.cost.terminal.gradient(z.x[-1])
    for c in range(n):
        d = {px[k, c]: 1.0}
        _acc(d, lam, grad_phi[c])
        for i in range(m):
            _acc(d, pb[k, i], z.u[k, i, c])
        S.add(d, "eq", "trans-x", k)
    for i in range(m):
        if implicit:
            S.add({pb[k, i]: 1.0, gam[k - 1, i]: -h}, "eq", "trans-b", k)
        elif act[k, i]:
            S.add({pb[k, i]: -1.0}, "ub", "trans-b", k)
        else:
            S.add({pb[k, i]: 1.0}, "eq", "trans-b", k)
    if free:
        for i in range(m):
            for c in range(n):
                d = {pu[k, i, c]: 1.0}
                _acc(d, pb[k, i], z.x[k, c])
                _acc(d, xi[k, i], 2.0 * z.u[k, i, c])
                if implicit and eta[k - 1, i] != 0.0:
                    d = _merge((1.0, d), (-h * eta[k - 1, i], nu(k - 1, c)))
                S.add(d, "eq", "trans-u", k)
    if implicit:
        for i in range(m):
            if act[0, i]:
                S.add({pb[0, i]: 1.0}, "ub", "init-b", 0)
            else:
                S.add({pb[0, i]: 1.0}, "eq", "init-b", 0)
            if free:
                for c in range(n):
                    S.add({pu[0, i, c]: 1.0, pb[0, i]: z.x[0, c]}, "eq", "init-u", 0)
    return S, _Layout(lam, px, pb, gam, pu, xi, lw, sigma)


def _solve(S: _System, c: np.ndarray, lb: np.ndarray, ub: np.ndarray,
           keep: Optional[Sequence[int]] = None, tight: bool = True):
    Ae, be, Au, bu, _, _ = S.matrices(keep)
    res = linprog(c, A_ub=Au, b_ub=bu, A_eq=Ae, b_eq=be,
                  bounds=list(zip(lb, ub)), method="highs",
                  options=_LP_OPTIONS if tight else {})
    return res


def _polish(S: _System, x: np.ndarray, lb: np.ndarray, ub: np.ndarray) -> np.ndarray:
    """Project the LP point onto its active equality set by least squares."""
    Ae, be, Au, bu, _, _ = S.matrices()
    blocks, rhs = [], []
    if Ae is not None:
        blocks.append(Ae)
        rhs.append(be)
    if Au is not None:
        act = np.flatnonzero(Au @ x - bu >= -1e-9)
        if act.size:
            blocks.append(Au[act])
            rhs.append(bu[act])
    fixed = np.flatnonzero((x - lb <= 1e-9) | (ub - x <= 1e-9))
    if fixed.size:
        E = sparse.csr_matrix((np.ones(fixed.size), (np.arange(fixed.size), fixed)),
                              shape=(fixed.size, S.nvar))
        blocks.append(E)
        rhs.append(np.clip(x[fixed], lb[fixed], ub[fixed]))
    if not blocks:
        return x
    A = sparse.vstack(blocks).tocsr()
    r = np.concatenate(rhs) - A @ x
    if np.abs(r).max(initial=0.0) == 0.0:
        return x
    dx = lsqr(A, r, atol=1e-16, btol=1e-16, iter_lim=20 * S.nvar)[0]
    y = x + dx
    if np.abs(np.concatenate(rhs) - A @ y).max() <= np.abs(r).max():
        return y
    return x


def _extract(S: _System, L: _Layout, xv: np.ndarray, z: DiscreteTriple,
             scenario: Scenario, side: str, eta: np.ndarray) -> DualCertificate:
    k, m, n = z.mesh.k, scenario.m, scenario.n
    free = scenario.mode == "free_u"
    lam = float(max(xv[L.lam], 0.0))
    p = Adjoint(xv[L.px], xv[L.pb], xv[L.pu] if free else None)
    bnd = subgradient_bounds(z, scenario)
    sel = {}
    for key, (lo, hi) in bnd.items():
        val = 0.5 * (lo + hi)
        for (kk, j, c), v in L.sigma.items():
            if kk == key and lam > NONTRIV_TOL:
                val[j, c] = np.clip(xv[v] / lam, lo[j, c], hi[j, c])
        sel[key] = _shape_sel(key, val, m, n)
    sel_obj = Selections(sel["wx"], sel["wb"], sel["vx"], sel["vb"],
                         sel["wu"] if free else None, sel["vu"] if free else None)
    return DualCertificate(lam, p, eta, xv[L.gam], sel_obj,
                           xv[L.xi] if free else None, side=side)


def _deletion_filter(S: _System, lb: np.ndarray, ub: np.ndarray, refine: bool
                     ) -> Tuple[Tuple[str, ...], Tuple[Tuple[str, int], ...]]:
    """Irreducible infeasible subset by greedy deletion, first over whole
    conditions and then over single rows of the surviving conditions."""
    zero = np.zeros(S.nvar)

    def infeasible(rows):
        return _solve(S, zero, lb, ub, keep=rows, tight=False).status == 2

    groups = S.groups()
    by_group = {g: [r for r, row in enumerate(S.rows) if row[3] == g] for g in groups}
    kept = list(groups)
    for g in groups:
        trial = [r for gg in kept if gg != g for r in by_group[gg]]
        if infeasible(trial):
            kept.remove(g)
    rows = [r for g in kept for r in by_group[g]]
    if refine:
        def chop(candidates, fixed):
            # candidates: rows under test; fixed: rows known to be needed
            if not candidates:
                return []
            if len(candidates) == 1:
                return [] if infeasible(fixed) else candidates
            half = len(candidates) // 2
            left, right = candidates[:half], candidates[half:]
            if infeasible(fixed + right):
                return chop(right, fixed)
            if infeasible(fixed + left):
                return chop(left, fixed)
            keep_left = chop(left, fixed + right)
            keep_right = chop(right, fixed + keep_left)
            return keep_left + keep_right
        rows = chop(rows, [])
    pairs = tuple((S.rows[r][3], S.rows[r][4]) for r in rows)
    return tuple(kept), pairs


def _branches(z: DiscreteTriple, tol: float) -> List[np.ndarray]:
    s = slacks(z)
    base = s <= tol
    border = [tuple(ix) for ix in np.argwhere((s > tol) & (s <= 10 * tol))]
    if len(border) > int(np.log2(BRANCH_CAP)):
        log.info("%d borderline activities; branching on the first %d",
                 len(border), int(np.log2(BRANCH_CAP)))
        border = border[:int(np.log2(BRANCH_CAP))]
    out = []
    for flags in itertools.product((False, True), repeat=len(border)):
        a = base.copy()
        for ix, f in zip(border, flags):
            a[ix] = f
        out.append(a)
    return out


def _parse_mode(lambda_mode) -> Optional[float]:
    if lambda_mode in ("free", None):
        return None
    if isinstance(lambda_mode, (tuple, list)) and lambda_mode and lambda_mode[0] == "fixed":
        return float(lambda_mode[1])
    if isinstance(lambda_mode, (int, float)):
        return float(lambda_mode)
    raise ConfigError(f"lambda_mode must be 'free', a number or ('fixed', value), got {lambda_mode!r}")


def solve_certificate(z: DiscreteTriple, scenario: Scenario,
                      lambda_mode: Union[str, float, Tuple[str, float]] = "free",
                      side: str = "implicit", tol: float = ACTIVE_TOL,
                      refine_conflict: bool = True
                      ) -> Union[DualCertificate, Infeasible]:
    """Solve the discrete conditions for the dual unknowns by linear programming.

    The multipliers eta come from the primal velocities; complementarity,
    orthogonality and measure-support implications are linearized with the
    activity pattern of ``z`` (borderline activities are branched over).

    ``lambda_mode`` fixes lambda (a number or ("fixed", value)) or leaves
    it free.  A fixed lambda returns a certificate or :class:`Infeasible`
    with an irreducible conflicting subset of conditions.  A free lambda
    always returns a certificate carrying a verdict:

    ``"supported"``
        a certificate with lambda > 0 exists (returned with lambda = 1
        before normalization);
    ``"degenerate"``
        every certificate has lambda = 0 but a nontrivial one exists;
    ``"not optimal"``
        every certificate violates the applicable nontriviality condition,
        the enhanced one (lambda, p_k) != 0 when the initial node is
        strictly inactive.
    """
    _check_triple(z, scenario)
    if side not in SIDES:
        raise ConfigError(f"side must be one of {SIDES}")
    if z.mesh.k < 2:
        raise ConfigError("certificates need k >= 2")
    lam_fixed = _parse_mode(lambda_mode)
    eta = recover_eta(z, side, tol)
    h = z.mesh.h
    enhanced = _enhanced_applies(z, scenario, tol)
    best: Optional[DualCertificate] = None
    first_conflict: Optional[Infeasible] = None
    rank = {"supported": 2, "degenerate": 1, "not optimal": 0}

    for act in _branches(z, tol):
        S, L = _assemble(z, scenario, side, act, eta)
        lb, ub = np.array(S.lb, dtype=float), np.array(S.ub, dtype=float)
        if lam_fixed is not None:
            S.add({L.lam: 1.0}, "eq", "lambda", 0, lam_fixed)
            res = _solve(S, np.zeros(S.nvar), lb, ub)
            if res.status == 0:
                xv = _polish(S, res.x, lb, ub)
                cert = _extract(S, L, xv, z, scenario, side, eta)
                verdict = "supported" if lam_fixed > 0 else "degenerate"
                return replace(cert, verdict=verdict,
                               stats={"lambda_mode": "fixed", "enhanced_applies": enhanced})
            if first_conflict is None:
                groups, rows = _deletion_filter(S, lb, ub, refine_conflict)
                first_conflict = Infeasible(groups, rows,
                                            f"no certificate with lambda = {lam_fixed:g}")
            continue

        # free lambda: largest lambda in [0, 1]
        ub[L.lam] = 1.0
        c = np.zeros(S.nvar)
        c[L.lam] = -1.0
        res = _solve(S, c, lb, ub)
        lam_max = float(-res.fun) if res.status == 0 else 0.0
        stats = {"lambda_mode": "free", "lambda_max": lam_max, "enhanced_applies": enhanced}
        if lam_max > NONTRIV_TOL:
            lb[L.lam] = ub[L.lam] = 1.0
            res = _solve(S, np.zeros(S.nvar), lb, ub)
            xv = _polish(S, res.x, lb, ub)
            cert = replace(_extract(S, L, xv, z, scenario, side, eta),
                           verdict="supported", stats=stats)
            return cert.normalized(h)

        # lambda = 0 on every certificate: probe the nontriviality vector
        lb[L.lam] = ub[L.lam] = 0.0
        lb_box = np.maximum(lb, -1.0)
        ub_box = np.minimum(ub, 1.0)
        k = z.mesh.k
        probe = list(L.px[k]) + list(L.pb[k])
        if L.pu is not None:
            probe += list(L.pu[k].ravel())
        pT_max = _probe(S, probe, lb_box, ub_box)
        stats["pT_max"] = pT_max[0]
        start = list(L.pb[0]) + (list(L.pu[0].ravel()) if L.pu is not None else [])
        p0_max = _probe(S, start, lb_box, ub_box)
        stats["p0_max"] = p0_max[0]
        use = pT_max if enhanced else p0_max
        if use[0] > NONTRIV_TOL:
            xv = _polish(S, use[1], lb_box, ub_box)
            cert = replace(_extract(S, L, xv, z, scenario, side, eta),
                           verdict="degenerate", stats=stats).normalized(h)
        else:
            cert = replace(zero_certificate(z, scenario, side), eta=eta,
                           verdict="not optimal", stats=stats)
        if best is None or rank[cert.verdict] > rank[best.verdict]:
            best = cert
    if lam_fixed is not None:
        return first_conflict
    return best


def _probe(S: _System, variables: Sequence[int], lb: np.ndarray, ub: np.ndarray
           ) -> Tuple[float, Optional[np.ndarray]]:
    """Largest |v| over the boxed certificate cone for v in ``variables``."""
    best, arg = 0.0, None
    for v in variables:
        for sgn in (1.0, -1.0):
            c = np.zeros(S.nvar)
            c[v] = -sgn
            res = _solve(S, c, lb, ub)
            if res.status == 0 and -res.fun > best:
                best, arg = float(-res.fun), res.x
    return best, arg


# ----------------------------------------------------------------------
# continuous certificates


@dataclass(frozen=True)
class Measure:
    """Vector measure on [0, T]: interval densities plus atoms.

    ``density`` has one row per mesh interval (mass h * density spread
    uniformly over the interval); ``atoms`` lists (time, mass vector).
    """

    density: np.ndarray
    atoms: Tuple[Tuple[float, np.ndarray], ...] = ()

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if d.ndim != 2:
            raise MeasureFormat("density must be a two-dimensional array")
        atoms = []
        for a in self.atoms:
            if len(a) != 2:
                raise MeasureFormat("atoms are (time, mass) pairs")
            t, mass = float(a[0]), np.asarray(a[1], dtype=float).reshape(-1)
            if mass.size != d.shape[1] or not np.all(np.isfinite(mass)) or not np.isfinite(t):
                raise MeasureFormat("atom mass has the wrong size or is not finite")
            atoms.append((t, mass))
        if not np.all(np.isfinite(d)):
            raise MeasureFormat("density must be finite")
        object.__setattr__(self, "density", d)
        object.__setattr__(self, "atoms", tuple(atoms))

    @classmethod
    def zero(cls, k: int, m: int) -> "Measure":
        return cls(np.zeros((k, m)))

    def check(self, mesh: Mesh, m: int) -> None:
        if self.density.shape != (mesh.k, m):
            raise MeasureFormat(f"density shape {self.density.shape}, expected {(mesh.k, m)}")
        for t, _ in self.atoms:
            if t < -1e-12 or t > mesh.T + 1e-12:
                raise MeasureFormat(f"atom at t = {t} lies outside [0, T]")

    def scaled(self, c: float) -> "Measure":
        return Measure(c * self.density, tuple((t, c * a) for t, a in self.atoms))

    def tail(self, mesh: Mesh, f_mid: np.ndarray, f_at) -> np.ndarray:
        """Rows j = 0..k of int_[t_j, T] f_i dmu_i, face by face.

        ``f_mid`` (k, m, d) is the integrand on each interval; ``f_at(t)``
        returns it at an atom as (m, d).
        """
        h = mesh.h
        contrib = h * self.density[:, :, None] * f_mid           # (k, m, d)
        out = np.zeros((mesh.k + 1,) + contrib.shape[1:])
        out[:-1] = np.cumsum(contrib[::-1], axis=0)[::-1]
        nodes = mesh.nodes
        for t, mass in self.atoms:
            val = mass[:, None] * f_at(t)
            out[nodes <= t + 1e-12] += val
        return out

    def variation(self, mesh: Mesh, a: float, b: float) -> float:
        """Total variation on the closed window [a, b]."""
        lo = mesh.nodes[:-1]
        overlap = np.clip(np.minimum(lo + mesh.h, b) - np.maximum(lo, a), 0.0, None)
        tv = float(np.sum(overlap * np.abs(self.density).sum(axis=1)))
        tv += sum(float(np.abs(mass).sum()) for t, mass in self.atoms
                  if a - 1e-12 <= t <= b + 1e-12)
        return tv

    def total(self, mesh: Mesh) -> float:
        return self.variation(mesh, 0.0, mesh.T)


@dataclass(frozen=True)
class ContinuousCertificate:
    """Grid representation of the continuous multipliers.

    ``p`` and ``q`` are node values (q is the left-continuous representative,
    so on interval (t_j, t_{j+1}] it takes the value q(t_{j+1})).  ``q`` may
    be None, in which case it is reconstructed from p and the measures.
    ``eta`` and ``sel`` have one row per interval.
    """

    lam: float
    mesh: Mesh
    p: Adjoint
    gamma: Measure
    eta: np.ndarray
    sel: Selections
    q: Optional[Adjoint] = None
    xi: Optional[Measure] = None

    def scaled(self, c: float) -> "ContinuousCertificate":
        if c <= 0:
            raise ValueError("scaling factor must be positive")
        return replace(self, lam=c * self.lam, p=self.p.scaled(c), gamma=self.gamma.scaled(c),
                       q=None if self.q is None else self.q.scaled(c),
                       xi=None if self.xi is None else self.xi.scaled(c))


def _midpoints(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a[:-1] + a[1:])


def _interp(mesh: Mesh, a: np.ndarray, t: float) -> np.ndarray:
    s = min(max(t / mesh.h, 0.0), mesh.k)
    j = min(int(np.floor(s)), mesh.k - 1)
    w = s - j
    return (1 - w) * a[j] + w * a[j + 1]


def reconstruct_q(z: DiscreteTriple, cert: ContinuousCertificate, with_u: bool) -> Adjoint:
    """q(t_j) = p(t_j) minus the measure integrals over [t_j, T]."""
    mesh = cert.mesh
    m = z.b.shape[1]
    u_mid, x_mid = _midpoints(z.u), _midpoints(z.x)
    g = cert.gamma
    su = g.tail(mesh, u_mid, lambda t: _interp(mesh, z.u, t)).sum(axis=1)          # (N, n)
    sb = g.tail(mesh, np.ones((mesh.k, m, 1)), lambda t: np.ones((m, 1)))[:, :, 0]  # (N, m)
    qx = cert.p.x - su
    qb = cert.p.b + sb
    qu = None
    if with_u:
        rep = np.repeat(x_mid[:, None, :], m, axis=1)
        sx = g.tail(mesh, rep, lambda t: np.repeat(_interp(mesh, z.x, t)[None, :], m, axis=0))
        sxi = 0.0
        if cert.xi is not None:
            sxi = cert.xi.tail(mesh, u_mid, lambda t: _interp(mesh, z.u, t))
        qu = cert.p.u - (sx + 2.0 * sxi)
    return Adjoint(qx, qb, qu)


def _continuous_residuals(z: DiscreteTriple, cert: ContinuousCertificate,
                          scenario: Scenario, with_u: bool, tol: float) -> ResidualReport:
    _check_triple(z, scenario)
    mesh = cert.mesh
    if z.mesh != mesh:
        raise MeshMismatch("certificate grid differs from the candidate grid")
    k, m, n, h = mesh.k, scenario.m, scenario.n, mesh.h
    shapes = {"p.x": (cert.p.x, (k + 1, n)), "p.b": (cert.p.b, (k + 1, m)),
              "eta": (cert.eta, (k, m)), "sel.wx": (cert.sel.wx, (k, n)),
              "sel.wb": (cert.sel.wb, (k, m)), "sel.vx": (cert.sel.vx, (k, n)),
              "sel.vb": (cert.sel.vb, (k, m))}
    if with_u:
        shapes.update({"p.u": (cert.p.u, (k + 1, m, n)), "sel.wu": (cert.sel.wu, (k, m, n)),
                       "sel.vu": (cert.sel.vu, (k, m, n))})
    for name, (arr, shape) in shapes.items():
        if arr is None or np.shape(arr) != shape:
            raise ShapeMismatch(f"{name} has shape {None if arr is None else np.shape(arr)}, "
                                f"expected {shape}")
    cert.gamma.check(mesh, m)
    if cert.xi is not None:
        cert.xi.check(mesh, m)

    lam, p, eta, sel = cert.lam, cert.p, cert.eta, cert.sel
    q_rec = reconstruct_q(z, cert, with_u)
    q = cert.q if cert.q is not None else q_rec
    s = slacks(z)
    res: Dict[str, float] = {}

    def put(name, val):
        val = np.asarray(val, dtype=float)
        res[name] = max(res.get(name, 0.0), float(np.abs(val).max(initial=0.0)))

    u_mid = _midpoints(z.u)
    vel = np.diff(z.x, axis=0) / h
    put("dyn", vel + np.einsum("jm,jmn->jn", eta, u_mid))
    s_int = np.minimum(np.maximum(s[:-1], 0.0), np.maximum(s[1:], 0.0))
    put("compl-eta", eta * s_int)
    put("sign", min(lam, 0.0))
    put("sign", np.minimum(eta, 0.0))

    nu = lam * sel.vx - q.x[1:]                                       # (k, n)
    mask = eta > NONTRIV_TOL
    put("orth", np.where(mask, np.einsum("jmn,jn->jm", u_mid, nu), 0.0))

    put("adj", (np.diff(p.x, axis=0) / h) - lam * sel.wx)
    put("adj", (np.diff(p.b, axis=0) / h) - lam * sel.wb)
    if with_u:
        rhs = lam * sel.wu - eta[:, :, None] * nu[:, None, :]
        put("adj", np.diff(p.u, axis=0) / h - rhs)
        put("hamilton-ub", q.u[1:] - lam * sel.vu)
    put("hamilton-ub", q.b[1:] - lam * sel.vb)

    put("q-identity", q.x - q_rec.x)
    put("q-identity", q.b - q_rec.b)
    if with_u:
        put("q-identity", q.u - q_rec.u)

    bnd = subgradient_bounds(z, scenario)
    keys = ("wx", "wb", "vx", "vb") + (("wu", "vu") if with_u else ())
    for key in keys:
        lo, hi = bnd[key]
        val = getattr(sel, key).reshape(lo.shape)
        put("subgrad", np.maximum(lo - val, 0.0))
        put("subgrad", np.maximum(val - hi, 0.0))

    grad_phi = scenario.cost.terminal.gradient(z.x[-1])
    put("trans-x", p.x[-1] + lam * grad_phi + z.u[-1].T @ p.b[-1])
    if with_u:
        r = p.u[-1] + p.b[-1][:, None] * z.x[-1][None, :]
        proj = np.einsum("mn,mn->m", r, z.u[-1])[:, None] * z.u[-1]
        put("trans-u", r - proj)
    put("trans-b", np.minimum(p.b[-1], 0.0))
    put("trans-b", np.where(s[-1] > tol, p.b[-1], 0.0))

    # nonatomicity: no measure mass near strictly inactive times
    radius = 2 * h
    nodes = mesh.nodes
    inactive_all = np.all(s > tol, axis=1)
    na = 0.0
    for j in range(k):                                # t in [0, T)
        near = np.abs(nodes - nodes[j]) <= radius + 1e-12
        if inactive_all[near].all():
            na = max(na, cert.gamma.variation(mesh, nodes[j] - radius, nodes[j] + radius))
    res["nonatomic-a"] = na
    if with_u and cert.xi is not None:
        tau = scenario.tau
        norms = np.linalg.norm(z.u, axis=2)
        interior = np.all((norms > 0.5) & (norms < 1.5), axis=1)
        nb = 0.0
        for j in range(k + 1):
            t = nodes[j]
            if not (t < tau or t > mesh.T - tau):
                continue
            near = np.abs(nodes - t) <= radius + 1e-12
            if interior[near].all():
                a, b = max(t - radius, 0.0), min(t + radius, mesh.T)
                if t < tau:
                    b = min(b, tau - 1e-12)
                else:
                    a = max(a, mesh.T - tau + 1e-12)
                nb = max(nb, cert.xi.variation(mesh, a, b))
        res["nonatomic-b"] = nb

    nontriv = lam + np.linalg.norm(q.at(0)) + np.linalg.norm(p.at(-1))
    enhanced = lam + np.linalg.norm(p.at(-1))
    xi_mass = cert.xi.total(mesh) if cert.xi is not None else 0.0
    xi_at_zero = 0.0
    if cert.xi is not None:
        xi_at_zero = sum(float(np.abs(a).sum()) for t, a in cert.xi.atoms if abs(t) <= 1e-12)
    degenerate = bool(abs(lam) <= NONTRIV_TOL and p.max_abs() <= NONTRIV_TOL
                      and cert.gamma.total(mesh) <= NONTRIV_TOL
                      and xi_at_zero > NONTRIV_TOL
                      and abs(xi_mass - xi_at_zero) <= NONTRIV_TOL)
    return ResidualReport(res, float(nontriv), float(enhanced), degenerate, RESIDUAL_TOL)


def residuals_thm61(z: DiscreteTriple, cert: ContinuousCertificate, scenario: Scenario,
                    tol: float = ACTIVE_TOL) -> ResidualReport:
    """Grid residuals of the continuous conditions with controlled normals.

    Interval quantities use the left-continuous q (its value at the right
    node), interval midpoints of u and x inside the measure integrals and
    the node-left evaluation of the subdifferential.  Certificates of the
    degenerate form lambda = 0, p = 0, gamma = 0, xi concentrated at t = 0
    are flagged ``degenerate``.
    """
    if cert.p.u is None:
        raise ShapeMismatch("controlled normals need the p^u component")
    return _continuous_residuals(z, cert, scenario, True, tol)


def residuals_thm63(z: DiscreteTriple, cert: ContinuousCertificate, scenario: Scenario,
                    tol: float = ACTIVE_TOL) -> ResidualReport:
    """Grid residuals of the continuous conditions with fixed normals.

    The adjoint equation reduces to p' = lambda w and q omits the normal
    components.
    """
    if scenario.mode != "fixed_u":
        raise ConfigError("fixed-normal conditions need a fixed_u scenario")
    return _continuous_residuals(z, cert, scenario, False, tol)


def to_continuous(cert: DualCertificate, z: DiscreteTriple) -> ContinuousCertificate:
    """Continuous certificate generated by a discrete one.

    The discrete adjoint plays the role of q (node j carries the value on
    the interval ending at t_j); the mass h gamma_j of step j becomes an
    atom at t_{j+1} and xi_j an atom at t_j.  p is recovered from the
    q identity.
    """
    mesh = z.mesh
    k, m = mesh.k, cert.gamma.shape[1]
    nodes = mesh.nodes
    gamma = Measure(np.zeros((k, m)),
                    tuple((nodes[j + 1], mesh.h * cert.gamma[j]) for j in range(k)
                          if np.any(cert.gamma[j] != 0)))
    xi = None
    if cert.xi is not None:
        xi = Measure(np.zeros((k, m)),
                     tuple((nodes[j], cert.xi[j]) for j in range(k + 1) if np.any(cert.xi[j] != 0)))
    q = cert.p
    # p = q + integrals; evaluate them with p = 0 and flip the sign
    zero_p = Adjoint(np.zeros_like(q.x), np.zeros_like(q.b),
                     None if q.u is None else np.zeros_like(q.u))
    probe = ContinuousCertificate(cert.lam, mesh, zero_p, gamma, cert.eta, cert.sel, None, xi)
    minus = reconstruct_q(z, probe, q.u is not None)
    p = Adjoint(q.x - minus.x, q.b - minus.b, None if q.u is None else q.u - minus.u)
    return ContinuousCertificate(cert.lam, mesh, p, gamma, cert.eta, cert.sel, q, xi)


def degenerate_certificate(z: DiscreteTriple, scenario: Scenario) -> ContinuousCertificate:
    """lambda = 0, p = 0, gamma = 0, xi a unit atom at t = 0 on every face.

    q is then (0, -2 u(0), 0) at t = 0 and vanishes on (0, T].
    """
    mesh = z.mesh
    k, m, n = mesh.k, scenario.m, scenario.n
    p = Adjoint(np.zeros((k + 1, n)), np.zeros((k + 1, m)), np.zeros((k + 1, m, n)))
    xi = Measure(np.zeros((k, m)), ((0.0, np.ones(m)),))
    sel = default_selections(z, scenario)
    if sel.wu is None:
        sel = replace(sel, wu=np.zeros((k, m, n)), vu=np.zeros((k, m, n)))
    cert = ContinuousCertificate(0.0, mesh, p, Measure.zero(k, m), recover_eta(z, "implicit"),
                                 sel, None, xi)
    return replace(cert, q=reconstruct_q(z, cert, True))

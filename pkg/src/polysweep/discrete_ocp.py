"""Discrete approximation problems for the controlled sweeping process.

A problem on the uniform mesh with k steps minimizes

    J_k = phi(x_k) + h sum_j l(t_j, x_j, u_j, b_j, dx_j/h, du_j/h, db_j/h)

over node values subject to the catch-up dynamics, the endpoint state
constraint and the unit-norm constraints on the normals.  The reduced
solver eliminates the state through the integrator and searches over the
control nodes only.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, InfeasibleInitial, SolverStalled
from .functions import PiecewisePoly
from .sweeping import (ControlPath, Mesh, StatePath, catch_up, catch_up_batch,
                       index_tau)

log = logging.getLogger(__name__)

ARGUMENTS = {"l1": ("x", "u", "b"), "l2": ("xdot",), "l3": ("udot", "bdot")}
KINDS = ("quadratic", "abs", "zero")
TERMINAL_KINDS = ("quadratic", "quadratic_half", "none")


# ----------------------------------------------------------------------
# costs


def _as_ref(spec) -> Optional[PiecewisePoly]:
    if spec is None or isinstance(spec, PiecewisePoly):
        return spec
    if isinstance(spec, dict):
        return PiecewisePoly(spec["breaks"], spec["coeffs"])
    return PiecewisePoly.constant(spec)


@dataclass(frozen=True)
class CostTerm:
    """weight * ||arg - ref(t)||^2 (quadratic) or weight * ||arg - ref(t)||_1 (abs)."""

    on: str
    kind: str = "quadratic"
    weight: float = 1.0
    ref: Optional[PiecewisePoly] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown cost kind {self.kind!r}")
        if self.on not in sum(ARGUMENTS.values(), ()):
            raise ConfigError(f"unknown cost argument {self.on!r}")
        if not math.isfinite(self.weight):
            raise ConfigError("cost weights must be finite")
        object.__setattr__(self, "ref", _as_ref(self.ref))

    @property
    def smooth(self) -> bool:
        return self.kind != "abs" or self.weight == 0.0

    def deviation(self, arg: np.ndarray, t: np.ndarray) -> np.ndarray:
        if self.ref is None:
            return arg
        r = np.asarray(self.ref(t), dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        return arg - r

    def value(self, arg: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Per-node values; ``arg`` has shape (..., K, d) and t shape (K,)."""
        if self.kind == "zero":
            return np.zeros(arg.shape[:-1])
        d = self.deviation(arg, t)
        if self.kind == "quadratic":
            return self.weight * np.sum(d * d, axis=-1)
        return self.weight * np.sum(np.abs(d), axis=-1)

    def subgradient_bounds(self, arg: np.ndarray, t: np.ndarray,
                           tol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
        """Componentwise interval [lo, hi] containing the (co)subdifferential."""
        if self.kind == "zero":
            z = np.zeros_like(arg)
            return z, z
        d = self.deviation(arg, t)
        if self.kind == "quadratic":
            g = 2.0 * self.weight * d
            return g, g
        s = np.sign(d) * self.weight
        lo = np.where(np.abs(d) <= tol, -self.weight, s)
        hi = np.where(np.abs(d) <= tol, self.weight, s)
        return lo, hi


@dataclass(frozen=True)
class TerminalCost:
    kind: str = "none"
    center: Optional[np.ndarray] = None
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in TERMINAL_KINDS:
            raise ConfigError(f"unknown terminal kind {self.kind!r}")
        if self.center is not None:
            object.__setattr__(self, "center", np.asarray(self.center, dtype=float))

    def _dev(self, x):
        return x if self.center is None else x - self.center

    def value(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.zeros(x.shape[:-1])
        d = self._dev(x)
        f = self.weight * np.sum(d * d, axis=-1)
        return 0.5 * f if self.kind == "quadratic_half" else f

    def gradient(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "none":
            return np.zeros_like(x)
        d = self._dev(x)
        return (1.0 if self.kind == "quadratic_half" else 2.0) * self.weight * d


@dataclass(frozen=True)
class CostSpec:
    terminal: TerminalCost = field(default_factory=TerminalCost)
    l1: Tuple[CostTerm, ...] = ()
    l2: Tuple[CostTerm, ...] = ()
    l3: Tuple[CostTerm, ...] = ()

    def __post_init__(self):
        for group, allowed in ARGUMENTS.items():
            terms = tuple(getattr(self, group))
            object.__setattr__(self, group, terms)
            for term in terms:
                if term.on not in allowed:
                    raise ConfigError(f"{group} term cannot act on {term.on!r}")

    def terms(self) -> Tuple[CostTerm, ...]:
        return self.l1 + self.l2 + self.l3

    @property
    def smooth(self) -> bool:
        return all(t.smooth for t in self.terms())


# ----------------------------------------------------------------------
# scenarios and discrete triples


@dataclass(frozen=True)
class SolverSettings:
    max_iter: int = 500
    fd_step: float = 1e-6
    tol: float = 1e-6
    mesh_tol: float = 1e-8
    pattern_max_iter: int = 20000
    seed: int = 0


@dataclass(frozen=True)
class Scenario:
    """Problem data.

    ``u_path`` gives the fixed normals (fixed_u) or the initial normals
    (free_u); ``b_path`` the initial offsets.  Both map t to arrays of
    shape (m, n) and (m,).
    """

    id: str
    n: int
    m: int
    T: float
    x0: np.ndarray
    cost: CostSpec
    u_path: Callable
    b_path: Callable
    mode: str = "fixed_u"
    tau: float = 0.0
    k: int = 100
    epsilon: float = 10.0
    M_tilde: float = 1e6
    solver: SolverSettings = field(default_factory=SolverSettings)
    params: Dict = field(default_factory=dict)
    notes: str = ""

    def __post_init__(self):
        if self.mode not in ("free_u", "fixed_u"):
            raise ConfigError(f"mode must be free_u or fixed_u, got {self.mode!r}")
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.size != self.n:
            raise ConfigError(f"x0 has {x0.size} entries, n = {self.n}")
        if not (0.0 <= self.tau <= self.T / 2):
            raise ConfigError("tau must lie in [0, T/2]")
        object.__setattr__(self, "x0", x0)

    def mesh(self, k: Optional[int] = None) -> Mesh:
        return Mesh(self.T, self.k if k is None else k)

    def controls(self, k: Optional[int] = None, b_path: Optional[Callable] = None,
                 u_path: Optional[Callable] = None) -> ControlPath:
        """Node values of the scenario paths (or of overriding paths)."""
        mesh = self.mesh(k)
        u_fn = u_path or self.u_path
        b_fn = b_path or self.b_path
        t = mesh.nodes
        u = np.array([np.asarray(u_fn(s), dtype=float).reshape(self.m, self.n) for s in t])
        b = np.array([np.asarray(b_fn(s), dtype=float).reshape(self.m) for s in t])
        return ControlPath(mesh, u, b, self.tau)

    def with_params(self, **kw) -> "Scenario":
        return replace(self, **kw)


@dataclass(frozen=True)
class DiscreteTriple:
    """Node values x (k+1, n), u (k+1, m, n), b (k+1, m)."""

    mesh: Mesh
    x: np.ndarray
    u: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        k1 = self.mesh.k + 1
        x = np.asarray(self.x, dtype=float)
        x = x[:, None] if x.ndim == 1 else x
        b = np.asarray(self.b, dtype=float)
        b = b[:, None] if b.ndim == 1 else b
        u = np.asarray(self.u, dtype=float)
        if u.ndim == 1:
            u = u[:, None, None]
        elif u.ndim == 2:
            u = u.reshape(k1, b.shape[1], -1)
        if x.shape[0] != k1 or u.shape[0] != k1 or b.shape[0] != k1:
            raise ConfigError("triple arrays must have k+1 rows")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_paths(cls, state: StatePath, ctrl: ControlPath) -> "DiscreteTriple":
        return cls(ctrl.mesh, state.x_nodes, ctrl.u_nodes, ctrl.b_nodes)

    def control_path(self, tau: float = 0.0) -> ControlPath:
        return ControlPath(self.mesh, self.u, self.b, tau)

    def state_path(self) -> StatePath:
        return StatePath(self.mesh, self.x)


def running_costs(cost: CostSpec, mesh: Mesh, X: np.ndarray, U: np.ndarray,
                  Bv: np.ndarray) -> np.ndarray:
    """h * sum_j l(...) with a left Riemann sum; leading batch axes allowed."""
    h = mesh.h
    t = mesh.nodes[:-1]
    k = mesh.k
    lead = X.shape[:-2]
    args = {
        "x": X[..., :-1, :],
        "u": U[..., :-1, :, :].reshape(lead + (k, -1)),
        "b": Bv[..., :-1, :],
        "xdot": np.diff(X, axis=-2) / h,
        "udot": (np.diff(U, axis=-3) / h).reshape(lead + (k, -1)),
        "bdot": np.diff(Bv, axis=-2) / h,
    }
    total = np.zeros(lead)
    for term in cost.terms():
        total = total + h * term.value(args[term.on], t).sum(axis=-1)
    return total


def _pc_l2_distance(mesh_a: Mesh, va: np.ndarray, mesh_b: Mesh, vb: np.ndarray) -> float:
    """int_0^T ||a(t) - b(t)||^2 dt for piecewise-constant a, b on two meshes."""
    br = np.union1d(np.round(mesh_a.nodes, 13), np.round(mesh_b.nodes, 13))
    mid = 0.5 * (br[:-1] + br[1:])
    ia = np.minimum((mid / mesh_a.h).astype(int), mesh_a.k - 1)
    ib = np.minimum((mid / mesh_b.h).astype(int), mesh_b.k - 1)
    d = va[ia] - vb[ib]
    return float(np.sum(np.diff(br) * np.sum(d * d, axis=1)))


def _dist2_above(value: float, bound: float) -> float:
    return max(0.0, value - bound) ** 2


def reference_terms(z: DiscreteTriple, ref: DiscreteTriple, M_tilde: float) -> Dict[str, float]:
    """Proximity integrals and the four squared distance penalties."""
    if abs(z.mesh.T - ref.mesh.T) > 1e-12:
        raise ConfigError("reference horizon differs")
    h = z.mesh.h
    out = {}
    for name, a, b in (("x", z.x, ref.x), ("u", z.u, ref.u), ("b", z.b, ref.b)):
        va = np.diff(a, axis=0).reshape(z.mesh.k, -1) / h
        vb = np.diff(b, axis=0).reshape(ref.mesh.k, -1) / ref.mesh.h
        out[f"prox_{name}"] = _pc_l2_distance(z.mesh, va, ref.mesh, vb)
    du0 = np.linalg.norm((z.u[1] - z.u[0]).reshape(-1)) / h
    db0 = np.linalg.norm(z.b[1] - z.b[0]) / h
    d2u = np.diff(z.u, n=2, axis=0).reshape(max(z.mesh.k - 1, 0), -1)
    d2b = np.diff(z.b, n=2, axis=0)
    out["pen_u_rate"] = _dist2_above(du0, M_tilde)
    out["pen_b_rate"] = _dist2_above(db0, M_tilde)
    out["pen_u_bv"] = _dist2_above(float(np.linalg.norm(d2u, axis=1).sum() / h), M_tilde)
    out["pen_b_bv"] = _dist2_above(float(np.linalg.norm(d2b, axis=1).sum() / h), M_tilde)
    return out


def cost_Jk(z: DiscreteTriple, scenario: Scenario,
            reference: Optional[DiscreteTriple] = None) -> float:
    """Bolza cost of a discrete triple, plus localization terms when a
    reference triple is supplied."""
    val = float(scenario.cost.terminal.value(z.x[-1])
                + running_costs(scenario.cost, z.mesh, z.x, z.u, z.b))
    if reference is not None:
        val += sum(reference_terms(z, reference, scenario.M_tilde).values())
    return val


def localization_residuals(z: DiscreteTriple, ref: DiscreteTriple, epsilon: float) -> Dict[str, float]:
    """Excess over eps/2 of the uniform and integral distances to ``ref``."""
    t = z.mesh.nodes
    rx = StatePath(ref.mesh, ref.x).x_at(t)
    rc = ControlPath(ref.mesh, ref.u, ref.b)
    ru, rb = rc.u_at(t), rc.b_at(t)
    dist = np.sqrt(np.sum((z.x - rx) ** 2, axis=1)
                   + np.sum((z.u - ru).reshape(len(t), -1) ** 2, axis=1)
                   + np.sum((z.b - rb) ** 2, axis=1))
    terms = reference_terms(z, ref, math.inf)
    integral = terms["prox_x"] + terms["prox_u"] + terms["prox_b"]
    return {"uniform": float(dist.max() - epsilon / 2),
            "integral": float(integral - epsilon / 2)}


# ----------------------------------------------------------------------
# problem assembly


@dataclass(frozen=True)
class Constraint:
    name: str
    index: Tuple[int, ...]
    kind: str           # "equality", "inequality", "inclusion", "penalty"
    description: str


@dataclass
class DiscreteProblem:
    scenario: Scenario
    mesh: Mesh
    constraints: List[Constraint]
    cost: Callable[[DiscreteTriple], float]

    def count(self, name: str) -> int:
        return sum(1 for c in self.constraints if c.name == name)

    def names(self) -> List[str]:
        seen: List[str] = []
        for c in self.constraints:
            if c.name not in seen:
                seen.append(c.name)
        return seen


def build(scenario: Scenario, k: int) -> DiscreteProblem:
    """Constraint list and cost closure of the k-step problem."""
    if k < 2:
        raise ConfigError("k must be at least 2")
    mesh = scenario.mesh(k)
    ctrl = scenario.controls(k)
    P0 = ctrl.polyhedron(0)
    if not P0.contains(scenario.x0):
        raise InfeasibleInitial(
            f"x0 violates the initial polyhedron by {-P0.slack(scenario.x0).min():.3e}")
    cons = [Constraint("init", (0,), "equality", "(x_0, u_0, b_0) fixed to the initial data")]
    for j in range(k):
        cons.append(Constraint("dyn", (j,), "inclusion",
                               "x_{j+1} - x_j = -h sum_i eta_ji u_i, eta >= 0, complementary"))
    for i in range(scenario.m):
        cons.append(Constraint("endpoint", (i,), "inequality", "<u_ki, x_k> <= b_ki"))
    if scenario.mode == "free_u":
        j_lo, j_hi = index_tau(mesh, scenario.tau)
        for j in range(k + 1):
            if j_lo <= j <= j_hi:
                cons.append(Constraint("normalization", (j,), "equality", "||u_ji|| = 1"))
            else:
                cons.append(Constraint("normalization_box", (j,), "inequality",
                                       "1/2 <= ||u_ji|| <= 3/2"))
    cons.append(Constraint("localization_uniform", (), "penalty",
                           f"||z_j - zbar(t_j)|| <= eps/2, eps = {scenario.epsilon:g}"))
    cons.append(Constraint("localization_integral", (), "penalty",
                           "velocity L2 distance to zbar <= eps/2"))
    if scenario.mode == "free_u":
        cons.append(Constraint("initial_rate_u", (), "penalty", "||(u_1 - u_0)/h|| <= M + 1"))
        cons.append(Constraint("bv_u", (), "penalty", "sum ||second difference of u||/h <= M + 1"))
    cons.append(Constraint("initial_rate_b", (), "penalty", "||(b_1 - b_0)/h|| <= M + 1"))
    cons.append(Constraint("bv_b", (), "penalty", "sum ||second difference of b||/h <= M + 1"))
    return DiscreteProblem(scenario, mesh, cons, lambda z, _s=scenario: cost_Jk(z, _s))


# ----------------------------------------------------------------------
# reduced-space solver


@dataclass
class ReducedResult:
    triple: DiscreteTriple
    state: StatePath
    controls: ControlPath
    cost: float
    trace: List[Tuple[int, float, str]]
    grad_norm: float
    mesh_size: float
    method: str
    evaluations: int


class _ReducedMap:
    """Decision vector <-> control nodes.

    Offsets enter through their step rates (b_{j+1} - b_j)/h; free normals
    through raw node vectors that are mapped onto the norm constraints.
    """

    def __init__(self, scenario: Scenario, init: ControlPath):
        self.sc = scenario
        self.mesh = init.mesh
        self.k, self.m, self.n = init.mesh.k, init.m, init.n
        self.free = scenario.mode == "free_u"
        self.init = init
        self.b0 = np.array(init.b_nodes[0])
        j_lo, j_hi = index_tau(self.mesh, scenario.tau)
        nodes = np.arange(1, self.k + 1)
        self.unit = (nodes >= j_lo) & (nodes <= j_hi)
        self.nb = self.k * self.m

    def initial(self) -> np.ndarray:
        rates = np.diff(self.init.b_nodes, axis=0).reshape(-1) / self.mesh.h
        if not self.free:
            return rates
        return np.r_[rates, self.init.u_nodes[1:].reshape(-1)]

    def controls(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        theta = np.atleast_2d(theta)
        B = theta.shape[0]
        rates = theta[:, :self.nb].reshape(B, self.k, self.m)
        Bv = np.concatenate([np.broadcast_to(self.b0, (B, 1, self.m)),
                             self.b0 + self.mesh.h * np.cumsum(rates, axis=1)], axis=1)
        if not self.free:
            U = np.broadcast_to(self.init.u_nodes, (B,) + self.init.u_nodes.shape)
            return U, Bv
        raw = theta[:, self.nb:].reshape(B, self.k, self.m, self.n)
        norms = np.linalg.norm(raw, axis=3)
        target = np.where(self.unit[None, :, None], 1.0, np.clip(norms, 0.5, 1.5))
        fallback = self.init.u_nodes[1:][None] / np.maximum(
            np.linalg.norm(self.init.u_nodes[1:], axis=2), 1e-300)[None, :, :, None]
        safe = norms > 1e-12
        scaled = np.where(safe[..., None], raw * (target / np.where(safe, norms, 1.0))[..., None],
                          fallback * target[..., None])
        U = np.concatenate([np.broadcast_to(self.init.u_nodes[0], (B, 1, self.m, self.n)),
                            scaled], axis=1)
        return U, Bv


def solve_reduced(scenario: Scenario, k: Optional[int] = None,
                  init: Optional[ControlPath] = None,
                  settings: Optional[SolverSettings] = None) -> ReducedResult:
    """Local minimization over control nodes with the state eliminated.

    L-BFGS-B on central finite-difference gradients first; if the final
    gradient (inf-norm) exceeds ``tol`` or the cost is nonsmooth, a compass
    pattern search continues until its mesh falls below ``mesh_tol``.
    Raises SolverStalled carrying the best point when iteration caps are hit.
    """
    st = settings or scenario.solver
    k = k or scenario.k
    init = init or scenario.controls(k)
    if init.mesh.k != k:
        raise ConfigError("initial controls use a different mesh")
    P0 = init.polyhedron(0)
    if not P0.contains(scenario.x0):
        raise InfeasibleInitial("x0 is not in the initial polyhedron")
    rmap = _ReducedMap(scenario, init)
    mesh = init.mesh
    cost = scenario.cost
    x0 = scenario.x0
    evals = [0]

    def batch_cost(Theta: np.ndarray) -> np.ndarray:
        U, Bv = rmap.controls(Theta)
        X = catch_up_batch(x0, U, Bv)
        evals[0] += Theta.shape[0]
        return cost.terminal.value(X[:, -1, :]) + running_costs(cost, mesh, X, U, Bv)

    def fd(theta: np.ndarray) -> Tuple[float, np.ndarray]:
        D = theta.size
        step = st.fd_step * np.maximum(1.0, np.abs(theta))
        E = np.diag(step)
        Theta = np.vstack([theta[None, :], theta + E, theta - E])
        f = batch_cost(Theta)
        return float(f[0]), (f[1:D + 1] - f[D + 1:]) / (2.0 * step)

    theta = rmap.initial()
    cache: Dict[bytes, Tuple[float, np.ndarray]] = {}

    def fun(th):
        key = th.tobytes()
        if key not in cache:
            cache[key] = fd(th.copy())
        return cache[key]

    f0, g0 = fun(theta)
    trace: List[Tuple[int, float, str]] = [(0, f0, "init")]
    best = [theta.copy(), f0]

    def callback(th):
        f, _ = fun(th)
        if f <= best[1] + 1e-15:
            best[0], best[1] = th.copy(), f
        trace.append((len(trace), best[1], "lbfgs"))

    gnorm = float(np.abs(g0).max(initial=0.0))
    method = "lbfgs"
    if gnorm > st.tol:
        res = minimize(fun, theta, jac=True, method="L-BFGS-B", callback=callback,
                       options={"maxiter": st.max_iter, "gtol": 1e-2 * st.tol,
                                "ftol": 1e-16, "maxcor": 20})
        f, g = fun(res.x)
        if f <= best[1] + 1e-15:
            best[0], best[1] = res.x.copy(), f
        theta = best[0]
        f, g = fun(theta)
        gnorm = float(np.abs(g).max(initial=0.0))
    mesh_size = 0.0
    if gnorm > st.tol or not cost.smooth:
        method = "pattern" if gnorm > st.tol else "lbfgs+pattern"
        theta, f, mesh_size = _pattern_search(batch_cost, theta, best[1], st, trace)
        _, g = fun(theta)
        gnorm = float(np.abs(g).max(initial=0.0))
    else:
        f = best[1]
    U, Bv = rmap.controls(theta)
    ctrl = ControlPath(mesh, U[0], Bv[0], scenario.tau)
    state = catch_up(x0, ctrl, jump_guard=None)
    triple = DiscreteTriple.from_paths(state, ctrl)
    return ReducedResult(triple, state, ctrl, cost_Jk(triple, scenario), trace,
                         gnorm, mesh_size, method, evals[0])


def _pattern_search(batch_cost, theta, f, st: SolverSettings, trace):
    D = theta.size
    step = 1e-2 * max(1.0, float(np.abs(theta).max(initial=0.0)))
    it = 0
    while step >= st.mesh_tol:
        if it >= st.pattern_max_iter:
            raise SolverStalled(f"pattern search hit {st.pattern_max_iter} polls "
                                f"with mesh {step:.2e}", best=(theta, f))
        it += 1
        # poll order: +e_0, -e_0, +e_1, -e_1, ... so ties go to the smallest index
        P = np.repeat(theta[None, :], 2 * D, axis=0)
        P[np.arange(0, 2 * D, 2), np.arange(D)] += step
        P[np.arange(1, 2 * D, 2), np.arange(D)] -= step
        fs = batch_cost(P)
        i = int(np.argmin(fs))
        if fs[i] < f - 1e-15 * max(1.0, abs(f)):
            theta, f = P[i], float(fs[i])
            trace.append((len(trace), f, "pattern"))
        else:
            step *= 0.5
    return theta, f, step


# ----------------------------------------------------------------------
# two-dimensional strategy families


def closed_form_strategy_cost(theta: float, beta) -> float:
    """1/2 (theta^2 + theta)(beta_1^2 + beta_2^2) + theta (beta_1 + beta_2) + 1."""
    b1, b2 = beta
    return 0.5 * (theta ** 2 + theta) * (b1 ** 2 + b2 ** 2) + theta * (b1 + b2) + 1.0


@dataclass
class StrategyResult:
    strategy: str
    theta: float
    beta: Tuple[float, float]
    cost: float
    closed_form: float
    triple: DiscreteTriple


def strategy_offsets(strategy: str, theta: float, beta, b0) -> Callable:
    """Offset path of a constant-speed pushing strategy."""
    b1, b2 = beta
    b0 = np.asarray(b0, dtype=float)
    if strategy == "simultaneous":
        return lambda t: b0 + np.array([b1, b2]) * min(t, theta)
    if strategy == "single":
        return lambda t: b0 + np.array([b1, 0.0]) * min(t, theta)
    if strategy == "alternating":
        return lambda t: b0 + np.array([b1 * min(t, theta),
                                        b2 * min(max(t - theta, 0.0), theta)])
    raise ConfigError(f"unknown strategy {strategy!r}")


def evaluate_strategy(scenario: Scenario, strategy: str, theta: float, beta,
                      k: int = 2000) -> StrategyResult:
    """Cost of a strategy family member, integrated on a fine mesh."""
    if scenario.n != 2 or scenario.m != 2:
        raise ConfigError("strategy families are defined for two faces in the plane")
    beta = (float(beta[0]), float(beta[1]) if strategy != "single" else 0.0)
    b_fn = strategy_offsets(strategy, theta, beta, scenario.b_path(0.0))
    ctrl = scenario.controls(k, b_path=b_fn)
    state = catch_up(scenario.x0, ctrl, jump_guard=None)
    triple = DiscreteTriple.from_paths(state, ctrl)
    return StrategyResult(strategy, theta, beta, cost_Jk(triple, scenario),
                          closed_form_strategy_cost(theta, beta), triple)

"""Time meshes, control and state paths, and the catch-up integrator.

The integrator solves x' in -N(x; C(u(t), b(t))) by the implicit catch-up
scheme x_{j+1} = proj_{C(t_{j+1})}(x_j).  Multipliers of each projection,
divided by the step, are stored as per-interval velocity coefficients.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import nnls

from .errors import (DiscontinuityDetected, EmptySet, EmptySetAt,
                     InfeasibleInitial, MeshMismatch, ShapeMismatch)
from .geometry import MovingPolyhedron, project

FEAS_TOL = 1e-8


# ----------------------------------------------------------------------
# meshes and paths


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh t_j = j T / k, j = 0..k."""

    T: float
    k: int

    def __post_init__(self):
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("k must be a positive integer")
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "k", int(self.k))

    @classmethod
    def from_nodes(cls, t) -> "Mesh":
        """Rebuild a mesh from node times; non-uniform spacing is rejected."""
        t = np.asarray(t, dtype=float)
        if t.size < 2 or t[0] != 0.0:
            raise MeshMismatch("nodes must start at 0 and contain at least two points")
        mesh = cls(float(t[-1]), t.size - 1)
        if np.abs(t - mesh.nodes).max() > 1e-12 * max(1.0, mesh.T):
            raise MeshMismatch("only uniform meshes are supported")
        return mesh

    @property
    def h(self) -> float:
        return self.T / self.k

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.k + 1) * (self.T / self.k)


def index_tau(mesh: Mesh, tau: float) -> Tuple[int, int]:
    """Node range [j_lo, j_hi] on which t_j lies in [tau, T - tau]."""
    if not (0.0 <= tau <= mesh.T / 2 + 1e-15):
        raise ValueError("tau must lie in [0, T/2]")
    t = mesh.nodes
    eps = 1e-12 * mesh.T
    j_lo = int(np.flatnonzero(t >= tau - eps)[0])
    j_hi = int(np.flatnonzero(t <= mesh.T - tau + eps)[-1])
    return j_lo, j_hi


def _interp_nodes(mesh: Mesh, values: np.ndarray, t) -> np.ndarray:
    """Piecewise-linear interpolation of node values (first axis) at t."""
    s = np.clip(np.asarray(t, dtype=float) / mesh.h, 0.0, mesh.k)
    j = np.minimum(np.floor(s).astype(int), mesh.k - 1)
    w = (s - j).reshape(s.shape + (1,) * (values.ndim - 1))
    return (1 - w) * values[j] + w * values[j + 1]


@dataclass(frozen=True)
class ControlPath:
    """Node values of the normals u (k+1, m, n) and offsets b (k+1, m)."""

    mesh: Mesh
    u_nodes: np.ndarray
    b_nodes: np.ndarray
    tau: float = 0.0

    def __post_init__(self):
        b = np.array(self.b_nodes, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        k1 = self.mesh.k + 1
        if b.shape[0] != k1:
            raise ShapeMismatch(f"b_nodes has {b.shape[0]} rows, mesh has {k1} nodes")
        m = b.shape[1]
        u = np.array(self.u_nodes, dtype=float)
        if u.ndim == 2:
            if m == 0 or u.shape[1] % m:
                raise ShapeMismatch("flat u_nodes width is not a multiple of m")
            u = u.reshape(k1, m, u.shape[1] // m)
        if u.ndim != 3 or u.shape[:2] != (k1, m):
            raise ShapeMismatch(f"u_nodes has shape {u.shape}, expected ({k1}, {m}, n)")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(b))):
            raise ValueError("control data must be finite")
        if not (0.0 <= self.tau <= self.mesh.T / 2 + 1e-15):
            raise ValueError("tau must lie in [0, T/2]")
        u.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "u_nodes", u)
        object.__setattr__(self, "b_nodes", b)

    @classmethod
    def from_functions(cls, mesh: Mesh, u_fn: Callable, b_fn: Callable,
                       tau: float = 0.0) -> "ControlPath":
        t = mesh.nodes
        u = np.array([np.atleast_2d(u_fn(s)) for s in t], dtype=float)
        b = np.array([np.atleast_1d(b_fn(s)) for s in t], dtype=float)
        return cls(mesh, u, b, tau)

    @property
    def m(self) -> int:
        return self.b_nodes.shape[1]

    @property
    def n(self) -> int:
        return self.u_nodes.shape[2]

    def polyhedron(self, j: int) -> MovingPolyhedron:
        return MovingPolyhedron(self.u_nodes[j], self.b_nodes[j])

    def u_at(self, t) -> np.ndarray:
        return _interp_nodes(self.mesh, self.u_nodes, t)

    def b_at(self, t) -> np.ndarray:
        return _interp_nodes(self.mesh, self.b_nodes, t)

    def normalization_violation(self) -> float:
        """Largest violation of the unit-norm / [1/2, 3/2] node constraints."""
        norms = np.linalg.norm(self.u_nodes, axis=2)
        j_lo, j_hi = index_tau(self.mesh, self.tau)
        inner = np.zeros(self.mesh.k + 1, dtype=bool)
        inner[j_lo:j_hi + 1] = True
        v_in = np.abs(norms[inner] - 1.0)
        v_out = np.maximum(np.abs(norms[~inner] - 1.0) - 0.5, 0.0)
        return float(max(v_in.max(initial=0.0), v_out.max(initial=0.0)))


@dataclass(frozen=True)
class StatePath:
    """Node states x (k+1, n) and per-interval multipliers eta (k, m)."""

    mesh: Mesh
    x_nodes: np.ndarray
    eta_nodes: Optional[np.ndarray] = None

    def __post_init__(self):
        x = np.array(self.x_nodes, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != self.mesh.k + 1:
            raise ShapeMismatch(f"x_nodes has {x.shape[0]} rows, mesh has {self.mesh.k + 1}")
        x.setflags(write=False)
        object.__setattr__(self, "x_nodes", x)
        if self.eta_nodes is not None:
            e = np.array(self.eta_nodes, dtype=float)
            if e.ndim == 1:
                e = e[:, None]
            if e.shape[0] != self.mesh.k:
                raise ShapeMismatch(f"eta_nodes has {e.shape[0]} rows, expected {self.mesh.k}")
            e.setflags(write=False)
            object.__setattr__(self, "eta_nodes", e)

    @property
    def n(self) -> int:
        return self.x_nodes.shape[1]

    def x_at(self, t) -> np.ndarray:
        return _interp_nodes(self.mesh, self.x_nodes, t)

    def velocities(self) -> np.ndarray:
        return np.diff(self.x_nodes, axis=0) / self.mesh.h


# ----------------------------------------------------------------------
# integrator


def _control_jump(ctrl: ControlPath, j: int) -> float:
    du = ctrl.u_nodes[j + 1] - ctrl.u_nodes[j]
    db = ctrl.b_nodes[j + 1] - ctrl.b_nodes[j]
    return float(math.sqrt(np.sum(du * du) + np.sum(db * db)))


def catch_up(x0, ctrl: ControlPath, jump_guard: Optional[float] = 10.0,
             tol: float = FEAS_TOL) -> StatePath:
    """Implicit catch-up integration from x0.

    A step whose state increment exceeds ``jump_guard`` times the
    Euclidean size of the control increment (plus 1e-8) raises
    DiscontinuityDetected: the discrete states then follow a jump of the
    moving set instead of an absolutely continuous trajectory.  Pass
    ``jump_guard=None`` to disable the check.
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != ctrl.n:
        raise ShapeMismatch(f"x0 has dimension {x0.size}, controls act in R^{ctrl.n}")
    mesh = ctrl.mesh
    try:
        P0 = ctrl.polyhedron(0)
    except ValueError as exc:
        raise ShapeMismatch(str(exc))
    if not P0.contains(x0, tol):
        raise InfeasibleInitial(
            f"x0 violates the initial polyhedron by {-P0.slack(x0).min():.3e}")
    xs = np.empty((mesh.k + 1, ctrl.n))
    etas = np.zeros((mesh.k, ctrl.m))
    xs[0] = x0
    for j in range(mesh.k):
        try:
            z, cc = project(xs[j], ctrl.polyhedron(j + 1))
        except EmptySet:
            raise EmptySetAt(j + 1) from None
        if jump_guard is not None:
            jump = float(np.linalg.norm(z - xs[j]))
            bound = jump_guard * (1e-8 + _control_jump(ctrl, j))
            if jump > bound:
                raise DiscontinuityDetected(j, jump, bound)
        xs[j + 1] = z
        etas[j] = cc.eta / mesh.h
    return StatePath(mesh, xs, etas)


@lru_cache(maxsize=None)
def _subsets(m: int, n: int) -> Tuple[Tuple[int, ...], ...]:
    out = []
    for size in range(1, min(m, n) + 1):
        out.extend(itertools.combinations(range(m), size))
    return tuple(out)


def project_batch(Y: np.ndarray, A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Projections of Y[i] onto C(A[i], b[i]) for a whole batch at once.

    Candidate active sets are enumerated by size (smallest index first); a
    candidate is accepted when its multipliers are nonnegative and its
    point is feasible, which characterizes the projection.  Batch members
    that no independent candidate resolves fall back to :func:`project`.
    """
    B, m, n = A.shape
    Z = np.array(Y, dtype=float, copy=True)
    if m == 0:
        return Z
    scale = (1.0 + np.abs(b).max(axis=1)
             + np.linalg.norm(Y, axis=1) * np.abs(A).max(axis=(1, 2)))
    tol = 1e-12 * scale
    viol = np.einsum("bmn,bn->bm", A, Y) - b
    idx = np.flatnonzero((viol > tol[:, None]).any(axis=1))
    for S in _subsets(m, n):
        if idx.size == 0:
            break
        S = list(S)
        AS = A[idx][:, S, :]
        G = AS @ AS.transpose(0, 2, 1)
        ev = np.linalg.eigvalsh(G)
        good = ev[:, 0] > 1e-12 * np.maximum(ev[:, -1], 1e-300)
        G[~good] = np.eye(len(S))
        r = np.einsum("bsn,bn->bs", AS, Y[idx]) - b[idx][:, S]
        mu = np.linalg.solve(G, r[..., None])[..., 0]
        z = Y[idx] - np.einsum("bsn,bs->bn", AS, mu)
        ti = tol[idx]
        feas = (np.einsum("bmn,bn->bm", A[idx], z) - b[idx] <= 1e3 * ti[:, None]).all(axis=1)
        ok = good & (mu >= -1e3 * ti[:, None]).all(axis=1) & feas
        Z[idx[ok]] = z[ok]
        idx = idx[~ok]
    for i in idx:
        Z[i] = project(Y[i], MovingPolyhedron(A[i], b[i]))[0]
    return Z


def catch_up_batch(x0, U: np.ndarray, Bv: np.ndarray) -> np.ndarray:
    """States (B, k+1, n) of catch-up runs for a batch of control paths.

    ``U`` has shape (B, k+1, m, n) and ``Bv`` (B, k+1, m).  No jump guard
    and no multipliers; intended for finite-difference sweeps.
    """
    Bn, k1, m, n = U.shape
    X = np.empty((Bn, k1, n))
    X[:, 0] = np.asarray(x0, dtype=float)
    for j in range(1, k1):
        try:
            X[:, j] = project_batch(X[:, j - 1], U[:, j], Bv[:, j])
        except EmptySet:
            raise EmptySetAt(j) from None
    return X


# ----------------------------------------------------------------------
# verification


@dataclass
class FeasibilityReport:
    margins: np.ndarray             # (k+1, m) slack b - <u, x>
    complementarity: np.ndarray     # (k,) max_i eta_ji * slack_i
    cone_residual: np.ndarray       # (k,) velocity representation residual
    eta: np.ndarray                 # (k, m) multipliers used
    tol: float
    side: str

    @property
    def max_violation(self) -> float:
        return float(max(0.0, -self.margins.min(initial=0.0)))

    @property
    def max_residual(self) -> float:
        parts = [self.max_violation, self.complementarity.max(initial=0.0),
                 self.cone_residual.max(initial=0.0),
                 max(0.0, -self.eta.min(initial=0.0))]
        return float(max(parts))

    @property
    def verdict(self) -> bool:
        return self.max_residual <= self.tol

    def __bool__(self) -> bool:
        return self.verdict


def verify_feasible(x: StatePath, ctrl: ControlPath, tol: float = FEAS_TOL,
                    side: str = "implicit") -> FeasibilityReport:
    """Node feasibility, multiplier sign, complementarity and velocity checks.

    ``side="implicit"`` tests interval j against the polyhedron at t_{j+1};
    ``side="explicit"`` against t_j.  When the path carries no multipliers
    they are recovered by nonnegative least squares on the active faces.
    """
    if x.mesh != ctrl.mesh:
        raise MeshMismatch(f"state mesh {x.mesh} differs from control mesh {ctrl.mesh}")
    if x.n != ctrl.n:
        raise ShapeMismatch("state and control dimensions differ")
    if side not in ("implicit", "explicit"):
        raise ValueError("side must be 'implicit' or 'explicit'")
    k, m = ctrl.mesh.k, ctrl.m
    margins = ctrl.b_nodes - np.einsum("jmn,jn->jm", ctrl.u_nodes, x.x_nodes)
    vel = x.velocities()
    shift = 1 if side == "implicit" else 0
    eta = np.zeros((k, m)) if x.eta_nodes is None else np.array(x.eta_nodes)
    comp = np.zeros(k)
    cone = np.zeros(k)
    for j in range(k):
        uj = ctrl.u_nodes[j + shift]
        sj = margins[j + shift]
        if x.eta_nodes is None:
            act = np.flatnonzero(np.abs(sj) <= tol)
            if act.size:
                eta[j, act] = nnls(uj[act].T, -vel[j])[0]
        cone[j] = np.linalg.norm(vel[j] + uj.T @ eta[j])
        comp[j] = np.max(np.abs(eta[j] * np.maximum(sj, 0.0)), initial=0.0)
    return FeasibilityReport(margins, comp, cone, eta, tol, side)


# ----------------------------------------------------------------------
# convergence


@dataclass
class ConvergenceTable:
    k: List[int]
    errors: List[float]
    orders: List[float]
    reference: str

    def rows(self):
        for i, (k, e) in enumerate(zip(self.k, self.errors)):
            yield k, e, (self.orders[i - 1] if i else float("nan"))


def _sup_error(path: StatePath, ref: Callable, samples: int) -> float:
    """sup over [0, T] of |x_j - x_ref(t)| for t in [t_j, t_{j+1}]."""
    mesh = path.mesh
    s = np.linspace(0.0, 1.0, samples)
    t = (mesh.nodes[:-1, None] + s[None, :] * mesh.h).reshape(-1)
    xr = np.asarray(ref(t), dtype=float).reshape(mesh.k, samples, -1)
    diff = xr - path.x_nodes[:-1, None, :]
    return float(np.linalg.norm(diff, axis=2).max())


def convergence_study(x0, control_at: Callable[[int], ControlPath],
                      k_list: Sequence[int], exact: Optional[Callable] = None,
                      k_ref: int = 1600, jump_guard: Optional[float] = 10.0
                      ) -> ConvergenceTable:
    """Sup-norm errors of the catch-up approximants for each k.

    The approximant on [t_j, t_{j+1}) is the node value x_j (the classical
    piecewise-constant catch-up interpolant).  The reference is ``exact``
    (a vectorized t -> x map) when given, otherwise the linear interpolant
    of a catch-up run at ``k_ref``.
    """
    k_list = [int(k) for k in k_list]
    if any(b <= a for a, b in zip(k_list, k_list[1:])):
        raise ValueError("k_list must be increasing")
    if exact is None:
        fine = catch_up(x0, control_at(k_ref), jump_guard)
        ref, label = fine.x_at, f"catch-up k={k_ref}"
    else:
        ref, label = exact, "analytic"
    errors = []
    for k in k_list:
        path = catch_up(x0, control_at(k), jump_guard)
        samples = k_ref // k + 1 if exact is None and k_ref % k == 0 else 17
        errors.append(_sup_error(path, ref, max(samples, 2)))
    orders = []
    for (ka, ea), (kb, eb) in zip(zip(k_list, errors), zip(k_list[1:], errors[1:])):
        if ea > 0 and eb > 0:
            orders.append(math.log(ea / eb) / math.log(kb / ka))
        else:
            orders.append(float("nan"))
    return ConvergenceTable(k_list, errors, orders, label)


# ----------------------------------------------------------------------
# trajectory CSV


def trajectory_header(n: int, m: int) -> List[str]:
    return (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m * n)]
            + [f"b{i}" for i in range(m)] + [f"eta{i}" for i in range(m)])


def write_trajectory(path, x: StatePath, ctrl: ControlPath) -> None:
    """One row per node, 17 significant digits; eta blank on the last row."""
    fmt = "{:.17g}".format
    n, m, k = ctrl.n, ctrl.m, ctrl.mesh.k
    eta = x.eta_nodes if x.eta_nodes is not None else np.full((k, m), np.nan)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(n, m))
        for j, t in enumerate(ctrl.mesh.nodes):
            row = [fmt(t)] + [fmt(v) for v in x.x_nodes[j]]
            row += [fmt(v) for v in ctrl.u_nodes[j].reshape(-1)]
            row += [fmt(v) for v in ctrl.b_nodes[j]]
            if j < k and not np.isnan(eta[j]).any():
                row += [fmt(v) for v in eta[j]]
            else:
                row += [""] * m
            w.writerow(row)


def read_trajectory(path, tau: float = 0.0) -> Tuple[StatePath, ControlPath]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ShapeMismatch("empty trajectory file")
    head = rows[0]
    n = sum(1 for c in head if c.startswith("x"))
    m = sum(1 for c in head if c.startswith("b"))
    if head != trajectory_header(n, m):
        raise ShapeMismatch("unexpected trajectory header")
    body = rows[1:]
    data = np.array([[float(v) if v != "" else np.nan for v in r] for r in body])
    mesh = Mesh.from_nodes(data[:, 0])
    x = data[:, 1:1 + n]
    u = data[:, 1 + n:1 + n + m * n].reshape(-1, m, n)
    b = data[:, 1 + n + m * n:1 + n + m * n + m]
    eta = data[:-1, 1 + n + m * n + m:]
    eta = None if np.isnan(eta).any() else eta
    return StatePath(mesh, x, eta), ControlPath(mesh, u, b, tau)
